//! Experiment orchestration: TOML configuration, single runs, SNR sweeps and
//! η-table builds, each writing CSV/JSON artifacts with a provenance header.

mod config;
mod run;

pub use config::{
    EtaConfig, ExperimentConfig, FilterSettings, Manifold, Mode, ModelConfig, SimulationConfig,
    SweepConfig, CONFIG_SCHEMA,
};
pub use run::{
    execute, resolve_eta, run_eta_build, run_single, run_snr_sweep, simulate_realization,
    single_seed, snr_db, sweep_seed, Artifacts, ErrorSummary, EtaBuildReport, EtaDiagnostics,
    Realization, SnrSweepResult, SweepCell, ETA_COLUMNS, ETA_CSV, ETA_JSON, MEASUREMENTS_CSV,
    SUMMARY_TXT, SWEEP_COLUMNS, SWEEP_CSV, SWEEP_TABLE_TXT, TRACK_CSV, TRAJECTORY_CSV,
};
