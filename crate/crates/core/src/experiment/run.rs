use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode, SimulationConfig};
use crate::ekf::{run_filter, FilterConfig, FilterTrack};
use crate::error::{Error, Result};
use crate::export::{full, write_comments, write_record};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sde::{
    measurement_indices, simulate_measurements, simulate_trajectory, MeasurementSeries, NoiseMode,
    Trajectory,
};
use crate::stats::{EtaTable, RunningStats};
use crate::stiefel::distance;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const MEASUREMENTS_CSV: &str = "measurements.csv";
pub const TRACK_CSV: &str = "filter_track.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const SWEEP_CSV: &str = "snr_sweep.csv";
pub const SWEEP_TABLE_TXT: &str = "snr_sweep_table.txt";
pub const ETA_JSON: &str = "eta_table.json";
pub const ETA_CSV: &str = "eta_table.csv";

fn at_step(step: &str, seed: u64) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Experiment {
        step: step.to_string(),
        seed,
        source: Box::new(e),
    }
}

/// The η table named in the configuration, or a fresh build on its grid.
pub fn resolve_eta(cfg: &ExperimentConfig) -> Result<EtaTable> {
    let (n, k) = (cfg.manifold.n, cfg.manifold.k);
    let build = cfg.eta_build();
    let table = match &cfg.eta.table {
        Some(path) => EtaTable::load(path).map_err(at_step("loading η table", build.base_seed))?,
        None => EtaTable::build(n, k, &cfg.eta_grid()?, &build)
            .map_err(at_step("building η table", build.base_seed))?,
    };
    if table.manifold() != (n, k) {
        return Err(Error::Config(format!(
            "η table is for St({},{}) but the experiment runs on St({n},{k})",
            table.n, table.k
        )));
    }
    Ok(table)
}

fn filter_config(cfg: &ExperimentConfig, nu2: f64, xi2: f64, eta: &EtaTable) -> Result<FilterConfig> {
    let model = cfg.system_model()?.with_noise(nu2, xi2)?;
    FilterConfig::new(model, eta.clone(), cfg.filter.log_failure)
}

/// Per-realization error statistics over the measurement epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    /// Mean geodesic distance from `pr(X_t)` to the measurement.
    pub meas_error: f64,
    /// Mean geodesic distance from `pr(X_t)` to the filtered mean.
    pub filter_error: f64,
    pub epochs: usize,
    pub skipped: usize,
    pub redraws: usize,
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub measurements: MeasurementSeries,
    pub track: FilterTrack,
    pub errors: ErrorSummary,
}

/// Simulates one trajectory with its measurements, filters it and scores
/// both against the projected state. All randomness comes from `seed`.
pub fn simulate_realization(
    filter: &FilterConfig,
    sim: &SimulationConfig,
    mode: NoiseMode,
    seed: u64,
) -> Result<Realization> {
    let mut rng = rng_from_seed(seed);
    let trajectory = simulate_trajectory(&filter.model, sim.dt(), sim.steps, &mut rng)
        .map_err(at_step("trajectory", seed))?;
    let indices = measurement_indices(sim.steps, sim.measurements);
    let measurements = simulate_measurements(&trajectory, &filter.model, &indices, mode, &mut rng)
        .map_err(at_step("measurements", seed))?;
    let initial = filter.initial_belief().map_err(at_step("filter prior", seed))?;
    let track = run_filter(filter, &measurements, &initial).map_err(at_step("filter", seed))?;

    let mut meas = 0.0;
    let mut filt = 0.0;
    for ((&i, z), step) in indices.iter().zip(&measurements.values).zip(track.epochs()) {
        let truth = &trajectory.projected[i];
        meas += distance(truth, z).map_err(at_step("measurement error", seed))?;
        filt += distance(truth, &step.belief.mean).map_err(at_step("filter error", seed))?;
    }
    let epochs = indices.len();
    let errors = ErrorSummary {
        meas_error: meas / epochs as f64,
        filter_error: filt / epochs as f64,
        epochs,
        skipped: track.skipped(),
        redraws: measurements.redraws,
    };
    Ok(Realization {
        seed,
        trajectory,
        measurements,
        track,
        errors,
    })
}

/// Seed of the single-run realization.
pub fn single_seed(base: u64) -> u64 {
    derive_seed(base, &[0])
}

/// Seed of realization `i` in sweep cell `cell` (cells are numbered ν²-major).
pub fn sweep_seed(base: u64, cell: usize, i: usize) -> u64 {
    derive_seed(base, &[cell as u64, i as u64])
}

fn noise_mode(cfg: &ExperimentConfig) -> NoiseMode {
    cfg.model.noise_mode
}

pub fn run_single(cfg: &ExperimentConfig, eta: &EtaTable) -> Result<Realization> {
    let filter = filter_config(cfg, cfg.model.nu2, cfg.model.xi2, eta)?;
    simulate_realization(&filter, &cfg.simulation, noise_mode(cfg), single_seed(cfg.seed))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

impl Realization {
    pub fn summary(&self) -> String {
        let e = &self.errors;
        let (n, k) = (self.trajectory.states[0].nrows(), self.trajectory.states[0].ncols());
        format!(
            "manifold = St({n},{k})\nrealization_seed = {}\nepochs = {}\nmean_measurement_error = {}\nmean_filter_error = {}\nskipped_updates = {}\nmeasurement_redraws = {}\n",
            self.seed,
            e.epochs,
            full(e.meas_error),
            full(e.filter_error),
            e.skipped,
            e.redraws
        )
    }

    /// Writes trajectory, measurement and track CSVs plus a summary.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let head = cfg.provenance()?;
        let (n, k) = (cfg.manifold.n, cfg.manifold.k);
        let mut paths = Vec::new();

        let (p, mut w) = create(dir, TRAJECTORY_CSV)?;
        self.trajectory.write_csv(&mut w, &head)?;
        w.flush()?;
        paths.push(p);

        let (p, mut w) = create(dir, MEASUREMENTS_CSV)?;
        self.measurements.write_csv(&mut w, n, k, &head)?;
        w.flush()?;
        paths.push(p);

        let (p, mut w) = create(dir, TRACK_CSV)?;
        self.track.write_csv(&mut w, &head)?;
        w.flush()?;
        paths.push(p);

        let (p, mut w) = create(dir, SUMMARY_TXT)?;
        write_comments(&mut w, &head)?;
        w.write_all(self.summary().as_bytes())?;
        w.flush()?;
        paths.push(p);
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub nu2: f64,
    pub xi2: f64,
    pub divisor: f64,
    /// `10·log₁₀(ν²/ξ²)`.
    pub snr_db: f64,
    /// `10·log₁₀(η(ν²)/ξ²)` when ν² lies in the η table range.
    pub snr_eta_db: Option<f64>,
    pub meas_error: f64,
    pub meas_se: f64,
    pub filter_error: f64,
    pub filter_se: f64,
    pub repetitions: usize,
    pub aborted: usize,
    pub skipped_updates: usize,
    pub redraws: usize,
    pub valid: bool,
    /// Message of the lowest-numbered aborted realization.
    pub first_abort: Option<String>,
}

impl SweepCell {
    pub fn completed(&self) -> usize {
        self.repetitions - self.aborted
    }

    pub fn ratio(&self) -> f64 {
        self.filter_error / self.meas_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSweepResult {
    pub n: usize,
    pub k: usize,
    pub nu2: Vec<f64>,
    pub divisors: Vec<f64>,
    /// ν²-major: cell `i·divisors.len() + j` has `nu2[i]` and `divisors[j]`.
    pub cells: Vec<SweepCell>,
}

pub fn snr_db(nu2: f64, xi2: f64) -> f64 {
    10.0 * (nu2 / xi2).log10()
}

/// Runs every (ν², ξ²) cell of the sweep; realizations run in parallel on the
/// current rayon pool and are reduced in index order.
pub fn run_snr_sweep(cfg: &ExperimentConfig, eta: &EtaTable) -> Result<SnrSweepResult> {
    if cfg.simulation.measurements == 0 {
        return Err(Error::Config("an SNR sweep needs at least one measurement".into()));
    }
    let sw = &cfg.sweep;
    let reps = sw.repetitions;
    let mut filters = Vec::new();
    for &nu2 in &sw.nu2 {
        for &d in &sw.snr_divisors {
            filters.push((nu2, d, filter_config(cfg, nu2, nu2 / d, eta)?));
        }
    }
    let mode = noise_mode(cfg);
    let outcomes: Vec<Result<ErrorSummary>> = (0..filters.len() * reps)
        .into_par_iter()
        .map(|job| {
            let (c, i) = (job / reps, job % reps);
            let seed = sweep_seed(cfg.seed, c, i);
            simulate_realization(&filters[c].2, &cfg.simulation, mode, seed).map(|r| r.errors)
        })
        .collect();

    let cells = filters
        .iter()
        .zip(outcomes.chunks(reps))
        .map(|((nu2, d, filter), runs)| {
            let mut meas = RunningStats::new();
            let mut filt = RunningStats::new();
            let (mut aborted, mut skipped, mut redraws) = (0, 0, 0);
            let mut first_abort = None;
            for r in runs {
                match r {
                    Ok(e) => {
                        meas.push(e.meas_error);
                        filt.push(e.filter_error);
                        skipped += e.skipped;
                        redraws += e.redraws;
                    }
                    Err(err) => {
                        aborted += 1;
                        first_abort.get_or_insert_with(|| err.to_string());
                    }
                }
            }
            let xi2 = filter.model.xi2();
            let (meas_mean, meas_se) = summarize(&meas);
            let (filt_mean, filt_se) = summarize(&filt);
            SweepCell {
                nu2: *nu2,
                xi2,
                divisor: *d,
                snr_db: snr_db(*nu2, xi2),
                snr_eta_db: eta.forward(*nu2).ok().map(|e| snr_db(e, xi2)),
                meas_error: meas_mean,
                meas_se,
                filter_error: filt_mean,
                filter_se: filt_se,
                repetitions: reps,
                aborted,
                skipped_updates: skipped,
                redraws,
                valid: aborted as f64 <= sw.max_abort_fraction * reps as f64 && aborted < reps,
                first_abort,
            }
        })
        .collect();
    Ok(SnrSweepResult {
        n: cfg.manifold.n,
        k: cfg.manifold.k,
        nu2: sw.nu2.clone(),
        divisors: sw.snr_divisors.clone(),
        cells,
    })
}

fn summarize(s: &RunningStats) -> (f64, f64) {
    match s.count() {
        0 => (f64::NAN, f64::NAN),
        1 => (s.mean(), f64::NAN),
        _ => (s.mean(), s.std_error()),
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        full(x)
    } else {
        String::new()
    }
}

fn two_dp(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}")
    } else {
        String::new()
    }
}

pub const SWEEP_COLUMNS: [&str; 20] = [
    "nu2",
    "xi2",
    "divisor",
    "snr_db",
    "snr_eta_db",
    "meas_error",
    "meas_se",
    "filter_error",
    "filter_se",
    "ratio",
    "repetitions",
    "completed",
    "aborted",
    "skipped_updates",
    "redraws",
    "valid",
    "snr_db_2dp",
    "meas_error_2dp",
    "filter_error_2dp",
    "ratio_2dp",
];

impl SnrSweepResult {
    pub fn cell(&self, nu2_index: usize, divisor_index: usize) -> &SweepCell {
        &self.cells[nu2_index * self.divisors.len() + divisor_index]
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        let mut head = comments.to_vec();
        head.push(format!("snr sweep n={} k={}", self.n, self.k));
        write_comments(w, &head)?;
        write_record(w, &SWEEP_COLUMNS)?;
        for c in &self.cells {
            let rec = [
                full(c.nu2),
                full(c.xi2),
                full(c.divisor),
                full(c.snr_db),
                c.snr_eta_db.map(num).unwrap_or_default(),
                num(c.meas_error),
                num(c.meas_se),
                num(c.filter_error),
                num(c.filter_se),
                num(c.ratio()),
                c.repetitions.to_string(),
                c.completed().to_string(),
                c.aborted.to_string(),
                c.skipped_updates.to_string(),
                c.redraws.to_string(),
                u8::from(c.valid).to_string(),
                two_dp(c.snr_db),
                two_dp(c.meas_error),
                two_dp(c.filter_error),
                two_dp(c.ratio()),
            ];
            write_record(w, &rec)?;
        }
        Ok(())
    }

    /// Plain-text table with one measurement row and one filter row per ν²,
    /// SNR in dB across. Invalid cells carry a `*`.
    pub fn table_text(&self) -> String {
        let mut s = format!(
            "St({},{}) mean geodesic error, {} realizations per cell\n",
            self.n,
            self.k,
            self.cells.first().map_or(0, |c| c.repetitions)
        );
        s.push_str(&format!("{:<8}{:<8}", "nu2", "SNR dB"));
        for j in 0..self.divisors.len() {
            s.push_str(&format!("{:>8.2}", self.cell(0, j).snr_db));
        }
        s.push('\n');
        for (i, nu2) in self.nu2.iter().enumerate() {
            for (label, pick) in [
                ("meas", (|c: &SweepCell| c.meas_error) as fn(&SweepCell) -> f64),
                ("filter", |c: &SweepCell| c.filter_error),
            ] {
                let lead = if label == "meas" { format!("{nu2}") } else { String::new() };
                s.push_str(&format!("{lead:<8}{label:<8}"));
                for j in 0..self.divisors.len() {
                    let c = self.cell(i, j);
                    let mark = if c.valid { "" } else { "*" };
                    s.push_str(&format!("{:>8}", format!("{:.2}{mark}", pick(c))));
                }
                s.push('\n');
            }
        }
        if self.cells.iter().any(|c| !c.valid) {
            s.push_str("* more than the allowed fraction of realizations aborted\n");
        }
        s
    }

    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let head = cfg.provenance()?;
        let (csv, mut w) = create(dir, SWEEP_CSV)?;
        self.write_csv(&mut w, &head)?;
        w.flush()?;
        let (txt, mut w) = create(dir, SWEEP_TABLE_TXT)?;
        write_comments(&mut w, &head)?;
        w.write_all(self.table_text().as_bytes())?;
        w.flush()?;
        Ok(vec![csv, txt])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaDiagnostics {
    pub nodes: usize,
    pub raw_inversions: usize,
    /// Adjacent pairs inverted by more than 3 combined standard errors.
    pub significant_inversions: usize,
    pub max_isotonic_adjustment: f64,
    pub max_rejection_fraction: f64,
}

impl EtaDiagnostics {
    pub fn of(table: &EtaTable) -> Self {
        let max_rejection_fraction = table
            .rejected
            .iter()
            .map(|&r| {
                if table.sample_count == 0 {
                    0.0
                } else {
                    r as f64 / (r + table.sample_count) as f64
                }
            })
            .fold(0.0, f64::max);
        Self {
            nodes: table.grid.len(),
            raw_inversions: table.raw_inversions(),
            significant_inversions: table.significant_inversions(3.0),
            max_isotonic_adjustment: table.max_isotonic_adjustment(),
            max_rejection_fraction,
        }
    }

    pub fn inverted_fraction(&self) -> f64 {
        self.significant_inversions as f64 / (self.nodes - 1) as f64
    }
}

impl fmt::Display for EtaDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes = {}", self.nodes)?;
        writeln!(f, "raw_inversions = {}", self.raw_inversions)?;
        writeln!(
            f,
            "significant_inversions_3se = {} ({:.2}% of adjacent pairs)",
            self.significant_inversions,
            100.0 * self.inverted_fraction()
        )?;
        writeln!(f, "max_isotonic_adjustment = {:e}", self.max_isotonic_adjustment)?;
        write!(f, "max_rejection_fraction = {:.4}", self.max_rejection_fraction)
    }
}

#[derive(Debug, Clone)]
pub struct EtaBuildReport {
    pub table: EtaTable,
    pub diagnostics: EtaDiagnostics,
}

pub fn run_eta_build(cfg: &ExperimentConfig) -> Result<EtaBuildReport> {
    let build = cfg.eta_build();
    let mut table = EtaTable::build(cfg.manifold.n, cfg.manifold.k, &cfg.eta_grid()?, &build)
        .map_err(at_step("building η table", build.base_seed))?;
    table.provenance = Some(cfg.provenance()?.join("\n"));
    let diagnostics = EtaDiagnostics::of(&table);
    Ok(EtaBuildReport { table, diagnostics })
}

pub const ETA_COLUMNS: [&str; 5] = ["sigma2", "eta", "eta_raw", "std_error", "rejected"];

impl EtaBuildReport {
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        let t = &self.table;
        let mut head = comments.to_vec();
        head.push(format!("eta table n={} k={} method={:?}", t.n, t.k, t.method));
        write_comments(w, &head)?;
        write_record(w, &ETA_COLUMNS)?;
        for i in 0..t.grid.len() {
            let rec = [
                full(t.grid[i]),
                full(t.values[i]),
                full(t.raw_values[i]),
                full(t.std_errors[i]),
                t.rejected[i].to_string(),
            ];
            write_record(w, &rec)?;
        }
        Ok(())
    }

    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let json = dir.join(ETA_JSON);
        self.table.save(&json)?;
        let (csv, mut w) = create(dir, ETA_CSV)?;
        self.write_csv(&mut w, &cfg.provenance()?)?;
        w.flush()?;
        Ok(vec![json, csv])
    }
}

/// Result of [`execute`]: written files and a human-readable report.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    pub report: String,
}

/// Runs `mode` end to end and writes its outputs into `cfg.output_dir`.
///
/// A configuration that names a different mode is rejected.
pub fn execute(cfg: &ExperimentConfig, mode: Mode) -> Result<Artifacts> {
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(Error::Config(format!(
                "configuration is for mode {} but {} was requested",
                m.as_str(),
                mode.as_str()
            )));
        }
    }
    cfg.validate()?;
    let dir = &cfg.output_dir;
    match mode {
        Mode::SingleRun => {
            let eta = resolve_eta(cfg)?;
            let run = run_single(cfg, &eta)?;
            Ok(Artifacts {
                files: run.write(cfg, dir)?,
                report: run.summary(),
            })
        }
        Mode::SnrSweep => {
            let eta = resolve_eta(cfg)?;
            let sweep = run_snr_sweep(cfg, &eta)?;
            Ok(Artifacts {
                files: sweep.write(cfg, dir)?,
                report: sweep.table_text(),
            })
        }
        Mode::EtaTable => {
            let report = run_eta_build(cfg)?;
            Ok(Artifacts {
                files: report.write(cfg, dir)?,
                report: report.diagnostics.to_string(),
            })
        }
    }
}
