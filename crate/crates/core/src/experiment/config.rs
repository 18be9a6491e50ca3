use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ekf::LogFailurePolicy;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sde::{NoiseMode, SystemModel};
use crate::stats::{EtaBuild, EtaMethod, GridSpec, MC_REJECTION_BUDGET};
use crate::stiefel::StiefelPoint;

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleRun,
    SnrSweep,
    EtaTable,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SingleRun => "single-run",
            Mode::SnrSweep => "snr-sweep",
            Mode::EtaTable => "eta-table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifold {
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Antisymmetric drift, one inner list per row.
    pub drift: Vec<Vec<f64>>,
    /// Initial mean, one inner list per row.
    pub mu0: Vec<Vec<f64>>,
    pub sigma02: f64,
    pub nu2: f64,
    pub xi2: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub steps: usize,
    pub horizon: f64,
    pub measurements: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            horizon: 1.0,
            measurements: 20,
        }
    }
}

impl SimulationConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub nu2: Vec<f64>,
    /// ξ² = ν² / divisor for each divisor.
    pub snr_divisors: Vec<f64>,
    pub repetitions: usize,
    /// Cells with a larger fraction of aborted realizations are invalid.
    pub max_abort_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            nu2: vec![0.1, 0.2, 0.5, 1.0],
            snr_divisors: vec![1.0, 2.8, 4.6, 6.4, 8.2, 10.0],
            repetitions: 100,
            max_abort_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub log_failure: LogFailurePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaConfig {
    /// Load this table instead of building one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Defaults to the per-manifold grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub method: EtaMethod,
    pub samples: usize,
    /// Defaults to the experiment seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub rejection_budget: f64,
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self {
            table: None,
            grid: None,
            method: EtaMethod::Auto,
            samples: 200_000,
            seed: None,
            rejection_budget: MC_REJECTION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub manifold: Manifold,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub eta: EtaConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Mat> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{name} must be {r}×{c}")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    /// The S² experiment: drift and initial mean of the sphere study,
    /// ν² = 1, ξ² = 0.1, σ₀² = 0.1.
    pub fn s2(mode: Mode) -> Self {
        let a = nalgebra::dmatrix![
            0.0, 0.263, 0.036;
            -0.263, 0.0, -0.653;
            -0.036, 0.653, 0.0
        ];
        let mu0 = nalgebra::dmatrix![0.0; 0.0; 1.0];
        Self::preset(mode, 3, 1, &a, &mu0)
    }

    /// The St(4,2) experiment, μ₀ = I_{4,2}, same noise levels as on S².
    pub fn st42(mode: Mode) -> Self {
        let a = nalgebra::dmatrix![
            0.0, 0.173, 0.267, -0.288;
            -0.173, 0.0, -0.279, 0.122;
            -0.267, 0.279, 0.0, 0.316;
            0.288, -0.122, -0.316, 0.0
        ];
        Self::preset(mode, 4, 2, &a, &Mat::identity(4, 2))
    }

    fn preset(mode: Mode, n: usize, k: usize, a: &Mat, mu0: &Mat) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA,
            mode: Some(mode),
            seed: 2024,
            output_dir: default_output_dir(),
            manifold: Manifold { n, k },
            model: ModelConfig {
                drift: rows(a),
                mu0: rows(mu0),
                sigma02: 0.1,
                nu2: 1.0,
                xi2: 0.1,
                noise_mode: NoiseMode::Ambient,
            },
            simulation: SimulationConfig::default(),
            sweep: SweepConfig::default(),
            filter: FilterSettings::default(),
            eta: EtaConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Checks everything that can be checked without running: shapes,
    /// antisymmetry, manifold membership of μ₀, variance signs, schedules.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA})",
                self.schema_version
            )));
        }
        let Manifold { n, k } = self.manifold;
        if k == 0 || n < k {
            return Err(Error::Config(format!("St(n,k) needs n ≥ k ≥ 1, got ({n},{k})")));
        }
        self.system_model()?;
        let sim = &self.simulation;
        if sim.steps == 0 || !(sim.horizon > 0.0) || !sim.horizon.is_finite() {
            return Err(Error::Config("simulation needs steps ≥ 1 and horizon > 0".into()));
        }
        if sim.measurements > sim.steps {
            return Err(Error::Config(format!(
                "{} measurements do not fit on {} grid steps",
                sim.measurements, sim.steps
            )));
        }
        let sw = &self.sweep;
        if sw.nu2.iter().any(|&v| !(v > 0.0) || !v.is_finite())
            || sw.snr_divisors.iter().any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Config("sweep ν² values and SNR divisors must be positive".into()));
        }
        if sw.repetitions == 0 || !(0.0..=1.0).contains(&sw.max_abort_fraction) {
            return Err(Error::Config(
                "sweep needs repetitions ≥ 1 and max_abort_fraction in [0, 1]".into(),
            ));
        }
        let eta = &self.eta;
        if let Some(g) = &eta.grid {
            g.nodes()?;
        }
        if eta.table.is_none() && eta.samples < 2 && !self.eta_uses_quadrature() {
            return Err(Error::Config("η Monte Carlo needs at least 2 samples per node".into()));
        }
        if !(0.0..1.0).contains(&eta.rejection_budget) {
            return Err(Error::Config("η rejection_budget must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn eta_uses_quadrature(&self) -> bool {
        let s2 = self.manifold.n == 3 && self.manifold.k == 1;
        matches!(
            (self.eta.method, s2),
            (EtaMethod::Quadrature, _) | (EtaMethod::Auto, true)
        )
    }

    pub fn system_model(&self) -> Result<SystemModel> {
        let Manifold { n, k } = self.manifold;
        let a = matrix_from_rows("model.drift", &self.model.drift, n, n)?;
        let mu0 = StiefelPoint::new(matrix_from_rows("model.mu0", &self.model.mu0, n, k)?)
            .map_err(|e| Error::Config(format!("model.mu0: {e}")))?;
        SystemModel::new(a, self.model.nu2, self.model.xi2, mu0, self.model.sigma02)
            .map_err(|e| Error::Config(format!("model: {e}")))
    }

    pub fn eta_grid(&self) -> Result<Vec<f64>> {
        self.eta
            .grid
            .unwrap_or_else(|| GridSpec::default_for(self.manifold.n, self.manifold.k))
            .nodes()
    }

    pub fn eta_build(&self) -> EtaBuild {
        EtaBuild {
            method: self.eta.method,
            samples: self.eta.samples,
            base_seed: self.eta.seed.unwrap_or(self.seed),
            rejection_budget: self.eta.rejection_budget,
        }
    }

    /// Provenance header lines: the resolved configuration as TOML, without
    /// the output directory (which does not influence any result).
    pub fn provenance(&self) -> Result<Vec<String>> {
        let mut value = toml::Table::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        value.remove("output_dir");
        let text = toml::to_string(&value).map_err(|e| Error::Serde(e.to_string()))?;
        let mut lines = vec![
            format!("stiefel-ekf {}", env!("CARGO_PKG_VERSION")),
            format!("seed = {}", self.seed),
            "resolved configuration:".to_string(),
        ];
        lines.extend(text.lines().map(|l| format!("  {l}")));
        Ok(lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for cfg in [ExperimentConfig::s2(Mode::SingleRun), ExperimentConfig::st42(Mode::SnrSweep)] {
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let text = r#"
            schema_version = 1
            seed = 7
            [manifold]
            n = 3
            k = 1
            [model]
            drift = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
            mu0 = [[0.0], [0.0], [1.0]]
            sigma02 = 0.1
            nu2 = 1.0
            xi2 = 0.1
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.mode, None);
        assert_eq!(cfg.simulation, SimulationConfig::default());
        assert_eq!(cfg.sweep.repetitions, 100);
        assert_eq!(cfg.model.noise_mode, NoiseMode::Ambient);
        assert_eq!(cfg.eta_build().base_seed, 7);
        assert_eq!(cfg.eta_grid().unwrap().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::s2(Mode::SingleRun).to_toml().unwrap();
        text = text.replace("[model]", "[model]\nnu = 1.0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = ExperimentConfig::s2(Mode::SingleRun);
        let mut c = base.clone();
        c.model.drift[0][1] = 0.5;
        assert!(c.validate().is_err(), "asymmetric drift must not be symmetrised");
        let mut c = base.clone();
        c.model.xi2 = -0.1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model.mu0 = vec![vec![0.0], vec![0.0], vec![2.0]];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.simulation.measurements = 3000;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.sweep.snr_divisors.push(0.0);
        assert!(c.validate().is_err());
        let mut c = base;
        c.schema_version = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn provenance_embeds_config() {
        let cfg = ExperimentConfig::st42(Mode::SnrSweep);
        let lines = cfg.provenance().unwrap();
        assert!(lines.iter().any(|l| l == "seed = 2024"));
        assert!(lines.iter().any(|l| l.contains("snr_divisors")));
        assert!(!lines.iter().any(|l| l.contains("output_dir")));
    }
}
