//! Extended Kalman filter on St(n,k).
//!
//! The belief is a projected normal: a mean on the manifold, the ambient
//! isotropic variance σ² of the lifted normal, and the intrinsic scalar
//! variance P = η(σ²). Prediction rotates the mean with the drift flow and
//! grows σ² linearly; an update moves the mean along the geodesic towards
//! the measurement by the scalar gain `K = σ²_pred / (σ²_pred + ξ²)` and
//! shrinks P by `1 − K`, mapping back to σ² with η⁻¹.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{full, matrix_columns, write_comments, write_record};
use crate::sde::{discretize_drift, MeasurementSeries, SystemModel};
use crate::stats::EtaTable;
use crate::stiefel::{exp_map, log_map, StiefelPoint};

/// Standard normal quantile for a two-sided 95% band.
pub const BAND_95_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub mean: StiefelPoint,
    pub ambient_sigma2: f64,
    pub intrinsic_var: f64,
}

impl Belief {
    /// Prior `N(μ₀, σ₀²·id)` pushed through the projection.
    pub fn from_prior(mean: StiefelPoint, sigma02: f64, eta: &EtaTable) -> Result<Self> {
        let intrinsic_var = eta.forward(sigma02)?;
        Ok(Self {
            mean,
            ambient_sigma2: sigma02,
            intrinsic_var,
        })
    }
}

/// What to do when a measurement has no logarithm at the predicted mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogFailurePolicy {
    #[default]
    HardError,
    /// Keep the prediction and flag the epoch.
    SkipUpdate,
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub model: SystemModel,
    pub eta: EtaTable,
    pub policy: LogFailurePolicy,
}

impl FilterConfig {
    pub fn new(model: SystemModel, eta: EtaTable, policy: LogFailurePolicy) -> Result<Self> {
        if eta.manifold() != (model.n(), model.k()) {
            return Err(Error::dim(format!(
                "η table is for St({},{}) but the model lives on St({},{})",
                eta.n,
                eta.k,
                model.n(),
                model.k()
            )));
        }
        Ok(Self { model, eta, policy })
    }

    pub fn initial_belief(&self) -> Result<Belief> {
        Belief::from_prior(self.model.mu0().clone(), self.model.sigma02(), &self.eta)
    }
}

/// Propagates `belief` over a gap of length `t`.
pub fn predict(belief: &Belief, t: f64, config: &FilterConfig) -> Result<Belief> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("prediction gap must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(belief.clone());
    }
    let f = discretize_drift(config.model.a(), t)?;
    let mean = StiefelPoint::reorthonormalized(f * belief.mean.matrix())?;
    let ambient_sigma2 = belief.ambient_sigma2 + t * config.model.nu2();
    let intrinsic_var = config.eta.forward(ambient_sigma2).map_err(|e| match e {
        Error::Extrapolation { .. } => Error::VarianceOverflow {
            sigma2: ambient_sigma2,
        },
        e => e,
    })?;
    Ok(Belief {
        mean,
        ambient_sigma2,
        intrinsic_var,
    })
}

/// Scalar gain for a predicted ambient variance; zero when it vanishes.
pub fn kalman_gain(predicted_sigma2: f64, xi2: f64) -> f64 {
    if predicted_sigma2 == 0.0 {
        0.0
    } else {
        predicted_sigma2 / (predicted_sigma2 + xi2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub belief: Belief,
    pub gain: f64,
    pub skipped: bool,
}

/// Fuses measurement `z` into a predicted belief.
pub fn update(predicted: &Belief, z: &StiefelPoint, config: &FilterConfig) -> Result<UpdateOutcome> {
    if z.matrix().shape() != predicted.mean.matrix().shape() {
        return Err(Error::dim("measurement and belief live on different manifolds"));
    }
    let gain = kalman_gain(predicted.ambient_sigma2, config.model.xi2());
    let y = match log_map(&predicted.mean, z) {
        Ok(y) => y,
        Err(Error::OutOfInjectivityRadius { .. })
            if config.policy == LogFailurePolicy::SkipUpdate =>
        {
            return Ok(UpdateOutcome {
                belief: predicted.clone(),
                gain: 0.0,
                skipped: true,
            });
        }
        Err(e) => return Err(e),
    };
    let mean = if gain == 1.0 {
        // A perfect measurement replaces the mean outright.
        z.clone()
    } else {
        exp_map(&y.scaled(gain))
    };
    let intrinsic_var = (1.0 - gain) * predicted.intrinsic_var;
    let ambient_sigma2 = config.eta.inverse(intrinsic_var)?;
    Ok(UpdateOutcome {
        belief: Belief {
            mean,
            ambient_sigma2,
            intrinsic_var,
        },
        gain,
        skipped: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub time: f64,
    pub belief: Belief,
    pub gain: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrack {
    /// The prior at t = 0, then one entry per measurement epoch.
    pub steps: Vec<FilterStep>,
}

impl FilterTrack {
    /// Filtered epochs, without the initial prior row.
    pub fn epochs(&self) -> &[FilterStep] {
        &self.steps[1..]
    }

    pub fn skipped(&self) -> usize {
        self.steps.iter().filter(|s| s.skipped).count()
    }

    /// CSV: `time`, mean `m_i_j` row-major, `gain`, `intrinsic_var` (P),
    /// `band_95` (1.96·√P), `ambient_sigma2`, `skipped` (0/1).
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        let mean0 = &self.steps[0].belief.mean;
        let (n, k) = (mean0.n(), mean0.k());
        let mut head = comments.to_vec();
        head.push(format!("filter track n={n} k={k}"));
        write_comments(w, &head)?;
        let mut cols = vec!["time".to_string()];
        cols.extend(matrix_columns("m", n, k));
        cols.extend(["gain", "intrinsic_var", "band_95", "ambient_sigma2", "skipped"].map(String::from));
        write_record(w, &cols)?;
        for s in &self.steps {
            let mut rec = vec![full(s.time)];
            rec.extend(s.belief.mean.row_major().into_iter().map(full));
            rec.push(full(s.gain));
            rec.push(full(s.belief.intrinsic_var));
            rec.push(full(BAND_95_Z * s.belief.intrinsic_var.sqrt()));
            rec.push(full(s.belief.ambient_sigma2));
            rec.push(u8::from(s.skipped).to_string());
            write_record(w, &rec)?;
        }
        Ok(())
    }
}

/// Alternates prediction over each inter-measurement gap with an update,
/// starting from `initial` at t = 0.
pub fn run_filter(
    config: &FilterConfig,
    measurements: &MeasurementSeries,
    initial: &Belief,
) -> Result<FilterTrack> {
    let times = &measurements.times;
    if times.first().is_some_and(|&t| !(t >= 0.0))
        || times.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::Domain(
            "measurement times must be ≥ 0 and strictly increasing".into(),
        ));
    }
    let mut steps = Vec::with_capacity(measurements.len() + 1);
    steps.push(FilterStep {
        time: 0.0,
        belief: initial.clone(),
        gain: 0.0,
        skipped: false,
    });
    let mut belief = initial.clone();
    let mut last = 0.0;
    for (&t, z) in times.iter().zip(&measurements.values) {
        let predicted = predict(&belief, t - last, config)?;
        let outcome = update(&predicted, z, config)?;
        belief = outcome.belief.clone();
        last = t;
        steps.push(FilterStep {
            time: t,
            belief: outcome.belief,
            gain: outcome.gain,
            skipped: outcome.skipped,
        });
    }
    Ok(FilterTrack { steps })
}

/// Open-loop predictions from `initial` (at t = 0) to each of `times`.
pub fn predict_track(config: &FilterConfig, initial: &Belief, times: &[f64]) -> Result<FilterTrack> {
    let mut steps = vec![FilterStep {
        time: 0.0,
        belief: initial.clone(),
        gain: 0.0,
        skipped: false,
    }];
    let mut belief = initial.clone();
    let mut last = 0.0;
    for &t in times {
        if !(t > last) {
            return Err(Error::Domain("prediction times must be strictly increasing".into()));
        }
        belief = predict(&belief, t - last, config)?;
        last = t;
        steps.push(FilterStep {
            time: t,
            belief: belief.clone(),
            gain: 0.0,
            skipped: false,
        });
    }
    Ok(FilterTrack { steps })
}
