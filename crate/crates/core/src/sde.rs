//! Simulation of `dX = A X dt + ν dB` in ℝⁿˣᵏ with antisymmetric `A`, and of
//! noisy measurements of its polar projection.
//!
//! Because `A` is antisymmetric, `exp(tA)` is orthogonal and the exact
//! transition over a step Δt is `X ← exp(ΔtA)·X + V`, `V ~ N(0, Δt·ν²·id)`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{full, matrix_columns, write_comments, write_record};
use crate::linalg::{self, Mat};
use crate::stiefel::{self, exp_map, random_tangent, StiefelPoint};

pub const ANTISYMMETRY_TOL: f64 = 1e-10;

/// How measurement noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `Z = pr(pr(X) + W)` with `W ~ N(0, ξ²·id)` in ℝⁿˣᵏ.
    #[default]
    Ambient,
    /// `Z = exp_{pr(X)}(ε)` with ε isotropic normal in the tangent space,
    /// coordinate variance ξ².
    Tangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: Mat,
    nu2: f64,
    xi2: f64,
    mu0: StiefelPoint,
    sigma02: f64,
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and ≥ 0, got {v}")))
    }
}

pub fn antisymmetry_residual(a: &Mat) -> f64 {
    (a + a.transpose()).norm()
}

impl SystemModel {
    pub fn new(a: Mat, nu2: f64, xi2: f64, mu0: StiefelPoint, sigma02: f64) -> Result<Self> {
        let n = mu0.n();
        if a.shape() != (n, n) {
            return Err(Error::dim(format!(
                "drift must be {n}×{n} for St({n},{}), got {:?}",
                mu0.k(),
                a.shape()
            )));
        }
        linalg::ensure_finite(&a, "drift matrix")?;
        let residual = antisymmetry_residual(&a);
        if residual >= ANTISYMMETRY_TOL {
            return Err(Error::NotAntisymmetric { residual });
        }
        check_variance("ν²", nu2)?;
        check_variance("ξ²", xi2)?;
        check_variance("σ₀²", sigma02)?;
        Ok(Self {
            a,
            nu2,
            xi2,
            mu0,
            sigma02,
        })
    }

    pub fn n(&self) -> usize {
        self.mu0.n()
    }

    pub fn k(&self) -> usize {
        self.mu0.k()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    pub fn xi2(&self) -> f64 {
        self.xi2
    }

    pub fn mu0(&self) -> &StiefelPoint {
        &self.mu0
    }

    pub fn sigma02(&self) -> f64 {
        self.sigma02
    }

    /// Same model with different noise levels.
    pub fn with_noise(&self, nu2: f64, xi2: f64) -> Result<Self> {
        check_variance("ν²", nu2)?;
        check_variance("ξ²", xi2)?;
        Ok(Self {
            nu2,
            xi2,
            ..self.clone()
        })
    }

    pub fn with_initial(&self, mu0: StiefelPoint, sigma02: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.nu2, self.xi2, mu0, sigma02)
    }
}

/// `F_t = exp(tA)`.
pub fn discretize_drift(a: &Mat, t: f64) -> Result<Mat> {
    linalg::matrix_exp(&(a * t))
}

fn gaussian<R: Rng + ?Sized>(r: usize, c: usize, sd: f64, rng: &mut R) -> Mat {
    Mat::from_fn(r, c, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Mat>,
    pub projected: Vec<StiefelPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV: `time`, ambient `x_i_j`, projected `p_i_j`, both row-major.
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> io::Result<()> {
        let (n, k) = self.states[0].shape();
        let mut head = comments.to_vec();
        head.push(format!("trajectory n={n} k={k} dt={}", full(self.dt)));
        write_comments(w, &head)?;
        let mut cols = vec!["time".to_string()];
        cols.extend(matrix_columns("x", n, k));
        cols.extend(matrix_columns("p", n, k));
        write_record(w, &cols)?;
        for ((t, x), p) in self.times.iter().zip(&self.states).zip(&self.projected) {
            let mut rec = vec![full(*t)];
            rec.extend(stiefel::row_major(x).into_iter().map(full));
            rec.extend(p.row_major().into_iter().map(full));
            write_record(w, &rec)?;
        }
        Ok(())
    }
}

/// Samples `X₀ ~ N(μ₀, σ₀²·id)` and iterates the exact transition `steps`
/// times with step `dt`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    model: &SystemModel,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::Domain("trajectory needs at least one step".into()));
    }
    let (n, k) = (model.n(), model.k());
    let f = discretize_drift(model.a(), dt)?;
    let step_sd = (dt * model.nu2()).sqrt();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut projected = Vec::with_capacity(steps + 1);
    let mut x = model.mu0().matrix() + gaussian(n, k, model.sigma02().sqrt(), rng);
    for j in 0..=steps {
        if j > 0 {
            x = &f * &x + gaussian(n, k, step_sd, rng);
        }
        let p = stiefel::project(&x).map_err(|e| Error::AbortedTrajectory {
            step: j,
            source: Box::new(e),
        })?;
        times.push(j as f64 * dt);
        states.push(x.clone());
        projected.push(p);
    }
    Ok(Trajectory {
        dt,
        times,
        states,
        projected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    /// Trajectory grid index of each measurement.
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<StiefelPoint>,
    /// Draws that had to be repeated because the noisy point had no polar
    /// factor.
    pub redraws: usize,
}

impl MeasurementSeries {
    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            times: Vec::new(),
            values: Vec::new(),
            redraws: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV: `time`, `step`, measurement `z_i_j` row-major.
    pub fn write_csv<W: Write>(
        &self,
        w: &mut W,
        n: usize,
        k: usize,
        comments: &[String],
    ) -> io::Result<()> {
        let mut head = comments.to_vec();
        head.push(format!("measurements n={n} k={k}"));
        write_comments(w, &head)?;
        let mut cols = vec!["time".to_string(), "step".to_string()];
        cols.extend(matrix_columns("z", n, k));
        write_record(w, &cols)?;
        for ((t, i), z) in self.times.iter().zip(&self.indices).zip(&self.values) {
            let mut rec = vec![full(*t), i.to_string()];
            rec.extend(z.row_major().into_iter().map(full));
            write_record(w, &rec)?;
        }
        Ok(())
    }
}

/// `count` evenly spaced grid indices ending at `steps`: `round(j·steps/count)`
/// for `j = 1..=count`.
pub fn measurement_indices(steps: usize, count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    (1..=count)
        .map(|j| (j * steps + count / 2) / count)
        .collect()
}

fn measure_once<R: Rng + ?Sized>(
    p: &StiefelPoint,
    xi2: f64,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<StiefelPoint> {
    match mode {
        NoiseMode::Ambient => {
            let w = gaussian(p.n(), p.k(), xi2.sqrt(), rng);
            stiefel::project(&(p.matrix() + w))
        }
        NoiseMode::Tangent => Ok(exp_map(&random_tangent(p, xi2, rng)?)),
    }
}

/// Noisy measurements of `pr(X)` at the given trajectory grid indices.
///
/// A draw whose noisy point is rank deficient is repeated once; a second
/// failure aborts with [`Error::MeasurementFailed`].
pub fn simulate_measurements<R: Rng + ?Sized>(
    traj: &Trajectory,
    model: &SystemModel,
    indices: &[usize],
    mode: NoiseMode,
    rng: &mut R,
) -> Result<MeasurementSeries> {
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("measurement indices must be strictly increasing".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= traj.len()) {
        return Err(Error::Domain(format!(
            "measurement index {bad} is beyond the trajectory ({} points)",
            traj.len()
        )));
    }
    let xi2 = model.xi2();
    let mut out = MeasurementSeries::empty();
    for &i in indices {
        let p = &traj.projected[i];
        let z = if xi2 == 0.0 {
            p.clone()
        } else {
            match measure_once(p, xi2, mode, rng) {
                Ok(z) => z,
                Err(_) => {
                    out.redraws += 1;
                    measure_once(p, xi2, mode, rng).map_err(|e| Error::MeasurementFailed {
                        index: i,
                        source: Box::new(e),
                    })?
                }
            }
        };
        out.indices.push(i);
        out.times.push(traj.times[i]);
        out.values.push(z);
    }
    Ok(out)
}
