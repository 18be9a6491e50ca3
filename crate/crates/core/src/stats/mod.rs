//! Intrinsic statistics of point clouds on St(n,k): Fréchet means, tangent
//! covariances, and the variance transfer function η.

mod eta;
mod quadrature;
mod table;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stiefel::{
    self, canonical_inner_raw, exp_raw, log_raw, tangent_basis, StiefelPoint, TangentBasis,
};

pub use eta::{
    eta_closed_form_s2, eta_monte_carlo, eta_monte_carlo_at, eta_monte_carlo_budgeted,
    projected_normal_density_s2, EtaEstimate, MC_REJECTION_BUDGET,
};
pub use quadrature::integrate_with_breaks;
pub use table::{EtaBuild, EtaMethod, EtaTable, GridSpec, ETA_TABLE_SCHEMA};

pub const FRECHET_MAX_ITER: usize = 200;
pub const FRECHET_TOL: f64 = 1e-9;

/// A nonempty collection of points on a common St(n,k).
#[derive(Debug, Clone)]
pub struct ProjectedSample {
    points: Vec<StiefelPoint>,
}

impl ProjectedSample {
    pub fn new(points: Vec<StiefelPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InsufficientSample { needed: 1, got: 0 });
        };
        let shape = first.matrix().shape();
        if let Some(bad) = points.iter().find(|p| p.matrix().shape() != shape) {
            return Err(Error::dim(format!(
                "sample mixes St({},{}) and St({},{})",
                shape.0,
                shape.1,
                bad.n(),
                bad.k()
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[StiefelPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n(&self) -> usize {
        self.points[0].n()
    }

    pub fn k(&self) -> usize {
        self.points[0].k()
    }
}

/// Mean of `log_Y(Yᵢ)` and its canonical norm.
fn mean_log(y: &Mat, points: &[StiefelPoint]) -> Result<(Mat, f64)> {
    let mut acc = Mat::zeros(y.nrows(), y.ncols());
    for p in points {
        acc += log_raw(y, p.matrix())?;
    }
    acc /= points.len() as f64;
    let norm = canonical_inner_raw(y, &acc, &acc).max(0.0).sqrt();
    Ok((acc, norm))
}

/// Intrinsic (Fréchet) mean by the fixed-point iteration
/// `Ȳ ← exp_Ȳ(mean of log_Ȳ(Yᵢ))`, started from the polar projection of the
/// arithmetic mean.
///
/// Every logarithm along the way must exist, which requires all points to
/// stay within the safety radius of the running mean.
pub fn frechet_mean(sample: &ProjectedSample) -> Result<StiefelPoint> {
    let points = sample.points();
    if points.len() == 1 {
        return Ok(points[0].clone());
    }
    let mut sum = Mat::zeros(sample.n(), sample.k());
    for p in points {
        sum += p.matrix();
    }
    let mut y = stiefel::project(&(sum / points.len() as f64))?;
    let mut residual = f64::INFINITY;
    for _ in 0..FRECHET_MAX_ITER {
        let (step, norm) = mean_log(y.matrix(), points)?;
        residual = norm;
        if norm < FRECHET_TOL {
            return Ok(y);
        }
        y = StiefelPoint::reorthonormalized(exp_raw(y.matrix(), &step))?;
    }
    Err(Error::MeanNotFound {
        iterations: FRECHET_MAX_ITER,
        residual,
    })
}

/// Fréchet residual `‖Σ log_Y(Yᵢ)‖_Y / N` at a candidate mean.
pub fn frechet_residual(y: &StiefelPoint, sample: &ProjectedSample) -> Result<f64> {
    Ok(mean_log(y.matrix(), sample.points())?.1)
}

#[derive(Debug, Clone)]
pub struct IntrinsicMoments {
    pub mean: StiefelPoint,
    /// Basis in which `covariance` is expressed.
    pub basis: TangentBasis,
    pub covariance: Mat,
    /// `trace(covariance) / d`.
    pub scalar_variance: f64,
}

/// Fréchet mean plus the tangent sample covariance
/// `(1/(N−1)) Σ_ℓ cℓ cℓᵀ`, `cℓ` the basis coordinates of `log_Ȳ(Yℓ)`.
pub fn intrinsic_moments(sample: &ProjectedSample) -> Result<IntrinsicMoments> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let mean = frechet_mean(sample)?;
    let basis = tangent_basis(&mean);
    let d = basis.len();
    let mut covariance = Mat::zeros(d, d);
    for p in sample.points() {
        let c = basis.coordinates_raw(&log_raw(mean.matrix(), p.matrix())?);
        covariance.ger(1.0, &c, &c, 1.0);
    }
    covariance /= (n - 1) as f64;
    let scalar_variance = if d == 0 {
        0.0
    } else {
        covariance.trace() / d as f64
    };
    Ok(IntrinsicMoments {
        mean,
        basis,
        covariance,
        scalar_variance,
    })
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}
