//! Monotone tabulation of η with piecewise-linear forward and inverse
//! evaluation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eta::{eta_closed_form_s2, eta_monte_carlo_budgeted, MC_REJECTION_BUDGET};
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::stiefel::StiefelPoint;

pub const ETA_TABLE_SCHEMA: u32 = 1;

/// Increment used to break ties left by the isotonic pass so the table is
/// strictly increasing and therefore invertible.
const STRICT_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 2.0,
            nodes: 64,
        }
    }
}

impl GridSpec {
    /// Default grid for St(n,k).
    ///
    /// On St(n,k) with k ≥ 2 the projected normal puts more than 1% of its
    /// mass beyond the logarithm's safety radius once σ² exceeds roughly 0.55
    /// (St(4,2), St(8,3)), so the Monte Carlo grid stops at 0.5 there.
    pub fn default_for(_n: usize, k: usize) -> Self {
        if k == 1 {
            Self::default()
        } else {
            Self {
                max: 0.5,
                ..Self::default()
            }
        }
    }

    /// Log-spaced nodes with both endpoints hit exactly.
    pub fn nodes(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0) || !(self.max > self.min) || !self.max.is_finite() || self.nodes < 2 {
            return Err(Error::Config(format!(
                "η grid needs 0 < min < max and ≥ 2 nodes, got {self:?}"
            )));
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        let last = self.nodes - 1;
        Ok((0..self.nodes)
            .map(|i| match i {
                0 => self.min,
                i if i == last => self.max,
                i => (a + (b - a) * i as f64 / last as f64).exp(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaMethod {
    /// Quadrature on S², Monte Carlo elsewhere.
    Auto,
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaTable {
    pub schema_version: u32,
    pub n: usize,
    pub k: usize,
    pub method: EtaMethod,
    pub grid: Vec<f64>,
    /// Monotone values used for evaluation.
    pub values: Vec<f64>,
    /// Node estimates before the isotonic pass.
    pub raw_values: Vec<f64>,
    /// Per-node Monte Carlo standard errors; zero for quadrature nodes.
    pub std_errors: Vec<f64>,
    /// Per-node draws discarded beyond the safety radius.
    pub rejected: Vec<usize>,
    /// Accepted draws per node; zero for quadrature tables.
    pub sample_count: usize,
    pub base_seed: u64,
    /// Free-form description of how the table was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// How to evaluate the nodes of an [`EtaTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaBuild {
    pub method: EtaMethod,
    /// Monte Carlo draws per node.
    pub samples: usize,
    pub base_seed: u64,
    /// Tolerated fraction of draws beyond the safety radius, per node.
    pub rejection_budget: f64,
}

impl Default for EtaBuild {
    fn default() -> Self {
        Self {
            method: EtaMethod::Auto,
            samples: 200_000,
            base_seed: 0,
            rejection_budget: MC_REJECTION_BUDGET,
        }
    }
}

impl EtaTable {
    /// Evaluates η at every grid node and enforces monotonicity.
    ///
    /// Node `i` draws from the stream `(base_seed, i)`, so the result does not
    /// depend on how nodes are scheduled across threads.
    pub fn build(n: usize, k: usize, grid: &[f64], params: &EtaBuild) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::dim(format!("St(n,k) needs n ≥ k ≥ 1, got ({n},{k})")));
        }
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
            return Err(Error::Config(
                "η grid must be positive and strictly increasing with ≥ 2 nodes".into(),
            ));
        }
        let is_s2 = n == 3 && k == 1;
        let method = match params.method {
            EtaMethod::Auto if is_s2 => EtaMethod::Quadrature,
            EtaMethod::Auto => EtaMethod::MonteCarlo,
            EtaMethod::Quadrature if !is_s2 => {
                return Err(Error::Config(format!(
                    "quadrature η is only available on S², not St({n},{k})"
                )))
            }
            m => m,
        };
        let mean = StiefelPoint::identity(n, k);
        let nodes: Vec<(f64, f64, usize)> = match method {
            EtaMethod::Quadrature => grid
                .par_iter()
                .map(|&s| eta_closed_form_s2(s).map(|v| (v, 0.0, 0)))
                .collect::<Result<_>>()?,
            _ => grid
                .par_iter()
                .enumerate()
                .map(|(i, &s)| {
                    let mut rng = derived_rng(params.base_seed, &[i as u64]);
                    eta_monte_carlo_budgeted(&mean, s, params.samples, params.rejection_budget, &mut rng)
                        .map(|e| (e.estimate, e.std_error, e.rejected))
                })
                .collect::<Result<_>>()?,
        };
        let mut raw_values = Vec::with_capacity(grid.len());
        let mut std_errors = Vec::with_capacity(grid.len());
        let mut rejected = Vec::with_capacity(grid.len());
        for (v, se, r) in nodes {
            raw_values.push(v);
            std_errors.push(se);
            rejected.push(r);
        }
        let weights: Vec<f64> = std_errors
            .iter()
            .map(|&se| if se > 0.0 { 1.0 / (se * se) } else { 1.0 })
            .collect();
        let mut values = isotonic_regression(&raw_values, &weights);
        make_strict(&mut values);
        let quadrature = method == EtaMethod::Quadrature;
        Ok(Self {
            schema_version: ETA_TABLE_SCHEMA,
            n,
            k,
            method,
            grid: grid.to_vec(),
            values,
            raw_values,
            std_errors,
            rejected,
            sample_count: if quadrature { 0 } else { params.samples },
            base_seed: params.base_seed,
            provenance: None,
        })
    }

    pub fn manifold(&self) -> (usize, usize) {
        (self.n, self.k)
    }

    pub fn grid_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn grid_max(&self) -> f64 {
        *self.grid.last().expect("validated nonempty grid")
    }

    /// η(σ²) by linear interpolation. The origin is an implicit node
    /// (η(0) = 0, a point mass stays a point mass), so `[0, grid_min]` is
    /// interpolated too; values above the grid or negative are an error.
    pub fn forward(&self, sigma2: f64) -> Result<f64> {
        let (lo, hi) = (self.grid_min(), self.grid_max());
        if !(sigma2 >= 0.0 && sigma2 <= hi) {
            return Err(Error::Extrapolation {
                value: sigma2,
                min: 0.0,
                max: hi,
            });
        }
        if sigma2 < lo {
            return Ok(self.values[0] * (sigma2 / lo));
        }
        Ok(interpolate(&self.grid, &self.values, sigma2))
    }

    /// η⁻¹(p), the exact inverse of [`forward`](Self::forward).
    pub fn inverse(&self, p: f64) -> Result<f64> {
        let (lo, hi) = (self.values[0], *self.values.last().expect("nonempty"));
        if !(p >= 0.0 && p <= hi) {
            return Err(Error::Extrapolation {
                value: p,
                min: 0.0,
                max: hi,
            });
        }
        if p < lo {
            return Ok(self.grid_min() * (p / lo));
        }
        Ok(interpolate(&self.values, &self.grid, p))
    }

    /// Adjacent node pairs whose pre-isotonic estimates decrease by more than
    /// `n_se` combined standard errors.
    pub fn significant_inversions(&self, n_se: f64) -> usize {
        (0..self.raw_values.len().saturating_sub(1))
            .filter(|&i| {
                let se = self.std_errors[i].hypot(self.std_errors[i + 1]);
                self.raw_values[i] - self.raw_values[i + 1] > n_se * se
            })
            .count()
    }

    /// Adjacent pairs with any decrease before the isotonic pass.
    pub fn raw_inversions(&self) -> usize {
        self.raw_values.windows(2).filter(|w| w[1] < w[0]).count()
    }

    /// Largest change the isotonic pass made to any node.
    pub fn max_isotonic_adjustment(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.raw_values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != ETA_TABLE_SCHEMA {
            return Err(Error::Serde(format!(
                "unsupported η table schema {} (expected {ETA_TABLE_SCHEMA})",
                self.schema_version
            )));
        }
        let len = self.grid.len();
        if len < 2
            || self.values.len() != len
            || self.raw_values.len() != len
            || self.std_errors.len() != len
            || self.rejected.len() != len
        {
            return Err(Error::Serde("η table columns have inconsistent lengths".into()));
        }
        let strict = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !strict(&self.grid) || !strict(&self.values) || !(self.grid[0] > 0.0) {
            return Err(Error::Serde(
                "η table grid and values must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x ∈ [xs₀, xs_last]`;
/// returns node values exactly at nodes.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&g| g < x);
    if i < xs.len() && xs[i] == x {
        return ys[i];
    }
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
}

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
pub(crate) fn isotonic_regression(y: &[f64], w: &[f64]) -> Vec<f64> {
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let wt = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / wt, wt, l1 + l2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

fn make_strict(v: &mut [f64]) {
    for i in 1..v.len() {
        if v[i] <= v[i - 1] {
            v[i] = v[i - 1] + STRICT_STEP;
        }
    }
}
