//! The variance transfer function η.
//!
//! For `X ~ N(μ, σ²·id)` in ℝⁿˣᵏ with `μ ∈ St(n,k)`, η(σ²) is the intrinsic
//! scalar variance `E‖log_μ pr(X)‖²_μ / d` of the polar projection. On S² the
//! projected normal has a closed-form angular density and η is a
//! one-dimensional integral; elsewhere it is estimated by Monte Carlo.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::quadrature::integrate_with_breaks;
use super::RunningStats;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stiefel::{self, canonical_inner_raw, log_raw, manifold_dim, StiefelPoint};

/// Largest tolerated fraction of Monte Carlo draws falling outside the
/// logarithm's safety radius.
pub const MC_REJECTION_BUDGET: f64 = 0.01;

const QUAD_ABS_TOL: f64 = 1e-10;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Density, with respect to surface measure on S², of the projection of
/// `N(μ, σ²·I₃)` at angular distance `theta` from `μ`:
///
/// `f(θ) = (2π)^{-3/2} [a·e^{−1/(2σ²)} + (a²+1)·√(2π)·Φ(a)·e^{−sin²θ/(2σ²)}]`,
/// `a = cos θ / σ`.
pub fn projected_normal_density_s2(theta: f64, sigma2: f64) -> f64 {
    let s = sigma2.sqrt();
    let c = theta.cos();
    let a = c / s;
    let lead = a * (-0.5 / sigma2).exp();
    let tail = (a * a + 1.0) * (2.0 * PI).sqrt() * std_normal_cdf(a) * (-(1.0 - c * c) / (2.0 * sigma2)).exp();
    (lead + tail) / (2.0 * PI).powf(1.5)
}

/// η on S² by adaptive quadrature: `η(σ²) = ½ ∫₀^π θ² f(θ) 2π sin θ dθ`,
/// the halving being the division by `d = 2`.
pub fn eta_closed_form_s2(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("η needs σ² > 0, got {sigma2}")));
    }
    let s = sigma2.sqrt();
    // The mass concentrates at θ ~ σ for small σ; break there so the
    // adaptive panels see it.
    let mut breaks = vec![0.0];
    for m in [0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0] {
        let b = m * s;
        if b < PI {
            breaks.push(b);
        }
    }
    breaks.push(PI);
    let integrand = |t: f64| PI * t * t * t.sin() * projected_normal_density_s2(t, sigma2);
    let (value, _) = integrate_with_breaks(integrand, &breaks, QUAD_ABS_TOL);
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaEstimate {
    pub estimate: f64,
    /// Standard error of the per-draw statistic's mean.
    pub std_error: f64,
    pub samples: usize,
    /// Draws discarded because their logarithm was undefined.
    pub rejected: usize,
}

/// Monte Carlo estimate of η(σ²) at the canonical mean `I_{n,k}`.
pub fn eta_monte_carlo<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    sigma2: f64,
    samples: usize,
    rng: &mut R,
) -> Result<EtaEstimate> {
    if k == 0 || n < k {
        return Err(Error::dim(format!("St(n,k) needs n ≥ k ≥ 1, got ({n},{k})")));
    }
    eta_monte_carlo_at(&StiefelPoint::identity(n, k), sigma2, samples, rng)
}

/// Monte Carlo estimate of η(σ²) at an arbitrary mean.
///
/// Each draw `X = μ + σG` is projected and mapped to `V = log_μ pr(X)`; the
/// per-draw statistic is `Σⱼ ⟨V, Bⱼ⟩²/d = ‖V‖²_μ/d` for any orthonormal
/// basis `{Bⱼ}`. Draws whose logarithm fails are redrawn; exceeding
/// [`MC_REJECTION_BUDGET`] of all attempts is an error.
pub fn eta_monte_carlo_at<R: Rng + ?Sized>(
    mean: &StiefelPoint,
    sigma2: f64,
    samples: usize,
    rng: &mut R,
) -> Result<EtaEstimate> {
    eta_monte_carlo_budgeted(mean, sigma2, samples, MC_REJECTION_BUDGET, rng)
}

/// [`eta_monte_carlo_at`] with an explicit rejection budget in `[0, 1)`.
///
/// Rejected draws truncate the distribution at the safety radius, which
/// biases the estimate downward; the returned `rejected` count bounds how
/// much mass was cut.
pub fn eta_monte_carlo_budgeted<R: Rng + ?Sized>(
    mean: &StiefelPoint,
    sigma2: f64,
    samples: usize,
    budget: f64,
    rng: &mut R,
) -> Result<EtaEstimate> {
    if !(0.0..1.0).contains(&budget) {
        return Err(Error::Domain(format!("rejection budget must lie in [0, 1), got {budget}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("η needs σ² > 0, got {sigma2}")));
    }
    if samples < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: samples,
        });
    }
    let mu = mean.matrix();
    let (n, k) = mu.shape();
    let d = manifold_dim(n, k) as f64;
    let sd = sigma2.sqrt();
    // rejected / (samples + rejected) > budget  ⇔  rejected > samples·b/(1−b)
    let max_rejected = samples as f64 * budget / (1.0 - budget);

    let mut stats = RunningStats::new();
    let mut rejected = 0usize;
    let mut noise = Mat::zeros(n, k);
    while (stats.count() as usize) < samples {
        for x in noise.iter_mut() {
            *x = sd * rng.sample::<f64, _>(StandardNormal);
        }
        let x = mu + &noise;
        let v = stiefel::project(&x).and_then(|p| log_raw(mu, p.matrix()));
        match v {
            Ok(v) => stats.push(canonical_inner_raw(mu, &v, &v) / d),
            Err(Error::OutOfInjectivityRadius { .. } | Error::SingularProjection { .. }) => {
                rejected += 1;
                if rejected as f64 > max_rejected {
                    return Err(Error::UnreliableRegime {
                        sigma2,
                        rejected,
                        attempted: stats.count() as usize + rejected,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EtaEstimate {
        estimate: stats.mean(),
        std_error: stats.std_error(),
        samples,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn density_integrates_to_one() {
        for sigma2 in [1e-3f64, 0.05, 0.5, 2.0, 10.0] {
            let s = sigma2.sqrt();
            let f = |t: f64| 2.0 * PI * t.sin() * projected_normal_density_s2(t, sigma2);
            let breaks: Vec<f64> = [0.0, s, 3.0 * s, 10.0 * s, PI]
                .into_iter()
                .filter(|&b| b <= PI)
                .collect();
            let (mass, _) = integrate_with_breaks(f, &breaks, 1e-12);
            assert!((mass - 1.0).abs() < 1e-9, "σ² = {sigma2}: mass {mass}");
        }
    }

    #[test]
    fn density_tends_to_uniform() {
        let u = 1.0 / (4.0 * PI);
        for t in [0.1, 1.0, 2.5] {
            assert!((projected_normal_density_s2(t, 1e8) - u).abs() < 1e-3 * u);
        }
    }

    #[test]
    fn eta_s2_limits_and_monotonicity() {
        assert!(eta_closed_form_s2(1e-6).unwrap() < 1e-4);
        // Small-noise limit: pr(X) − μ ≈ tangent part of σG, so η ≈ σ².
        let small = eta_closed_form_s2(1e-4).unwrap();
        assert!((small / 1e-4 - 1.0).abs() < 1e-3);
        let (a, b, c) = (
            eta_closed_form_s2(0.1).unwrap(),
            eta_closed_form_s2(0.5).unwrap(),
            eta_closed_form_s2(1.0).unwrap(),
        );
        assert!(a < b && b < c);
        // Uniform limit: E[θ²]/2 with θ ~ sin θ/2 on [0, π] is (π² − 4)/4.
        let uniform = (PI * PI - 4.0) / 4.0;
        assert!((eta_closed_form_s2(1e8).unwrap() - uniform).abs() < 1e-3);
    }

    #[test]
    fn eta_s2_rejects_bad_input() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(eta_closed_form_s2(bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn monte_carlo_matches_quadrature_on_s2() {
        let mut rng = rng_from_seed(50);
        for sigma2 in [0.05, 0.3] {
            let mc = eta_monte_carlo(3, 1, sigma2, 200_000, &mut rng).unwrap();
            let exact = eta_closed_form_s2(sigma2).unwrap();
            assert!(
                (mc.estimate - exact).abs() < 3.0 * mc.std_error,
                "σ² = {sigma2}: {} ± {} vs {exact}",
                mc.estimate,
                mc.std_error
            );
            assert_eq!(mc.samples, 200_000);
        }
    }

    #[test]
    fn monte_carlo_small_variance_is_near_zero() {
        let mut rng = rng_from_seed(51);
        let e = eta_monte_carlo(4, 2, 1e-8, 100, &mut rng).unwrap();
        assert!(e.estimate < 1e-7 && e.estimate > 0.0);
        assert_eq!(e.rejected, 0);
    }

    #[test]
    fn monte_carlo_input_validation() {
        let mut rng = rng_from_seed(52);
        assert!(matches!(
            eta_monte_carlo(4, 2, 0.1, 1, &mut rng),
            Err(Error::InsufficientSample { .. })
        ));
        assert!(matches!(
            eta_monte_carlo(4, 2, -0.1, 10, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(eta_monte_carlo(2, 3, 0.1, 10, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let a = eta_monte_carlo(4, 2, 0.2, 500, &mut rng_from_seed(53)).unwrap();
        let b = eta_monte_carlo(4, 2, 0.2, 500, &mut rng_from_seed(53)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diffuse_regime_is_reported() {
        // Near-uniform draws on St(4,2) exceed the safety radius often.
        let mut rng = rng_from_seed(54);
        assert!(matches!(
            eta_monte_carlo(4, 2, 100.0, 2000, &mut rng),
            Err(Error::UnreliableRegime { .. })
        ));
        // A wider budget trades the error for a truncated estimate.
        let mean = StiefelPoint::identity(4, 2);
        let e = eta_monte_carlo_budgeted(&mean, 1.0, 2000, 0.2, &mut rng).unwrap();
        assert!(e.rejected > 0);
        assert!(eta_monte_carlo_budgeted(&mean, 1.0, 2000, 1.0, &mut rng).is_err());
    }
}
