use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use stiefel_ekf::ekf::{predict, update};
use stiefel_ekf::rng::rng_from_seed;
use stiefel_ekf::stats::{EtaBuild, EtaTable, GridSpec};
use stiefel_ekf::stiefel::{distance, exp_map, project, random_tangent};
use stiefel_ekf::{Belief, FilterConfig, LogFailurePolicy, Mat, StiefelPoint, SystemModel};

fn table(n: usize, k: usize) -> EtaTable {
    static S2: OnceLock<EtaTable> = OnceLock::new();
    static ST42: OnceLock<EtaTable> = OnceLock::new();
    let cell = if k == 1 { &S2 } else { &ST42 };
    cell.get_or_init(|| {
        let grid = GridSpec {
            min: 1e-6,
            max: 0.5,
            nodes: 24,
        }
        .nodes()
        .unwrap();
        let build = EtaBuild {
            samples: 4_000,
            base_seed: 17,
            ..EtaBuild::default()
        };
        EtaTable::build(n, k, &grid, &build).unwrap()
    })
    .clone()
}

fn random_antisymmetric<R: Rng>(n: usize, rng: &mut R) -> Mat {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g - g.transpose()) * 0.5
}

fn random_point<R: Rng>(n: usize, k: usize, rng: &mut R) -> StiefelPoint {
    project(&DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap()
}

fn setup(seed: u64, st42: bool, nu2: f64, xi2: f64, sigma02: f64) -> (FilterConfig, Belief, StiefelPoint) {
    let (n, k) = if st42 { (4, 2) } else { (3, 1) };
    let mut rng = rng_from_seed(seed);
    let mu = random_point(n, k, &mut rng);
    let model = SystemModel::new(random_antisymmetric(n, &mut rng), nu2, xi2, mu, sigma02).unwrap();
    let config = FilterConfig::new(model, table(n, k), LogFailurePolicy::HardError).unwrap();
    let belief = config.initial_belief().unwrap();
    let pred_mean = belief.mean.clone();
    let z = exp_map(&random_tangent(&pred_mean, 0.2, &mut rng).unwrap());
    (config, belief, z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_contracts_variance_and_keeps_mean_on_manifold(
        seed in any::<u64>(),
        st42 in any::<bool>(),
        nu2 in 0.0..1.0f64,
        xi2 in 1e-3..1.0f64,
        sigma02 in 0.0..0.2f64,
        t in 0.0..0.1f64,
    ) {
        let (config, belief, z) = setup(seed, st42, nu2, xi2, sigma02);
        let pred = predict(&belief, t, &config).unwrap();
        prop_assert!(StiefelPoint::new(pred.mean.matrix().clone()).is_ok());
        let Ok(out) = update(&pred, &z, &config) else {
            return Ok(());
        };
        prop_assert!((0.0..1.0).contains(&out.gain));
        prop_assert_eq!(out.gain == 0.0, pred.ambient_sigma2 == 0.0);
        prop_assert!(out.belief.intrinsic_var <= pred.intrinsic_var);
        if out.gain > 0.0 && pred.intrinsic_var > 0.0 {
            prop_assert!(out.belief.intrinsic_var < pred.intrinsic_var);
        }
        prop_assert!(StiefelPoint::new(out.belief.mean.matrix().clone()).is_ok());
        prop_assert!(out.belief.ambient_sigma2 <= pred.ambient_sigma2 + 1e-12);
    }
}

/// On a tiny neighbourhood the update must agree with the flat Kalman update
/// `μ + K(z − μ)` followed by projection back onto the manifold.
#[test]
fn update_reduces_to_flat_kalman_update_locally() {
    let mut rng = rng_from_seed(303);
    for st42 in [false, true] {
        for trial in 0..50 {
            let (config, belief, _) = setup(1000 + trial, st42, 1e-4, 1e-4, 1e-4);
            let pred = predict(&belief, 0.5, &config).unwrap();
            let v = random_tangent(&pred.mean, 1.0, &mut rng).unwrap();
            let v = v.scaled(1e-3 / v.norm());
            let z = exp_map(&v);
            let out = update(&pred, &z, &config).unwrap();
            let k = out.gain;
            let flat = pred.mean.matrix() + (z.matrix() - pred.mean.matrix()) * k;
            let flat = project(&flat).unwrap();
            let step = (out.belief.mean.matrix() - pred.mean.matrix()).norm();
            let dev = (out.belief.mean.matrix() - flat.matrix()).norm();
            assert!(dev / step < 1e-4, "relative deviation {:e}", dev / step);
            // Scalar Kalman variance recursion in the small-variance limit.
            let classical = pred.ambient_sigma2 * config.model.xi2() / (pred.ambient_sigma2 + config.model.xi2());
            assert!((out.belief.ambient_sigma2 - classical).abs() / classical < 1e-2);
            assert!((distance(&pred.mean, &out.belief.mean).unwrap() - k * 1e-3).abs() < 1e-12);
        }
    }
}
