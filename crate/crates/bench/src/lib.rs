//! Shared inputs for the criterion benches in `benches/`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use stiefel_ekf::stiefel::project;
use stiefel_ekf::{Mat, StiefelPoint};

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_point<R: Rng>(n: usize, k: usize, rng: &mut R) -> StiefelPoint {
    project(&gaussian(n, k, rng)).expect("gaussian matrices have full rank")
}

pub fn random_antisymmetric<R: Rng>(n: usize, rng: &mut R) -> Mat {
    let g = gaussian(n, n, rng);
    (&g - g.transpose()) * 0.5
}
