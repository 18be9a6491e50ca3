//! Extended Kalman filtering for measurements on the Stiefel manifold
//! St(n,k) = { X ∈ ℝⁿˣᵏ : XᵀX = I_k } under the canonical metric.
//!
//! The crate is layered bottom-up:
//!
//! - [`linalg`]: dense kernels (matrix exponential, polar factor, thin QR,
//!   logarithm of special orthogonal matrices).
//! - [`stiefel`]: points, tangent vectors, the canonical metric, the
//!   Riemannian exponential and logarithm, tangent bases.
//! - [`stats`]: Fréchet means, tangent covariances and the variance transfer
//!   function η mapping an ambient isotropic variance to the intrinsic scalar
//!   variance of its polar projection.
//! - [`sde`]: exact-discretisation simulation of `dX = AX dt + ν dB` with
//!   antisymmetric `A` and noisy projected measurements.
//! - [`ekf`]: the manifold extended Kalman filter.
//! - [`experiment`]: configuration, single runs, SNR sweeps and η-table
//!   builds, with CSV/JSON artifacts.

pub mod ekf;
pub mod error;
pub mod export;
pub mod experiment;
pub mod linalg;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod stiefel;

pub use ekf::{Belief, FilterConfig, FilterStep, FilterTrack, LogFailurePolicy};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Mode};
pub use linalg::Mat;
pub use rng::SeededRng;
pub use sde::{MeasurementSeries, NoiseMode, SystemModel, Trajectory};
pub use stats::{EtaTable, IntrinsicMoments, ProjectedSample};
pub use stiefel::{StiefelPoint, TangentBasis, TangentVector};
