//! Riemannian logarithm on St(n,k) under the canonical metric.
//!
//! For k ≥ 2 this is the algebraic fixed-point iteration on SO(2k): write
//! `Y = XM + QN` with `[X Q]` orthonormal, complete `[M; N]` to
//! `V = [[M, X₀], [N, Y₀]] ∈ SO(2k)`, then repeatedly rotate the completion
//! by `exp_M(−C)` until the lower-right block `C` of `log_M(V)` vanishes.
//! The initial completion is chosen by orthogonal Procrustes so that `Y₀` is
//! symmetric positive semidefinite, which starts the iteration close to the
//! fixed point. For k = 1 the great-circle closed form is used.

use nalgebra::SVD;

use super::{canonical_inner_raw, safety_radius, StiefelPoint, TangentVector};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Convergence tolerance on `‖C‖_F`.
pub const LOG_TOL: f64 = 1e-10;
pub const LOG_MAX_ITER: usize = 100;

/// `log_X(Y)`: the tangent vector at X whose geodesic reaches Y at time 1.
///
/// Fails with [`Error::OutOfInjectivityRadius`] when the iteration does not
/// converge or the result is longer than [`safety_radius`].
pub fn log_map(x: &StiefelPoint, y: &StiefelPoint) -> Result<TangentVector> {
    if x.matrix().shape() != y.matrix().shape() {
        return Err(Error::dim(format!(
            "log_map between St({},{}) and St({},{})",
            x.n(),
            x.k(),
            y.n(),
            y.k()
        )));
    }
    let v = log_raw(x.matrix(), y.matrix())?;
    Ok(TangentVector::from_trusted(x, v))
}

/// [`log_map`] on raw matrices with orthonormal columns.
pub fn log_raw(x: &Mat, y: &Mat) -> Result<Mat> {
    let k = x.ncols();
    let v = if k == 1 {
        log_sphere(x, y)?
    } else {
        log_iterative(x, y)?
    };
    let norm = canonical_inner_raw(x, &v, &v).max(0.0).sqrt();
    let radius = safety_radius(k);
    if norm >= radius {
        return Err(Error::out_of_radius(format!(
            "geodesic distance {norm:.6} exceeds the safety radius {radius:.6}"
        )));
    }
    Ok(v)
}

fn log_sphere(x: &Mat, y: &Mat) -> Result<Mat> {
    let c = x.dot(y);
    let w = y - x * c;
    let s = w.norm();
    if s == 0.0 && c > 0.0 {
        return Ok(Mat::zeros(x.nrows(), 1));
    }
    // Near the antipode the direction of w is rounding noise.
    if c < 0.0 && s <= 64.0 * f64::EPSILON {
        return Err(Error::out_of_radius("antipodal points on the sphere"));
    }
    let theta = s.atan2(c);
    Ok(w * (theta / s))
}

pub(crate) fn log_iterative(x: &Mat, y: &Mat) -> Result<Mat> {
    let (n, k) = x.shape();
    let m = x.transpose() * y;
    let q = complement_factor(x, &(y - x * &m))?;
    let nb = q.transpose() * y;

    let mut mn = Mat::zeros(2 * k, k);
    mn.view_mut((0, 0), (k, k)).copy_from(&m);
    mn.view_mut((k, 0), (k, k)).copy_from(&nb);
    let comp = procrustes_completion(&mn);

    let mut v = Mat::zeros(2 * k, 2 * k);
    v.view_mut((0, 0), (2 * k, k)).copy_from(&mn);
    v.view_mut((0, k), (2 * k, k)).copy_from(&comp);

    let mut converged = None;
    for _ in 0..LOG_MAX_ITER {
        let l = linalg::log_special_orthogonal(&v)?;
        let c = l.view((k, k), (k, k)).into_owned();
        if c.norm() <= LOG_TOL {
            converged = Some(l);
            break;
        }
        let phi = (-c).exp();
        let right = v.view((0, k), (2 * k, k)) * phi;
        v.view_mut((0, k), (2 * k, k)).copy_from(&right);
    }
    let l = converged.ok_or_else(|| {
        Error::out_of_radius(format!(
            "logarithm iteration did not converge in {LOG_MAX_ITER} steps"
        ))
    })?;
    let a = l.view((0, 0), (k, k));
    let b = l.view((k, 0), (k, k));
    let mut out = x * a + &q * b;
    debug_assert_eq!(out.shape(), (n, k));
    // XᵀΔ must be exactly skew for the canonical metric bookkeeping.
    let xo = x.transpose() * &out;
    out -= x * linalg::sym(&xo);
    Ok(out)
}

/// Orthonormal `Q` (n×k) with `QᵀX = 0` spanning the range of `resid`, padded
/// with complement directions where `resid` is rank deficient.
fn complement_factor(x: &Mat, resid: &Mat) -> Result<Mat> {
    let (n, k) = x.shape();
    let (mut q, r) = linalg::qr_thin(resid)?;
    let scale = resid.norm().max(1.0);
    let mut deficient = Vec::new();
    for i in 0..k {
        if r[(i, i)] <= 1e-13 * scale {
            deficient.push(i);
            continue;
        }
        // Householder Q is orthonormal but only approximately ⟂ X.
        let mut col = q.column(i).into_owned();
        let proj = x.transpose() * &col;
        col -= x * proj;
        col /= col.norm();
        q.set_column(i, &col);
    }
    if !deficient.is_empty() {
        if n < 2 * k {
            return Ok(q);
        }
        let mut span = Mat::zeros(n, k + k - deficient.len());
        span.view_mut((0, 0), (n, k)).copy_from(x);
        let mut c = k;
        for i in (0..k).filter(|i| !deficient.contains(i)) {
            span.set_column(c, &q.column(i));
            c += 1;
        }
        let fill = linalg::orthonormal_complement(&span);
        for (j, &i) in deficient.iter().enumerate() {
            q.set_column(i, &fill.column(j));
        }
    }
    Ok(q)
}

/// Orthonormal completion `[X₀; Y₀]` of the 2k×k block `[M; N]` with `Y₀`
/// symmetric positive semidefinite (up to one sign flip that keeps the full
/// matrix in SO(2k)).
fn procrustes_completion(mn: &Mat) -> Mat {
    let k = mn.ncols();
    let comp = linalg::orthonormal_complement(mn);
    let lower = comp.view((k, 0), (k, k)).into_owned();
    let svd = SVD::new(lower, true, true);
    let u = svd.u.expect("requested U");
    let r = svd.v_t.expect("requested Vᵀ").transpose();
    let mut flip = Mat::identity(k, k);
    let mut out = &comp * &r * u.transpose();

    let mut full = Mat::zeros(2 * k, 2 * k);
    full.view_mut((0, 0), (2 * k, k)).copy_from(mn);
    full.view_mut((0, k), (2 * k, k)).copy_from(&out);
    if full.determinant() < 0.0 {
        // Singular values are sorted descending; flip the weakest direction.
        flip[(k - 1, k - 1)] = -1.0;
        out = &comp * &r * flip * u.transpose();
    }
    out
}
