//! Dense small-matrix kernels.
//!
//! Everything here is a pure function of its inputs. The heavy lifting
//! (Padé scaling-and-squaring exponential, Golub–Kahan SVD, Householder QR,
//! symmetric eigensolver) is delegated to `nalgebra`; this module fixes the
//! conventions the rest of the crate relies on.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative rank tolerance for the polar projection.
pub const RANK_TOL: f64 = 1e-12;

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square(a: &Mat, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "{what} must be square, got {}×{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Matrix exponential `Σ Aʲ/j!` by scaling and squaring with a Padé core.
pub fn matrix_exp(a: &Mat) -> Result<Mat> {
    ensure_square(a, "matrix_exp input")?;
    ensure_finite(a, "matrix_exp input")?;
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    Ok(a.exp())
}

/// The orthogonal polar factor `U Vᵀ` of the thin SVD `X = U Σ Vᵀ`, i.e. the
/// closest matrix with orthonormal columns to `X` in Frobenius norm.
pub fn polar_orthogonal(x: &Mat) -> Result<Mat> {
    ensure_finite(x, "polar_orthogonal input")?;
    let (n, k) = x.shape();
    if k == 0 || n < k {
        return Err(Error::dim(format!(
            "polar_orthogonal needs n ≥ k ≥ 1, got {n}×{k}"
        )));
    }
    if k == 1 {
        let norm = x.norm();
        // A single column has one singular value; rank loss means it vanished.
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::SingularProjection { ratio: 0.0 });
        }
        return Ok(x / norm);
    }
    let svd = SVD::new(x.clone(), true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s[0], s[k - 1]);
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        return Err(Error::SingularProjection { ratio });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    Ok(u * v_t)
}

/// Thin Householder QR `X = QR` with `Q` n×k, `R` k×k upper triangular and
/// `diag(R) ≥ 0`. Rank-deficient inputs are allowed.
pub fn qr_thin(x: &Mat) -> Result<(Mat, Mat)> {
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::dim(format!("qr_thin needs n ≥ k, got {n}×{k}")));
    }
    ensure_finite(x, "qr_thin input")?;
    let qr = x.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((q, r))
}

/// Orthonormal basis of the orthogonal complement of the column span of `x`
/// (which must have orthonormal columns). Candidates are the canonical basis
/// vectors; at each step the one with the largest residual after projecting
/// out the current span is accepted, so the result depends only on `x`.
pub fn orthonormal_complement(x: &Mat) -> Mat {
    let (n, k) = x.shape();
    let m = n - k;
    let mut basis: Vec<nalgebra::DVector<f64>> = x.column_iter().map(|c| c.into_owned()).collect();
    let mut used = vec![false; n];
    let mut out = Mat::zeros(n, m);
    for col in 0..m {
        let mut best: Option<(usize, nalgebra::DVector<f64>, f64)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut v = nalgebra::DVector::zeros(n);
            v[i] = 1.0;
            // Two passes of classical Gram–Schmidt.
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(_, _, bn)| norm > *bn) {
                best = Some((i, v, norm));
            }
        }
        let (i, v, norm) = best.expect("complement candidate exists");
        used[i] = true;
        let v = v / norm;
        out.set_column(col, &v);
        basis.push(v);
    }
    out
}

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

/// Cosine threshold below which an eigenvalue pair is treated as −1, where
/// the real logarithm of a rotation is not unique.
const ANTIPODAL_TOL: f64 = 1e-12;

/// Principal logarithm of a special orthogonal matrix, returned as an exactly
/// skew-symmetric matrix.
///
/// On every invariant plane `Q` acts as a rotation by θ, where `sym(Q)` is
/// `cos θ · I` and `skew(Q)` is `sin θ · J`. Hence
/// `log Q = g(sym Q) · skew Q` with `g(cos θ) = θ / sin θ`, evaluated through
/// a symmetric eigendecomposition. The angle information lives in `skew(Q)`,
/// so small rotations keep full relative accuracy.
pub fn log_special_orthogonal(q: &Mat) -> Result<Mat> {
    ensure_square(q, "log_special_orthogonal input")?;
    ensure_finite(q, "log_special_orthogonal input")?;
    let m = q.nrows();
    if m == 0 {
        return Ok(q.clone());
    }
    let s = sym(q);
    let w = skew(q);
    let eig = SymmetricEigen::new(s);
    let mut scaled = eig.eigenvectors.clone();
    for (j, &c) in eig.eigenvalues.iter().enumerate() {
        if c < -1.0 + ANTIPODAL_TOL {
            return Err(Error::out_of_radius(
                "rotation by π: matrix logarithm is not unique",
            ));
        }
        scaled.column_mut(j).scale_mut(theta_over_sin(c.min(1.0)));
    }
    let g = scaled * eig.eigenvectors.transpose();
    let l = g * w;
    Ok(skew(&l))
}

/// `acos(c) / sqrt(1 − c²)` for `c ∈ (−1, 1]`, continuous at `c = 1`.
fn theta_over_sin(c: f64) -> f64 {
    let one_minus = 1.0 - c;
    if one_minus < 1e-6 {
        // Series in u = 1 − c: θ/sinθ = 1 + u/3 + 2u²/15 + O(u³).
        1.0 + one_minus / 3.0 + 2.0 * one_minus * one_minus / 15.0
    } else {
        c.acos() / (one_minus * (1.0 + c)).sqrt()
    }
}
