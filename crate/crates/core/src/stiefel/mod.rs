//! The Stiefel manifold St(n,k) with the canonical metric
//! `⟨V,W⟩_X = tr(Vᵀ(I − ½XXᵀ)W)`.

mod log;

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

pub use log::{log_map, log_raw, LOG_MAX_ITER, LOG_TOL};

/// Validation tolerance for `‖XᵀX − I‖_F` and for tangency residuals.
pub const MANIFOLD_TOL: f64 = 1e-8;

/// Lower bound on the injectivity radius of St(n,k), k ≥ 2, under the
/// canonical metric.
pub fn injectivity_lower_bound() -> f64 {
    (0.8f64).sqrt() * std::f64::consts::PI
}

/// Largest geodesic distance for which [`log_map`] returns a value.
///
/// For k = 1 the manifold is the round unit sphere whose injectivity radius
/// is exactly π; otherwise the √(4/5)·π lower bound is used.
pub fn safety_radius(k: usize) -> f64 {
    if k == 1 {
        std::f64::consts::PI
    } else {
        injectivity_lower_bound()
    }
}

/// Intrinsic dimension `nk − k(k+1)/2`.
pub fn manifold_dim(n: usize, k: usize) -> usize {
    n * k - k * (k + 1) / 2
}

/// A matrix with orthonormal columns.
#[derive(Clone, PartialEq)]
pub struct StiefelPoint {
    value: Mat,
}

impl fmt::Debug for StiefelPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StiefelPoint({}×{}) {:?}", self.n(), self.k(), self.value.as_slice())
    }
}

impl StiefelPoint {
    pub fn new(value: Mat) -> Result<Self> {
        linalg::ensure_finite(&value, "Stiefel point")?;
        let (n, k) = value.shape();
        if k == 0 || n < k {
            return Err(Error::dim(format!("St(n,k) needs n ≥ k ≥ 1, got {n}×{k}")));
        }
        let residual = orthonormality_residual(&value);
        if residual >= MANIFOLD_TOL {
            return Err(Error::NotOnManifold { n, k, residual });
        }
        Ok(Self { value })
    }

    /// `I_{n,k}`: the first k columns of the n×n identity.
    pub fn identity(n: usize, k: usize) -> Self {
        assert!(k >= 1 && n >= k, "St(n,k) needs n ≥ k ≥ 1");
        Self {
            value: Mat::identity(n, k),
        }
    }

    /// Accepts `value` as is when it validates, otherwise replaces it by its
    /// polar factor. Used for points produced by long chains of products.
    pub fn reorthonormalized(value: Mat) -> Result<Self> {
        match Self::new(value.clone()) {
            Ok(p) => Ok(p),
            Err(Error::NotOnManifold { .. }) => project(&value),
            Err(e) => Err(e),
        }
    }

    pub fn n(&self) -> usize {
        self.value.nrows()
    }

    pub fn k(&self) -> usize {
        self.value.ncols()
    }

    pub fn dim(&self) -> usize {
        manifold_dim(self.n(), self.k())
    }

    pub fn matrix(&self) -> &Mat {
        &self.value
    }

    pub fn into_matrix(self) -> Mat {
        self.value
    }

    /// Row-major entries, the order used by every CSV export.
    pub fn row_major(&self) -> Vec<f64> {
        row_major(&self.value)
    }
}

pub(crate) fn row_major(m: &Mat) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}

pub(crate) fn orthonormality_residual(x: &Mat) -> f64 {
    let k = x.ncols();
    (x.transpose() * x - Mat::identity(k, k)).norm()
}

fn tangency_residual(x: &Mat, v: &Mat) -> f64 {
    let xv = x.transpose() * v;
    (&xv + xv.transpose()).norm()
}

/// A tangent vector together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: StiefelPoint,
    value: Mat,
}

impl TangentVector {
    pub fn new(base: &StiefelPoint, value: Mat) -> Result<Self> {
        if value.shape() != base.matrix().shape() {
            return Err(Error::dim(format!(
                "tangent vector shape {:?} does not match base {:?}",
                value.shape(),
                base.matrix().shape()
            )));
        }
        linalg::ensure_finite(&value, "tangent vector")?;
        let residual = tangency_residual(base.matrix(), &value);
        if residual >= MANIFOLD_TOL * value.norm().max(1.0) {
            return Err(Error::NotTangent { residual });
        }
        Ok(Self {
            base: base.clone(),
            value,
        })
    }

    pub fn zero(base: &StiefelPoint) -> Self {
        Self {
            base: base.clone(),
            value: Mat::zeros(base.n(), base.k()),
        }
    }

    pub(crate) fn from_trusted(base: &StiefelPoint, value: Mat) -> Self {
        Self {
            base: base.clone(),
            value,
        }
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn matrix(&self) -> &Mat {
        &self.value
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            value: &self.value * s,
        }
    }

    /// Canonical norm `√⟨V,V⟩_X`.
    pub fn norm(&self) -> f64 {
        canonical_inner_raw(self.base.matrix(), &self.value, &self.value)
            .max(0.0)
            .sqrt()
    }
}

/// `tr(Vᵀ W) − ½ tr((XᵀV)ᵀ (XᵀW))`, which equals `tr(Vᵀ(I − ½XXᵀ)W)`.
pub fn canonical_inner_raw(x: &Mat, v: &Mat, w: &Mat) -> f64 {
    let xv = x.transpose() * v;
    let xw = x.transpose() * w;
    v.dot(w) - 0.5 * xv.dot(&xw)
}

/// Canonical inner product of two tangent vectors at the same base point.
pub fn inner(v: &TangentVector, w: &TangentVector) -> Result<f64> {
    if v.base != w.base {
        return Err(Error::BaseMismatch);
    }
    Ok(canonical_inner_raw(v.base.matrix(), &v.value, &w.value))
}

/// Polar projection onto St(n,k).
pub fn project(x: &Mat) -> Result<StiefelPoint> {
    let q = linalg::polar_orthogonal(x)?;
    StiefelPoint::new(q)
}

/// Riemannian exponential under the canonical metric.
///
/// With `QR = (I − XXᵀ)V`,
/// `exp_X(V) = [X Q] · exp_M([[XᵀV, −Rᵀ], [R, 0]]) · [I_k; 0]`.
pub fn exp_map(v: &TangentVector) -> StiefelPoint {
    let y = exp_raw(v.base.matrix(), &v.value);
    match StiefelPoint::new(y.clone()) {
        Ok(p) => p,
        // Only reachable for enormous velocities; the polar factor is the
        // nearest point on the manifold.
        Err(_) => project(&y).expect("exp_map output has full column rank"),
    }
}

/// [`exp_map`] on raw matrices, without validation.
pub fn exp_raw(x: &Mat, v: &Mat) -> Mat {
    let k = x.ncols();
    if k == 1 {
        let theta = v.norm();
        if theta == 0.0 {
            return x.clone();
        }
        return x * theta.cos() + v * (theta.sin() / theta);
    }
    let a = x.transpose() * v;
    let resid = v - x * &a;
    let (q, r) = linalg::qr_thin(&resid).expect("finite tangent input");
    let mut block = Mat::zeros(2 * k, 2 * k);
    block.view_mut((0, 0), (k, k)).copy_from(&a);
    block.view_mut((0, k), (k, k)).copy_from(&(-r.transpose()));
    block.view_mut((k, 0), (k, k)).copy_from(&r);
    let e = block.exp();
    x * e.view((0, 0), (k, k)) + q * e.view((k, 0), (k, k))
}

/// Geodesic distance: the canonical norm of `log_X(Y)`.
pub fn distance(x: &StiefelPoint, y: &StiefelPoint) -> Result<f64> {
    Ok(log_map(x, y)?.norm())
}

/// Orthogonal projection of an ambient matrix onto `T_X St`:
/// `W − X sym(XᵀW)`. The normal space `{XS : S = Sᵀ}` is orthogonal to the
/// tangent space under both the Frobenius and the canonical inner product.
pub fn tangent_project(x: &StiefelPoint, w: &Mat) -> Result<TangentVector> {
    if w.shape() != x.matrix().shape() {
        return Err(Error::dim("tangent_project shape mismatch"));
    }
    let xm = x.matrix();
    let s = linalg::sym(&(xm.transpose() * w));
    Ok(TangentVector::from_trusted(x, w - xm * s))
}

/// An orthonormal basis of `T_X St` under the canonical metric.
///
/// Ordering: first the k(k−1)/2 directions `X(E_ij − E_ji)` for `i < j`
/// (row-major over the pair), then the (n−k)k directions `X⊥ E_ab`, column
/// `b` outer and row `a` inner, where `X⊥` is the deterministic complement
/// from [`linalg::orthonormal_complement`].
#[derive(Debug, Clone)]
pub struct TangentBasis {
    base: StiefelPoint,
    complement: Mat,
    vectors: Vec<Mat>,
}

impl TangentBasis {
    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> TangentVector {
        TangentVector::from_trusted(&self.base, self.vectors[i].clone())
    }

    /// Coordinates `⟨V, B_i⟩_X` of a tangent matrix at the basis' base point.
    pub fn coordinates_raw(&self, v: &Mat) -> DVector<f64> {
        let x = self.base.matrix();
        let k = x.ncols();
        let omega = x.transpose() * v;
        let perp = self.complement.transpose() * v;
        let mut c = DVector::zeros(self.vectors.len());
        let mut idx = 0;
        // ⟨V, X(E_ij − E_ji)⟩ = ½(Ω_ij − Ω_ji) with Ω = XᵀV.
        for i in 0..k {
            for j in (i + 1)..k {
                c[idx] = 0.5 * (omega[(i, j)] - omega[(j, i)]);
                idx += 1;
            }
        }
        for b in 0..k {
            for a in 0..perp.nrows() {
                c[idx] = perp[(a, b)];
                idx += 1;
            }
        }
        c
    }

    pub fn coordinates(&self, v: &TangentVector) -> Result<DVector<f64>> {
        if v.base != self.base {
            return Err(Error::BaseMismatch);
        }
        Ok(self.coordinates_raw(&v.value))
    }

    /// `Σ cᵢ Bᵢ`.
    pub fn combine(&self, coords: &[f64]) -> Result<TangentVector> {
        if coords.len() != self.vectors.len() {
            return Err(Error::dim(format!(
                "expected {} coordinates, got {}",
                self.vectors.len(),
                coords.len()
            )));
        }
        let mut v = Mat::zeros(self.base.n(), self.base.k());
        for (c, b) in coords.iter().zip(&self.vectors) {
            v += b * *c;
        }
        Ok(TangentVector::from_trusted(&self.base, v))
    }

    /// `Σ cᵢ Bᵢ` with `cᵢ ~ N(0, variance)` i.i.d.
    pub fn random<R: Rng + ?Sized>(&self, variance: f64, rng: &mut R) -> Result<TangentVector> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "tangent noise variance must be finite and ≥ 0, got {variance}"
            )));
        }
        let sd = variance.sqrt();
        let coords: Vec<f64> = (0..self.vectors.len())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.combine(&coords)
    }
}

pub fn tangent_basis(x: &StiefelPoint) -> TangentBasis {
    let xm = x.matrix();
    let (n, k) = xm.shape();
    let complement = linalg::orthonormal_complement(xm);
    let mut vectors = Vec::with_capacity(manifold_dim(n, k));
    for i in 0..k {
        for j in (i + 1)..k {
            let mut omega = Mat::zeros(k, k);
            omega[(i, j)] = 1.0;
            omega[(j, i)] = -1.0;
            // ‖X Ω‖² under the canonical metric is ½‖Ω‖²_F = 1.
            vectors.push(xm * omega);
        }
    }
    for b in 0..k {
        for a in 0..(n - k) {
            let mut v = Mat::zeros(n, k);
            v.set_column(b, &complement.column(a));
            vectors.push(v);
        }
    }
    TangentBasis {
        base: x.clone(),
        complement,
        vectors,
    }
}

/// Isotropic normal draw in `T_X St`: `Σ cᵢ Bᵢ`, `cᵢ ~ N(0, variance)`.
pub fn random_tangent<R: Rng + ?Sized>(
    x: &StiefelPoint,
    variance: f64,
    rng: &mut R,
) -> Result<TangentVector> {
    tangent_basis(x).random(variance, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use nalgebra::dmatrix;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn e(n: usize, i: usize) -> Mat {
        let mut m = Mat::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    fn random_point(n: usize, k: usize, rng: &mut impl Rng) -> StiefelPoint {
        let g = Mat::from_fn(n, k, |_, _| rng.sample(StandardNormal));
        project(&g).unwrap()
    }

    #[test]
    fn point_validation() {
        assert!(StiefelPoint::new(Mat::identity(4, 2)).is_ok());
        assert!(matches!(
            StiefelPoint::new(Mat::identity(4, 2) * 2.0),
            Err(Error::NotOnManifold { .. })
        ));
        assert!(StiefelPoint::new(Mat::zeros(2, 3)).is_err());
        let mut nan = Mat::identity(3, 1);
        nan[(0, 0)] = f64::NAN;
        assert!(matches!(StiefelPoint::new(nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn reorthonormalization_repairs_drift() {
        let mut m = Mat::identity(4, 2);
        m[(2, 0)] = 1e-3;
        m[(1, 0)] = 1e-3;
        let p = StiefelPoint::reorthonormalized(m).unwrap();
        assert!(orthonormality_residual(p.matrix()) < 1e-14);
    }

    #[test]
    fn project_fixes_points_on_the_manifold() {
        let mu0 = dmatrix![0.0; 0.0; 1.0];
        assert_eq!(project(&mu0).unwrap().matrix(), &mu0);
        let p = project(&(Mat::identity(4, 2) * 2.0)).unwrap();
        assert!((p.matrix() - Mat::identity(4, 2)).norm() < 1e-15);
    }

    #[test]
    fn project_is_lipschitz_near_full_rank_input() {
        let mut rng = rng_from_seed(1);
        let x = Mat::from_fn(4, 2, |_, _| rng.sample(StandardNormal));
        let w = Mat::from_fn(4, 2, |_, _| rng.sample(StandardNormal));
        let p0 = project(&x).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let d = distance(&p0, &project(&(&x + &w * eps)).unwrap()).unwrap();
            // O(ε): ratio stays bounded and roughly constant.
            let ratio = d / eps;
            assert!(ratio < 10.0 * w.norm());
            if prev.is_finite() {
                assert!((ratio - prev).abs() < 0.2 * prev.max(1e-3));
            }
            prev = ratio;
        }
    }

    #[test]
    fn sphere_inner_is_frobenius() {
        let x = StiefelPoint::new(e(3, 0)).unwrap();
        let v = TangentVector::new(&x, dmatrix![0.0; 0.3; -0.4]).unwrap();
        assert!((inner(&v, &v).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn inner_blockwise_weights() {
        let x = StiefelPoint::identity(4, 2);
        let lower = dmatrix![0.0, 0.0; 0.0, 0.0; 1.0, 2.0; 3.0, 4.0];
        let v = TangentVector::new(&x, lower.clone()).unwrap();
        assert!((inner(&v, &v).unwrap() - lower.norm_squared()).abs() < 1e-14);
        let skew_block = dmatrix![0.0, 1.5; -1.5, 0.0; 0.0, 0.0; 0.0, 0.0];
        let w = TangentVector::new(&x, skew_block.clone()).unwrap();
        assert!((inner(&w, &w).unwrap() - 0.5 * skew_block.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn inner_is_symmetric_and_checks_base() {
        let mut rng = rng_from_seed(2);
        let x = random_point(4, 2, &mut rng);
        let v = random_tangent(&x, 1.0, &mut rng).unwrap();
        let w = random_tangent(&x, 1.0, &mut rng).unwrap();
        assert!((inner(&v, &w).unwrap() - inner(&w, &v).unwrap()).abs() < 1e-14);
        let y = random_point(4, 2, &mut rng);
        let u = random_tangent(&y, 1.0, &mut rng).unwrap();
        assert!(matches!(inner(&v, &u), Err(Error::BaseMismatch)));
    }

    #[test]
    fn tangent_validation() {
        let x = StiefelPoint::identity(4, 2);
        assert!(matches!(
            TangentVector::new(&x, Mat::identity(4, 2)),
            Err(Error::NotTangent { .. })
        ));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let mut rng = rng_from_seed(3);
        for (n, k) in [(3, 1), (4, 2), (8, 3)] {
            let x = random_point(n, k, &mut rng);
            assert_eq!(exp_map(&TangentVector::zero(&x)), x);
        }
    }

    #[test]
    fn sphere_quarter_turn() {
        let x = StiefelPoint::new(e(3, 0)).unwrap();
        let v = TangentVector::new(&x, e(3, 1) * FRAC_PI_2).unwrap();
        assert!((exp_map(&v).matrix() - e(3, 1)).norm() < 1e-15);
        // The general block formula agrees with the great-circle shortcut.
        let general = exp_general_for_test(x.matrix(), v.matrix());
        assert!((general - e(3, 1)).norm() < 1e-14);
    }

    fn exp_general_for_test(x: &Mat, v: &Mat) -> Mat {
        let k = x.ncols();
        let a = x.transpose() * v;
        let (q, r) = linalg::qr_thin(&(v - x * &a)).unwrap();
        let mut block = Mat::zeros(2 * k, 2 * k);
        block.view_mut((0, 0), (k, k)).copy_from(&a);
        block.view_mut((0, k), (k, k)).copy_from(&(-r.transpose()));
        block.view_mut((k, 0), (k, k)).copy_from(&r);
        let ex = linalg::matrix_exp(&block).unwrap();
        x * ex.view((0, 0), (k, k)) + q * ex.view((k, 0), (k, k))
    }

    #[test]
    fn sphere_exp_matches_great_circle() {
        let mut rng = rng_from_seed(4);
        for _ in 0..100 {
            let x = random_point(3, 1, &mut rng);
            let v = random_tangent(&x, 1.0, &mut rng).unwrap();
            let t = v.norm();
            let great = x.matrix() * t.cos() + v.matrix() * (t.sin() / t);
            assert!((exp_map(&v).matrix() - &great).norm() < 1e-12);
            assert!((exp_general_for_test(x.matrix(), v.matrix()) - &great).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_stays_on_manifold() {
        let mut rng = rng_from_seed(5);
        for (n, k) in [(4, 2), (6, 2), (8, 3), (3, 3)] {
            for _ in 0..50 {
                let x = random_point(n, k, &mut rng);
                let v = random_tangent(&x, 1.0, &mut rng).unwrap();
                let y = exp_raw(x.matrix(), v.matrix());
                assert!(orthonormality_residual(&y) < 1e-10);
            }
        }
    }

    #[test]
    fn exp_geodesic_has_constant_speed() {
        // d(exp(sV), exp(tV)) = |t − s|·‖V‖ for short geodesics.
        let mut rng = rng_from_seed(6);
        for _ in 0..20 {
            let x = random_point(4, 2, &mut rng);
            let v = random_tangent(&x, 0.2, &mut rng).unwrap();
            let a = exp_map(&v.scaled(0.3));
            let b = exp_map(&v.scaled(0.8));
            let d = distance(&a, &b).unwrap();
            assert!((d - 0.5 * v.norm()).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_log_and_distance() {
        let x = StiefelPoint::new(e(3, 0)).unwrap();
        let y = StiefelPoint::new(e(3, 1)).unwrap();
        let v = log_map(&x, &y).unwrap();
        assert!((v.matrix() - e(3, 1) * FRAC_PI_2).norm() < 1e-15);
        assert!((v.norm() - FRAC_PI_2).abs() < 1e-15);
        assert!((distance(&x, &y).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(distance(&x, &x).unwrap(), 0.0);
        assert_eq!(log_map(&x, &x).unwrap().matrix(), &Mat::zeros(3, 1));
    }

    #[test]
    fn sphere_antipode_has_no_log() {
        let x = StiefelPoint::new(e(3, 0)).unwrap();
        let y = StiefelPoint::new(-e(3, 0)).unwrap();
        assert!(matches!(
            log_map(&x, &y),
            Err(Error::OutOfInjectivityRadius { .. })
        ));
        assert!(safety_radius(1) > PI - 1e-12);
    }

    #[test]
    fn log_of_identical_points_is_zero() {
        let mut rng = rng_from_seed(7);
        let x = random_point(4, 2, &mut rng);
        assert!(log_map(&x, &x).unwrap().matrix().norm() < 1e-14);
    }

    #[test]
    fn distance_is_symmetric_and_orthogonally_invariant() {
        let mut rng = rng_from_seed(8);
        for _ in 0..50 {
            let x = random_point(4, 2, &mut rng);
            let v = random_tangent(&x, 0.3, &mut rng).unwrap();
            let y = exp_map(&v);
            let dxy = distance(&x, &y).unwrap();
            let dyx = distance(&y, &x).unwrap();
            assert!((dxy - dyx).abs() < 1e-6);
            let u = random_point(4, 4, &mut rng);
            let ux = StiefelPoint::new(u.matrix() * x.matrix()).unwrap();
            let uy = StiefelPoint::new(u.matrix() * y.matrix()).unwrap();
            assert!((distance(&ux, &uy).unwrap() - dxy).abs() < 1e-6);
        }
    }

    #[test]
    fn triangle_inequality_holds() {
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            let x = random_point(4, 2, &mut rng);
            let y = exp_map(&random_tangent(&x, 0.1, &mut rng).unwrap());
            let z = exp_map(&random_tangent(&x, 0.1, &mut rng).unwrap());
            let (dxy, dyz, dxz) = (
                distance(&x, &y).unwrap(),
                distance(&y, &z).unwrap(),
                distance(&x, &z).unwrap(),
            );
            assert!(dxz <= dxy + dyz + 1e-8);
        }
    }

    #[test]
    fn tangent_basis_dimensions_and_gram() {
        let mut rng = rng_from_seed(10);
        for (n, k, d) in [(3, 1, 2), (4, 2, 5), (6, 2, 9), (8, 3, 18), (3, 3, 3)] {
            let x = random_point(n, k, &mut rng);
            let b = tangent_basis(&x);
            assert_eq!(b.len(), d);
            for i in 0..d {
                let bi = b.vector(i);
                assert!(tangency_residual(x.matrix(), bi.matrix()) < 1e-12);
                for j in 0..d {
                    let g = inner(&bi, &b.vector(j)).unwrap();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((g - expected).abs() < 1e-8);
                }
            }
            let again = tangent_basis(&x);
            assert_eq!(again.matrices(), b.matrices());
        }
    }

    #[test]
    fn coordinates_match_inner_products_and_recombine() {
        let mut rng = rng_from_seed(11);
        let x = random_point(6, 2, &mut rng);
        let b = tangent_basis(&x);
        let v = b.random(1.0, &mut rng).unwrap();
        let c = b.coordinates(&v).unwrap();
        for i in 0..b.len() {
            assert!((c[i] - inner(&v, &b.vector(i)).unwrap()).abs() < 1e-12);
        }
        let back = b.combine(c.as_slice()).unwrap();
        assert!((back.matrix() - v.matrix()).norm() < 1e-12);
    }

    #[test]
    fn random_tangent_edge_cases() {
        let mut rng = rng_from_seed(12);
        let x = random_point(4, 2, &mut rng);
        let z = random_tangent(&x, 0.0, &mut rng).unwrap();
        assert_eq!(z.matrix(), &Mat::zeros(4, 2));
        assert!(matches!(
            random_tangent(&x, -1.0, &mut rng),
            Err(Error::Domain(_))
        ));
        for _ in 0..20 {
            let v = random_tangent(&x, 2.0, &mut rng).unwrap();
            assert!(tangency_residual(x.matrix(), v.matrix()) < 1e-12);
        }
    }

    #[test]
    fn random_tangent_coordinate_covariance() {
        let mut rng = rng_from_seed(13);
        let x = random_point(4, 2, &mut rng);
        let b = tangent_basis(&x);
        let d = b.len();
        let n = 100_000;
        let var = 0.3;
        let mut cov = Mat::zeros(d, d);
        for _ in 0..n {
            let c = b.coordinates(&b.random(var, &mut rng).unwrap()).unwrap();
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        for i in 0..d {
            for j in 0..d {
                let expected = if i == j { var } else { 0.0 };
                // SE of a product moment: var·√2/√n on the diagonal, var/√n off it.
                let se = var * if i == j { 2f64.sqrt() } else { 1.0 } / (n as f64).sqrt();
                assert!((cov[(i, j)] - expected).abs() < 3.0 * se + 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn tangent_projection() {
        let mut rng = rng_from_seed(14);
        let x = random_point(5, 2, &mut rng);
        let v = random_tangent(&x, 1.0, &mut rng).unwrap();
        assert!((tangent_project(&x, v.matrix()).unwrap().matrix() - v.matrix()).norm() < 1e-14);
        let px = tangent_project(&x, x.matrix()).unwrap();
        assert!(px.matrix().norm() < 1e-14);

        let w = Mat::from_fn(5, 2, |_, _| rng.sample(StandardNormal));
        let p = tangent_project(&x, &w).unwrap();
        let pp = tangent_project(&x, p.matrix()).unwrap();
        assert!((pp.matrix() - p.matrix()).norm() < 1e-14);
        let residual = &w - p.matrix();
        for bi in tangent_basis(&x).matrices() {
            assert!(canonical_inner_raw(x.matrix(), &residual, bi).abs() < 1e-12);
        }
    }
}
