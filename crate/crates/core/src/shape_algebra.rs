//! Dense symmetric-matrix utilities: SPD square roots, shape normalization
//! and half-vectorization.
//!
//! Square roots are taken through the symmetric eigendecomposition, so the
//! returned factor is the unique symmetric positive-definite root. A matrix
//! counts as positive definite when its smallest eigenvalue exceeds
//! `1e-12` times its largest one.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};

/// Relative eigenvalue floor below which a matrix is treated as singular.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-12;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A k×k symmetric positive-definite matrix with its (1,1) entry equal to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ShapeMatrix(DMatrix<f64>);

impl ShapeMatrix {
    /// Validates `m` as a shape matrix. Near-symmetric input is symmetrized;
    /// the (1,1) entry must already be exactly one.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let m = symmetrized(m)?;
        if m.nrows() < 2 {
            return Err(ShapeError::Usage(format!(
                "shape matrices need dimension at least 2, got {}",
                m.nrows()
            )));
        }
        if m[(0, 0)] != 1.0 {
            return Err(ShapeError::Domain(format!(
                "shape matrix must have (1,1) entry 1, got {}",
                m[(0, 0)]
            )));
        }
        check_positive_definite(&m)?;
        Ok(ShapeMatrix(m))
    }

    pub fn identity(k: usize) -> Self {
        ShapeMatrix(DMatrix::identity(k, k))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn vech(&self) -> SymVech {
        vech(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for ShapeMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for ShapeMatrix {
    type Error = ShapeError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(ShapeError::Usage("shape matrix rows must form a square".into()));
        }
        ShapeMatrix::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }
}

impl From<ShapeMatrix> for Vec<Vec<f64>> {
    fn from(v: ShapeMatrix) -> Self {
        let m = v.0;
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }
}

/// Upper-triangular half-vectorization, stacked column by column, so the
/// (1,1) entry comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymVech {
    k: usize,
    values: Vec<f64>,
}

impl SymVech {
    pub fn from_values(k: usize, values: Vec<f64>) -> Result<Self> {
        let expected = k * (k + 1) / 2;
        if values.len() != expected {
            return Err(ShapeError::Usage(format!(
                "vech of a {k}x{k} matrix has {expected} entries, got {}",
                values.len()
            )));
        }
        Ok(SymVech { k, values })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries other than the leading (1,1) one.
    pub fn free(&self) -> &[f64] {
        &self.values[1..]
    }

    pub fn dot(&self, other: &SymVech) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub fn vech(a: &DMatrix<f64>) -> SymVech {
    let k = a.nrows();
    let mut values = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        for i in 0..=j {
            values.push(a[(i, j)]);
        }
    }
    SymVech { k, values }
}

pub fn unvech(v: &SymVech) -> DMatrix<f64> {
    let k = v.k;
    let mut a = DMatrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        for i in 0..=j {
            a[(i, j)] = v.values[idx];
            a[(j, i)] = v.values[idx];
            idx += 1;
        }
    }
    a
}

/// Divides `a` by its (1,1) entry; the result has (1,1) entry exactly one.
pub fn normalize_shape(a: &DMatrix<f64>) -> Result<ShapeMatrix> {
    let a11 = a[(0, 0)];
    if !(a11 > 0.0) || !a11.is_finite() {
        return Err(ShapeError::Domain(format!(
            "cannot normalize a matrix with (1,1) entry {a11}"
        )));
    }
    let mut v = a / a11;
    v[(0, 0)] = 1.0;
    ShapeMatrix::new(v)
}

/// Unique symmetric positive-definite square root.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral_map(a, f64::sqrt)
}

/// Inverse of the symmetric positive-definite square root.
pub fn spd_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral_map(a, |l| 1.0 / l.sqrt())
}

/// Checks positive definiteness with the relative eigenvalue floor.
pub fn check_positive_definite(a: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(a.clone());
    pd_floor(&eig.eigenvalues.as_slice().to_vec()).map(|_| ())
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite()) && check_positive_definite(a).is_ok()
}

fn pd_floor(eigenvalues: &[f64]) -> Result<f64> {
    let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = PD_RELATIVE_TOLERANCE * max.max(0.0);
    if !(min > tolerance) || !min.is_finite() || !max.is_finite() {
        return Err(ShapeError::NotPositiveDefinite { eigenvalue: min, tolerance });
    }
    Ok(tolerance)
}

fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let a = symmetrized(a.clone())?;
    let eig = SymmetricEigen::new(a);
    pd_floor(eig.eigenvalues.as_slice())?;
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = f(*lambda);
        scaled.column_mut(j).scale_mut(s);
    }
    let out = &scaled * q.transpose();
    Ok(symmetrized(out).expect("product is symmetric up to rounding"))
}

/// Replaces `m` by `(m + m')/2` after checking it is symmetric within tolerance.
pub(crate) fn symmetrized(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(ShapeError::Usage(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let k = m.nrows();
    let mut out = m;
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (out[(i, j)], out[(j, i)]);
            if (a - b).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(ShapeError::Domain(format!(
                    "matrix is not symmetric: entries ({i},{j}) = {a} and ({j},{i}) = {b}"
                )));
            }
            let avg = 0.5 * (a + b);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        &g * g.transpose() + DMatrix::identity(k, k) * 0.1
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(spd_sqrt(&i2).unwrap(), i2);
        assert_eq!(spd_inv_sqrt(&i2).unwrap(), i2);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let s = spd_sqrt(&d).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14 && (s[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-15);
        let t = spd_inv_sqrt(&d).unwrap();
        assert!((t[(0, 0)] - 0.5).abs() < 1e-14 && (t[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn multiply_back_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let k = 2 + trial % 6;
            let a = random_spd(&mut rng, k);
            let s = spd_sqrt(&a).unwrap();
            assert!(rel_frob(&(&s * &s), &a) < 1e-10);
            assert_eq!(s, s.transpose());
            let t = spd_inv_sqrt(&a).unwrap();
            let eye = DMatrix::identity(k, k);
            assert!((&t * &a * &t - &eye).norm() / eye.norm() < 1e-10);
        }
    }

    #[test]
    fn roots_commute_with_orthogonal_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let k = 3;
            let a = random_spd(&mut rng, k);
            let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let o = g.qr().q();
            let conj = &o * &a * o.transpose();
            let lhs = spd_sqrt(&conj).unwrap();
            let rhs = &o * spd_sqrt(&a).unwrap() * o.transpose();
            assert!((lhs - rhs).norm() < 1e-9);
            let lhs = spd_inv_sqrt(&conj).unwrap();
            let rhs = &o * spd_inv_sqrt(&a).unwrap() * o.transpose();
            assert!((lhs - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_pd_with_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match spd_sqrt(&a) {
            Err(ShapeError::NotPositiveDefinite { eigenvalue, .. }) => {
                assert!((eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inv_sqrt(&singular).is_err());
    }

    #[test]
    fn normalize_examples() {
        let two_i = DMatrix::<f64>::identity(2, 2) * 2.0;
        assert_eq!(normalize_shape(&two_i).unwrap().as_matrix(), &DMatrix::identity(2, 2));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let v = normalize_shape(&a).unwrap();
        assert_eq!(v.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.5]));
        let again = normalize_shape(v.as_matrix()).unwrap();
        assert_eq!(again, v);
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(normalize_shape(&bad), Err(ShapeError::Domain(_))));
    }

    #[test]
    fn normalize_random_always_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let a = random_spd(&mut rng, 4) * rng.random_range(0.01..100.0);
            let v = normalize_shape(&a).unwrap();
            assert_eq!(v.as_matrix()[(0, 0)], 1.0);
            assert_eq!(v.as_matrix(), &v.as_matrix().transpose());
        }
    }

    #[test]
    fn vech_examples() {
        assert_eq!(vech(&DMatrix::identity(2, 2)).values(), &[1.0, 0.0, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.5]);
        assert_eq!(vech(&a).values(), &[1.0, 0.5, 1.5]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 4.0, 2.0, 3.0, 5.0, 4.0, 5.0, 6.0]);
        assert_eq!(vech(&b).values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(matches!(SymVech::from_values(3, vec![1.0; 5]), Err(ShapeError::Usage(_))));
    }

    #[test]
    fn shape_matrix_validation() {
        assert!(ShapeMatrix::new(DMatrix::identity(2, 2) * 2.0).is_err());
        assert!(ShapeMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.1, 1.0])).is_err());
        assert!(ShapeMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let v = ShapeMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: ShapeMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    proptest::proptest! {
        #[test]
        fn vech_round_trip(k in 2usize..7, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(k, k, |_, _| rng.random_range(-5.0..5.0));
            let a = &g + g.transpose();
            let v = vech(&a);
            proptest::prop_assert_eq!(v.values()[0], a[(0, 0)]);
            proptest::prop_assert_eq!(unvech(&v), a);
        }
    }
}
