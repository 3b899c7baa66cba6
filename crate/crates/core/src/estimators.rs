//! Sign- and rank-based building blocks: ranks and multivariate signs,
//! Tyler's shape estimator, the Gaussian shape estimator, the
//! Hettmansperger–Randles median, the rank-weighted scatter `W_f(V)`, the
//! shape score `D_f(V) = W − W₁₁V` and the rank-based sphericity test.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::radial_scores::{chi2_sf, score_norm, QuadratureSpec, ScoreFamily, ScoreTable};
use crate::sampler::SampleMatrix;
use crate::shape_algebra::{normalize_shape, spd_inv_sqrt, ShapeMatrix};

/// Default stopping tolerance for the Tyler and HR fixed-point iterations.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap for the Tyler iteration.
pub const DEFAULT_MAX_ITER: usize = 500;

/// Distances, ranks and multivariate signs of standardized observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RanksSigns {
    /// `d_i = ‖V^{-1/2}(X_i − θ)‖`.
    pub distances: Vec<f64>,
    /// 1-based ranks of the distances, ties broken by observation index.
    pub ranks: Vec<usize>,
    /// Column `i` holds the unit vector `U_i`.
    pub signs: DMatrix<f64>,
}

impl RanksSigns {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn sign(&self, i: usize) -> DVector<f64> {
        self.signs.column(i).into_owned()
    }
}

/// Outcome of a shape estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub shape: ShapeMatrix,
    pub iterations: usize,
    pub residual: f64,
    pub method: String,
    pub tolerance: f64,
}

/// Joint location/shape fixed point of the HR median.
#[derive(Debug, Clone, PartialEq)]
pub struct HrMedian {
    pub location: DVector<f64>,
    pub shape: ShapeMatrix,
    pub iterations: usize,
    /// Norm of the mean sign at the returned point.
    pub location_residual: f64,
    /// Tyler residual at the returned point.
    pub shape_residual: f64,
}

/// 1-based ranks, ties broken by index.
pub fn ranks_of(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_unstable_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; d.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

fn check_location(data: &SampleMatrix, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != data.k() {
        return Err(ShapeError::Usage(format!(
            "location has length {} but data has {} columns",
            theta.len(),
            data.k()
        )));
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(ShapeError::Domain("location has non-finite entries".into()));
    }
    Ok(())
}

fn check_dim(data: &SampleMatrix, k: usize) -> Result<()> {
    if data.k() != k {
        return Err(ShapeError::Usage(format!(
            "matrix is {k}x{k} but data has {} columns",
            data.k()
        )));
    }
    Ok(())
}

/// Standardizes the columns of `centered` by `t` (any square root inverse).
fn standardize(centered: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut z = t * centered;
    let mut d = Vec::with_capacity(z.ncols());
    for (i, mut col) in z.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(ShapeError::DegenerateObservation { index: i });
        }
        col /= norm;
        d.push(norm);
    }
    Ok((z, d))
}

/// Ranks and signs after standardizing by an arbitrary SPD scatter.
pub fn ranks_signs_scatter(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    scatter: &DMatrix<f64>,
) -> Result<RanksSigns> {
    check_location(data, theta)?;
    check_dim(data, scatter.nrows())?;
    let t = spd_inv_sqrt(scatter)?;
    let (signs, distances) = standardize(&data.centered_columns(theta), &t)?;
    let ranks = ranks_of(&distances);
    Ok(RanksSigns { distances, ranks, signs })
}

/// Ranks and signs of the `θ`-centered, `V`-standardized observations.
pub fn ranks_signs(data: &SampleMatrix, theta: &DVector<f64>, v: &ShapeMatrix) -> Result<RanksSigns> {
    ranks_signs_scatter(data, theta, v.as_matrix())
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| ShapeError::Degenerate("singular scatter iterate".into()))
}

/// `(k/m) Σ y y'/‖y‖²` over the columns of `y` other than `skip`, where `m`
/// counts the columns used.
fn sign_second_moment(y: &DMatrix<f64>, skip: Option<usize>) -> Result<DMatrix<f64>> {
    let (k, n) = y.shape();
    let mut m = DMatrix::zeros(k, k);
    for (i, col) in y.column_iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let sq = col.norm_squared();
        if !(sq > 0.0) {
            return Err(ShapeError::DegenerateObservation { index: i });
        }
        for b in 0..k {
            let cb = col[b] / sq;
            for a in 0..=b {
                m[(a, b)] += col[a] * cb;
            }
        }
    }
    let used = n - usize::from(skip.is_some());
    let scale = k as f64 / used as f64;
    for b in 0..k {
        for a in 0..=b {
            m[(a, b)] *= scale;
            m[(b, a)] = m[(a, b)];
        }
    }
    Ok(m)
}

fn residual_to_identity(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    (m - DMatrix::<f64>::identity(k, k)).norm()
}

/// Tyler residual `‖(k/n) Σ U_i U_i' − I‖_F` at `(θ, V)`.
pub fn tyler_residual(data: &SampleMatrix, theta: &DVector<f64>, v: &ShapeMatrix) -> Result<f64> {
    let rs = ranks_signs(data, theta, v)?;
    let k = data.k();
    let m = &rs.signs * rs.signs.transpose() * (k as f64 / data.n() as f64);
    Ok(residual_to_identity(&m))
}

/// Tyler's shape estimator at a known location.
pub fn tyler_shape(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EstimatorReport> {
    check_location(data, theta)?;
    let (k, n) = (data.k(), data.n());
    if k < 2 || n <= k {
        return Err(ShapeError::Usage(format!("Tyler needs k >= 2 and n > k, got k={k}, n={n}")));
    }
    if !(tol > 0.0) {
        return Err(ShapeError::Usage(format!("tolerance must be positive, got {tol}")));
    }
    let centered = data.centered_columns(theta);
    let mut sigma = DMatrix::<f64>::identity(k, k);
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let chol = cholesky(&sigma)?;
        let l = chol.l();
        let y = l.solve_lower_triangular(&centered).ok_or_else(|| {
            ShapeError::Degenerate("singular scatter iterate".into())
        })?;
        let m = sign_second_moment(&y, None)?;
        residual = residual_to_identity(&m);
        if !residual.is_finite() {
            return Err(ShapeError::Degenerate("non-finite Tyler residual".into()));
        }
        if residual <= tol {
            let shape = normalize_shape(&sigma)
                .map_err(|_| ShapeError::Degenerate("Tyler iterate left the PD cone".into()))?;
            return Ok(EstimatorReport {
                shape,
                iterations: it,
                residual,
                method: "tyler".into(),
                tolerance: tol,
            });
        }
        if it == max_iter {
            break;
        }
        let t = &l * m * l.transpose();
        let t11 = t[(0, 0)];
        if !(t11 > 0.0) {
            return Err(ShapeError::Degenerate("Tyler iterate has zero (1,1) entry".into()));
        }
        sigma = t / t11;
        sigma[(0, 0)] = 1.0;
    }
    Err(ShapeError::Convergence { iterations: max_iter, residual })
}

/// Normalized sample covariance (divisor `n − 1`).
pub fn gaussian_shape(data: &SampleMatrix) -> Result<EstimatorReport> {
    let (n, k) = (data.n(), data.k());
    if n < 2 || k < 2 {
        return Err(ShapeError::Usage(format!(
            "Gaussian shape needs n >= 2 and k >= 2, got n={n}, k={k}"
        )));
    }
    let x = data.data();
    let mean = x.row_mean().transpose();
    let centered = data.centered_columns(&mean);
    let cov = &centered * centered.transpose() / (n as f64 - 1.0);
    if !(cov[(0, 0)] > 0.0) {
        return Err(ShapeError::Degenerate("first coordinate has zero variance".into()));
    }
    let shape = normalize_shape(&cov)
        .map_err(|e| ShapeError::Degenerate(format!("sample covariance is singular: {e}")))?;
    Ok(EstimatorReport { shape, iterations: 0, residual: 0.0, method: "gaussian".into(), tolerance: 0.0 })
}

/// Coordinate-wise median, the starting point of the HR iteration.
pub fn coordinate_median(data: &SampleMatrix) -> DVector<f64> {
    let x = data.data();
    DVector::from_fn(data.k(), |j, _| {
        let mut col: Vec<f64> = x.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let n = col.len();
        if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        }
    })
}

struct HrState {
    y: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl HrState {
    fn at(data: &SampleMatrix, theta: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let l = cholesky(sigma)?.l();
        let y = l
            .solve_lower_triangular(&data.centered_columns(theta))
            .ok_or_else(|| ShapeError::Degenerate("singular scatter iterate".into()))?;
        Ok(HrState { y, l })
    }

    fn objective(&self) -> f64 {
        self.y.column_iter().map(|c| c.norm()).sum()
    }

    /// Sum of standardized signs, skipping column `skip`.
    fn sign_sum(&self, skip: Option<usize>) -> Result<DVector<f64>> {
        let mut s = DVector::zeros(self.y.nrows());
        for (i, col) in self.y.column_iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let d = col.norm();
            if !(d > 0.0) {
                return Err(ShapeError::DegenerateObservation { index: i });
            }
            s += col / d;
        }
        Ok(s)
    }

    fn nearest(&self) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, col) in self.y.column_iter().enumerate() {
            let d = col.norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Hettmansperger–Randles location and shape: alternates one Tyler sweep with
/// a Weiszfeld step in the current metric, halving the step while it
/// increases the summed standardized distance.
///
/// When the location minimizer for the current shape is an observation `x_j`
/// (the sum of the other signs has norm at most one) the location is placed
/// exactly at `x_j`, the location residual becomes the excess of that norm
/// over one, and `x_j` is left out of the Tyler sweep.
pub fn hr_median(data: &SampleMatrix, tol: f64, max_iter: usize) -> Result<HrMedian> {
    let (k, n) = (data.k(), data.n());
    if k < 2 || n <= k {
        return Err(ShapeError::Usage(format!("HR median needs k >= 2 and n > k, got k={k}, n={n}")));
    }
    if !(tol > 0.0) {
        return Err(ShapeError::Usage(format!("tolerance must be positive, got {tol}")));
    }
    let mut theta = coordinate_median(data);
    let mut sigma = DMatrix::<f64>::identity(k, k);
    let mut anchor: Option<usize> = None;
    let mut last = (f64::INFINITY, f64::INFINITY);
    for it in 0..=max_iter {
        let mut state = HrState::at(data, &theta, &sigma)?;
        if anchor.is_none() {
            let j = state.nearest();
            let at_obs = data.row(j);
            let trial = HrState::at(data, &at_obs, &sigma)?;
            if trial.sign_sum(Some(j))?.norm() <= 1.0 {
                theta = at_obs;
                anchor = Some(j);
                state = trial;
            }
        }
        let s = state.sign_sum(anchor)?;
        let loc_res = match anchor {
            None => s.norm() / n as f64,
            Some(_) => (s.norm() - 1.0).max(0.0) / n as f64,
        };
        let m = sign_second_moment(&state.y, anchor)?;
        let shape_res = residual_to_identity(&m);
        last = (loc_res, shape_res);
        if loc_res <= tol && shape_res <= tol {
            let shape = normalize_shape(&sigma)
                .map_err(|_| ShapeError::Degenerate("HR iterate left the PD cone".into()))?;
            return Ok(HrMedian {
                location: theta,
                shape,
                iterations: it,
                location_residual: loc_res,
                shape_residual: shape_res,
            });
        }
        if it == max_iter {
            break;
        }
        // (a) Tyler sweep at fixed θ
        let t = &state.l * m * state.l.transpose();
        let t11 = t[(0, 0)];
        if !(t11 > 0.0) {
            return Err(ShapeError::Degenerate("HR iterate has zero (1,1) entry".into()));
        }
        sigma = t / t11;
        sigma[(0, 0)] = 1.0;
        // (b) Weiszfeld location step in the updated metric
        let current = HrState::at(data, &theta, &sigma)?;
        let centered = data.centered_columns(&theta);
        let mut num = DVector::zeros(k);
        let mut den = 0.0;
        for (i, col) in current.y.column_iter().enumerate() {
            if Some(i) == anchor {
                continue;
            }
            let di = col.norm();
            if !(di > 0.0) {
                return Err(ShapeError::DegenerateObservation { index: i });
            }
            num += centered.column(i) / di;
            den += 1.0 / di;
        }
        let mut step = num / den;
        if anchor.is_some() {
            let pull = current.sign_sum(anchor)?.norm();
            if pull <= 1.0 {
                continue;
            }
            step *= 1.0 - 1.0 / pull;
            anchor = None;
        }
        let base = current.objective();
        for _ in 0..60 {
            let candidate = &theta + &step;
            let trial = HrState::at(data, &candidate, &sigma)?;
            if trial.objective() <= base {
                break;
            }
            step *= 0.5;
        }
        theta += step;
    }
    Err(ShapeError::Convergence { iterations: max_iter, residual: last.0.max(last.1) })
}

/// Centered data plus the score table, reusable across many `V`.
#[derive(Debug, Clone)]
pub struct RankScatter {
    centered: DMatrix<f64>,
    scores: ScoreTable,
}

impl RankScatter {
    pub fn new(data: &SampleMatrix, theta: &DVector<f64>, f1: ScoreFamily) -> Result<Self> {
        check_location(data, theta)?;
        let scores = ScoreTable::new(f1, data.k(), data.n())?;
        Ok(RankScatter { centered: data.centered_columns(theta), scores })
    }

    pub fn dim(&self) -> usize {
        self.centered.nrows()
    }

    pub fn n(&self) -> usize {
        self.centered.ncols()
    }

    pub fn scores(&self) -> &ScoreTable {
        &self.scores
    }

    /// `W_f(V) = (1/n) Σ K(R_i/(n+1)) (X_i−θ)(X_i−θ)'/d_i²`, which equals
    /// `V^{1/2}[(1/n) Σ K U_i U_i'] V^{1/2}`.
    pub fn w(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.dim();
        if v.nrows() != k || v.ncols() != k {
            return Err(ShapeError::Usage("shape dimension does not match data".into()));
        }
        let chol = Cholesky::new(v.clone()).ok_or(ShapeError::NotPositiveDefinite {
            eigenvalue: f64::NAN,
            tolerance: 0.0,
        })?;
        let y = chol
            .l()
            .solve_lower_triangular(&self.centered)
            .ok_or_else(|| ShapeError::Degenerate("singular shape".into()))?;
        let mut sq = Vec::with_capacity(self.n());
        for (i, col) in y.column_iter().enumerate() {
            let s = col.norm_squared();
            if !(s > 0.0) {
                return Err(ShapeError::DegenerateObservation { index: i });
            }
            sq.push(s);
        }
        let ranks = ranks_of(&sq);
        let mut w = DMatrix::zeros(k, k);
        for (i, col) in self.centered.column_iter().enumerate() {
            let c = self.scores.at_rank(ranks[i]) / sq[i];
            for b in 0..k {
                let cb = c * col[b];
                for a in 0..=b {
                    w[(a, b)] += col[a] * cb;
                }
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        for b in 0..k {
            for a in 0..=b {
                w[(a, b)] *= inv_n;
                w[(b, a)] = w[(a, b)];
            }
        }
        Ok(w)
    }

    /// `D_f(V) = W − W₁₁·V` with `D₁₁ = 0` exactly.
    pub fn d(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let w = self.w(v)?;
        let mut d = &w - v * w[(0, 0)];
        d[(0, 0)] = 0.0;
        Ok(d)
    }
}

/// Rank-weighted scatter `W_f(V)`.
pub fn rank_weighted_scatter(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v: &ShapeMatrix,
    f1: ScoreFamily,
) -> Result<DMatrix<f64>> {
    check_dim(data, v.dim())?;
    RankScatter::new(data, theta, f1)?.w(v.as_matrix())
}

/// Shape score `D_f(V) = W_f(V) − (W_f(V))₁₁·V`.
pub fn shape_score(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v: &ShapeMatrix,
    f1: ScoreFamily,
) -> Result<DMatrix<f64>> {
    check_dim(data, v.dim())?;
    RankScatter::new(data, theta, f1)?.d(v.as_matrix())
}

/// Result of the rank-based sphericity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericityTest {
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Rank-based test of `V = V₀` with the score norm computed once.
#[derive(Debug, Clone)]
pub struct SphericityTester {
    f1: ScoreFamily,
    k: usize,
    score_norm: f64,
}

impl SphericityTester {
    pub fn new(f1: ScoreFamily, k: usize, quad: &QuadratureSpec) -> Result<Self> {
        Ok(SphericityTester { f1, k, score_norm: score_norm(f1, k, quad)? })
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.k * (self.k + 1) / 2 - 1
    }

    pub fn test(
        &self,
        data: &SampleMatrix,
        theta: &DVector<f64>,
        v0: &ShapeMatrix,
    ) -> Result<SphericityTest> {
        check_dim(data, self.k)?;
        let rs = ranks_signs(data, theta, v0)?;
        let n = rs.len();
        let table = ScoreTable::new(self.f1, self.k, n)?;
        let mut s = DMatrix::zeros(self.k, self.k);
        for i in 0..n {
            let u = rs.signs.column(i);
            s += (u * u.transpose()) * table.at_rank(rs.ranks[i]);
        }
        s /= n as f64;
        let kf = self.k as f64;
        let tr = s.trace();
        let tr2 = (&s * &s).trace();
        let dispersion = (tr2 - tr * tr / kf).max(0.0);
        let q = n as f64 * kf * (kf + 2.0) / (2.0 * self.score_norm) * dispersion;
        let df = self.degrees_of_freedom();
        Ok(SphericityTest { q, df, p_value: chi2_sf(df as f64, q) })
    }
}

/// Rank-based sphericity statistic `Q_f(V₀)` with its chi-square p-value.
pub fn sphericity_stat(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v0: &ShapeMatrix,
    f1: ScoreFamily,
    quad: &QuadratureSpec,
) -> Result<SphericityTest> {
    SphericityTester::new(f1, data.k(), quad)?.test(data, theta, v0)
}
