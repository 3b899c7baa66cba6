//! One-step R-estimation of shape with the β*-search.
//!
//! The correction runs along the affine path
//! `V(β) = V_pre + β·k(k+2)·D_f(V_pre)` with `D_f(V) = W_f(V) − (W_f(V))₁₁·V`.
//! The search function is `h̃(β) = ⟨vech D_f(V_pre), vech D_f(V(β))⟩`, and
//! `β*` is the first `β > 0` with `h̃(β) ≤ 0`. Points off the positive-definite
//! cone count as `h̃ = −∞`. `1/β*` estimates the cross-information.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::estimators::{gaussian_shape, hr_median, tyler_shape, RankScatter, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::radial_scores::ScoreFamily;
use crate::sampler::SampleMatrix;
use crate::shape_algebra::{vech, ShapeMatrix};

/// Which root-n consistent estimator starts the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preliminary {
    #[default]
    Tyler,
    Gaussian,
}

impl FromStr for Preliminary {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tyler" => Ok(Preliminary::Tyler),
            "gaussian" => Ok(Preliminary::Gaussian),
            other => Err(ShapeError::Usage(format!("unknown preliminary estimator '{other}'"))),
        }
    }
}

impl fmt::Display for Preliminary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preliminary::Tyler => "tyler",
            Preliminary::Gaussian => "gaussian",
        })
    }
}

/// Known location or the HR median plug-in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Known(Vec<f64>),
    #[default]
    Hr,
}

impl FromStr for Location {
    type Err = ShapeError;

    /// `auto` or `hr` for the HR median, `known:v1,v2,...` for a fixed center.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "auto" | "hr" => return Ok(Location::Hr),
            _ => {}
        }
        let values = s
            .strip_prefix("known:")
            .ok_or_else(|| ShapeError::Usage(format!("location must be 'auto' or 'known:...', got '{s}'")))?;
        parse_vector(values).map(Location::Known)
    }
}

/// Parses a comma-separated list of reals.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ShapeError::Usage(format!("not a number: '{}'", t.trim())))
        })
        .collect()
}

/// Grid for the β*-search. Step, window and cap are in units of `1/(k(k+2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaGrid {
    pub coarse_step: f64,
    pub initial_max: f64,
    pub growth: f64,
    pub hard_cap: f64,
    /// Absolute bracket width at which bisection stops.
    pub bisection_tol: f64,
    /// `h̃(0)` counts as zero when `‖vech D(V_pre)‖ ≤ stationary_tol·‖vech W(V_pre)‖`.
    pub stationary_tol: f64,
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid {
            coarse_step: 0.05,
            initial_max: 4.0,
            growth: 2.0,
            hard_cap: 1e4,
            bisection_tol: 1e-8,
            stationary_tol: 1e-12,
        }
    }
}

impl BetaGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.coarse_step > 0.0
            && self.initial_max >= self.coarse_step
            && self.growth > 1.0
            && self.hard_cap >= self.initial_max
            && self.bisection_tol > 0.0
            && self.stationary_tol >= 0.0
            && [self.coarse_step, self.initial_max, self.growth, self.hard_cap, self.bisection_tol]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ShapeError::Usage(format!("invalid beta grid {self:?}")))
        }
    }

    fn unit(k: usize) -> f64 {
        1.0 / (k * (k + 2)) as f64
    }

    /// Hard cap on `β` for dimension `k`.
    pub fn cap(&self, k: usize) -> f64 {
        self.hard_cap * Self::unit(k)
    }
}

/// Settings for [`r_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneStepConfig {
    pub scores: ScoreFamily,
    pub preliminary: Preliminary,
    pub location: Location,
    pub grid: BetaGrid,
    /// Tolerance of the Tyler and HR fixed-point iterations.
    pub tyler_tol: f64,
    pub tyler_max_iter: usize,
    pub hr_max_iter: usize,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        OneStepConfig {
            scores: ScoreFamily::VanDerWaerden,
            preliminary: Preliminary::Tyler,
            location: Location::Hr,
            grid: BetaGrid::default(),
            tyler_tol: DEFAULT_TOL,
            tyler_max_iter: DEFAULT_MAX_ITER,
            hr_max_iter: 4 * DEFAULT_MAX_ITER,
        }
    }
}

/// Outcome of a one-step R-estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepResult {
    pub shape: ShapeMatrix,
    pub beta_star: f64,
    /// `1/β*`, infinite when `β* = 0`.
    pub alpha_star: f64,
    pub preliminary: ShapeMatrix,
    pub location: Vec<f64>,
    /// Number of `h̃` evaluations.
    pub evaluations: usize,
    /// True when no crossing was found and the preliminary was returned.
    pub fallback: bool,
    pub warning: Option<String>,
}

/// Located first crossing of `h̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub beta: f64,
    pub lower: f64,
    pub upper: f64,
    pub evaluations: usize,
    /// The upper end of the final bracket lies outside the PD cone.
    pub exit: bool,
}

/// Coarse forward scan then bisection for the first `β > 0` with `h(β) ≤ 0`.
///
/// Returns the right end of the final bracket, or the left end when the right
/// end is a path exit (`h = −∞`).
pub fn first_crossing(
    mut h: impl FnMut(f64) -> Result<f64>,
    k: usize,
    grid: &BetaGrid,
) -> Result<Crossing> {
    grid.validate()?;
    let unit = BetaGrid::unit(k);
    let h0 = h(0.0)?;
    let mut evaluations = 1;
    if !(h0 > 0.0) {
        return Ok(Crossing { beta: 0.0, lower: 0.0, upper: 0.0, evaluations, exit: false });
    }
    let (mut step, mut window, cap) = (grid.coarse_step * unit, grid.initial_max * unit, grid.cap(k));
    let mut lo = 0.0;
    let (mut hi, mut exit) = loop {
        let hi = lo + step;
        if hi > cap * (1.0 + 1e-12) {
            return Err(ShapeError::NoCrossing { cap });
        }
        let v = h(hi)?;
        evaluations += 1;
        if v <= 0.0 {
            break (hi, v == f64::NEG_INFINITY);
        }
        lo = hi;
        if lo >= window * (1.0 - 1e-12) {
            window *= grid.growth;
            step *= grid.growth;
        }
    };
    while hi - lo > grid.bisection_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h(mid)?;
        evaluations += 1;
        if v <= 0.0 {
            hi = mid;
            exit = v == f64::NEG_INFINITY;
        } else {
            lo = mid;
        }
    }
    let beta = if exit { lo } else { hi };
    Ok(Crossing { beta, lower: lo, upper: hi, evaluations, exit })
}

/// The one-step path from a fixed preliminary shape.
#[derive(Debug, Clone)]
pub struct OneStepPath {
    scatter: RankScatter,
    v_pre: ShapeMatrix,
    w_pre: DMatrix<f64>,
    d_pre: DMatrix<f64>,
    d_pre_vech: Vec<f64>,
}

impl OneStepPath {
    pub fn new(data: &SampleMatrix, theta: &DVector<f64>, v_pre: &ShapeMatrix, f1: ScoreFamily) -> Result<Self> {
        if v_pre.dim() != data.k() {
            return Err(ShapeError::Usage("preliminary shape does not match data dimension".into()));
        }
        let scatter = RankScatter::new(data, theta, f1)?;
        let w_pre = scatter.w(v_pre.as_matrix())?;
        let mut d_pre = &w_pre - v_pre.as_matrix() * w_pre[(0, 0)];
        d_pre[(0, 0)] = 0.0;
        let d_pre_vech = vech(&d_pre).values().to_vec();
        Ok(OneStepPath { scatter, v_pre: v_pre.clone(), w_pre, d_pre, d_pre_vech })
    }

    pub fn dim(&self) -> usize {
        self.v_pre.dim()
    }

    pub fn preliminary(&self) -> &ShapeMatrix {
        &self.v_pre
    }

    /// `W_f(V_pre)`.
    pub fn scatter_at_start(&self) -> &DMatrix<f64> {
        &self.w_pre
    }

    /// `D_f(V_pre)`.
    pub fn direction(&self) -> &DMatrix<f64> {
        &self.d_pre
    }

    /// `V(β)`; fails with a path-exit error off the PD cone.
    pub fn point(&self, beta: f64) -> Result<ShapeMatrix> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(ShapeError::Domain(format!("beta must be finite and non-negative, got {beta}")));
        }
        let k = self.dim() as f64;
        let mut v = self.v_pre.as_matrix() + &self.d_pre * (beta * k * (k + 2.0));
        v[(0, 0)] = 1.0;
        ShapeMatrix::new(v).map_err(|e| match e {
            ShapeError::NotPositiveDefinite { .. } => ShapeError::PathExit { beta },
            other => other,
        })
    }

    /// `h̃(β)`, or `−∞` when `V(β)` leaves the PD cone.
    pub fn h_tilde(&self, beta: f64) -> Result<f64> {
        if beta == 0.0 {
            return Ok(self.d_pre_vech.iter().map(|x| x * x).sum());
        }
        let v = match self.point(beta) {
            Ok(v) => v,
            Err(ShapeError::PathExit { .. }) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let d = match self.scatter.d(v.as_matrix()) {
            Ok(d) => d,
            Err(ShapeError::NotPositiveDefinite { .. }) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        Ok(vech(&d).values().iter().zip(&self.d_pre_vech).map(|(a, b)| a * b).sum())
    }

    /// Whether `D(V_pre)` is zero up to `tol` relative to `W(V_pre)`.
    pub fn is_stationary(&self, tol: f64) -> bool {
        let d = self.d_pre_vech.iter().map(|x| x * x).sum::<f64>().sqrt();
        d <= tol * vech(&self.w_pre).norm()
    }

    /// Runs the β*-search along this path.
    pub fn beta_star(&self, grid: &BetaGrid) -> Result<Crossing> {
        grid.validate()?;
        if self.is_stationary(grid.stationary_tol) {
            return Ok(Crossing { beta: 0.0, lower: 0.0, upper: 0.0, evaluations: 1, exit: false });
        }
        first_crossing(|b| self.h_tilde(b), self.dim(), grid)
    }

    /// `V(β*)`, falling back to `V_pre` when no crossing exists below the cap.
    pub fn estimate(&self, grid: &BetaGrid, location: &DVector<f64>) -> Result<OneStepResult> {
        let (shape, beta, evaluations, warning) = match self.beta_star(grid) {
            Ok(c) => (self.point(c.beta)?, c.beta, c.evaluations, None),
            Err(ShapeError::NoCrossing { cap }) => {
                let msg = format!("no sign change of h up to beta = {cap}; returning the preliminary estimate");
                warn!("{msg}");
                (self.v_pre.clone(), 0.0, 0, Some(msg))
            }
            Err(e) => return Err(e),
        };
        Ok(OneStepResult {
            shape,
            beta_star: beta,
            alpha_star: if beta > 0.0 { 1.0 / beta } else { f64::INFINITY },
            preliminary: self.v_pre.clone(),
            location: location.iter().copied().collect(),
            evaluations,
            fallback: warning.is_some(),
            warning,
        })
    }
}

/// `V(β) = V_pre + β·k(k+2)·D_f(V_pre)`.
pub fn path_point(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    f1: ScoreFamily,
    beta: f64,
) -> Result<ShapeMatrix> {
    OneStepPath::new(data, theta, v_pre, f1)?.point(beta)
}

/// `h̃(β) = ⟨vech D_f(V_pre), vech D_f(V(β))⟩`, `−∞` off the PD cone.
pub fn h_tilde(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    f1: ScoreFamily,
    beta: f64,
) -> Result<f64> {
    OneStepPath::new(data, theta, v_pre, f1)?.h_tilde(beta)
}

/// First crossing `β* = inf{β > 0 : h̃(β) ≤ 0}`.
pub fn beta_star(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    f1: ScoreFamily,
    grid: &BetaGrid,
) -> Result<f64> {
    Ok(OneStepPath::new(data, theta, v_pre, f1)?.beta_star(grid)?.beta)
}

/// One-step R-estimate from a given location and preliminary shape.
pub fn r_estimate_from(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    f1: ScoreFamily,
    grid: &BetaGrid,
) -> Result<OneStepResult> {
    OneStepPath::new(data, theta, v_pre, f1)?.estimate(grid, theta)
}

/// One-step estimate from a preliminary of known kind. Constant scores at a
/// Tyler preliminary return it unchanged: `D_const(V_T) = 0` by definition of
/// `V_T`, so only iteration noise would otherwise move the path.
pub fn r_estimate_with(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    kind: Preliminary,
    f1: ScoreFamily,
    grid: &BetaGrid,
) -> Result<OneStepResult> {
    if f1 == ScoreFamily::Constant && kind == Preliminary::Tyler {
        grid.validate()?;
        return Ok(OneStepResult {
            shape: v_pre.clone(),
            beta_star: 0.0,
            alpha_star: f64::INFINITY,
            preliminary: v_pre.clone(),
            location: theta.iter().copied().collect(),
            evaluations: 0,
            fallback: false,
            warning: None,
        });
    }
    r_estimate_from(data, theta, v_pre, f1, grid)
}

/// Resolves location, computes the preliminary estimate and runs the search.
pub fn r_estimate(data: &SampleMatrix, cfg: &OneStepConfig) -> Result<OneStepResult> {
    cfg.scores.validate()?;
    cfg.grid.validate()?;
    let theta = match &cfg.location {
        Location::Known(t) => {
            if t.len() != data.k() {
                return Err(ShapeError::Usage(format!(
                    "location has length {} but data has {} columns",
                    t.len(),
                    data.k()
                )));
            }
            DVector::from_vec(t.clone())
        }
        Location::Hr => hr_median(data, cfg.tyler_tol, cfg.hr_max_iter)?.location,
    };
    let v_pre = match cfg.preliminary {
        Preliminary::Tyler => tyler_shape(data, &theta, cfg.tyler_tol, cfg.tyler_max_iter)?.shape,
        Preliminary::Gaussian => gaussian_shape(data)?.shape,
    };
    r_estimate_with(data, &theta, &v_pre, cfg.preliminary, cfg.scores, &cfg.grid)
}

/// Finite-difference cross-information estimate
/// `n^{1/2}·k(k+2)·‖vech(D(V + n^{-1/2}v) − D(V))‖ / ‖vech v‖`.
pub fn naive_cross_info(
    data: &SampleMatrix,
    theta: &DVector<f64>,
    v_pre: &ShapeMatrix,
    f1: ScoreFamily,
    v: &DMatrix<f64>,
) -> Result<f64> {
    let k = v_pre.dim();
    if v.nrows() != k || v.ncols() != k {
        return Err(ShapeError::Usage(format!("perturbation must be {k}x{k}")));
    }
    if (v - v.transpose()).amax() > 1e-12 * v.amax().max(f64::MIN_POSITIVE) {
        return Err(ShapeError::Domain("perturbation must be symmetric".into()));
    }
    if v[(0, 0)] != 0.0 {
        return Err(ShapeError::Domain("perturbation must have (1,1) entry 0".into()));
    }
    let dir_norm = vech(v).norm();
    if !(dir_norm > 0.0) {
        return Err(ShapeError::Usage("perturbation direction is zero".into()));
    }
    let n = data.n() as f64;
    let mut moved = v_pre.as_matrix() + v / n.sqrt();
    moved[(0, 0)] = 1.0;
    let moved = ShapeMatrix::new(moved).map_err(|e| match e {
        ShapeError::NotPositiveDefinite { .. } => {
            ShapeError::Domain("perturbed shape is not positive definite".into())
        }
        other => other,
    })?;
    let scatter = RankScatter::new(data, theta, f1)?;
    let d0 = scatter.d(v_pre.as_matrix())?;
    let d1 = scatter.d(moved.as_matrix())?;
    let kf = k as f64;
    Ok(n.sqrt() * kf * (kf + 2.0) * vech(&(d1 - d0)).norm() / dir_norm)
}
