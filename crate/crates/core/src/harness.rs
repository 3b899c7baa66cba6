//! Replicated simulation of shape estimators: empirical bias and mean-square
//! error of the free shape components across radial models and sample sizes.
//!
//! Every replication draws its data from the substream keyed by
//! `(seed, model, n, replication)`, so all estimators see the same samples and
//! the report does not depend on the thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::estimators::{gaussian_shape, hr_median, tyler_shape, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::onestep::{r_estimate_with, BetaGrid, Preliminary};
use crate::radial_scores::{RadialFamily, ScoreFamily};
use crate::sampler::{sample, stream_seed, RadialModel};
use crate::shape_algebra::{vech, ShapeMatrix};

/// Header of the report for `k = 2`.
pub const HEADER_K2: &str =
    "estimator,scores,preliminary,family,param,k,n,M,failures,bias_offdiag,bias_diag,mse_offdiag,mse_diag";
/// Header of the report for `k > 2` (one row per free component).
pub const HEADER_GENERAL: &str = "estimator,scores,preliminary,family,param,k,n,M,failures,component,bias,mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tyler,
    Gaussian,
    Ronestep,
}

/// One estimator of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preliminary: Option<Preliminary>,
}

impl EstimatorSpec {
    pub fn tyler() -> Self {
        EstimatorSpec { method: Method::Tyler, scores: None, preliminary: None }
    }

    pub fn gaussian() -> Self {
        EstimatorSpec { method: Method::Gaussian, scores: None, preliminary: None }
    }

    pub fn onestep(scores: ScoreFamily, preliminary: Preliminary) -> Self {
        EstimatorSpec { method: Method::Ronestep, scores: Some(scores), preliminary: Some(preliminary) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Ronestep => match self.scores {
                Some(f) => f.validate(),
                None => Err(ShapeError::Usage("one-step estimator needs scores".into())),
            },
            _ if self.scores.is_some() || self.preliminary.is_some() => Err(ShapeError::Usage(
                "scores and preliminary apply only to the one-step estimator".into(),
            )),
            _ => Ok(()),
        }
    }

    fn preliminary_or_default(&self) -> Preliminary {
        self.preliminary.unwrap_or_default()
    }

    fn labels(&self) -> (String, String, String) {
        match self.method {
            Method::Tyler => ("tyler".into(), "-".into(), "-".into()),
            Method::Gaussian => ("gaussian".into(), "-".into(), "-".into()),
            Method::Ronestep => (
                "ronestep".into(),
                self.scores.map(|s| s.to_string()).unwrap_or_default(),
                self.preliminary_or_default().to_string(),
            ),
        }
    }
}

/// A data-generating model; shape defaults to the identity, scale to one and
/// location to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: RadialFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeMatrix>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn spherical(family: RadialFamily) -> Self {
        ModelSpec { family, shape: None, scale: 1.0 }
    }

    fn model(&self, k: usize) -> Result<RadialModel> {
        let shape = self.shape.clone().unwrap_or_else(|| ShapeMatrix::identity(k));
        if shape.dim() != k {
            return Err(ShapeError::Usage(format!("model shape is not {k}x{k}")));
        }
        RadialModel::new(self.family, vec![0.0; k], self.scale, shape)
    }

    /// Stable key for the data substreams.
    fn stream_key(&self) -> u64 {
        let text = serde_json::to_string(self).expect("model specs serialize");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

/// Whether the simulations treat the location as known or estimate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimLocation {
    #[default]
    Known,
    Hr,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// Full description of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    pub n: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub models: Vec<ModelSpec>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub location: SimLocation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: BetaGrid,
    #[serde(default = "default_tol")]
    pub tyler_tol: f64,
    #[serde(default = "default_max_iter")]
    pub tyler_max_iter: usize,
}

impl SimConfig {
    /// Bivariate spherical study: models t0.5, t3, t10, normal, e3, e5;
    /// n ∈ {50, 250}; 1000 replications; Tyler, Gaussian and the one-step
    /// estimators with t0.5, t3, t10 and van der Waerden scores from both
    /// preliminaries; known location.
    pub fn table2() -> Self {
        let models = [
            RadialFamily::Student(0.5),
            RadialFamily::Student(3.0),
            RadialFamily::Student(10.0),
            RadialFamily::Gaussian,
            RadialFamily::PowerExponential(3.0),
            RadialFamily::PowerExponential(5.0),
        ]
        .into_iter()
        .map(ModelSpec::spherical)
        .collect();
        let mut estimators = vec![EstimatorSpec::tyler(), EstimatorSpec::gaussian()];
        for scores in [
            ScoreFamily::Student(0.5),
            ScoreFamily::Student(3.0),
            ScoreFamily::Student(10.0),
            ScoreFamily::VanDerWaerden,
        ] {
            for p in [Preliminary::Tyler, Preliminary::Gaussian] {
                estimators.push(EstimatorSpec::onestep(scores, p));
            }
        }
        SimConfig {
            k: 2,
            n: vec![50, 250],
            replications: 1000,
            seed: 20_240_601,
            models,
            estimators,
            location: SimLocation::Known,
            output: None,
            grid: BetaGrid::default(),
            tyler_tol: DEFAULT_TOL,
            tyler_max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(ShapeError::Usage("k must be at least 2".into()));
        }
        if self.replications == 0 {
            return Err(ShapeError::Usage("replications must be at least 1".into()));
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n <= self.k) {
            return Err(ShapeError::Usage("every sample size must exceed k".into()));
        }
        if self.models.is_empty() || self.estimators.is_empty() {
            return Err(ShapeError::Usage("need at least one model and one estimator".into()));
        }
        for m in &self.models {
            m.model(self.k)?;
        }
        for e in &self.estimators {
            e.validate()?;
        }
        self.grid.validate()
    }
}

/// Bias and MSE of one free shape component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    /// 1-based row and column.
    pub row: usize,
    pub col: usize,
    pub bias: f64,
    pub mse: f64,
    /// Standard error of `mse` across replications.
    pub mse_se: f64,
}

/// Aggregates for one (estimator, model, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub estimator: String,
    pub scores: String,
    pub preliminary: String,
    pub family: String,
    /// Degrees of freedom or η; absent for the normal law.
    pub param: Option<f64>,
    pub k: usize,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    /// Successful runs that returned the preliminary (no β* crossing).
    pub fallbacks: usize,
    pub components: Vec<ComponentStats>,
}

impl SimRow {
    pub fn component(&self, row: usize, col: usize) -> Option<&ComponentStats> {
        self.components.iter().find(|c| c.row == row && c.col == col)
    }
}

/// Result of [`run_sim`], rows ordered by model, then n, then estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub k: usize,
    pub rows: Vec<SimRow>,
}

impl SimReport {
    pub fn find(&self, estimator: &str, scores: &str, preliminary: &str, family: &str, n: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| {
            r.estimator == estimator
                && r.scores == scores
                && r.preliminary == preliminary
                && r.family == family
                && r.n == n
        })
    }
}

/// Free (row, col) positions in vech order without the (1,1) entry.
fn free_positions(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..k {
        for i in 0..=j {
            if (i, j) != (0, 0) {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct RepOutcome {
    /// Per estimator: errors of the free components, or `None` on failure.
    errors: Vec<Option<Vec<f64>>>,
    fallbacks: Vec<bool>,
}

fn run_replication(
    cfg: &SimConfig,
    model: &RadialModel,
    truth: &[f64],
    n: usize,
    seed: u64,
) -> RepOutcome {
    let m = cfg.estimators.len();
    let fail = || RepOutcome { errors: vec![None; m], fallbacks: vec![false; m] };
    let data = match sample(model, n, seed) {
        Ok(d) => d,
        Err(_) => return fail(),
    };
    let theta = match cfg.location {
        SimLocation::Known => DVector::from_vec(model.location.clone()),
        SimLocation::Hr => match hr_median(&data, cfg.tyler_tol, 4 * cfg.tyler_max_iter) {
            Ok(h) => h.location,
            Err(_) => return fail(),
        },
    };
    let needs_tyler = cfg.estimators.iter().any(|e| {
        e.method == Method::Tyler || (e.method == Method::Ronestep && e.preliminary_or_default() == Preliminary::Tyler)
    });
    let needs_gaussian = cfg.estimators.iter().any(|e| {
        e.method == Method::Gaussian
            || (e.method == Method::Ronestep && e.preliminary_or_default() == Preliminary::Gaussian)
    });
    let tyler = needs_tyler.then(|| tyler_shape(&data, &theta, cfg.tyler_tol, cfg.tyler_max_iter).map(|r| r.shape));
    let gaussian = needs_gaussian.then(|| gaussian_shape(&data).map(|r| r.shape));
    let pick = |p: &Option<Result<ShapeMatrix>>| -> Result<ShapeMatrix> {
        p.clone().expect("computed when needed")
    };

    let mut errors = Vec::with_capacity(m);
    let mut fallbacks = Vec::with_capacity(m);
    for e in &cfg.estimators {
        let outcome: Result<(ShapeMatrix, bool)> = match e.method {
            Method::Tyler => pick(&tyler).map(|s| (s, false)),
            Method::Gaussian => pick(&gaussian).map(|s| (s, false)),
            Method::Ronestep => {
                let kind = e.preliminary_or_default();
                let pre = match kind {
                    Preliminary::Tyler => pick(&tyler),
                    Preliminary::Gaussian => pick(&gaussian),
                };
                pre.and_then(|v| {
                    r_estimate_with(&data, &theta, &v, kind, e.scores.expect("validated"), &cfg.grid)
                        .map(|r| (r.shape, r.fallback))
                })
            }
        };
        match outcome {
            Ok((shape, fb)) => {
                let est = vech(shape.as_matrix());
                errors.push(Some(est.free().iter().zip(truth).map(|(a, b)| a - b).collect()));
                fallbacks.push(fb);
            }
            Err(_) => {
                errors.push(None);
                fallbacks.push(false);
            }
        }
    }
    RepOutcome { errors, fallbacks }
}

/// Runs the study. Replications are evaluated in parallel and reduced in
/// replication order.
pub fn run_sim(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let k = cfg.k;
    let positions = free_positions(k);
    let mut rows = Vec::new();
    for spec in &cfg.models {
        let model = spec.model(k)?;
        let truth: Vec<f64> = model.shape.vech().free().to_vec();
        let (tag, param) = spec.family.tag_and_param();
        for &n in &cfg.n {
            let outcomes: Vec<RepOutcome> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let seed = stream_seed(&[cfg.seed, spec.stream_key(), n as u64, rep as u64]);
                    run_replication(cfg, &model, &truth, n, seed)
                })
                .collect();
            for (e_idx, e) in cfg.estimators.iter().enumerate() {
                let p = positions.len();
                let (mut sum, mut sq, mut quad) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
                let (mut ok, mut fallbacks) = (0usize, 0usize);
                for o in &outcomes {
                    if let Some(err) = &o.errors[e_idx] {
                        ok += 1;
                        fallbacks += usize::from(o.fallbacks[e_idx]);
                        for c in 0..p {
                            let s = err[c] * err[c];
                            sum[c] += err[c];
                            sq[c] += s;
                            quad[c] += s * s;
                        }
                    }
                }
                let cnt = ok as f64;
                let components = positions
                    .iter()
                    .enumerate()
                    .map(|(c, &(i, j))| {
                        let (bias, mse) = if ok > 0 { (sum[c] / cnt, sq[c] / cnt) } else { (f64::NAN, f64::NAN) };
                        let mse_se = if ok > 1 {
                            ((quad[c] / cnt - mse * mse).max(0.0) / (cnt - 1.0)).sqrt()
                        } else {
                            f64::NAN
                        };
                        ComponentStats { row: i + 1, col: j + 1, bias, mse, mse_se }
                    })
                    .collect();
                let (estimator, scores, preliminary) = e.labels();
                rows.push(SimRow {
                    estimator,
                    scores,
                    preliminary,
                    family: tag.to_string(),
                    param: (!param.is_nan()).then_some(param),
                    k,
                    n,
                    replications: cfg.replications,
                    failures: cfg.replications - ok,
                    fallbacks,
                    components,
                });
            }
        }
    }
    Ok(SimReport { k, rows })
}

fn param_text(p: Option<f64>) -> String {
    p.map_or_else(|| "-".into(), |v| format!("{v}"))
}

/// CSV text of the report.
pub fn render_report(report: &SimReport) -> String {
    let mut out = String::new();
    if report.k == 2 {
        out.push_str(HEADER_K2);
        out.push('\n');
        for r in &report.rows {
            let off = r.component(1, 2).expect("k = 2 has an off-diagonal component");
            let diag = r.component(2, 2).expect("k = 2 has a diagonal component");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.estimator,
                r.scores,
                r.preliminary,
                r.family,
                param_text(r.param),
                r.k,
                r.n,
                r.replications,
                r.failures,
                off.bias,
                diag.bias,
                off.mse,
                diag.mse
            ));
        }
    } else {
        out.push_str(HEADER_GENERAL);
        out.push('\n');
        for r in &report.rows {
            for c in &r.components {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},V_{}_{},{},{}\n",
                    r.estimator,
                    r.scores,
                    r.preliminary,
                    r.family,
                    param_text(r.param),
                    r.k,
                    r.n,
                    r.replications,
                    r.failures,
                    c.row,
                    c.col,
                    c.bias,
                    c.mse
                ));
            }
        }
    }
    out
}

pub fn write_report(report: &SimReport, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(render_report(report).as_bytes())?;
    Ok(())
}

/// Parses a JSON configuration; syntax and schema errors carry the line.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(text)
        .map_err(|e| ShapeError::Parse { line: e.line(), message: e.to_string() })?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<SimConfig> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn write_config(cfg: &SimConfig, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| ShapeError::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(ShapeError::Usage("KS test needs two non-empty samples without NaN".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(KsTest { statistic: d, p_value: kolmogorov_sf(lambda) })
}

/// `Q_KS(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2j²λ²)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n: vec![40],
            replications: 12,
            models: vec![ModelSpec::spherical(RadialFamily::Gaussian), ModelSpec::spherical(RadialFamily::Student(3.0))],
            estimators: vec![
                EstimatorSpec::tyler(),
                EstimatorSpec::gaussian(),
                EstimatorSpec::onestep(ScoreFamily::VanDerWaerden, Preliminary::Tyler),
            ],
            ..SimConfig::table2()
        }
    }

    #[test]
    fn single_replication_report_is_that_replication() {
        let cfg = SimConfig { replications: 1, ..small_cfg() };
        let report = run_sim(&cfg).unwrap();
        let model = cfg.models[0].model(2).unwrap();
        let seed = stream_seed(&[cfg.seed, cfg.models[0].stream_key(), 40, 0]);
        let data = sample(&model, 40, seed).unwrap();
        let t = tyler_shape(&data, &DVector::zeros(2), cfg.tyler_tol, cfg.tyler_max_iter).unwrap().shape;
        let row = &report.rows[0];
        assert_eq!(row.estimator, "tyler");
        let off = t.as_matrix()[(0, 1)];
        let diag = t.as_matrix()[(1, 1)] - 1.0;
        assert_eq!(row.component(1, 2).unwrap().bias, off);
        assert_eq!(row.component(2, 2).unwrap().bias, diag);
        assert_eq!(row.component(1, 2).unwrap().mse, off * off);
        assert_eq!(row.component(2, 2).unwrap().mse, diag * diag);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small_cfg();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_sim(&cfg)).unwrap();
        let b = four.install(|| run_sim(&cfg)).unwrap();
        assert_eq!(render_report(&a), render_report(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn report_shape_and_header() {
        let report = run_sim(&small_cfg()).unwrap();
        let csv = render_report(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), HEADER_K2);
        assert_eq!(lines.count(), 2 * 3);
        for r in &report.rows {
            assert!(r.failures <= r.replications);
            assert!(r.components.iter().all(|c| c.mse >= 0.0));
        }
        let k3 = SimConfig { k: 3, replications: 3, ..small_cfg() };
        let csv3 = render_report(&run_sim(&k3).unwrap());
        assert!(csv3.starts_with(HEADER_GENERAL));
        assert_eq!(csv3.lines().count(), 1 + 2 * 3 * 5);
    }

    #[test]
    fn adding_estimators_keeps_the_data() {
        let mut cfg = small_cfg();
        cfg.estimators.truncate(1);
        let a = run_sim(&cfg).unwrap();
        let b = run_sim(&small_cfg()).unwrap();
        assert_eq!(a.rows[0], b.rows[0]);
        let mut only_t = small_cfg();
        only_t.models.remove(0);
        let c = run_sim(&only_t).unwrap();
        assert_eq!(c.rows[0], b.rows[3]);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let dir = std::env::temp_dir().join(format!("rankshape-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sim.json");
        let cfg = SimConfig::table2();
        write_config(&cfg, &path).unwrap();
        assert_eq!(read_config(&path).unwrap(), cfg);
        let bad = "{\n  \"k\": 2,\n  \"n\": [50,\n  oops\n}";
        assert!(matches!(parse_config(bad), Err(ShapeError::Parse { line: 4, .. })));
        fs::remove_dir_all(&dir).ok();
        let invalid = SimConfig { replications: 0, ..small_cfg() };
        assert!(run_sim(&invalid).is_err());
        let mut wrong = small_cfg();
        wrong.estimators.push(EstimatorSpec { method: Method::Tyler, scores: Some(ScoreFamily::Constant), preliminary: None });
        assert!(run_sim(&wrong).is_err());
    }

    #[test]
    fn ks_detects_shift_and_accepts_equal_laws() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.5);
        let c: Vec<f64> = b.iter().map(|x| x + 0.3).collect();
        let t = ks_two_sample(&a, &c).unwrap();
        assert!((t.statistic - 0.3).abs() < 0.01);
        assert!(t.p_value < 1e-6);
    }

    #[test]
    fn table2_preset_shape() {
        let cfg = SimConfig::table2();
        assert_eq!(cfg.models.len(), 6);
        assert_eq!(cfg.estimators.len(), 10);
        assert_eq!(cfg.n, vec![50, 250]);
        assert_eq!(cfg.replications, 1000);
        cfg.validate().unwrap();
    }
}
