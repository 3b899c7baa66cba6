//! Asymptotic relative efficiencies of the one-step R-estimators with respect
//! to Tyler's and the Gaussian estimator, plus the `ν → 0` Student limits.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::radial_scores::{cross_info, radial_moments, score_norm, Kurtosis, QuadratureSpec, RadialFamily, ScoreFamily};

/// An efficiency that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AreValue {
    Finite(f64),
    Infinite,
}

impl AreValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, AreValue::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            AreValue::Finite(v) => *v,
            AreValue::Infinite => f64::INFINITY,
        }
    }

    /// Fixed-decimal rendering, `inf` for the marker.
    pub fn render(&self, decimals: usize) -> String {
        match self {
            AreValue::Finite(v) => format!("{v:.decimals$}"),
            AreValue::Infinite => "inf".into(),
        }
    }
}

impl fmt::Display for AreValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AreValue::Finite(v) => write!(f, "{v}"),
            AreValue::Infinite => f.write_str("inf"),
        }
    }
}

/// Column of the efficiency table: the `ν → 0` Student limit or a radial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Underlying {
    StudentLimitZero,
    Law(RadialFamily),
}

impl fmt::Display for Underlying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Underlying::StudentLimitZero => f.write_str("t0"),
            Underlying::Law(g) => write!(f, "{g}"),
        }
    }
}

/// One entry of the efficiency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreCell {
    pub scores: ScoreFamily,
    pub under: Underlying,
    pub k: usize,
    pub vs_tyler: f64,
    pub vs_gaussian: AreValue,
}

/// `𝒥_k²(f₁,g₁) / (k²·𝒥_k(f₁))`.
pub fn are_vs_tyler(f1: ScoreFamily, g1: RadialFamily, k: usize, quad: &QuadratureSpec) -> Result<f64> {
    let j_fg = cross_info(f1, g1, k, quad)?;
    let j_f = score_norm(f1, k, quad)?;
    Ok(j_fg * j_fg / ((k * k) as f64 * j_f))
}

/// `(1 + κ_k(g₁))/(k(k+2)) · 𝒥_k²(f₁,g₁)/𝒥_k(f₁)`, infinite when `κ_k(g₁)` is.
pub fn are_vs_gaussian(
    f1: ScoreFamily,
    g1: RadialFamily,
    k: usize,
    quad: &QuadratureSpec,
) -> Result<AreValue> {
    let moments = radial_moments(g1, k, quad)?;
    let kappa = match moments.kurtosis {
        Kurtosis::Infinite => return Ok(AreValue::Infinite),
        Kurtosis::Finite(v) => v,
    };
    let j_fg = cross_info(f1, g1, k, quad)?;
    let j_f = score_norm(f1, k, quad)?;
    Ok(AreValue::Finite((1.0 + kappa) / (k * (k + 2)) as f64 * j_fg * j_fg / j_f))
}

/// Limit of the efficiency against Tyler's estimator under `t_ν`, `ν → 0`:
/// `k(k+ν₀+2)/((k+2)(k+ν₀))` for Student scores, `k/(k+2)` for van der Waerden.
pub fn are_limit_nu0(f1: ScoreFamily, k: usize) -> Result<f64> {
    f1.validate()?;
    let kf = k as f64;
    match f1 {
        ScoreFamily::Student(nu0) => Ok(kf * (kf + nu0 + 2.0) / ((kf + 2.0) * (kf + nu0))),
        ScoreFamily::VanDerWaerden => Ok(kf / (kf + 2.0)),
        other => Err(ShapeError::Usage(format!(
            "the nu -> 0 limit is available for Student and van der Waerden scores, not {other}"
        ))),
    }
}

/// Evaluates every `(scores, k, column)` combination; the `t0` column comes
/// first when `limits` is set. Cells are ordered by scores, then `k`, then column.
pub fn are_table(
    ks: &[usize],
    scores: &[ScoreFamily],
    unders: &[RadialFamily],
    limits: bool,
    quad: &QuadratureSpec,
) -> Result<Vec<AreCell>> {
    quad.validate()?;
    if ks.iter().any(|&k| k < 2) {
        return Err(ShapeError::Usage("dimensions must be at least 2".into()));
    }
    let mut columns: Vec<Underlying> = Vec::new();
    if limits {
        columns.push(Underlying::StudentLimitZero);
    }
    columns.extend(unders.iter().map(|&g| Underlying::Law(g)));

    let norms: HashMap<(String, usize), f64> = scores
        .iter()
        .flat_map(|&f| ks.iter().map(move |&k| (f, k)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(f, k)| score_norm(f, k, quad).map(|j| ((f.to_string(), k), j)))
        .collect::<Result<_>>()?;
    let kurtosis: HashMap<(String, usize), Kurtosis> = unders
        .iter()
        .flat_map(|&g| ks.iter().map(move |&k| (g, k)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(g, k)| radial_moments(g, k, quad).map(|m| ((g.to_string(), k), m.kurtosis)))
        .collect::<Result<_>>()?;

    let mut jobs: Vec<(ScoreFamily, usize, Underlying)> = Vec::new();
    for &f in scores {
        for &k in ks {
            jobs.extend(columns.iter().map(|&c| (f, k, c)));
        }
    }
    jobs.into_par_iter()
        .map(|(f, k, under)| {
            let (vs_tyler, vs_gaussian) = match under {
                Underlying::StudentLimitZero => (are_limit_nu0(f, k)?, AreValue::Infinite),
                Underlying::Law(g) => {
                    let j_f = norms[&(f.to_string(), k)];
                    let j_fg = cross_info(f, g, k, quad)?;
                    let vs_tyler = j_fg * j_fg / ((k * k) as f64 * j_f);
                    let vs_gaussian = match kurtosis[&(g.to_string(), k)] {
                        Kurtosis::Infinite => AreValue::Infinite,
                        Kurtosis::Finite(kappa) => {
                            AreValue::Finite((1.0 + kappa) / (k * (k + 2)) as f64 * j_fg * j_fg / j_f)
                        }
                    };
                    (vs_tyler, vs_gaussian)
                }
            };
            Ok(AreCell { scores: f, under, k, vs_tyler, vs_gaussian })
        })
        .collect()
}

/// Wide CSV: one row per `(scores, k)`, two columns per underlying law.
pub fn render_are_csv(cells: &[AreCell], decimals: usize) -> String {
    let mut columns: Vec<Underlying> = Vec::new();
    let mut rows: Vec<(ScoreFamily, usize)> = Vec::new();
    for c in cells {
        if !columns.contains(&c.under) {
            columns.push(c.under);
        }
        if !rows.contains(&(c.scores, c.k)) {
            rows.push((c.scores, c.k));
        }
    }
    let mut out = String::from("scores,k");
    for col in &columns {
        out.push_str(&format!(",{col}_vs_tyler,{col}_vs_gaussian"));
    }
    out.push('\n');
    for (f, k) in rows {
        out.push_str(&format!("{f},{k}"));
        for col in &columns {
            match cells.iter().find(|c| c.scores == f && c.k == k && c.under == *col) {
                Some(c) => out.push_str(&format!(
                    ",{:.decimals$},{}",
                    c.vs_tyler,
                    c.vs_gaussian.render(decimals)
                )),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}
