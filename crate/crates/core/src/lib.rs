//! Semiparametric rank-based estimation of elliptical shape matrices.
//!
//! Building blocks are re-exported at the crate root: shape algebra, radial
//! score functions and cross-information integrals, an elliptical sampler,
//! sign/rank estimators (Tyler, Gaussian, HR median), the one-step
//! R-estimator with its β*-search, asymptotic efficiencies and a Monte Carlo
//! harness.

pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod onestep;
pub mod radial_scores;
pub mod sampler;
pub mod shape_algebra;

pub use efficiency::{are_limit_nu0, are_table, are_vs_gaussian, are_vs_tyler, render_are_csv, AreCell, AreValue, Underlying};
pub use error::{Result, ShapeError};
pub use estimators::{
    gaussian_shape, hr_median, rank_weighted_scatter, ranks_signs, shape_score, sphericity_stat, tyler_shape,
    EstimatorReport, HrMedian, RanksSigns, SphericityTest,
};
pub use harness::{read_config, run_sim, write_report, EstimatorSpec, ModelSpec, SimConfig, SimReport};
pub use onestep::{
    beta_star, h_tilde, naive_cross_info, path_point, r_estimate, r_estimate_from, r_estimate_with, BetaGrid, Location, OneStepConfig,
    OneStepResult, Preliminary,
};
pub use radial_scores::{cross_info, score_k, QuadratureSpec, RadialFamily, ScoreFamily};
pub use sampler::{sample, RadialModel, SampleMatrix};
pub use shape_algebra::{normalize_shape, spd_inv_sqrt, spd_sqrt, unvech, vech, ShapeMatrix, SymVech};
