//! Composite Gauss–Legendre rules on (0, 1) with panels graded
//! geometrically toward both endpoints.
//!
//! Score functions such as the chi-square quantile blow up logarithmically
//! at `u -> 1`; halving the panel width at each level toward an endpoint keeps
//! each panel's integrand smooth relative to its width. Nodes are reported as
//! `(u, 1 - u)` pairs where the complement is exact, so integrands can
//! evaluate upper-tail quantiles without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};

/// Quadrature settings for integrals over (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Total node budget, spread evenly over the graded panels.
    pub nodes: usize,
    /// Integration runs over `(edge_clip, 1 - edge_clip)`.
    pub edge_clip: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes: 512, edge_clip: 1e-12 }
    }
}

const MIN_PER_PANEL: usize = 8;

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 64 {
            return Err(ShapeError::Usage(format!(
                "quadrature needs at least 64 nodes, got {}",
                self.nodes
            )));
        }
        if !(self.edge_clip > 0.0 && self.edge_clip <= 1e-10) {
            return Err(ShapeError::Usage(format!(
                "edge clip must lie in (0, 1e-10], got {}",
                self.edge_clip
            )));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        QuadratureSpec { nodes: self.nodes * 2, ..*self }
    }

    /// Integrates `f(u, 1 - u)` over `(edge_clip, 1 - edge_clip)`.
    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> Result<f64> {
        self.validate()?;
        // Panels [2^-(j+1), 2^-j] for j = 1..levels on each side, plus the
        // last partial panel down to the clip.
        let levels = (1.0 / self.edge_clip).log2().ceil() as usize;
        let panels = 2 * levels;
        let order = (self.nodes / panels).max(MIN_PER_PANEL);
        let (x, w) = gauss_legendre(order);

        let mut total = 0.0;
        for side in 0..2 {
            let mut sum_side = 0.0;
            for j in 1..=levels {
                let outer = 0.5_f64.powi(j as i32 - 1) * 0.5;
                let inner = (0.5_f64.powi(j as i32) * 0.5).max(self.edge_clip);
                // panel [inner, outer] measured as distance from the endpoint
                let (half, mid) = (0.5 * (outer - inner), 0.5 * (outer + inner));
                let mut s = 0.0;
                for (xi, wi) in x.iter().zip(&w) {
                    let t = mid + half * xi;
                    let (u, q) = if side == 0 { (t, 1.0 - t) } else { (1.0 - t, t) };
                    s += wi * f(u, q);
                }
                sum_side += half * s;
                if inner <= self.edge_clip {
                    break;
                }
            }
            total += sum_side;
        }
        if !total.is_finite() {
            return Err(ShapeError::Numeric("integrand produced a non-finite value".into()));
        }
        Ok(total)
    }

    /// Integrates at this node count and at twice as many, returning the finer
    /// value; fails when the two differ by more than `rel_tol` relative.
    pub fn integrate_checked(
        &self,
        rel_tol: f64,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<f64> {
        let coarse = self.integrate(&mut f)?;
        let fine = self.doubled().integrate(&mut f)?;
        if (fine - coarse).abs() > rel_tol * fine.abs().max(1.0) {
            return Err(ShapeError::Numeric(format!(
                "quadrature did not settle: {coarse} at {} nodes vs {fine} at {}",
                self.nodes,
                2 * self.nodes
            )));
        }
        Ok(fine)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] via Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged root
        let (mut p0, mut p1) = (1.0, 0.0);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
