//! Seedable generation of elliptical samples `θ + σ·r·V^{1/2}·S`.
//!
//! Each observation draws from its own ChaCha8 stream keyed by
//! `(seed, observation index)`, so a sample is a pure function of
//! `(model, n, seed)` and its first `m` rows do not depend on `n`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::radial_scores::RadialFamily;
use crate::shape_algebra::{spd_sqrt, ShapeMatrix};

/// An elliptical data-generating law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialModel {
    pub family: RadialFamily,
    pub location: Vec<f64>,
    pub scale: f64,
    pub shape: ShapeMatrix,
}

impl RadialModel {
    pub fn new(
        family: RadialFamily,
        location: Vec<f64>,
        scale: f64,
        shape: ShapeMatrix,
    ) -> Result<Self> {
        family.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ShapeError::Domain(format!("scale must be positive, got {scale}")));
        }
        if location.len() != shape.dim() {
            return Err(ShapeError::Usage(format!(
                "location has length {} but shape is {}x{}",
                location.len(),
                shape.dim(),
                shape.dim()
            )));
        }
        Ok(RadialModel { family, location, scale, shape })
    }

    /// Centered at the origin with unit scale and identity shape.
    pub fn spherical(family: RadialFamily, k: usize) -> Self {
        RadialModel { family, location: vec![0.0; k], scale: 1.0, shape: ShapeMatrix::identity(k) }
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// One draw of `r·S` (the spherical law before location, scale and shape).
    pub fn spherical_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.dim();
        match self.family {
            RadialFamily::Gaussian => standard_normal_vector(k, rng),
            RadialFamily::Student(nu) => {
                let z = standard_normal_vector(k, rng);
                let w: f64 = ChiSquared::new(nu).expect("validated ν").sample(rng);
                z / (w / nu).sqrt()
            }
            RadialFamily::PowerExponential(eta) => {
                let g: f64 = Gamma::new(k as f64 / (2.0 * eta), 1.0).expect("validated η").sample(rng);
                let r = g.powf(1.0 / (2.0 * eta));
                sphere_uniform(k, rng) * r
            }
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub seed: u64,
}

/// `n` observations in rows, `k` coordinates in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
    provenance: Option<Provenance>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ShapeError::Domain("sample contains non-finite entries".into()));
        }
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(ShapeError::Usage("sample must have at least one row and column".into()));
        }
        Ok(SampleMatrix { data, provenance: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(ShapeError::Usage("rows have differing lengths".into()));
        }
        SampleMatrix::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn k(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Applies `x ↦ M·x + a` to every observation.
    pub fn affine(&self, m: &DMatrix<f64>, a: &DVector<f64>) -> Result<Self> {
        if m.nrows() != self.k() || m.ncols() != self.k() || a.len() != self.k() {
            return Err(ShapeError::Usage("affine map does not match sample dimension".into()));
        }
        let mut out = &self.data * m.transpose();
        for mut row in out.row_iter_mut() {
            row += a.transpose();
        }
        SampleMatrix::new(out)
    }

    /// Observations as the columns of a `k × n` matrix, shifted by `-center`.
    pub fn centered_columns(&self, center: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.data.transpose();
        for mut col in out.column_iter_mut() {
            col -= center;
        }
        out
    }

    /// Comma-separated rows, shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.data.row_iter() {
            let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads comma-separated rows; blank lines and `#` comments are skipped.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row = trimmed
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| ShapeError::Parse {
                        line: idx + 1,
                        message: format!("not a number: '{}'", f.trim()),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                let first: &Vec<f64> = first;
                if first.len() != row.len() {
                    return Err(ShapeError::Parse {
                        line: idx + 1,
                        message: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(ShapeError::Parse { line: 0, message: "no data rows".into() });
        }
        SampleMatrix::from_rows(&rows)
    }
}

/// Mixes a sequence of keys into one 64-bit seed (SplitMix64 finalizer chain).
pub fn stream_seed(keys: &[u64]) -> u64 {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    for &key in keys {
        state = splitmix(state ^ splitmix(key));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for observation `index` of the sample seeded by `seed`.
pub fn observation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(&[seed, index]))
}

fn standard_normal_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.sample(StandardNormal))
}

/// Uniform draw on the unit sphere of `R^k` (normalized Gaussian vector).
pub fn sphere_uniform<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let z = standard_normal_vector(k, rng);
        let norm = z.norm();
        if norm > 0.0 {
            return z / norm;
        }
    }
}

/// `x = θ + σ·(V^{1/2}·z)`; shared by the sampler and its pushforward check.
pub fn push_forward(
    location: &DVector<f64>,
    scale: f64,
    shape_root: &DMatrix<f64>,
    z: &DVector<f64>,
) -> DVector<f64> {
    location + (shape_root * z) * scale
}

/// Draws `n` i.i.d. observations from `model`.
pub fn sample(model: &RadialModel, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(ShapeError::Usage("sample size must be at least 1".into()));
    }
    model.family.validate()?;
    let k = model.dim();
    let root = spd_sqrt(model.shape.as_matrix())?;
    let location = DVector::from_vec(model.location.clone());
    let mut data = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut rng = observation_rng(seed, i as u64);
        let z = model.spherical_draw(&mut rng);
        let x = push_forward(&location, model.scale, &root, &z);
        data.set_row(i, &x.transpose());
    }
    Ok(SampleMatrix {
        data,
        provenance: Some(Provenance { model: format!("{}/k={k}", model.family), seed }),
    })
}
