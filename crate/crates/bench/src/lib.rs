//! Benchmark fixtures shared by the criterion benches.

use nalgebra::DVector;
use rankshape_core::{sample, tyler_shape, RadialFamily, RadialModel, SampleMatrix, ShapeMatrix};

/// Spherical sample with a fixed seed.
pub fn fixture(family: RadialFamily, k: usize, n: usize) -> SampleMatrix {
    sample(&RadialModel::spherical(family, k), n, 0xbe7c4).expect("valid fixture")
}

pub fn origin(k: usize) -> DVector<f64> {
    DVector::zeros(k)
}

/// Tyler estimate at the origin, the usual one-step preliminary.
pub fn preliminary(data: &SampleMatrix) -> ShapeMatrix {
    tyler_shape(data, &origin(data.k()), 1e-9, 500).expect("fixture converges").shape
}
