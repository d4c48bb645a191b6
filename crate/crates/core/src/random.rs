//! Seeded random fields for property checks.

use std::sync::Arc;

use ndarray::Array4;
use num_complex::Complex64;
use rand::Rng;

use crate::spectral::{leray_project, to_spectral, v_norm, Grid, PhysicalField, SpectralField};

/// Random solenoidal field supported on integer wavevectors with
/// `|k| ≤ n/4`, normalized to unit `‖∇u‖`.
pub fn random_solenoidal<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> SpectralField {
    random_band_limited(grid, rng, grid.n() as f64 / 4.0)
}

/// Random solenoidal field on `|k| ≤ band`, unit `‖∇u‖`.
pub fn random_band_limited<R: Rng + ?Sized>(
    grid: &Arc<Grid>,
    rng: &mut R,
    band: f64,
) -> SpectralField {
    let n = grid.n();
    let mut coeffs = Array4::from_elem((3, n, n, n), Complex64::new(0.0, 0.0));
    for ((_, iz, iy, ix), c) in coeffs.indexed_iter_mut() {
        let k = grid.int_wavevector(iz, iy, ix);
        let kn = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        if kn <= band {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let sym = Array4::from_shape_fn((3, n, n, n), |(c, iz, iy, ix)| {
        let m = |i: usize| (n - i) % n;
        0.5 * (coeffs[[c, iz, iy, ix]] + coeffs[[c, m(iz), m(iy), m(ix)]].conj())
    });
    let field = leray_project(&SpectralField::from_coeffs(grid, sym).expect("shape"));
    let norm = v_norm(&field);
    if norm == 0.0 {
        field
    } else {
        field.scaled(1.0 / norm)
    }
}

/// Random physical field with independent uniform values in `[-1, 1]`.
pub fn random_physical<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> PhysicalField {
    let n = grid.n();
    let values = Array4::from_shape_fn((3, n, n, n), |_| rng.random_range(-1.0..1.0));
    PhysicalField::from_values(grid, values).expect("shape")
}

/// Random smooth physical field: a band-limited solenoidal field plus a
/// band-limited gradient part, so it is not divergence-free.
pub fn random_smooth_physical<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> PhysicalField {
    let raw = random_physical(grid, rng);
    let spec = to_spectral(&raw).expect("grid");
    let n = grid.n();
    let band = n as f64 / 4.0;
    let mut coeffs = spec.coeffs().clone();
    for ((_, iz, iy, ix), c) in coeffs.indexed_iter_mut() {
        let k = grid.int_wavevector(iz, iy, ix);
        let kn = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        if kn > band {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    crate::spectral::to_physical(&SpectralField::from_coeffs(grid, coeffs).expect("shape"))
}
