//! Fourier discretization of the periodic box.
//!
//! Fields are stored as complex coefficient arrays of shape `(3, n, n, n)`,
//! indexed `[component, iz, iy, ix]` in FFT ordering (x fastest). The
//! normalization is `f(x) = Σ_k c_k exp(i κ·x)` with `κ = 2π k / L`, so
//! `c_k = n⁻³ Σ_x f(x) exp(-i κ·x)`.
//!
//! A wavevector is *resolved* when every integer component satisfies
//! `|k_i| ≤ kmax`, where `kmax = n/2 - 1` for the 3/2 padding rule and
//! `kmax = (n-1)/3` for the 2/3 truncation rule. Solenoidal fields live on
//! resolved, nonzero modes only; quadratic products of resolved fields are
//! evaluated alias-free on the padded grid.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use ndarray::{Array3, Array4, ArrayView3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dealiasing strategy for pseudo-spectral products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dealias {
    /// Keep `|k_i| < n/2`, evaluate products on a `3n/2` grid.
    ThreeHalves,
    /// Keep `|k_i| ≤ (n-1)/3`, evaluate products on the `n` grid.
    TwoThirds,
}

/// Discretization parameters shared by every field and trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_per_axis: usize,
    pub domain_length: f64,
    pub dealias_padding: Dealias,
    pub dt: f64,
    pub n_steps: usize,
}

impl GridSpec {
    /// A `2π`-periodic box with 3/2-rule dealiasing.
    pub fn new(n_per_axis: usize, dt: f64, n_steps: usize) -> Self {
        Self {
            n_per_axis,
            domain_length: 2.0 * PI,
            dealias_padding: Dealias::ThreeHalves,
            dt,
            n_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 4 || self.n_per_axis % 2 != 0 {
            return config_err(format!(
                "n_per_axis must be even and >= 4, got {}",
                self.n_per_axis
            ));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            return config_err(format!("domain_length must be positive, got {}", self.domain_length));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return config_err(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_steps == 0 {
            return config_err("n_steps must be positive");
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Spatial compatibility: time-step parameters are ignored.
    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.n_per_axis == other.n_per_axis
            && self.domain_length == other.domain_length
            && self.dealias_padding == other.dealias_padding
    }
}

/// Precomputed wavenumbers, masks and FFT plans for a [`GridSpec`].
pub struct Grid {
    spec: GridSpec,
    n: usize,
    padded: usize,
    kmax: i64,
    int_k: Vec<i64>,
    kappa: Vec<f64>,
    k2: Array3<f64>,
    resolved: Array3<bool>,
    fft_n: [Arc<dyn Fft<f64>>; 2],
    fft_pad: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("spec", &self.spec)
            .field("padded", &self.padded)
            .field("kmax", &self.kmax)
            .finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let n = spec.n_per_axis;
        let (padded, kmax) = match spec.dealias_padding {
            Dealias::ThreeHalves => (3 * n / 2, (n / 2 - 1) as i64),
            Dealias::TwoThirds => (n, ((n - 1) / 3) as i64),
        };
        let int_k: Vec<i64> = (0..n)
            .map(|i| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let scale = 2.0 * PI / spec.domain_length;
        let kappa: Vec<f64> = int_k.iter().map(|&k| k as f64 * scale).collect();
        let k2 = Array3::from_shape_fn((n, n, n), |(iz, iy, ix)| {
            kappa[ix] * kappa[ix] + kappa[iy] * kappa[iy] + kappa[iz] * kappa[iz]
        });
        let resolved = Array3::from_shape_fn((n, n, n), |(iz, iy, ix)| {
            int_k[ix].abs() <= kmax && int_k[iy].abs() <= kmax && int_k[iz].abs() <= kmax
        });
        let mut planner = FftPlanner::new();
        let fft_n = [planner.plan_fft_forward(n), planner.plan_fft_inverse(n)];
        let fft_pad = [planner.plan_fft_forward(padded), planner.plan_fft_inverse(padded)];
        Ok(Arc::new(Grid {
            spec,
            n,
            padded,
            kmax,
            int_k,
            kappa,
            k2,
            resolved,
            fft_n,
            fft_pad,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Points per axis of the grid used for products.
    pub fn padded_n(&self) -> usize {
        self.padded
    }

    /// Largest resolved integer wavenumber per axis.
    pub fn kmax(&self) -> i64 {
        self.kmax
    }

    pub fn volume(&self) -> f64 {
        self.spec.domain_length.powi(3)
    }

    /// Quadrature weight of one collocation point.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / (self.n * self.n * self.n) as f64
    }

    /// Integer wavevector `(kx, ky, kz)` of the array slot `(iz, iy, ix)`.
    pub fn int_wavevector(&self, iz: usize, iy: usize, ix: usize) -> [i64; 3] {
        [self.int_k[ix], self.int_k[iy], self.int_k[iz]]
    }

    /// Physical wavevector `κ = 2πk/L` of the array slot `(iz, iy, ix)`.
    pub fn wavevector(&self, iz: usize, iy: usize, ix: usize) -> [f64; 3] {
        [self.kappa[ix], self.kappa[iy], self.kappa[iz]]
    }

    /// `|κ|²` per slot.
    pub fn k2(&self) -> &Array3<f64> {
        &self.k2
    }

    pub fn is_resolved(&self, iz: usize, iy: usize, ix: usize) -> bool {
        self.resolved[[iz, iy, ix]]
    }

    /// Array slot `(iz, iy, ix)` holding integer wavevector `k`, if representable.
    pub fn slot(&self, k: [i64; 3]) -> Option<(usize, usize, usize)> {
        let n = self.n as i64;
        let idx = |k: i64| (k.abs() <= n / 2).then(|| k.rem_euclid(n) as usize);
        Some((idx(k[2])?, idx(k[1])?, idx(k[0])?))
    }

    /// Collocation point `(x, y, z)` of the slot `(iz, iy, ix)`.
    pub fn point(&self, iz: usize, iy: usize, ix: usize) -> [f64; 3] {
        let h = self.spec.domain_length / self.n as f64;
        [ix as f64 * h, iy as f64 * h, iz as f64 * h]
    }

    fn same_space(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
        Arc::ptr_eq(a, b) || a.spec.same_space(&b.spec)
    }

    // ----- pseudo-spectral plumbing -----

    /// Evaluate a scalar coefficient array on the padded grid using only
    /// resolved modes.
    pub(crate) fn padded_scalar(&self, c: ArrayView3<Complex64>) -> Array3<f64> {
        let m = self.padded;
        let mut buf = Array3::from_elem((m, m, m), ZERO);
        for ((iz, iy, ix), v) in c.indexed_iter() {
            if self.resolved[[iz, iy, ix]] {
                let pz = self.int_k[iz].rem_euclid(m as i64) as usize;
                let py = self.int_k[iy].rem_euclid(m as i64) as usize;
                let px = self.int_k[ix].rem_euclid(m as i64) as usize;
                buf[[pz, py, px]] = *v;
            }
        }
        fft3(&mut buf, self.fft_pad[1].as_ref());
        buf.mapv(|z| z.re)
    }

    /// Transform padded-grid values back and keep the resolved modes.
    pub(crate) fn from_padded(&self, comps: &[Array3<f64>; 3]) -> Array4<Complex64> {
        let (n, m) = (self.n, self.padded);
        let norm = 1.0 / (m * m * m) as f64;
        let mut out = Array4::from_elem((3, n, n, n), ZERO);
        for (c, phys) in comps.iter().enumerate() {
            let mut buf = phys.mapv(|x| Complex64::new(x, 0.0));
            fft3(&mut buf, self.fft_pad[0].as_ref());
            let mut target = out.index_axis_mut(Axis(0), c);
            for ((iz, iy, ix), v) in target.indexed_iter_mut() {
                if self.resolved[[iz, iy, ix]] {
                    let pz = self.int_k[iz].rem_euclid(m as i64) as usize;
                    let py = self.int_k[iy].rem_euclid(m as i64) as usize;
                    let px = self.int_k[ix].rem_euclid(m as i64) as usize;
                    *v = buf[[pz, py, px]] * norm;
                }
            }
        }
        out
    }

    /// Padded-grid values of a vector field and, optionally, its gradient.
    pub(crate) fn padded_view(&self, coeffs: &Array4<Complex64>, with_grad: bool) -> PaddedView {
        let comps = [0, 1, 2].map(|c| self.padded_scalar(coeffs.index_axis(Axis(0), c)));
        let grad = with_grad.then(|| {
            [0, 1, 2].map(|i| {
                [0, 1, 2].map(|j| {
                    let comp = coeffs.index_axis(Axis(0), i);
                    let d = Array3::from_shape_fn(comp.dim(), |(iz, iy, ix)| {
                        I * self.wavevector(iz, iy, ix)[j] * comp[[iz, iy, ix]]
                    });
                    self.padded_scalar(d.view())
                })
            })
        });
        PaddedView { comps, grad }
    }
}

/// Physical values of a field on the padded grid; `grad[i][j] = ∂_j f_i`.
pub(crate) struct PaddedView {
    pub comps: [Array3<f64>; 3],
    pub grad: Option<[[Array3<f64>; 3]; 3]>,
}

impl PaddedView {
    fn grad(&self) -> &[[Array3<f64>; 3]; 3] {
        self.grad.as_ref().expect("padded view built without gradient")
    }

    /// `((a·∇) b)_j = Σ_i a_i ∂_i b_j`.
    pub fn convective(a: &PaddedView, b: &PaddedView) -> [Array3<f64>; 3] {
        let gb = b.grad();
        [0, 1, 2].map(|j| {
            let mut out = Array3::zeros(a.comps[0].dim());
            for i in 0..3 {
                Zip::from(&mut out)
                    .and(&a.comps[i])
                    .and(&gb[j][i])
                    .for_each(|o, &ai, &d| *o += ai * d);
            }
            out
        })
    }

    /// `((∇a)*·b)_j = Σ_i (∂_j a_i) b_i`.
    pub fn transpose_gradient(a: &PaddedView, b: &PaddedView) -> [Array3<f64>; 3] {
        let ga = a.grad();
        [0, 1, 2].map(|j| {
            let mut out = Array3::zeros(b.comps[0].dim());
            for i in 0..3 {
                Zip::from(&mut out)
                    .and(&ga[i][j])
                    .and(&b.comps[i])
                    .for_each(|o, &d, &bi| *o += d * bi);
            }
            out
        })
    }
}

pub(crate) fn add_into(acc: &mut [Array3<f64>; 3], other: &[Array3<f64>; 3], scale: f64) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.scaled_add(scale, b);
    }
}

/// In-place unnormalized 3-D FFT of a cube.
fn fft3(data: &mut Array3<Complex64>, plan: &dyn Fft<f64>) {
    let len = plan.len();
    let mut buf = vec![ZERO; len];
    let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
    for axis in 0..3 {
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, x) in buf.iter_mut().zip(lane.iter()) {
                *b = *x;
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for (x, b) in lane.iter_mut().zip(&buf) {
                *x = *b;
            }
        }
    }
}

fn ensure_same(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Grid::same_space(a, b) {
        Ok(())
    } else {
        config_err(format!(
            "grid mismatch: n={} L={} vs n={} L={}",
            a.spec.n_per_axis, a.spec.domain_length, b.spec.n_per_axis, b.spec.domain_length
        ))
    }
}

/// A velocity-like field in Fourier space.
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Array4<Complex64>,
    divergence_free: bool,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("n", &self.grid.n)
            .field("divergence_free", &self.divergence_free)
            .field("l2_norm", &self.l2_norm())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.n;
        Self {
            grid: grid.clone(),
            coeffs: Array4::from_elem((3, n, n, n), ZERO),
            divergence_free: true,
        }
    }

    /// Wrap raw coefficients. The result is not flagged divergence-free;
    /// pass it through [`leray_project`] to obtain a solenoidal field.
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Array4<Complex64>) -> Result<Self> {
        let n = grid.n;
        if coeffs.dim() != (3, n, n, n) {
            return config_err(format!(
                "coefficient array has shape {:?}, expected (3, {n}, {n}, {n})",
                coeffs.dim()
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
            divergence_free: false,
        })
    }

    /// Real field `amp·exp(ik·x) + conj(amp)·exp(-ik·x)`.
    pub fn single_mode(grid: &Arc<Grid>, k: [i64; 3], amp: [Complex64; 3]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        f.divergence_free = false;
        let (iz, iy, ix) = grid
            .slot(k)
            .ok_or_else(|| Error::Config(format!("wavevector {k:?} not representable")))?;
        let (jz, jy, jx) = grid.slot([-k[0], -k[1], -k[2]]).expect("negated slot");
        for c in 0..3 {
            f.coeffs[[c, iz, iy, ix]] += amp[c];
            f.coeffs[[c, jz, jy, jx]] += amp[c].conj();
        }
        Ok(f)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array4<Complex64> {
        &self.coeffs
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub(crate) fn with_coeffs(&self, coeffs: Array4<Complex64>, divergence_free: bool) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs,
            divergence_free,
        }
    }

    pub(crate) fn raw(grid: &Arc<Grid>, coeffs: Array4<Complex64>, divergence_free: bool) -> Self {
        Self {
            grid: grid.clone(),
            coeffs,
            divergence_free,
        }
    }

    pub(crate) fn require_divergence_free(&self, what: &str) -> Result<()> {
        if self.divergence_free {
            Ok(())
        } else {
            Err(Error::Contract(format!("{what}: input is not divergence-free")))
        }
    }

    /// Multiply every mode by `f(|κ|²)`. Preserves the divergence-free flag.
    pub fn scale_modes(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        for mut comp in coeffs.outer_iter_mut() {
            Zip::from(&mut comp).and(&self.grid.k2).for_each(|c, &k2| *c *= f(k2));
        }
        self.with_coeffs(coeffs, self.divergence_free)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_coeffs(self.coeffs.mapv(|c| c * s), self.divergence_free)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &SpectralField) -> Self {
        assert!(Grid::same_space(&self.grid, &other.grid), "grid mismatch in axpy");
        let mut coeffs = self.coeffs.clone();
        coeffs.zip_mut_with(&other.coeffs, |a, &b| *a += b * s);
        self.with_coeffs(coeffs, self.divergence_free && other.divergence_free)
    }

    /// Largest modewise `|κ·c_k| / |κ|`, relative to the largest coefficient
    /// magnitude of the field.
    pub fn divergence_defect(&self) -> f64 {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.grid.n;
        let mut worst = 0.0f64;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let kn = self.grid.k2[[iz, iy, ix]].sqrt();
                    if kn == 0.0 {
                        continue;
                    }
                    let kv = self.grid.wavevector(iz, iy, ix);
                    let c = [0, 1, 2].map(|d| self.coeffs[[d, iz, iy, ix]]);
                    let div = kv[0] * c[0] + kv[1] * c[1] + kv[2] * c[2];
                    worst = worst.max(div.norm() / kn);
                }
            }
        }
        worst / scale
    }

    /// Largest conjugate-symmetry defect `|c(-k) - conj c(k)|` over all slots.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0f64;
        for ((c, iz, iy, ix), v) in self.coeffs.indexed_iter() {
            let m = |i: usize| (n - i) % n;
            let partner = self.coeffs[[c, m(iz), m(iy), m(ix)]];
            worst = worst.max((partner - v.conj()).norm());
        }
        worst
    }

    pub fn l2_norm(&self) -> f64 {
        sum_weighted(self, self, |_| 1.0).max(0.0).sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, s: f64) -> SpectralField {
        self.scaled(s)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Real 3-component values on the `n³` collocation grid, shape `(3, n, n, n)`.
#[derive(Clone)]
pub struct PhysicalField {
    grid: Arc<Grid>,
    values: Array4<f64>,
}

impl fmt::Debug for PhysicalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhysicalField")
            .field("n", &self.grid.n)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl PhysicalField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.n;
        Self {
            grid: grid.clone(),
            values: Array4::zeros((3, n, n, n)),
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: [f64; 3]) -> Self {
        let n = grid.n;
        Self {
            grid: grid.clone(),
            values: Array4::from_shape_fn((3, n, n, n), |(c, _, _, _)| value[c]),
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Array4<f64>) -> Result<Self> {
        let n = grid.n;
        if values.dim() != (3, n, n, n) {
            return config_err(format!(
                "physical array has shape {:?}, expected (3, {n}, {n}, {n})",
                values.dim()
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Sample `f(x, y, z)` at the collocation points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let n = grid.n;
        let mut values = Array4::zeros((3, n, n, n));
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let v = f(grid.point(iz, iy, ix));
                    for c in 0..3 {
                        values[[c, iz, iy, ix]] = v[c];
                    }
                }
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &Array4<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array4<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array4<f64> {
        self.values
    }

    pub(crate) fn with_values(&self, values: Array4<f64>) -> Self {
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Collocation quadrature `∫ f·g dx` (exact for band-limited products).
    pub fn inner(&self, other: &PhysicalField) -> Result<f64> {
        ensure_same(&self.grid, &other.grid)?;
        let dot: f64 = self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b).sum();
        Ok(dot * self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        let dot: f64 = self.values.iter().map(|a| a * a).sum();
        (dot * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.mapv(|v| v * s))
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &PhysicalField) -> Self {
        assert!(Grid::same_space(&self.grid, &other.grid), "grid mismatch in axpy");
        let mut values = self.values.clone();
        values.scaled_add(s, &other.values);
        self.with_values(values)
    }
}

pub fn to_spectral(f: &PhysicalField) -> Result<SpectralField> {
    let grid = &f.grid;
    let n = grid.n;
    if f.values.dim() != (3, n, n, n) {
        return config_err("physical field does not match its grid");
    }
    let norm = 1.0 / (n * n * n) as f64;
    let mut coeffs = Array4::from_elem((3, n, n, n), ZERO);
    for c in 0..3 {
        let mut buf = f
            .values
            .index_axis(Axis(0), c)
            .mapv(|x| Complex64::new(x, 0.0));
        fft3(&mut buf, grid.fft_n[0].as_ref());
        coeffs
            .index_axis_mut(Axis(0), c)
            .assign(&buf.mapv(|z| z * norm));
    }
    Ok(SpectralField::raw(grid, coeffs, false))
}

pub fn to_physical(f: &SpectralField) -> PhysicalField {
    let grid = &f.grid;
    let n = grid.n;
    let mut values = Array4::zeros((3, n, n, n));
    for c in 0..3 {
        let mut buf = f.coeffs.index_axis(Axis(0), c).to_owned();
        fft3(&mut buf, grid.fft_n[1].as_ref());
        values.index_axis_mut(Axis(0), c).assign(&buf.mapv(|z| z.re));
    }
    PhysicalField {
        grid: grid.clone(),
        values,
    }
}

/// Orthogonal projection onto resolved, zero-mean, solenoidal fields.
pub fn leray_project(f: &SpectralField) -> SpectralField {
    let grid = &f.grid;
    let n = grid.n;
    let mut coeffs = Array4::from_elem((3, n, n, n), ZERO);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let k2 = grid.k2[[iz, iy, ix]];
                if k2 == 0.0 || !grid.resolved[[iz, iy, ix]] {
                    continue;
                }
                let kv = grid.wavevector(iz, iy, ix);
                let c = [0, 1, 2].map(|d| f.coeffs[[d, iz, iy, ix]]);
                let kc = (kv[0] * c[0] + kv[1] * c[1] + kv[2] * c[2]) / k2;
                for d in 0..3 {
                    coeffs[[d, iz, iy, ix]] = c[d] - kv[d] * kc;
                }
            }
        }
    }
    f.with_coeffs(coeffs, true)
}

/// Stokes operator `A = -PΔ`, diagonal `|κ|²` on solenoidal fields.
pub fn apply_stokes(u: &SpectralField) -> Result<SpectralField> {
    u.require_divergence_free("apply_stokes")?;
    Ok(u.scale_modes(|k2| k2))
}

/// Helmholtz filter `I - αΔ`, diagonal `1 + α|κ|²`.
pub fn apply_helmholtz(u: &SpectralField, alpha: f64) -> SpectralField {
    u.scale_modes(|k2| 1.0 + alpha * k2)
}

pub fn invert_helmholtz(u: &SpectralField, alpha: f64) -> SpectralField {
    u.scale_modes(|k2| 1.0 / (1.0 + alpha * k2))
}

fn sum_weighted(u: &SpectralField, v: &SpectralField, w: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for c in 0..3 {
        Zip::from(u.coeffs.index_axis(Axis(0), c))
            .and(v.coeffs.index_axis(Axis(0), c))
            .and(&u.grid.k2)
            .for_each(|a, b, &k2| {
                let weight = w(k2);
                if weight != 0.0 {
                    acc += weight * (a * b.conj()).re;
                }
            });
    }
    acc * u.grid.volume()
}

/// `∫ u·v dx` evaluated from the coefficients.
pub fn l2_inner(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    ensure_same(&u.grid, &v.grid)?;
    Ok(sum_weighted(u, v, |_| 1.0))
}

/// `∫ ∇u : ∇v dx`.
pub fn v_inner(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    ensure_same(&u.grid, &v.grid)?;
    Ok(sum_weighted(u, v, |k2| k2))
}

pub fn v_norm(u: &SpectralField) -> f64 {
    sum_weighted(u, u, |k2| k2).max(0.0).sqrt()
}

/// `‖Au‖`.
pub fn da_norm(u: &SpectralField) -> f64 {
    sum_weighted(u, u, |k2| k2 * k2).max(0.0).sqrt()
}

/// Norm dual to `‖A·‖`: `(Σ_{k≠0} |u_k|² / |κ|⁴)^{1/2}`.
pub fn da_dual_norm(u: &SpectralField) -> f64 {
    sum_weighted(u, u, |k2| if k2 == 0.0 { 0.0 } else { 1.0 / (k2 * k2) })
        .max(0.0)
        .sqrt()
}

/// `(Au, Av)`, the inner product behind the tracking term.
pub fn da_inner(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    ensure_same(&u.grid, &v.grid)?;
    Ok(sum_weighted(u, v, |k2| k2 * k2))
}

pub(crate) fn check_grids(a: &SpectralField, b: &SpectralField) -> Result<()> {
    ensure_same(&a.grid, &b.grid)
}

pub(crate) fn check_physical_grids(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    ensure_same(a, b)
}
