//! Space-time controls and box constraints.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{config_err, Error, Result};
use crate::spectral::{check_physical_grids, Grid, PhysicalField};

/// Pointwise, componentwise box `lower ≤ v ≤ upper`.
#[derive(Clone, Debug)]
pub enum Bounds {
    /// The same bounds at every point and time. Infinite entries are allowed.
    Constant { lower: [f64; 3], upper: [f64; 3] },
    /// Bound fields, either one per time slice or a single field broadcast
    /// over time.
    Fields {
        lower: Vec<PhysicalField>,
        upper: Vec<PhysicalField>,
    },
}

impl Bounds {
    pub fn constant(lower: [f64; 3], upper: [f64; 3]) -> Result<Self> {
        let b = Bounds::Constant { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(radius: f64) -> Result<Self> {
        Self::constant([-radius; 3], [radius; 3])
    }

    /// Rejects inverted or NaN bounds and inconsistent slice counts.
    pub fn validate(&self) -> Result<()> {
        match self {
            Bounds::Constant { lower, upper } => {
                for c in 0..3 {
                    if lower[c].is_nan() || upper[c].is_nan() || lower[c] > upper[c] {
                        return config_err(format!(
                            "inverted bounds in component {c}: [{}, {}]",
                            lower[c], upper[c]
                        ));
                    }
                }
            }
            Bounds::Fields { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return config_err("bound fields must be non-empty and of equal length");
                }
                for (lo, hi) in lower.iter().zip(upper) {
                    check_physical_grids(lo.grid(), hi.grid())?;
                    let bad = lo
                        .values()
                        .iter()
                        .zip(hi.values().iter())
                        .any(|(a, b)| a.is_nan() || b.is_nan() || a > b);
                    if bad {
                        return config_err("inverted bounds: lower exceeds upper somewhere");
                    }
                }
            }
        }
        Ok(())
    }

    fn slice_fields(&self, n: usize) -> Option<(&PhysicalField, &PhysicalField)> {
        match self {
            Bounds::Constant { .. } => None,
            Bounds::Fields { lower, upper } => {
                let i = if lower.len() == 1 { 0 } else { n };
                Some((&lower[i], &upper[i]))
            }
        }
    }

    /// Clamp one time slice componentwise into the box.
    pub fn clamp_slice(&self, n: usize, v: &PhysicalField) -> Result<PhysicalField> {
        let mut values = v.values().clone();
        match self {
            Bounds::Constant { lower, upper } => {
                for (c, mut comp) in values.outer_iter_mut().enumerate() {
                    comp.mapv_inplace(|x| x.max(lower[c]).min(upper[c]));
                }
            }
            Bounds::Fields { lower, .. } => {
                if lower.len() != 1 && n >= lower.len() {
                    return config_err(format!("no bound slice for time index {n}"));
                }
                let (lo, hi) = self.slice_fields(n).expect("field bounds");
                check_physical_grids(lo.grid(), v.grid())?;
                ndarray::Zip::from(&mut values)
                    .and(lo.values())
                    .and(hi.values())
                    .for_each(|x, &a, &b| *x = x.max(a).min(b));
            }
        }
        Ok(v.with_values(values))
    }

    /// Largest violation `max(lower - v, v - upper, 0)` on a slice.
    pub fn violation(&self, n: usize, v: &PhysicalField) -> f64 {
        match self.clamp_slice(n, v) {
            Ok(c) => c.axpy(-1.0, v).max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    /// True if `0` lies inside the box everywhere.
    pub fn contains_zero(&self) -> bool {
        match self {
            Bounds::Constant { lower, upper } => (0..3).all(|c| lower[c] <= 0.0 && upper[c] >= 0.0),
            Bounds::Fields { lower, upper } => lower
                .iter()
                .zip(upper)
                .all(|(lo, hi)| lo.values().iter().all(|&a| a <= 0.0) && hi.values().iter().all(|&b| b >= 0.0)),
        }
    }
}

/// A control `v(x, t)`, piecewise constant in time: slice `n` acts on
/// `[t_n, t_{n+1})`.
#[derive(Clone, Debug)]
pub struct ControlField {
    grid: Arc<Grid>,
    slices: Vec<PhysicalField>,
}

impl ControlField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n_steps = grid.spec().n_steps;
        Self {
            grid: grid.clone(),
            slices: vec![PhysicalField::zeros(grid); n_steps],
        }
    }

    pub fn from_slices(grid: &Arc<Grid>, slices: Vec<PhysicalField>) -> Result<Self> {
        let n_steps = grid.spec().n_steps;
        if slices.len() != n_steps {
            return config_err(format!(
                "control has {} slices, expected n_steps = {n_steps}",
                slices.len()
            ));
        }
        for s in &slices {
            check_physical_grids(grid, s.grid())?;
        }
        Ok(Self {
            grid: grid.clone(),
            slices,
        })
    }

    /// The same field on every slice.
    pub fn broadcast(grid: &Arc<Grid>, slice: PhysicalField) -> Result<Self> {
        check_physical_grids(grid, slice.grid())?;
        Ok(Self {
            grid: grid.clone(),
            slices: vec![slice; grid.spec().n_steps],
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn slices(&self) -> &[PhysicalField] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn map_slices(&self, mut f: impl FnMut(usize, &PhysicalField) -> Result<PhysicalField>) -> Result<Self> {
        let slices = self
            .slices
            .iter()
            .enumerate()
            .map(|(n, s)| f(n, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid.clone(),
            slices,
        })
    }

    fn check_shape(&self, other: &ControlField) -> Result<()> {
        if self.slices.len() != other.slices.len() {
            return Err(Error::Config(format!(
                "control length mismatch: {} vs {}",
                self.slices.len(),
                other.slices.len()
            )));
        }
        check_physical_grids(&self.grid, &other.grid)
    }

    /// Space-time inner product `dt Σ_n ∫ a_n·b_n dx`.
    pub fn inner(&self, other: &ControlField) -> Result<f64> {
        self.check_shape(other)?;
        let mut acc = 0.0;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            acc += a.inner(b)?;
        }
        Ok(acc * self.grid.spec().dt)
    }

    pub fn norm(&self) -> f64 {
        let dt = self.grid.spec().dt;
        (self.slices.iter().map(|s| s.norm().powi(2)).sum::<f64>() * dt).sqrt()
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &ControlField) -> Result<Self> {
        self.check_shape(other)?;
        self.map_slices(|n, a| Ok(a.axpy(s, &other.slices[n])))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            slices: self.slices.iter().map(|v| v.scaled(s)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().fold(0.0, |m, s| m.max(s.max_abs()))
    }

    pub fn is_feasible(&self, bounds: Option<&Bounds>) -> bool {
        match bounds {
            None => true,
            Some(b) => self.slices.iter().enumerate().all(|(n, s)| b.violation(n, s) == 0.0),
        }
    }

    /// SHA-256 over the little-endian slice values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.slices {
            for v in s.values().iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex_digest(h)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    #[test]
    fn constant_bounds_validation() {
        assert!(Bounds::constant([-1.0; 3], [1.0; 3]).is_ok());
        assert!(Bounds::constant([0.0, 2.0, 0.0], [1.0; 3]).is_err());
        assert!(Bounds::constant([f64::NEG_INFINITY; 3], [f64::INFINITY; 3]).is_ok());
    }

    #[test]
    fn slice_count_checked() {
        let g = Grid::new(GridSpec::new(4, 0.1, 3)).unwrap();
        let s = vec![PhysicalField::zeros(&g); 2];
        assert!(ControlField::from_slices(&g, s).is_err());
        assert_eq!(ControlField::zeros(&g).len(), 3);
    }

    #[test]
    fn inner_product_weights() {
        let g = Grid::new(GridSpec::new(4, 0.5, 2)).unwrap();
        let v = ControlField::broadcast(&g, PhysicalField::constant(&g, [1.0, 0.0, 0.0])).unwrap();
        // dt * n_steps * volume
        let expect = 0.5 * 2.0 * g.volume();
        assert!((v.inner(&v).unwrap() - expect).abs() < 1e-12 * expect);
        assert!((v.norm().powi(2) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn hash_changes_with_content() {
        let g = Grid::new(GridSpec::new(4, 0.5, 2)).unwrap();
        let a = ControlField::zeros(&g);
        let b = ControlField::broadcast(&g, PhysicalField::constant(&g, [1e-9, 0.0, 0.0])).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), ControlField::zeros(&g).content_hash());
    }
}
