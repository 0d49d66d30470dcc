//! Real scalar and vector fields on a torus grid.

use std::sync::OnceLock;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::TorusGrid;

/// Relative threshold below which spectral coefficients count as roundoff
/// when measuring a field's spectral extent.
const EXTENT_FLOOR: f64 = 1e-13;

/// A real field with one or more components sampled on a [`TorusGrid`].
///
/// Fields are immutable. The spectral representation is computed on first
/// use and cached; any "mutation" builds a new field, so the two
/// representations cannot drift apart.
#[derive(Debug, Clone)]
pub struct TorusField {
    grid: TorusGrid,
    physical: Vec<Vec<f64>>,
    spectral: OnceLock<Vec<Vec<Complex64>>>,
}

impl TorusField {
    pub fn from_physical(grid: TorusGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("field needs at least one component".into()));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "component has {} samples, grid has {}",
                    c.len(),
                    grid.len()
                )));
            }
        }
        Ok(Self { grid, physical: components, spectral: OnceLock::new() })
    }

    /// Samples `f` at every node; `f` returns up to three components.
    pub fn from_fn(grid: TorusGrid, components: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut physical = vec![vec![0.0; grid.len()]; components];
        for idx in 0..grid.len() {
            let v = f(grid.node(idx));
            for (c, comp) in physical.iter_mut().enumerate() {
                comp[idx] = v[c];
            }
        }
        Self { grid, physical, spectral: OnceLock::new() }
    }

    /// Builds a field from spectral coefficients. The coefficients are
    /// projected onto the conjugate-symmetric (real) subspace first.
    pub fn from_spectral(grid: TorusGrid, mut components: Vec<Vec<Complex64>>) -> Self {
        for comp in components.iter_mut() {
            assert_eq!(comp.len(), grid.len(), "spectrum does not match grid");
            let orig = comp.clone();
            for (idx, c) in comp.iter_mut().enumerate() {
                let partner = orig[grid.conjugate_index(idx)];
                *c = (orig[idx] + partner.conj()) * 0.5;
            }
        }
        let physical = components.iter().map(|s| fft::inverse_real(&grid, s)).collect();
        let spectral = OnceLock::new();
        let _ = spectral.set(components);
        Self { grid, physical, spectral }
    }

    pub fn zeros(grid: TorusGrid, components: usize) -> Self {
        Self::from_physical(grid, vec![vec![0.0; grid.len()]; components]).expect("valid shape")
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.physical.len()
    }

    #[inline]
    pub fn component(&self, c: usize) -> &[f64] {
        &self.physical[c]
    }

    pub fn physical(&self) -> &[Vec<f64>] {
        &self.physical
    }

    pub fn spectral(&self) -> &[Vec<Complex64>] {
        self.spectral
            .get_or_init(|| self.physical.iter().map(|c| fft::forward_real(&self.grid, c)).collect())
    }

    #[inline]
    pub fn spectral_component(&self, c: usize) -> &[Complex64] {
        &self.spectral()[c]
    }

    /// Single component as a scalar field.
    pub fn select(&self, c: usize) -> TorusField {
        let out = Self {
            grid: self.grid,
            physical: vec![self.physical[c].clone()],
            spectral: OnceLock::new(),
        };
        if let Some(s) = self.spectral.get() {
            let _ = out.spectral.set(vec![s[c].clone()]);
        }
        out
    }

    /// Stacks scalar fields into a vector field.
    pub fn stack(parts: &[TorusField]) -> Result<TorusField> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::Domain("cannot stack zero fields".into()))?
            .grid;
        let mut physical = Vec::new();
        for p in parts {
            ensure_same_grid(&grid, &p.grid)?;
            physical.extend(p.physical.iter().cloned());
        }
        Self::from_physical(grid, physical)
    }

    /// Applies a spectral map `(component, mode index, coefficient) -> coefficient`.
    pub fn map_spectral(&self, f: impl Fn(usize, usize, Complex64) -> Complex64) -> TorusField {
        let spec = self
            .spectral()
            .iter()
            .enumerate()
            .map(|(c, comp)| comp.iter().enumerate().map(|(idx, &z)| f(c, idx, z)).collect())
            .collect();
        Self::from_spectral(self.grid, spec)
    }

    /// Multiplies every component by a real Fourier multiplier `m(k)`.
    pub fn apply_multiplier(&self, m: &[f64]) -> TorusField {
        assert_eq!(m.len(), self.grid.len());
        self.map_spectral(|_, idx, z| z * m[idx])
    }

    pub fn scale(&self, a: f64) -> TorusField {
        let physical = self.physical.iter().map(|c| c.iter().map(|x| a * x).collect()).collect();
        let out = Self { grid: self.grid, physical, spectral: OnceLock::new() };
        if let Some(s) = self.spectral.get() {
            let _ = out
                .spectral
                .set(s.iter().map(|c| c.iter().map(|z| z * a).collect()).collect());
        }
        out
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &TorusField, b: f64) -> Result<TorusField> {
        ensure_same_grid(&self.grid, &other.grid)?;
        if self.components() != other.components() {
            return Err(Error::Components { expected: self.components(), found: other.components() });
        }
        let physical = self
            .physical
            .iter()
            .zip(&other.physical)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Self::from_physical(self.grid, physical)
    }

    pub fn add(&self, other: &TorusField) -> Result<TorusField> {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &TorusField) -> Result<TorusField> {
        self.axpby(1.0, other, -1.0)
    }

    /// `Σ_c ∫ f_c g_c dx` evaluated exactly in spectral space.
    pub fn inner(&self, other: &TorusField) -> Result<f64> {
        ensure_same_grid(&self.grid, &other.grid)?;
        if self.components() != other.components() {
            return Err(Error::Components { expected: self.components(), found: other.components() });
        }
        let mut acc = 0.0;
        for (a, b) in self.spectral().iter().zip(other.spectral()) {
            for (x, y) in a.iter().zip(b) {
                acc += x.re * y.re + x.im * y.im;
            }
        }
        Ok(acc * self.grid.volume())
    }

    /// `∫ |f|² dx` via Parseval.
    pub fn norm2_sq(&self) -> f64 {
        self.inner(self).expect("same field")
    }

    pub fn max_abs(&self) -> f64 {
        self.physical
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Maximum pointwise Euclidean magnitude on the native grid.
    pub fn max_magnitude(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.physical.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.physical.iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// `max_k |k·v̂(k)| / max_k |v̂(k)|`, zero for the zero field.
    pub fn divergence_defect(&self) -> f64 {
        let dim = self.grid.dim();
        if self.components() != dim {
            return f64::INFINITY;
        }
        let spec = self.spectral();
        let mut max_div = 0.0f64;
        let mut max_coef = 0.0f64;
        for idx in 0..self.grid.len() {
            let k = self.grid.mode(idx);
            let mut d = Complex64::default();
            for c in 0..dim {
                d += spec[c][idx] * k[c] as f64;
                max_coef = max_coef.max(spec[c][idx].norm());
            }
            max_div = max_div.max(d.norm());
        }
        if max_coef == 0.0 {
            0.0
        } else {
            max_div / max_coef
        }
    }

    pub fn is_divergence_free(&self, tol: f64) -> bool {
        self.divergence_defect() <= tol
    }

    /// Largest `|k_i|` carrying a coefficient above roundoff.
    pub fn spectral_extent(&self) -> i64 {
        let spec = self.spectral();
        let max = spec.iter().flat_map(|c| c.iter()).fold(0.0f64, |m, z| m.max(z.norm()));
        if max == 0.0 {
            return 0;
        }
        let floor = max * EXTENT_FLOOR;
        let mut extent = 0;
        for comp in spec {
            for (idx, z) in comp.iter().enumerate() {
                if z.norm() > floor {
                    let k = self.grid.mode(idx);
                    extent = extent.max(k[0].abs()).max(k[1].abs()).max(k[2].abs());
                }
            }
        }
        extent
    }

    /// Maximum absolute difference of physical samples.
    pub fn max_abs_diff(&self, other: &TorusField) -> f64 {
        self.physical
            .iter()
            .zip(&other.physical)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Relative L² distance `‖self − other‖ / max(‖other‖, tiny)`.
    pub fn rel_l2_diff(&self, other: &TorusField) -> f64 {
        let num: f64 = self
            .physical
            .iter()
            .zip(&other.physical)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum();
        let den: f64 = other.physical.iter().flat_map(|c| c.iter().map(|x| x * x)).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

pub(crate) fn ensure_same_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "dim {} n {} vs dim {} n {}",
            a.dim(),
            a.n(),
            b.dim(),
            b.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 16).unwrap()
    }

    #[test]
    fn parseval_for_cos() {
        let g = grid();
        let f = TorusField::from_fn(g, 1, |x| [x[0].cos(), 0.0, 0.0]);
        let expected = g.volume() / 2.0;
        assert!((f.norm2_sq() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn from_spectral_keeps_fields_real() {
        let g = grid();
        let mut spec = vec![Complex64::default(); g.len()];
        spec[g.mode_index([1, 2, 0])] = Complex64::new(1.0, 2.0);
        let f = TorusField::from_spectral(g, vec![spec]);
        let s = f.spectral_component(0);
        let a = s[g.mode_index([1, 2, 0])];
        let b = s[g.mode_index([-1, -2, 0])];
        assert!((a - b.conj()).norm() < 1e-15);
        assert!((a - Complex64::new(0.5, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn divergence_defect_detects_gradients() {
        let g = grid();
        let solenoidal = TorusField::from_fn(g, 2, |x| [x[1].sin(), 0.0, 0.0]);
        assert!(solenoidal.divergence_defect() < 1e-12);
        let gradient = TorusField::from_fn(g, 2, |x| [x[0].cos(), 0.0, 0.0]);
        assert!(gradient.divergence_defect() > 0.5);
    }

    proptest! {
        #[test]
        fn round_trip_within_ten_eps(seed in 0u64..1000) {
            let g = grid();
            let samples: Vec<f64> = (0..g.len())
                .map(|i| (((i as u64 + 1) * (seed + 7919)) % 1009) as f64 / 1009.0 - 0.5)
                .collect();
            let f = TorusField::from_physical(g, vec![samples.clone()]).unwrap();
            let back = TorusField::from_spectral(g, f.spectral().to_vec());
            let tol = 10.0 * f64::EPSILON * f.max_abs();
            prop_assert!(back.max_abs_diff(&f) <= tol);
        }
    }
}
