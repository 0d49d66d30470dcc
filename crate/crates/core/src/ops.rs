//! Spectral differential operators and alias-free products.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ensure_same_grid, TorusField};
use crate::grid::TorusGrid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Wavenumber along `axis` used for differentiation; the Nyquist plane is
/// differentiated to zero so derivatives of real fields stay real.
#[inline]
fn diff_wavenumber(grid: &TorusGrid, idx: usize, axis: usize) -> f64 {
    let k = grid.mode(idx)[axis];
    if k == -(grid.n() as i64) / 2 {
        0.0
    } else {
        k as f64
    }
}

pub(crate) fn derivative_spectrum(grid: &TorusGrid, spec: &[Complex64], axis: usize) -> Vec<Complex64> {
    spec.iter()
        .enumerate()
        .map(|(idx, &z)| I * diff_wavenumber(grid, idx, axis) * z)
        .collect()
}

/// `∂_axis f` for every component.
pub fn derivative(f: &TorusField, axis: usize) -> TorusField {
    let g = *f.grid();
    assert!(axis < g.dim());
    let spec = f.spectral().iter().map(|s| derivative_spectrum(&g, s, axis)).collect();
    TorusField::from_spectral(g, spec)
}

/// Gradient of every component; component `c * dim + a` holds `∂_a f_c`.
pub fn gradient(f: &TorusField) -> TorusField {
    let g = *f.grid();
    let mut spec = Vec::with_capacity(f.components() * g.dim());
    for s in f.spectral() {
        for a in 0..g.dim() {
            spec.push(derivative_spectrum(&g, s, a));
        }
    }
    TorusField::from_spectral(g, spec)
}

/// `div v`.
pub fn divergence(v: &TorusField) -> Result<TorusField> {
    let g = *v.grid();
    check_vector(v)?;
    let mut out = vec![Complex64::default(); g.len()];
    for a in 0..g.dim() {
        for (o, d) in out.iter_mut().zip(derivative_spectrum(&g, v.spectral_component(a), a)) {
            *o += d;
        }
    }
    Ok(TorusField::from_spectral(g, vec![out]))
}

/// Curl: a vector in 3D, the scalar `∂_x v_y − ∂_y v_x` in 2D.
pub fn curl(v: &TorusField) -> Result<TorusField> {
    let g = *v.grid();
    check_vector(v)?;
    let d = |c: usize, a: usize| derivative_spectrum(&g, v.spectral_component(c), a);
    let sub = |x: Vec<Complex64>, y: Vec<Complex64>| -> Vec<Complex64> {
        x.into_iter().zip(y).map(|(p, q)| p - q).collect()
    };
    let spec = if g.dim() == 2 {
        vec![sub(d(1, 0), d(0, 1))]
    } else {
        vec![sub(d(2, 1), d(1, 2)), sub(d(0, 2), d(2, 0)), sub(d(1, 0), d(0, 1))]
    };
    Ok(TorusField::from_spectral(g, spec))
}

/// Leray projection `v̂ − k (k·v̂)/|k|²`; the zero mode is left untouched.
pub fn leray_project(v: &TorusField) -> Result<TorusField> {
    let g = *v.grid();
    check_vector(v)?;
    let dim = g.dim();
    let src = v.spectral();
    let mut out: Vec<Vec<Complex64>> = src.to_vec();
    for idx in 0..g.len() {
        let k = g.mode(idx);
        let k2 = g.mode_norm2(idx);
        if k2 == 0 {
            continue;
        }
        let mut kv = Complex64::default();
        for a in 0..dim {
            kv += src[a][idx] * k[a] as f64;
        }
        let s = kv / k2 as f64;
        for a in 0..dim {
            out[a][idx] -= s * k[a] as f64;
        }
    }
    Ok(TorusField::from_spectral(g, out))
}

/// Zeroes every coefficient outside the 2/3 dealiasing ball.
pub fn dealias(f: &TorusField) -> TorusField {
    let g = *f.grid();
    f.map_spectral(|_, idx, z| if g.in_band(idx) { z } else { Complex64::default() })
}

fn check_vector(v: &TorusField) -> Result<()> {
    let dim = v.grid().dim();
    if v.components() != dim {
        return Err(Error::Components { expected: dim, found: v.components() });
    }
    Ok(())
}

/// Smallest power-of-two grid with at least `n` points per axis on which
/// trigonometric polynomials of total per-axis degree `extent` are
/// integrated exactly by the rectangle rule (`m > extent`).
pub fn quadrature_grid(grid: &TorusGrid, extent: i64) -> TorusGrid {
    let mut m = grid.n();
    while (m as i64) <= extent {
        m *= 2;
    }
    grid.resized(m)
}

/// Physical samples of every component of `f` on the finer grid `fine`.
pub fn pad(f: &TorusField, fine: &TorusGrid) -> Vec<Vec<f64>> {
    f.spectral()
        .iter()
        .map(|s| fft::inverse_real(fine, &fft::resample(f.grid(), s, fine)))
        .collect()
}

/// Exact products `a_c · b_c'` for the requested component pairs, truncated
/// back to the native lattice `|k_i| < n/2`.
///
/// The product is formed on a grid with `m ≥ K_a + K_b + n/2` so that no
/// alias lands on a retained mode.
pub fn dealiased_products(
    a: &TorusField,
    b: &TorusField,
    pairs: &[(usize, usize)],
) -> Result<TorusField> {
    ensure_same_grid(a.grid(), b.grid())?;
    let g = *a.grid();
    let extent = a.spectral_extent() + b.spectral_extent() + g.n() as i64 / 2;
    let fine = quadrature_grid(&g, extent);
    let pa = pad(a, &fine);
    let pb = if std::ptr::eq(a, b) { pa.clone() } else { pad(b, &fine) };
    let spec = pairs
        .iter()
        .map(|&(ca, cb)| {
            let prod: Vec<f64> = pa[ca].iter().zip(&pb[cb]).map(|(x, y)| x * y).collect();
            fft::resample(&fine, &fft::forward_real(&fine, &prod), &g)
        })
        .collect();
    Ok(TorusField::from_spectral(g, spec))
}

/// Alias-free scalar product `a · b` (single components).
pub fn dealiased_product(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    dealiased_products(a, b, &[(0, 0)])
}

/// Samples of several fields on one common grid on which the rectangle rule
/// integrates any triple product of them exactly.
pub struct ExactQuadrature {
    pub fine: TorusGrid,
    weight: f64,
}

impl ExactQuadrature {
    /// `max_extent` bounds the spectral extent of any single factor.
    pub fn for_triples(grid: &TorusGrid, max_extent: i64) -> Self {
        let fine = quadrature_grid(grid, 3 * max_extent);
        Self { fine, weight: fine.cell_volume() }
    }

    pub fn samples(&self, f: &TorusField) -> Vec<Vec<f64>> {
        pad(f, &self.fine)
    }

    /// `∫ a b c dx` from samples on the fine grid.
    pub fn triple(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum();
        s * self.weight
    }
}

/// Pointwise cross product of two 3-component fields on the native grid.
pub fn cross(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    ensure_same_grid(a.grid(), b.grid())?;
    if a.components() != 3 || b.components() != 3 {
        return Err(Error::Components { expected: 3, found: a.components().min(b.components()) });
    }
    let len = a.grid().len();
    let (x, y) = (a.physical(), b.physical());
    let mut out = vec![vec![0.0; len]; 3];
    for i in 0..len {
        out[0][i] = x[1][i] * y[2][i] - x[2][i] * y[1][i];
        out[1][i] = x[2][i] * y[0][i] - x[0][i] * y[2][i];
        out[2][i] = x[0][i] * y[1][i] - x[1][i] * y[0][i];
    }
    TorusField::from_physical(*a.grid(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curl_2d_of_shear() {
        let g = TorusGrid::new(2, 32).unwrap();
        let v = TorusField::from_fn(g, 2, |x| [x[1].sin(), 0.0, 0.0]);
        let w = curl(&v).unwrap();
        let want = TorusField::from_fn(g, 1, |x| [-x[1].cos(), 0.0, 0.0]);
        assert!(w.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn abc_is_beltrami() {
        let g = TorusGrid::new(3, 16).unwrap();
        let v = TorusField::from_fn(g, 3, |x| {
            [x[2].sin() + x[1].cos(), x[0].sin() + x[2].cos(), x[1].sin() + x[0].cos()]
        });
        let w = curl(&v).unwrap();
        assert!(w.max_abs_diff(&v) < 1e-12);
    }

    #[test]
    fn leray_kills_gradients() {
        let g = TorusGrid::new(2, 32).unwrap();
        let psi = TorusField::from_fn(g, 1, |x| {
            [(2.0 * x[0]).sin() * x[1].cos() + (3.0 * x[1]).cos(), 0.0, 0.0]
        });
        let grad = gradient(&psi);
        assert_eq!(grad.components(), 2);
        let p = leray_project(&grad).unwrap();
        assert!(p.max_abs() < 1e-13);
    }

    #[test]
    fn dealiased_product_is_exact() {
        let g = TorusGrid::new(2, 16).unwrap();
        // cos(7x)^2 = 1/2 + cos(14x)/2; 14 aliases on the native grid.
        let f = TorusField::from_fn(g, 1, |x| [(7.0 * x[0]).cos(), 0.0, 0.0]);
        let p = dealiased_product(&f, &f).unwrap();
        for idx in 0..g.len() {
            assert!((p.component(0)[idx] - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn triple_quadrature_is_exact() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [(5.0 * x[0]).cos(), 0.0, 0.0]);
        let h = TorusField::from_fn(g, 1, |x| [(5.0 * x[0]).cos() * (2.0 * x[1]).sin(), 0.0, 0.0]);
        let q = ExactQuadrature::for_triples(&g, 5);
        let (sf, sh) = (q.samples(&f), q.samples(&h));
        let one = vec![1.0; q.fine.len()];
        assert!((q.triple(&sf[0], &sf[0], &one) - 0.5 * g.volume()).abs() < 1e-11);
        assert!(q.triple(&sf[0], &sf[0], &sf[0]).abs() < 1e-11);
        assert!(q.triple(&sf[0], &sh[0], &sh[0]).abs() < 1e-11);
    }
}
