//! Mollification by a compactly supported bump, commutators `(fg)^ε − f^ε g^ε`
//! and rate scans over ε ladders.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ensure_same_grid, TorusField};
use crate::fit::{loglog_fit, LinearFit};
use crate::grid::TorusGrid;
use crate::norms::{lebesgue_norm, BesovSpec};
use crate::ops::gradient;

/// Smallest admissible `ε` in grid spacings.
pub const MIN_SPACINGS: f64 = 4.0;

/// Relative tolerance of the built-in commutator decomposition check.
pub const CETI_TOL: f64 = 1e-9;

/// `η_ε` sampled at the nodes and normalized to unit discrete mass.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub eps: f64,
    grid: TorusGrid,
    /// `η_ε(x)` per node, with `Σ η_ε h^d = 1`.
    pub kernel: Vec<f64>,
    /// Real Fourier multiplier `Σ_x η_ε(x) e^{-ik·x} h^d`.
    pub kernel_hat: Vec<f64>,
    /// Node offsets inside the support with their quadrature weights.
    support: Vec<([i64; 3], f64)>,
}

impl Mollifier {
    pub fn new(grid: &TorusGrid, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < FRAC_PI_4) {
            return Err(Error::OutOfRange {
                what: "mollifier scale",
                detail: format!("eps = {eps} not in (0, pi/4)"),
            });
        }
        let h = grid.spacing();
        if eps < MIN_SPACINGS * h {
            return Err(Error::MollifierUnderResolved {
                eps,
                min_spacings: MIN_SPACINGS,
                min_eps: MIN_SPACINGS * h,
            });
        }
        let n = grid.n();
        let signed = |i: usize| if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
        let mut kernel = vec![0.0; grid.len()];
        let mut support = Vec::new();
        for (idx, k) in kernel.iter_mut().enumerate() {
            let ijk = grid.unflatten(idx);
            let mut m = [0i64; 3];
            for a in 0..grid.dim() {
                m[a] = signed(ijk[a]);
            }
            let r2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64 * h * h / (eps * eps);
            if r2 < 1.0 {
                *k = (-1.0 / (1.0 - r2)).exp();
                support.push((m, *k));
            }
        }
        let mass: f64 = kernel.iter().sum::<f64>() * grid.cell_volume();
        let cell = grid.cell_volume();
        for k in kernel.iter_mut() {
            *k /= mass;
        }
        for s in support.iter_mut() {
            s.1 *= cell / mass;
        }
        let spec = fft::forward_real(grid, &kernel);
        let vol = grid.volume();
        let mut kernel_hat: Vec<f64> = spec.iter().map(|z| z.re * vol).collect();
        // unit mass by construction; removes rounding in the mean
        kernel_hat[0] = 1.0;
        Ok(Self { eps, grid: *grid, kernel, kernel_hat, support })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Number of nodes in the kernel support.
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// `Σ_x η_ε(x) h^d`.
    pub fn mass(&self) -> f64 {
        self.kernel.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Geometric ladder `start, start/ratio, ...` down to `stop` (inclusive up
/// to rounding).
pub fn geometric_ladder(start: f64, stop: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > 0.0 && ratio > 1.0) {
        return Err(Error::Domain(format!(
            "ladder {start}:{stop}:{ratio} needs positive ends and ratio > 1"
        )));
    }
    let (hi, lo) = if start >= stop { (start, stop) } else { (stop, start) };
    let mut out = Vec::new();
    let mut e = hi;
    while e >= lo * (1.0 - 1e-12) {
        out.push(e);
        e /= ratio;
    }
    Ok(out)
}

/// From 16 grid spacings down to 4 with ratio `√2`.
pub fn default_ladder(grid: &TorusGrid) -> Vec<f64> {
    let h = grid.spacing();
    geometric_ladder(16.0 * h, MIN_SPACINGS * h, std::f64::consts::SQRT_2)
        .expect("valid constants")
        .into_iter()
        .filter(|&e| e < FRAC_PI_4)
        .collect()
}

fn check_grid(f: &TorusField, m: &Mollifier) -> Result<()> {
    ensure_same_grid(f.grid(), &m.grid)
}

/// `f^ε = f ∗ η_ε`, applied as the multiplier `kernel_hat`.
pub fn mollify(f: &TorusField, m: &Mollifier) -> Result<TorusField> {
    check_grid(f, m)?;
    Ok(f.apply_multiplier(&m.kernel_hat))
}

fn products(a: &TorusField, b: &TorusField, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|&(i, j)| a.component(i).iter().zip(b.component(j)).map(|(x, y)| x * y).collect())
        .collect()
}

/// Componentwise pairs `(f_c, g_c)`, or the single scalar pair.
fn diagonal_pairs(f: &TorusField, g: &TorusField) -> Result<Vec<(usize, usize)>> {
    if f.components() != g.components() {
        return Err(Error::Components { expected: f.components(), found: g.components() });
    }
    Ok((0..f.components()).map(|c| (c, c)).collect())
}

/// All pairs `(f_i, g_j)`, row-major in `i`.
fn tensor_pairs(f: &TorusField, g: &TorusField) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..f.components() {
        for j in 0..g.components() {
            out.push((i, j));
        }
    }
    out
}

/// `(f_i g_j)^ε − f_i^ε g_j^ε` for the given pairs, products taken
/// pointwise on the grid.
fn direct(f: &TorusField, g: &TorusField, pairs: &[(usize, usize)], m: &Mollifier) -> Result<TorusField> {
    check_grid(f, m)?;
    ensure_same_grid(f.grid(), g.grid())?;
    let grid = *f.grid();
    let fe = mollify(f, m)?;
    let ge = mollify(g, m)?;
    let prod = TorusField::from_physical(grid, products(f, g, pairs))?;
    let prod_e = mollify(&prod, m)?;
    let lower = products(&fe, &ge, pairs);
    let out = prod_e
        .physical()
        .iter()
        .zip(lower)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    TorusField::from_physical(grid, out)
}

/// Right side of the commutator identity:
/// `Σ_y η_ε(y) h^d [f(x−y) − f(x)][g(x−y) − g(x)] − (f − f^ε)(g − g^ε)`.
fn decomposed(f: &TorusField, g: &TorusField, pairs: &[(usize, usize)], m: &Mollifier) -> Result<Vec<Vec<f64>>> {
    let grid = *f.grid();
    let fe = mollify(f, m)?;
    let ge = mollify(g, m)?;
    let len = grid.len();
    // fixed chunks summed in order keep the result bit-reproducible
    let partial: Vec<Vec<Vec<f64>>> = m
        .support
        .par_chunks(32)
        .map(|chunk| {
            let mut acc = vec![vec![0.0; len]; pairs.len()];
            for &(off, w) in chunk {
                let src = grid.shift_table(off);
                for (out, &(i, j)) in acc.iter_mut().zip(pairs) {
                    let (a, b) = (f.component(i), g.component(j));
                    for (x, &s) in src.iter().enumerate() {
                        out[x] += w * (a[s] - a[x]) * (b[s] - b[x]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut ball = vec![vec![0.0; len]; pairs.len()];
    for part in partial {
        for (x, y) in ball.iter_mut().zip(part) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q;
            }
        }
    }
    Ok(ball
        .into_iter()
        .zip(pairs)
        .map(|(mut b, &(i, j))| {
            let (a, ae, c, ce) = (f.component(i), fe.component(i), g.component(j), ge.component(j));
            for x in 0..len {
                b[x] -= (a[x] - ae[x]) * (c[x] - ce[x]);
            }
            b
        })
        .collect())
}

/// Componentwise commutator `(f_c g_c)^ε − f_c^ε g_c^ε` without the
/// decomposition check.
pub fn commutator_direct(f: &TorusField, g: &TorusField, m: &Mollifier) -> Result<TorusField> {
    direct(f, g, &diagonal_pairs(f, g)?, m)
}

/// Tensor commutator `(v_i v_j)^ε − v_i^ε v_j^ε`, component `i·c + j`.
pub fn tensor_commutator(v: &TorusField, m: &Mollifier) -> Result<TorusField> {
    direct(v, v, &tensor_pairs(v, v), m)
}

/// Result of a checked commutator evaluation.
#[derive(Debug, Clone)]
pub struct CetiCommutator {
    pub commutator: TorusField,
    /// `max|direct − decomposed| / (max|f| max|g|)`.
    pub rel_mismatch: f64,
}

/// Componentwise commutator with the ball-integral decomposition evaluated
/// independently; fails with [`Error::CetiMismatch`] above [`CETI_TOL`].
pub fn ceti_commutator(f: &TorusField, g: &TorusField, m: &Mollifier) -> Result<CetiCommutator> {
    ensure_same_grid(f.grid(), g.grid())?;
    let pairs = diagonal_pairs(f, g)?;
    let commutator = direct(f, g, &pairs, m)?;
    let other = decomposed(f, g, &pairs, m)?;
    let diff = commutator
        .physical()
        .iter()
        .zip(&other)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let scale = f.max_abs() * g.max_abs();
    let rel_mismatch = if scale == 0.0 { 0.0 } else { diff / scale };
    if !(rel_mismatch <= CETI_TOL) {
        return Err(Error::CetiMismatch { rel: rel_mismatch });
    }
    Ok(CetiCommutator { commutator, rel_mismatch })
}

fn check_ladder(grid: &TorusGrid, ladder: &[f64], min_len: usize) -> Result<Vec<Mollifier>> {
    if ladder.len() < min_len {
        return Err(Error::OutOfRange {
            what: "eps ladder",
            detail: format!("{} values, at least {min_len} needed", ladder.len()),
        });
    }
    ladder.par_iter().map(|&e| Mollifier::new(grid, e)).collect()
}

/// Values of one quantity along an ε ladder with a log-log fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: Option<LinearFit>,
}

impl RateSeries {
    fn new(eps: Vec<f64>, values: Vec<f64>) -> Self {
        let fit = loglog_fit(&eps, &values);
        Self { eps, values, fit }
    }

    pub fn slope(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.slope)
    }

    /// Rows `eps,value` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,value\n");
        for (e, v) in self.eps.iter().zip(&self.values) {
            out.push_str(&format!("{e:e},{v:e}\n"));
        }
        out
    }
}

/// Mollification rate table for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollificationRates {
    pub spec: BesovSpec,
    pub derivative_order: u32,
    /// `‖f^ε − f‖_{L^p}`; expected slope at least `s`.
    pub difference: RateSeries,
    /// `‖∇^k f^ε‖_{L^p}`; expected slope at least `s − k` when negative.
    pub derivative: RateSeries,
    pub expected_difference_slope: f64,
    pub expected_derivative_slope: f64,
    /// Measured difference slope minus the planted exponent.
    pub planted_residual: Option<f64>,
}

/// `‖f^ε − f‖_{L^p}` and `‖∇^k f^ε‖_{L^p}` along the ladder, `p = spec.p`.
pub fn mollification_rates(
    f: &TorusField,
    spec: &BesovSpec,
    eps_ladder: &[f64],
    k: u32,
    planted_alpha: Option<f64>,
) -> Result<MollificationRates> {
    if !(spec.s > 0.0 && spec.s < 1.0) {
        return Err(Error::OutOfRange { what: "smoothness", detail: format!("s = {} not in (0, 1)", spec.s) });
    }
    if k > 2 {
        return Err(Error::OutOfRange { what: "derivative order", detail: format!("k = {k} not in 0..=2") });
    }
    let ms = check_ladder(f.grid(), eps_ladder, 5)?;
    let rows: Vec<(f64, f64)> = ms
        .par_iter()
        .map(|m| {
            let fe = mollify(f, m)?;
            let diff = lebesgue_norm(&fe.sub(f)?, spec.p)?;
            let mut d = fe;
            for _ in 0..k {
                d = gradient(&d);
            }
            Ok((diff, lebesgue_norm(&d, spec.p)?))
        })
        .collect::<Result<_>>()?;
    let (diff, der): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let difference = RateSeries::new(eps_ladder.to_vec(), diff);
    let planted_residual = planted_alpha.map(|a| difference.slope() - a);
    Ok(MollificationRates {
        spec: *spec,
        derivative_order: k,
        difference,
        derivative: RateSeries::new(eps_ladder.to_vec(), der),
        expected_difference_slope: spec.s,
        expected_derivative_slope: spec.s - k as f64,
        planted_residual,
    })
}

/// `‖(v⊗v)^ε − v^ε⊗v^ε‖_{L^s}` with `s = q/(q−1)`.
pub fn tensor_commutator_norm(v: &TorusField, m: &Mollifier, theta: f64, p: f64, q: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 2.0) {
        return Err(Error::OutOfRange { what: "theta", detail: format!("theta = {theta} not in (0, 2]") });
    }
    for (name, value) in [("p", p), ("q", q)] {
        if !(value > 1.0) {
            return Err(Error::Exponent { name, value });
        }
    }
    let s = if q.is_infinite() { 1.0 } else { q / (q - 1.0) };
    lebesgue_norm(&tensor_commutator(v, m)?, s)
}

/// [`tensor_commutator_norm`] along an ε ladder.
pub fn commutator_scan(v: &TorusField, eps_ladder: &[f64], theta: f64, p: f64, q: f64) -> Result<RateSeries> {
    let ms = check_ladder(v.grid(), eps_ladder, 2)?;
    let values = ms
        .par_iter()
        .map(|m| tensor_commutator_norm(v, m, theta, p, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateSeries::new(eps_ladder.to_vec(), values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductMode {
    /// `(f⊗g)^ε − f^ε⊗g^ε`.
    Product,
    /// `(f×g)^ε − f^ε×g^ε`, three components.
    Cross,
}

fn cross_samples(a: &TorusField, b: &TorusField) -> Vec<Vec<f64>> {
    let (x, y) = (a.physical(), b.physical());
    let len = a.grid().len();
    let mut out = vec![vec![0.0; len]; 3];
    for i in 0..len {
        out[0][i] = x[1][i] * y[2][i] - x[2][i] * y[1][i];
        out[1][i] = x[2][i] * y[0][i] - x[0][i] * y[2][i];
        out[2][i] = x[0][i] * y[1][i] - x[1][i] * y[0][i];
    }
    out
}

/// `ε ↦ ‖(f∘g)^ε − f^ε∘g^ε‖_{L^q}` over a ladder of mollifiers.
pub fn product_commutator_series(
    f: &TorusField,
    g: &TorusField,
    ladder: &[Mollifier],
    mode: ProductMode,
    q: f64,
) -> Result<RateSeries> {
    ensure_same_grid(f.grid(), g.grid())?;
    if mode == ProductMode::Cross && (f.components() != 3 || g.components() != 3) {
        return Err(Error::Components { expected: 3, found: f.components().min(g.components()) });
    }
    let grid = *f.grid();
    let values = ladder
        .par_iter()
        .map(|m| {
            let c = match mode {
                ProductMode::Product => direct(f, g, &tensor_pairs(f, g), m)?,
                ProductMode::Cross => {
                    let upper = mollify(&TorusField::from_physical(grid, cross_samples(f, g))?, m)?;
                    let lower = cross_samples(&mollify(f, m)?, &mollify(g, m)?);
                    let out = upper
                        .physical()
                        .iter()
                        .zip(lower)
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                        .collect();
                    TorusField::from_physical(grid, out)?
                }
            };
            lebesgue_norm(&c, q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateSeries::new(ladder.iter().map(|m| m.eps).collect(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_invariants() {
        let g = TorusGrid::new(2, 64).unwrap();
        let m = Mollifier::new(&g, 0.5).unwrap();
        assert!(m.kernel.iter().all(|&k| k >= 0.0));
        assert!((m.mass() - 1.0).abs() < 1e-12);
        for (idx, &k) in m.kernel.iter().enumerate() {
            if k > 0.0 {
                let x = g.node(idx);
                let d: f64 = (0..2).map(|a| (x[a] - if x[a] >= PI { 2.0 * PI } else { 0.0 }).powi(2)).sum();
                assert!(d.sqrt() < 0.5);
            }
        }
        assert!(m.kernel_hat.iter().all(|&h| h <= 1.0 + 1e-12));
        assert!(matches!(Mollifier::new(&g, 0.1), Err(Error::MollifierUnderResolved { .. })));
        assert!(Mollifier::new(&g, 0.8).is_err());
    }

    #[test]
    fn constant_and_single_mode() {
        let g = TorusGrid::new(2, 64).unwrap();
        let m = Mollifier::new(&g, 0.6).unwrap();
        let c = TorusField::from_fn(g, 1, |_| [2.0, 0.0, 0.0]);
        assert_eq!(mollify(&c, &m).unwrap().max_abs_diff(&c), 0.0);
        // direct convolution quadrature at one node and k = 3
        let f = TorusField::from_fn(g, 1, |x| [(3.0 * x[0]).cos(), 0.0, 0.0]);
        let fe = mollify(&f, &m).unwrap();
        let conv: f64 = (0..g.len())
            .map(|idx| {
                let y = g.node(idx);
                m.kernel[idx] * (3.0 * (0.0 - y[0])).cos() * g.cell_volume()
            })
            .sum();
        let mult = m.kernel_hat[g.mode_index([3, 0, 0])];
        assert!(mult > 0.0 && mult <= 1.0);
        assert!((conv - mult).abs() < 1e-13);
        assert!((fe.component(0)[0] - mult).abs() < 1e-13);
    }

    #[test]
    fn smooth_rate_is_quadratic() {
        let g = TorusGrid::new(2, 256).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [x[0].sin() * (2.0 * x[1]).cos(), 0.0, 0.0]);
        let ladder = geometric_ladder(0.6, 0.1, 2f64.sqrt()).unwrap();
        let ms = check_ladder(&g, &ladder, 5).unwrap();
        let vals: Vec<f64> = ms
            .iter()
            .map(|m| lebesgue_norm(&mollify(&f, m).unwrap().sub(&f).unwrap(), 2.0).unwrap())
            .collect();
        let slope = loglog_fit(&ladder, &vals).unwrap().slope;
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn ceti_closed_form() {
        let g = TorusGrid::new(2, 64).unwrap();
        let m = Mollifier::new(&g, 0.5).unwrap();
        let k = 3.0;
        let f = TorusField::from_fn(g, 1, |x| [(k * x[0]).cos(), 0.0, 0.0]);
        let c = ceti_commutator(&f, &f, &m).unwrap();
        let h1 = m.kernel_hat[g.mode_index([3, 0, 0])];
        let h2 = m.kernel_hat[g.mode_index([6, 0, 0])];
        let want = TorusField::from_fn(g, 1, |x| {
            [0.5 + 0.5 * h2 * (2.0 * k * x[0]).cos() - h1 * h1 * (k * x[0]).cos().powi(2), 0.0, 0.0]
        });
        assert!(c.commutator.max_abs_diff(&want) < 1e-13);
        assert!(c.rel_mismatch < 1e-12);
    }

    #[test]
    fn commutator_trivia() {
        // 4h = π/4 at n = 32, so 3D checks need n = 64
        let g = TorusGrid::new(3, 64).unwrap();
        let m = Mollifier::new(&g, 0.5).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [x[0].sin() + (2.0 * x[2]).cos(), 0.0, 0.0]);
        let c = TorusField::from_fn(g, 1, |_| [1.5, 0.0, 0.0]);
        let r = ceti_commutator(&f, &c, &m).unwrap();
        assert!(r.commutator.max_abs() < 1e-14);
        let v = TorusField::from_fn(g, 3, |x| [x[1].sin(), x[2].cos(), (x[0] + x[1]).sin()]);
        let zero = TorusField::zeros(g, 3);
        assert_eq!(tensor_commutator_norm(&zero, &m, 2.0, 3.0, 3.0).unwrap(), 0.0);
        let cross = product_commutator_series(&v, &v, std::slice::from_ref(&m), ProductMode::Cross, 2.0).unwrap();
        assert_eq!(cross.values[0], 0.0);
        let prod = product_commutator_series(&v, &v, std::slice::from_ref(&m), ProductMode::Product, 1.5).unwrap();
        let tcn = tensor_commutator_norm(&v, &m, 2.0, 3.0, 3.0).unwrap();
        assert!((prod.values[0] - tcn).abs() <= 1e-12 * tcn);
    }

    #[test]
    fn ladder_helpers() {
        let l = geometric_ladder(1.0, 0.25, 2.0).unwrap();
        assert_eq!(l, vec![1.0, 0.5, 0.25]);
        let g = TorusGrid::new(2, 256).unwrap();
        let d = default_ladder(&g);
        assert_eq!(d.len(), 5);
        assert!((d[4] - 4.0 * g.spacing()).abs() < 1e-12);
    }
}
