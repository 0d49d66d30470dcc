//! Energy and helicity transfer functionals, the Γ-kernel bound and the
//! weak-formulation residual.
//!
//! Every integral here is a sum of triple products of trigonometric
//! polynomials and is evaluated on a grid fine enough for the rectangle rule
//! to be exact, so budget identities close to roundoff.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ensure_same_grid, TorusField};
use crate::fit::{linear_fit, loglog_fit, LinearFit};
use crate::grid::TorusGrid;
use crate::mollify::{mollify, Mollifier};
use crate::norms::require_divergence_free;
use crate::fft;
use crate::ops::{curl, dealiased_products, derivative_spectrum, gradient, quadrature_grid, ExactQuadrature};
use crate::partition::{low_pass, low_pass_multiplier, low_pass_squared};
use crate::solver::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FluxKind {
    #[serde(rename = "energy_LP")]
    EnergyLp,
    #[serde(rename = "energy_moll")]
    EnergyMoll,
    #[serde(rename = "helicity_LP")]
    HelicityLp,
    #[serde(rename = "helicity_moll")]
    HelicityMoll,
}

impl FluxKind {
    pub const ALL: [FluxKind; 4] =
        [FluxKind::EnergyLp, FluxKind::EnergyMoll, FluxKind::HelicityLp, FluxKind::HelicityMoll];

    /// Indexed by an integer level `N` rather than a scale `ε`.
    pub fn is_lp(self) -> bool {
        matches!(self, FluxKind::EnergyLp | FluxKind::HelicityLp)
    }

    /// Relation between the functional and the quadratic quantity it drives.
    pub fn sign_convention(self) -> &'static str {
        match self {
            FluxKind::EnergyLp => "Pi_N = -d/dt (1/2)|S_N v|^2; positive means energy leaves scales <= N",
            FluxKind::EnergyMoll => "value = +d/dt (1/2)|v^eps|^2",
            FluxKind::HelicityLp => "value = +d/dt int S_N v . S_N omega",
            FluxKind::HelicityMoll => "value = -d/dt int v^eps . omega^eps",
        }
    }
}

impl fmt::Display for FluxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FluxKind::EnergyLp => "energy_LP",
            FluxKind::EnergyMoll => "energy_moll",
            FluxKind::HelicityLp => "helicity_LP",
            FluxKind::HelicityMoll => "helicity_moll",
        })
    }
}

impl FromStr for FluxKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "energy_lp" => Ok(FluxKind::EnergyLp),
            "energy_moll" => Ok(FluxKind::EnergyMoll),
            "helicity_lp" => Ok(FluxKind::HelicityLp),
            "helicity_moll" => Ok(FluxKind::HelicityMoll),
            _ => Err(Error::Domain(format!("unknown flux kind '{s}'"))),
        }
    }
}

fn check_level(grid: &TorusGrid, n_level: i32) -> Result<()> {
    if n_level < 0 || n_level > grid.j_max() {
        return Err(Error::OutOfRange {
            what: "flux level",
            detail: format!("N = {n_level} not in [0, {}]", grid.j_max()),
        });
    }
    Ok(())
}

fn require_3d(v: &TorusField) -> Result<()> {
    if v.grid().dim() != 3 {
        return Err(Error::Domain(format!("helicity needs dim = 3, got {}", v.grid().dim())));
    }
    Ok(())
}

fn require_velocity(v: &TorusField) -> Result<()> {
    if v.components() != v.grid().dim() {
        return Err(Error::Components { expected: v.grid().dim(), found: v.components() });
    }
    require_divergence_free(v)
}

/// Quadrature exact for triples of the given fields.
fn quadrature_for(fields: &[&TorusField]) -> ExactQuadrature {
    let extent = fields.iter().map(|f| f.spectral_extent()).max().unwrap_or(0);
    ExactQuadrature::for_triples(fields[0].grid(), extent.max(1))
}

/// `Σ_{i,j} ∫ a_i b_j ∂_j c_i` from fine samples, with `gc` holding `∂_j c_i`
/// at component `i·dim + j`.
fn tensor_triple(q: &ExactQuadrature, dim: usize, a: &[Vec<f64>], b: &[Vec<f64>], gc: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += q.triple(&a[i], &b[j], &gc[i * dim + j]);
        }
    }
    s
}

/// Native-lattice spectrum of `v·∇v`, exact on every mode `|k_i| ≤ K` where
/// `K` is the spectral extent of `v`.
///
/// For divergence-free `v` each transfer functional is a weighted pairing of
/// this term with `v` or `ω`, so one product serves every level and scale.
pub struct Advection {
    grid: TorusGrid,
    velocity: Vec<Vec<Complex64>>,
    vorticity: Option<Vec<Vec<Complex64>>>,
    term: Vec<Vec<Complex64>>,
}

impl Advection {
    pub fn new(v: &TorusField) -> Result<Self> {
        require_velocity(v)?;
        let g = *v.grid();
        let dim = g.dim();
        // products have extent 2K; aliases land beyond K when m > 3K
        let fine = quadrature_grid(&g, 3 * v.spectral_extent().max(1));
        let up = |s: &[Complex64]| fft::inverse_real(&fine, &fft::resample(&g, s, &fine));
        let pv: Vec<Vec<f64>> = v.spectral().par_iter().map(|s| up(s)).collect();
        let term: Vec<Vec<Complex64>> = (0..dim)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; fine.len()];
                for (j, vj) in pv.iter().enumerate() {
                    let d = up(&derivative_spectrum(&g, v.spectral_component(i), j));
                    for ((a, x), y) in acc.iter_mut().zip(vj).zip(&d) {
                        *a += x * y;
                    }
                }
                fft::resample(&fine, &fft::forward_real(&fine, &acc), &g)
            })
            .collect();
        let vorticity = if dim == 3 { Some(curl(v)?.spectral().to_vec()) } else { None };
        Ok(Self { grid: g, velocity: v.spectral().to_vec(), vorticity, term })
    }

    /// `vol · Σ_k m(k) Re(a(k) conj(v·∇v)(k))`.
    fn pair(&self, mult: &[f64], a: &[Vec<Complex64>]) -> f64 {
        let mut s = 0.0;
        for (ac, tc) in a.iter().zip(&self.term) {
            s += ac.iter().zip(tc).zip(mult).map(|((x, y), m)| m * (x * y.conj()).re).sum::<f64>();
        }
        s * self.grid.volume()
    }

    fn vorticity(&self) -> Result<&[Vec<Complex64>]> {
        self.vorticity
            .as_deref()
            .ok_or_else(|| Error::Domain(format!("helicity needs dim = 3, got {}", self.grid.dim())))
    }

    /// `Π_N = ∫ S_N²v · (v·∇v)`.
    pub fn energy_lp(&self, n_level: i32) -> Result<f64> {
        check_level(&self.grid, n_level)?;
        Ok(self.pair(&squared(low_pass_multiplier(&self.grid, n_level)?), &self.velocity))
    }

    /// `−2∫ S_N²ω · (v·∇v)`.
    pub fn helicity_lp(&self, n_level: i32) -> Result<f64> {
        check_level(&self.grid, n_level)?;
        let w = self.vorticity()?;
        Ok(-2.0 * self.pair(&squared(low_pass_multiplier(&self.grid, n_level)?), w))
    }

    /// `−∫ (v^ε)^ε · (v·∇v)`.
    pub fn energy_moll(&self, m: &Mollifier) -> Result<f64> {
        ensure_same_grid(&self.grid, m.grid())?;
        Ok(-self.pair(&squared(m.kernel_hat.clone()), &self.velocity))
    }

    /// `2∫ (ω^ε)^ε · (v·∇v)`.
    pub fn helicity_moll(&self, m: &Mollifier) -> Result<f64> {
        ensure_same_grid(&self.grid, m.grid())?;
        let w = self.vorticity()?;
        Ok(2.0 * self.pair(&squared(m.kernel_hat.clone()), w))
    }
}

fn squared(mut m: Vec<f64>) -> Vec<f64> {
    for x in m.iter_mut() {
        *x *= *x;
    }
    m
}

/// `Π_N = −∫ v_j ((I − S_N²)v)_i ∂_j (S_N² v)_i`, evaluated as
/// `∫ S_N²v · (v·∇v)`; the two agree for divergence-free `v` because
/// `∫ v_j u_i ∂_j u_i = 0`.
pub fn energy_flux_lp(v: &TorusField, n_level: i32) -> Result<f64> {
    Ok(energy_flux_lp_levels(v, &[n_level])?[0])
}

/// [`energy_flux_lp`] at several levels from one advective product.
pub fn energy_flux_lp_levels(v: &TorusField, levels: &[i32]) -> Result<Vec<f64>> {
    for &n in levels {
        check_level(v.grid(), n)?;
    }
    let a = Advection::new(v)?;
    levels.iter().map(|&n| a.energy_lp(n)).collect()
}

/// The commutator form of `Π_N` integrated term by term.
pub fn energy_flux_lp_direct(v: &TorusField, n_level: i32) -> Result<f64> {
    require_velocity(v)?;
    let g = *v.grid();
    check_level(&g, n_level)?;
    let q = quadrature_for(&[v]);
    let u = low_pass_squared(v, n_level)?;
    let w = v.sub(&u)?;
    let (sv, sw, sg) = (q.samples(v), q.samples(&w), q.samples(&gradient(&u)));
    Ok(-tensor_triple(&q, g.dim(), &sw, &sv, &sg))
}

/// `½‖S_N v‖²`.
pub fn filtered_energy(v: &TorusField, n_level: i32) -> Result<f64> {
    Ok(0.5 * low_pass(v, n_level)?.norm2_sq())
}

/// `∫ [(v⊗v)^ε − v^ε⊗v^ε] : ∇v^ε`, the rate of change of `½‖v^ε‖²`.
pub fn energy_flux_moll(v: &TorusField, m: &Mollifier) -> Result<f64> {
    require_velocity(v)?;
    ensure_same_grid(v.grid(), m.grid())?;
    let dim = v.grid().dim();
    let ve = mollify(v, m)?;
    let vee = mollify(&ve, m)?;
    let q = quadrature_for(&[v]);
    let sv = q.samples(v);
    let sve = q.samples(&ve);
    // (v_i v_j)^ε paired with ∂_j v^ε_i equals v_i v_j paired with ∂_j (v^ε)^ε_i
    let outer = tensor_triple(&q, dim, &sv, &sv, &q.samples(&gradient(&vee)));
    let inner = tensor_triple(&q, dim, &sve, &sve, &q.samples(&gradient(&ve)));
    Ok(outer - inner)
}

/// `½‖v^ε‖²`.
pub fn mollified_energy(v: &TorusField, m: &Mollifier) -> Result<f64> {
    Ok(0.5 * mollify(v, m)?.norm2_sq())
}

/// `2∫ (S_N(v⊗v) − S_N v⊗S_N v) : ∇S_N ω`.
///
/// Evaluated as `−2∫ S_N²ω · (v·∇v)`; [`helicity_flux_forms`] integrates the
/// displayed forms term by term.
pub fn helicity_flux_lp(v: &TorusField, n_level: i32) -> Result<f64> {
    require_3d(v)?;
    check_level(v.grid(), n_level)?;
    Advection::new(v)?.helicity_lp(n_level)
}

/// Both helicity flux formulations at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelicityForms {
    pub n_level: i32,
    /// `2∫ (S_N(v⊗v) − S_N v⊗S_N v) : ∇S_N ω`.
    pub divergence_form: f64,
    /// `−2∫ [S_N(ω×v) − S_N ω×S_N v] · S_N ω`.
    pub lamb_form: f64,
    /// `|a − b| / max(|a|, |b|)`, zero when both vanish.
    pub rel_diff: f64,
    /// `max |(S_N ω × S_N v)·S_N ω|` over nodes, relative to `max|S_N ω|² max|S_N v|`.
    pub triple_identity_defect: f64,
}

/// Relative agreement demanded between the two helicity formulations.
pub const HELICITY_FORM_TOL: f64 = 1e-8;

pub fn helicity_flux_forms(v: &TorusField, n_level: i32) -> Result<HelicityForms> {
    require_3d(v)?;
    require_velocity(v)?;
    check_level(v.grid(), n_level)?;
    let w = curl(v)?;
    let sv = low_pass(v, n_level)?;
    let sw = low_pass(&w, n_level)?;
    let ssw = low_pass_squared(&w, n_level)?;
    let q = quadrature_for(&[v, &w]);
    let pv = q.samples(v);
    let pw = q.samples(&w);
    let psv = q.samples(&sv);
    let psw = q.samples(&sw);
    let pssw = q.samples(&ssw);

    let first = tensor_triple(&q, 3, &pv, &pv, &q.samples(&gradient(&ssw)));
    let second = tensor_triple(&q, 3, &psv, &psv, &q.samples(&gradient(&sw)));
    let divergence_form = 2.0 * first - 2.0 * second;

    let len = q.fine.len();
    let mut lamb = 0.0;
    let mut cancel = 0.0;
    let mut defect = 0.0f64;
    for x in 0..len {
        let c = cross3([pw[0][x], pw[1][x], pw[2][x]], [pv[0][x], pv[1][x], pv[2][x]]);
        lamb += c[0] * pssw[0][x] + c[1] * pssw[1][x] + c[2] * pssw[2][x];
        let b = [psw[0][x], psw[1][x], psw[2][x]];
        let cs = cross3(b, [psv[0][x], psv[1][x], psv[2][x]]);
        let t = cs[0] * b[0] + cs[1] * b[1] + cs[2] * b[2];
        cancel += t;
        defect = defect.max(t.abs());
    }
    let weight = q.fine.cell_volume();
    let lamb_form = -2.0 * lamb * weight + 2.0 * cancel * weight;
    let scale = max_norm(&psw).powi(2) * max_norm(&psv);
    let triple_identity_defect = if scale == 0.0 { 0.0 } else { defect / scale };
    let big = divergence_form.abs().max(lamb_form.abs());
    let rel_diff = if big == 0.0 { 0.0 } else { (divergence_form - lamb_form).abs() / big };
    Ok(HelicityForms { n_level, divergence_form, lamb_form, rel_diff, triple_identity_defect })
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn max_norm(s: &[Vec<f64>]) -> f64 {
    (0..s[0].len())
        .map(|x| s.iter().map(|c| c[x] * c[x]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `∫ S_N v · S_N ω`.
pub fn filtered_helicity(v: &TorusField, n_level: i32) -> Result<f64> {
    require_3d(v)?;
    let sv = low_pass(v, n_level)?;
    sv.inner(&curl(&sv)?)
}

/// `2∫ (v^ε⊗v^ε − (v⊗v)^ε) : ∇ω^ε`.
pub fn helicity_flux_moll(v: &TorusField, m: &Mollifier) -> Result<f64> {
    require_3d(v)?;
    require_velocity(v)?;
    ensure_same_grid(v.grid(), m.grid())?;
    let w = curl(v)?;
    let ve = mollify(v, m)?;
    let we = mollify(&w, m)?;
    let wee = mollify(&we, m)?;
    let q = quadrature_for(&[v, &w]);
    let sv = q.samples(v);
    let sve = q.samples(&ve);
    let local = tensor_triple(&q, 3, &sve, &sve, &q.samples(&gradient(&we)));
    let global = tensor_triple(&q, 3, &sv, &sv, &q.samples(&gradient(&wee)));
    Ok(2.0 * local - 2.0 * global)
}

/// `∫ v^ε · ω^ε`.
pub fn mollified_helicity(v: &TorusField, m: &Mollifier) -> Result<f64> {
    require_3d(v)?;
    let ve = mollify(v, m)?;
    ve.inner(&curl(&ve)?)
}

/// One flux functional along an `N` or `ε` ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSeries {
    pub kind: FluxKind,
    /// `N` for the Littlewood-Paley kinds, `ε` otherwise.
    pub index: Vec<f64>,
    pub values: Vec<f64>,
    /// Fit of `log2|value|` against `N` or against `log2 ε`.
    pub fit: Option<LinearFit>,
    pub sign_convention: String,
}

impl FluxSeries {
    pub fn new(kind: FluxKind, index: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if index.len() != values.len() {
            return Err(Error::Domain("index and values differ in length".into()));
        }
        let up = index.windows(2).all(|w| w[1] > w[0]);
        let down = index.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Domain("flux index must be strictly monotone".into()));
        }
        if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite flux value at index {}", index[bad])));
        }
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let fit = if kind.is_lp() {
            let (x, y): (Vec<f64>, Vec<f64>) =
                index.iter().zip(&abs).filter(|(_, a)| **a > 0.0).map(|(n, a)| (*n, a.log2())).unzip();
            linear_fit(&x, &y)
        } else {
            loglog_fit(&index, &abs)
        };
        Ok(Self { kind, index, values, fit, sign_convention: kind.sign_convention().to_string() })
    }

    pub fn slope(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.slope)
    }

    /// Header `N,value` or `eps,value`.
    pub fn to_csv(&self) -> String {
        let head = if self.kind.is_lp() { "N" } else { "eps" };
        let mut out = format!("{head},value\n");
        for (i, v) in self.index.iter().zip(&self.values) {
            if self.kind.is_lp() {
                out.push_str(&format!("{},{v:e}\n", *i as i64));
            } else {
                out.push_str(&format!("{i:e},{v:e}\n"));
            }
        }
        out
    }
}

/// Evaluates one Littlewood-Paley kind at level `n`.
pub fn flux_at_level(v: &TorusField, kind: FluxKind, n_level: i32) -> Result<f64> {
    match kind {
        FluxKind::EnergyLp => energy_flux_lp(v, n_level),
        FluxKind::HelicityLp => helicity_flux_lp(v, n_level),
        _ => Err(Error::Domain(format!("{kind} is indexed by eps, not N"))),
    }
}

/// Evaluates one mollified kind.
pub fn flux_at_scale(v: &TorusField, kind: FluxKind, m: &Mollifier) -> Result<f64> {
    match kind {
        FluxKind::EnergyMoll => energy_flux_moll(v, m),
        FluxKind::HelicityMoll => helicity_flux_moll(v, m),
        _ => Err(Error::Domain(format!("{kind} is indexed by N, not eps"))),
    }
}

/// Snapshot scan over levels `N`.
pub fn level_scan(v: &TorusField, kind: FluxKind, levels: &[i32]) -> Result<FluxSeries> {
    if !kind.is_lp() {
        return Err(Error::Domain(format!("{kind} is indexed by eps, not N")));
    }
    if kind == FluxKind::HelicityLp {
        require_3d(v)?;
    }
    let a = Advection::new(v)?;
    let values = levels
        .iter()
        .map(|&n| if kind == FluxKind::EnergyLp { a.energy_lp(n) } else { a.helicity_lp(n) })
        .collect::<Result<Vec<_>>>()?;
    FluxSeries::new(kind, levels.iter().map(|&n| n as f64).collect(), values)
}

/// Snapshot scan over mollifier scales.
pub fn eps_scan(v: &TorusField, kind: FluxKind, ladder: &[f64]) -> Result<FluxSeries> {
    let values = ladder
        .par_iter()
        .map(|&e| flux_at_scale(v, kind, &Mollifier::new(v.grid(), e)?))
        .collect::<Result<Vec<_>>>()?;
    FluxSeries::new(kind, ladder.to_vec(), values)
}

/// Time integral by the trapezoid rule over `(t, value)` samples.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Time-integrated scan over stored snapshots (trapezoid rule); `index` holds
/// levels for LP kinds and scales otherwise.
pub fn time_integrated_scan(snapshots: &[SimState], kind: FluxKind, index: &[f64]) -> Result<FluxSeries> {
    if snapshots.len() < 2 {
        return Err(Error::Domain("time integration needs at least two snapshots".into()));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let fields: Vec<TorusField> = snapshots.iter().map(|s| s.velocity()).collect();
    let mut values = Vec::with_capacity(index.len());
    for &ix in index {
        let series = fields
            .par_iter()
            .map(|v| {
                if kind.is_lp() {
                    flux_at_level(v, kind, ix as i32)
                } else {
                    flux_at_scale(v, kind, &Mollifier::new(v.grid(), ix)?)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(trapezoid(&times, &series));
    }
    FluxSeries::new(kind, index.to_vec(), values)
}

/// Two-sided kernel `Γ(j) = 2^{ja}` for `j ≤ 0` and `2^{−(1−a)j}` for `j > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaKernel {
    pub exponent: f64,
}

impl GammaKernel {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::OutOfRange { what: "kernel exponent", detail: format!("{exponent} not in (0, 1)") });
        }
        Ok(Self { exponent })
    }

    pub fn value(&self, j: i64) -> f64 {
        if j <= 0 {
            2f64.powf(j as f64 * self.exponent)
        } else {
            2f64.powf(-(1.0 - self.exponent) * j as f64)
        }
    }

    /// `Σ_j Γ(j)` over all of ℤ, summed in closed form.
    pub fn l1_norm(&self) -> f64 {
        let a = self.exponent;
        let r = 2f64.powf(-(1.0 - a));
        1.0 / (1.0 - 2f64.powf(-a)) + r / (1.0 - r)
    }

    /// `(Γ ∗ d)(N) = Σ_j Γ(N − j) d_j` with `d[0]` at `j = −1`.
    pub fn convolve(&self, d: &[f64], n_level: i64) -> f64 {
        d.iter().enumerate().map(|(i, dj)| self.value(n_level - (i as i64 - 1)) * dj).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBound {
    pub n_level: i64,
    pub value: f64,
    /// `2 − α − θα`, or `1 − β − θα` when `β` is given.
    pub exponent: f64,
    pub conv_d: f64,
    pub conv_dtilde: f64,
    pub warning: Option<String>,
}

/// `2^{eN} (Γ∗d)^θ(N) (Γ₂∗d̃)(N)`; `Γ₂` uses `β` when given and `α` otherwise.
///
/// Sequences start at `j = −1`. A non-zero exponent is reported as a warning.
pub fn gamma_bound(
    d: &[f64],
    dtilde: &[f64],
    alpha: f64,
    beta: Option<f64>,
    theta: f64,
    n_level: i64,
) -> Result<GammaBound> {
    if d.is_empty() || d.len() != dtilde.len() {
        return Err(Error::Domain("d and dtilde must be non-empty and of equal length".into()));
    }
    if d.iter().chain(dtilde).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Domain("sequences must be finite and non-negative".into()));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::OutOfRange { what: "theta", detail: format!("{theta} must be positive") });
    }
    let j_top = d.len() as i64 - 2;
    if n_level < -1 || n_level > j_top {
        return Err(Error::OutOfRange { what: "level", detail: format!("N = {n_level} not in [-1, {j_top}]") });
    }
    let gamma = GammaKernel::new(alpha)?;
    let gamma2 = GammaKernel::new(beta.unwrap_or(alpha))?;
    let exponent = match beta {
        Some(b) => 1.0 - b - theta * alpha,
        None => 2.0 - alpha - theta * alpha,
    };
    let conv_d = gamma.convolve(d, n_level);
    let conv_dtilde = gamma2.convolve(dtilde, n_level);
    let value = 2f64.powf(exponent * n_level as f64) * conv_d.powf(theta) * conv_dtilde;
    let warning = (exponent.abs() > 1e-12).then(|| {
        format!("exponent {exponent:.6} is not critical; the bound carries a factor 2^({exponent:.6} N)")
    });
    Ok(GammaBound { n_level, value, exponent, conv_d, conv_dtilde, warning })
}

/// [`gamma_bound`] at every level in `levels`, with a fit of `log2 value`
/// against `N`.
pub fn gamma_bound_series(
    d: &[f64],
    dtilde: &[f64],
    alpha: f64,
    beta: Option<f64>,
    theta: f64,
    levels: &[i64],
) -> Result<(Vec<GammaBound>, Option<LinearFit>)> {
    let out = levels
        .iter()
        .map(|&n| gamma_bound(d, dtilde, alpha, beta, theta, n))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = out.iter().map(|b| b.n_level as f64).collect();
    let y: Vec<f64> = out.iter().map(|b| b.value.log2()).collect();
    Ok((out, linear_fit(&x, &y)))
}

/// Smooth bump in time supported on `(t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
}

impl TimeWindow {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::Domain(format!("empty time window ({t0}, {t1})")));
        }
        Ok(Self { t0, t1 })
    }

    fn s(&self, t: f64) -> f64 {
        (2.0 * t - self.t0 - self.t1) / (self.t1 - self.t0)
    }

    /// `χ(t) = exp(1 − 1/(1 − s²))`.
    pub fn value(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.s(t);
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s * s;
        self.value(t) * (-2.0 * s / (u * u)) * 2.0 / (self.t1 - self.t0)
    }
}

/// Pressure solving `−ΔΠ = ∂_i∂_j(v_i v_j)`, zero mean.
pub fn pressure(v: &TorusField) -> Result<TorusField> {
    let g = *v.grid();
    let dim = g.dim();
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).collect();
    let t = dealiased_products(v, v, &pairs)?;
    let mut out = vec![Complex64::default(); g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let k2 = g.mode_norm2(idx);
        if k2 == 0 {
            continue;
        }
        let k = g.mode(idx);
        let mut acc = Complex64::default();
        for (p, &(i, j)) in pairs.iter().enumerate() {
            acc += t.spectral_component(p)[idx] * (k[i] * k[j]) as f64;
        }
        *o = -acc / k2 as f64;
    }
    Ok(TorusField::from_spectral(g, vec![out]))
}

/// `|∫∫ v·∂_t φ + (v⊗v):∇φ + Π div φ dx dt|` for `φ = χ(t) ψ(x)`, by the
/// trapezoid rule over the stored snapshots.
pub fn weak_solution_residual(trajectory: &[SimState], test_field: &TorusField, window: TimeWindow) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::Domain("residual needs at least two snapshots".into()));
    }
    let g = *test_field.grid();
    if test_field.components() != g.dim() {
        return Err(Error::Components { expected: g.dim(), found: test_field.components() });
    }
    let (first, last) = (trajectory[0].t, trajectory[trajectory.len() - 1].t);
    if window.t0 < first - 1e-12 || window.t1 > last + 1e-12 {
        return Err(Error::Domain(format!(
            "window ({}, {}) outside trajectory [{first}, {last}]",
            window.t0, window.t1
        )));
    }
    let grad_psi = gradient(test_field);
    let div_psi = crate::ops::divergence(test_field)?;
    let integrand = trajectory
        .par_iter()
        .map(|s| {
            let v = s.velocity();
            ensure_same_grid(v.grid(), &g)?;
            let chi = window.value(s.t);
            let dchi = window.derivative(s.t);
            let mut val = dchi * v.inner(test_field)?;
            if chi != 0.0 {
                let q = quadrature_for(&[&v, test_field]);
                let sv = q.samples(&v);
                let flux = tensor_triple(&q, g.dim(), &sv, &sv, &q.samples(&grad_psi));
                let pres = pressure(&v)?.inner(&div_psi)?;
                val += chi * (flux + pres);
            }
            Ok(val)
        })
        .collect::<Result<Vec<f64>>>()?;
    let times: Vec<f64> = trajectory.iter().map(|s| s.t).collect();
    Ok(trapezoid(&times, &integrand).abs())
}

/// Multiplier of `S_N` exposed for probes that need it on their own grid.
pub fn level_multiplier(grid: &TorusGrid, n_level: i32) -> Result<Vec<f64>> {
    check_level(grid, n_level)?;
    low_pass_multiplier(grid, n_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{abc_flow, random_smooth_field, single_mode, taylor_green_2d};

    #[test]
    fn steady_fields_carry_no_flux() {
        let g = TorusGrid::new(2, 32).unwrap();
        let tg = taylor_green_2d(&g).unwrap();
        for n in 0..=g.j_max() {
            assert!(energy_flux_lp(&tg, n).unwrap().abs() < 1e-10);
        }
        let m = single_mode(&g, [2, 1, 0], [1.0, -2.0, 0.0]).unwrap();
        assert!(energy_flux_lp(&m, 1).unwrap().abs() < 1e-10);
        let g3 = TorusGrid::new(3, 16).unwrap();
        let abc = abc_flow(&g3, 1.0, 1.0, 1.0).unwrap();
        for n in 0..=g3.j_max() {
            assert!(energy_flux_lp(&abc, n).unwrap().abs() < 1e-9);
            let h = helicity_flux_forms(&abc, n).unwrap();
            assert!(h.divergence_form.abs() < 1e-9 && h.lamb_form.abs() < 1e-9);
        }
    }

    #[test]
    fn pairing_matches_term_by_term_integrals() {
        let g = TorusGrid::new(3, 16).unwrap();
        let (v, _) = random_smooth_field(&g, 2.0, 8).unwrap();
        for n in 0..=g.j_max() {
            let fast = energy_flux_lp(&v, n).unwrap();
            let direct = energy_flux_lp_direct(&v, n).unwrap();
            assert!((fast - direct).abs() < 1e-11 * direct.abs().max(1.0), "{fast} {direct}");
            let h = helicity_flux_forms(&v, n).unwrap();
            let hf = helicity_flux_lp(&v, n).unwrap();
            assert!((hf - h.divergence_form).abs() < 1e-11 * hf.abs().max(1.0));
        }
        let g = TorusGrid::new(3, 64).unwrap();
        let (v, _) = random_smooth_field(&g, 2.0, 8).unwrap();
        let m = Mollifier::new(&g, 0.5).unwrap();
        let a = Advection::new(&v).unwrap();
        let e = energy_flux_moll(&v, &m).unwrap();
        assert!((a.energy_moll(&m).unwrap() - e).abs() < 1e-11 * e.abs().max(1.0));
        let h = helicity_flux_moll(&v, &m).unwrap();
        assert!((a.helicity_moll(&m).unwrap() - h).abs() < 1e-11 * h.abs().max(1.0));
    }

    #[test]
    fn helicity_forms_agree() {
        let g = TorusGrid::new(3, 16).unwrap();
        let (v, _) = random_smooth_field(&g, 2.0, 5).unwrap();
        for n in 0..=g.j_max() {
            let h = helicity_flux_forms(&v, n).unwrap();
            assert!(h.rel_diff < 1e-8, "{h:?}");
            assert!(h.triple_identity_defect < 1e-13);
        }
        assert!(helicity_flux_lp(&TorusField::zeros(g, 3), 1).unwrap() == 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = TorusGrid::new(2, 16).unwrap();
        let grad = TorusField::from_fn(g, 2, |x| [x[0].cos(), 0.0, 0.0]);
        assert!(matches!(energy_flux_lp(&grad, 1), Err(Error::NotDivergenceFree { .. })));
        let tg = taylor_green_2d(&g).unwrap();
        assert!(helicity_flux_lp(&tg, 1).is_err());
        assert!(energy_flux_lp(&tg, g.j_max() + 1).is_err());
    }

    #[test]
    fn gamma_kernel_sums() {
        let k = GammaKernel::new(2.0 / 3.0).unwrap();
        let direct: f64 = (-200..=200).map(|j| k.value(j)).sum();
        assert!((direct - k.l1_norm()).abs() < 1e-12);
        let ones = vec![1.0; 62];
        let b = gamma_bound(&ones, &ones, 2.0 / 3.0, None, 2.0, 30).unwrap();
        assert!(b.warning.is_none());
        let truncated: f64 = (30 - 60..=30 + 1).map(|m| k.value(m)).sum();
        assert!((b.value / truncated.powi(3) - 1.0).abs() < 1e-12);
        assert!((b.value / k.l1_norm().powi(3) - 1.0).abs() < 5e-3);
        let off = gamma_bound(&ones, &ones, 0.5, None, 2.0, 30).unwrap();
        assert!(off.warning.is_some());
    }

    #[test]
    fn window_derivative_matches_difference() {
        let w = TimeWindow::new(0.1, 0.9).unwrap();
        for &t in &[0.2, 0.45, 0.7] {
            let fd = (w.value(t + 1e-6) - w.value(t - 1e-6)) / 2e-6;
            assert!((fd - w.derivative(t)).abs() < 1e-6);
        }
        assert_eq!(w.value(0.05), 0.0);
    }

    #[test]
    fn series_rejects_non_monotone_index() {
        assert!(FluxSeries::new(FluxKind::EnergyLp, vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        let s = FluxSeries::new(FluxKind::EnergyLp, vec![1.0, 2.0, 3.0], vec![4.0, 2.0, 1.0]).unwrap();
        assert!((s.slope() + 1.0).abs() < 1e-12);
        assert!(s.to_csv().starts_with("N,value\n1,"));
    }
}
