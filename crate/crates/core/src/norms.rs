//! Lebesgue, Besov, c(ℕ)-tail and Besov-VMO functionals, and sampled checks
//! of the norm inequalities built on them.
//!
//! Vector fields are measured through their pointwise Euclidean magnitude.
//! `p = ∞` is passed as `f64::INFINITY`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::TorusField;
use crate::fit::linear_fit;
use crate::grid::TorusGrid;
use crate::ops::{gradient, pad};
use crate::partition::{block_multiplier, dyadic_block};
use crate::serde_ext;

/// Relative level under which a block norm counts as roundoff.
const ZERO_FLOOR: f64 = 1e-14;

fn check_exponent(name: &'static str, p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("{name} = {p} must be >= 1")));
    }
    Ok(())
}

/// Upper bound on oversampled quadrature nodes.
const QUADRATURE_BUDGET: usize = 1 << 22;

/// Points per axis of the quadrature grid: at least `2n`, and up to `8n`
/// while the node count stays within budget.
///
/// `|f|^p` has kinks at zeros of `f` for non-even `p`, so the rectangle rule
/// converges like `(K/m)^{p+1}` for spectral extent `K`; even integer `p`
/// with `m > pK` is exact.
pub fn quadrature_points(grid: &TorusGrid) -> usize {
    let mut m = 2 * grid.n();
    while m < 8 * grid.n() && (2 * m).pow(grid.dim() as u32) <= QUADRATURE_BUDGET {
        m *= 2;
    }
    m
}

/// Pointwise magnitudes of a field on the oversampled quadrature grid,
/// reusable for several exponents.
#[derive(Debug, Clone)]
pub struct OversampledSamples {
    magnitude: Vec<f64>,
    weight: f64,
    l2_sq: f64,
}

impl OversampledSamples {
    pub fn new(f: &TorusField) -> Self {
        let g = f.grid();
        let fine = TorusGrid::new(g.dim(), quadrature_points(g)).expect("refining a valid grid");
        let comps = pad(f, &fine);
        let magnitude = if comps.len() == 1 {
            comps[0].iter().map(|x| x.abs()).collect()
        } else {
            (0..fine.len())
                .map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
                .collect()
        };
        Self { magnitude, weight: fine.cell_volume(), l2_sq: f.norm2_sq() }
    }

    /// `‖f‖_{L^p}`; `p = 2` is taken from Parseval.
    pub fn norm(&self, p: f64) -> Result<f64> {
        check_exponent("p", p)?;
        if p == 2.0 {
            return Ok(self.l2_sq.max(0.0).sqrt());
        }
        if p.is_infinite() {
            return Ok(self.magnitude.iter().copied().fold(0.0, f64::max));
        }
        let max = self.magnitude.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Ok(0.0);
        }
        // scaled to avoid overflow for large p
        let s: f64 = self.magnitude.iter().map(|m| (m / max).powf(p)).sum();
        Ok(max * (s * self.weight).powf(1.0 / p))
    }
}

/// `‖f‖_{L^p(T^d)}` by rectangle rule on an oversampled grid; `p = 2` is
/// exact through Parseval.
pub fn lebesgue_norm(f: &TorusField, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    if p == 2.0 {
        return Ok(f.norm2_sq().max(0.0).sqrt());
    }
    OversampledSamples::new(f).norm(p)
}

/// Discrete `L^p` norm in time of per-snapshot values (left rectangle rule).
pub fn time_lp_norm(times: &[f64], values: &[f64], p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    if times.len() != values.len() {
        return Err(Error::Domain("times and values differ in length".into()));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let mut acc = 0.0;
    for i in 0..times.len().saturating_sub(1) {
        acc += (times[i + 1] - times[i]) * values[i].abs().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// Third index of a Besov space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summability {
    Finite(f64),
    Infinity,
    /// `ℓ^∞` with the tail `2^{js}‖Δ_j f‖ → 0` reported separately.
    CNat,
    /// Vanishing mean oscillation of increments.
    Vmo,
}

impl Summability {
    /// `ℓ^q` aggregate; the c(ℕ) and VMO variants aggregate as `ℓ^∞`.
    pub fn aggregate(&self, xs: &[f64]) -> f64 {
        match *self {
            Summability::Finite(q) => {
                let max = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if max == 0.0 {
                    return 0.0;
                }
                max * xs.iter().map(|x| (x.abs() / max).powf(q)).sum::<f64>().powf(1.0 / q)
            }
            _ => xs.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        }
    }
}

impl fmt::Display for Summability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Summability::Finite(q) => write!(f, "{q}"),
            Summability::Infinity => write!(f, "inf"),
            Summability::CNat => write!(f, "c(N)"),
            Summability::Vmo => write!(f, "VMO"),
        }
    }
}

impl std::str::FromStr for Summability {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "c(N)" | "cN" | "cnat" | "c_nat" | "C_NAT" => Ok(Summability::CNat),
            "VMO" | "vmo" => Ok(Summability::Vmo),
            t => match serde_ext::parse_text(t) {
                Some(q) if q.is_infinite() && q > 0.0 => Ok(Summability::Infinity),
                Some(q) if q >= 1.0 => Ok(Summability::Finite(q)),
                _ => Err(Error::Domain(format!("bad summability index {t:?}"))),
            },
        }
    }
}

impl Serialize for Summability {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Summability::Finite(q) => s.serialize_f64(*q),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Summability {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) if q >= 1.0 => Ok(Summability::Finite(q)),
            Raw::Num(q) => Err(serde::de::Error::custom(format!("q = {q} must be >= 1"))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// The space `B^s_{p,q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub s: f64,
    #[serde(with = "serde_ext::extended")]
    pub p: f64,
    pub q: Summability,
}

impl BesovSpec {
    pub fn new(s: f64, p: f64, q: Summability) -> Result<Self> {
        check_exponent("p", p)?;
        if let Summability::Finite(q) = q {
            check_exponent("q", q)?;
        }
        if !s.is_finite() {
            return Err(Error::Domain(format!("smoothness s = {s} must be finite")));
        }
        Ok(Self { s, p, q })
    }
}

/// Per-scale sequence `d_j = 2^{js}‖Δ_j f‖_{L^p}` and its aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesovReport {
    pub spec: BesovSpec,
    /// Block indices `-1..=j_max`.
    pub j: Vec<i32>,
    pub d_j: Vec<f64>,
    /// Homogeneous sequence: the low block loses its zero mode.
    pub hom_d_j: Vec<f64>,
    /// `ℓ^q` aggregate of `d_j`.
    pub norm: f64,
    /// `ℓ^q` aggregate of `hom_d_j`.
    pub homogeneous: f64,
    /// `‖f‖_{L^p}`.
    pub lp_part: f64,
    /// `lp_part + homogeneous`.
    pub equivalent_norm: f64,
    /// Largest `d_j` over the top third of resolved scales.
    pub tail_sup: f64,
    /// Largest fully resolved block index.
    pub j_resolved: i32,
}

impl BesovReport {
    pub fn d(&self, j: i32) -> f64 {
        self.d_j[(j + 1) as usize]
    }

    /// Rows `j,d_j` with a header, ordered by `j`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,d_j\n");
        for (j, d) in self.j.iter().zip(&self.d_j) {
            out.push_str(&format!("{j},{d:e}\n"));
        }
        out
    }

    fn resolved_window(&self, fraction_den: usize) -> std::ops::Range<usize> {
        let count = (self.j_resolved + 2) as usize;
        let take = count.div_ceil(fraction_den);
        count - take..count
    }
}

/// Evaluates `d_j` for `j = -1..=j_max` and the aggregates of `spec`.
pub fn besov_norm(f: &TorusField, spec: &BesovSpec) -> Result<BesovReport> {
    let g = *f.grid();
    let j_max = g.j_max();
    let js: Vec<i32> = (-1..=j_max).collect();
    let block_norms: Vec<f64> = js
        .par_iter()
        .map(|&j| Ok(lebesgue_norm(&dyadic_block(f, j)?, spec.p)?))
        .collect::<Result<_>>()?;
    let d_j: Vec<f64> =
        js.iter().zip(&block_norms).map(|(&j, n)| 2f64.powf(j as f64 * spec.s) * n).collect();

    let mut low = block_multiplier(&g, -1)?;
    low[0] = 0.0;
    let hom_low = 2f64.powf(-spec.s) * lebesgue_norm(&f.apply_multiplier(&low), spec.p)?;
    let mut hom_d_j = d_j.clone();
    hom_d_j[0] = hom_low;

    let lp_part = lebesgue_norm(f, spec.p)?;
    let norm = spec.q.aggregate(&d_j);
    let homogeneous = spec.q.aggregate(&hom_d_j);
    let mut report = BesovReport {
        spec: *spec,
        j: js,
        d_j,
        hom_d_j,
        norm,
        homogeneous,
        lp_part,
        equivalent_norm: lp_part + homogeneous,
        tail_sup: 0.0,
        j_resolved: g.j_resolved(),
    };
    report.tail_sup = report.d_j[report.resolved_window(3)].iter().copied().fold(0.0, f64::max);
    Ok(report)
}

/// Tail data of a c(ℕ) report: `log2 d_j` fitted over the top half of the
/// resolved scales. A tail that vanishes to roundoff has slope `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    pub j: Vec<i32>,
    pub d_j: Vec<f64>,
    #[serde(with = "serde_ext::extended")]
    pub slope: f64,
    #[serde(with = "serde_ext::extended")]
    pub intercept: f64,
    pub fit_j: Vec<i32>,
}

pub fn cnat_tail_diagnostic(report: &BesovReport) -> Result<TailDiagnostic> {
    if report.spec.q != Summability::CNat {
        return Err(Error::Domain(format!(
            "tail diagnostic needs q = c(N), report has q = {}",
            report.spec.q
        )));
    }
    tail_slope(report)
}

/// Tail fit for any report; see [`cnat_tail_diagnostic`].
pub fn tail_slope(report: &BesovReport) -> Result<TailDiagnostic> {
    let count = report.j_resolved + 2;
    if count < 4 {
        return Err(Error::TooFewScales(format!(
            "{count} resolved scales, at least 4 are needed"
        )));
    }
    let window = report.resolved_window(2);
    let floor = ZERO_FLOOR * report.d_j.iter().copied().fold(0.0, f64::max);
    let (x, y): (Vec<f64>, Vec<f64>) = window
        .clone()
        .filter(|&i| report.d_j[i] > floor)
        .map(|i| (report.j[i] as f64, report.d_j[i].log2()))
        .unzip();
    let (slope, intercept) = match linear_fit(&x, &y) {
        Some(fit) => (fit.slope, fit.intercept),
        None if x.is_empty() => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        None => (f64::NAN, f64::NAN),
    };
    Ok(TailDiagnostic {
        j: report.j.clone(),
        d_j: report.d_j.clone(),
        slope,
        intercept,
        fit_j: window.map(|i| report.j[i]).collect(),
    })
}

/// One point of the VMO functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmoPoint {
    pub eps: f64,
    pub value: f64,
    /// Number of ball offsets used.
    pub stencil: usize,
}

/// Largest number of offsets per axis in a ball stencil.
fn stencil_cap(dim: usize) -> i64 {
    if dim == 2 {
        64
    } else {
        16
    }
}

/// Integer node offsets inside the ball of radius `eps`, thinned by a
/// uniform stride when the ball is large.
pub(crate) fn ball_offsets(grid: &TorusGrid, eps: f64) -> Vec<[i64; 3]> {
    let h = grid.spacing();
    let r = (eps / h).floor() as i64;
    let stride = ((2 * r + 1) + stencil_cap(grid.dim()) - 1) / stencil_cap(grid.dim());
    let stride = stride.max(1);
    let steps = r / stride;
    let mut out = Vec::new();
    let range = -steps..=steps;
    let zr = if grid.dim() == 3 { range.clone() } else { 0..=0 };
    for a in range.clone() {
        for b in range.clone() {
            for c in zr.clone() {
                let m = [a * stride, b * stride, c * stride];
                let d2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
                if d2 * h * h <= eps * eps {
                    out.push(m);
                }
            }
        }
    }
    out
}

/// `V(ε) = ε^{-s} (∫ ⨍_{|y|≤ε} |f(x) − f(x−y)|^p dy dx)^{1/p}` over node
/// offsets `y` in the ball.
pub fn besov_vmo_functional(
    f: &TorusField,
    spec: &BesovSpec,
    eps_list: &[f64],
) -> Result<Vec<VmoPoint>> {
    if spec.q != Summability::Vmo {
        return Err(Error::Domain(format!("VMO functional needs q = VMO, got {}", spec.q)));
    }
    let g = *f.grid();
    let h = g.spacing();
    for &eps in eps_list {
        if !(eps < std::f64::consts::FRAC_PI_2) || eps <= 0.0 {
            return Err(Error::OutOfRange {
                what: "VMO scale",
                detail: format!("eps = {eps} not in (0, pi/2)"),
            });
        }
        if eps < h {
            return Err(Error::UnresolvedScale { eps, spacing: h });
        }
    }
    let comps = f.physical();
    let p = spec.p;
    eps_list
        .iter()
        .map(|&eps| {
            let offsets = ball_offsets(&g, eps);
            let per_offset: Vec<f64> = offsets
                .par_iter()
                .map(|&m| {
                    let src = g.shift_table(m);
                    let mut acc = 0.0f64;
                    for (idx, &s) in src.iter().enumerate() {
                        let d2: f64 = comps.iter().map(|c| (c[idx] - c[s]).powi(2)).sum();
                        if p.is_infinite() {
                            acc = acc.max(d2.sqrt());
                        } else if p == 2.0 {
                            acc += d2;
                        } else {
                            acc += d2.powf(0.5 * p);
                        }
                    }
                    acc
                })
                .collect();
            let inner = if p.is_infinite() {
                per_offset.iter().copied().fold(0.0, f64::max)
            } else {
                let avg = per_offset.iter().sum::<f64>() / offsets.len() as f64;
                (avg * g.cell_volume()).powf(1.0 / p)
            };
            Ok(VmoPoint { eps, value: eps.powf(-spec.s) * inner, stencil: offsets.len() })
        })
        .collect()
}

/// One row of the block interpolation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRow {
    pub j: i32,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
    pub weighted_lhs: f64,
    pub weighted_rhs: f64,
    pub weighted_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub p: f64,
    pub rows: Vec<InterpolationRow>,
    pub max_ratio: f64,
    pub max_weighted_ratio: f64,
}

fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if lhs == 0.0 && rhs == 0.0 {
        None
    } else {
        Some(lhs / rhs)
    }
}

/// Exponent `2p/(p−1)`, infinite at `p = 1`.
pub fn dual_double(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        2.0 * p / (p - 1.0)
    }
}

/// Per block: `‖Δ_j f‖_3` against `‖Δ_j f‖_2^{1−p/3} ‖Δ_j f‖_{2p/(p−1)}^{p/3}`,
/// plus the scale-weighted form with `‖f‖_2` in place of `‖Δ_j f‖_2`.
pub fn check_interpolation_chain(f: &TorusField, p: f64) -> Result<InterpolationCheck> {
    if !(1.0..=3.0).contains(&p) {
        return Err(Error::OutOfRange { what: "p", detail: format!("p = {p} not in [1, 3]") });
    }
    let e = dual_double(p);
    let theta = p / 3.0;
    let f2 = f.norm2_sq().sqrt();
    let rows: Vec<InterpolationRow> = (-1..=f.grid().j_max())
        .into_par_iter()
        .map(|j| {
            let s = OversampledSamples::new(&dyadic_block(f, j)?);
            let l3 = s.norm(3.0)?;
            let l2 = s.norm(2.0)?;
            let le = s.norm(e)?;
            let lhs = l3;
            let rhs = l2.powf(1.0 - theta) * le.powf(theta);
            let weighted_lhs = 2f64.powf(j as f64 / 3.0) * l3;
            let weighted_rhs = f2.powf(1.0 - theta) * (2f64.powf(j as f64 / p) * le).powf(theta);
            Ok(InterpolationRow {
                j,
                lhs,
                rhs,
                ratio: ratio(lhs, rhs),
                weighted_lhs,
                weighted_rhs,
                weighted_ratio: ratio(weighted_lhs, weighted_rhs),
            })
        })
        .collect::<Result<_>>()?;
    let max_of = |sel: fn(&InterpolationRow) -> Option<f64>| {
        rows.iter().filter_map(sel).fold(0.0, f64::max)
    };
    Ok(InterpolationCheck {
        p,
        max_ratio: max_of(|r| r.ratio),
        max_weighted_ratio: max_of(|r| r.weighted_ratio),
        rows,
    })
}

/// Unweighted interpolation ratio of a single block for several `p` at once,
/// sharing one set of oversampled samples.
pub fn interpolation_ratios(block: &TorusField, ps: &[f64]) -> Result<Vec<Option<f64>>> {
    if let Some(&p) = ps.iter().find(|p| !(1.0..=3.0).contains(*p)) {
        return Err(Error::OutOfRange { what: "p", detail: format!("p = {p} not in [1, 3]") });
    }
    let s = OversampledSamples::new(block);
    let l3 = s.norm(3.0)?;
    let l2 = s.norm(2.0)?;
    ps.iter()
        .map(|&p| {
            let theta = p / 3.0;
            Ok(ratio(l3, l2.powf(1.0 - theta) * s.norm(dual_double(p))?.powf(theta)))
        })
        .collect()
}

/// Pointwise Frobenius magnitude of `∇f`, measured in `L^r`.
pub fn gradient_norm(f: &TorusField, r: f64) -> Result<f64> {
    lebesgue_norm(&gradient(f), r)
}

/// Tolerance on `max|k·v̂| / max|v̂|` for inputs that must be solenoidal.
pub const DIVERGENCE_TOL: f64 = 1e-10;

pub(crate) fn require_divergence_free(v: &TorusField) -> Result<()> {
    let defect = v.divergence_defect();
    if defect > DIVERGENCE_TOL {
        return Err(Error::NotDivergenceFree { defect });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub p: f64,
    /// Homogeneous `B^{1/p}_{2p/(p−1),∞}` norm.
    pub lhs_norm: f64,
    /// `‖∇f‖_{L^{6p/(5p−5)}}`.
    pub rhs_norm: f64,
    pub rhs_exponent: f64,
    pub ratio: Option<f64>,
}

/// Gradient exponent `6p/(5p−5)` of the embedding.
pub fn sembed_exponent(p: f64) -> f64 {
    6.0 * p / (5.0 * p - 5.0)
}

/// Single-snapshot embedding of `W^{1,6p/(5p−5)}` into `B^{1/p}_{2p/(p−1),∞}`.
pub fn check_embedding_sembed(f: &TorusField, p: f64) -> Result<EmbeddingCheck> {
    if !(p > 1.0 && p <= 3.0) {
        return Err(Error::OutOfRange { what: "p", detail: format!("p = {p} not in (1, 3]") });
    }
    if f.grid().dim() != 3 || f.components() != 3 {
        return Err(Error::Domain("embedding check needs a 3D vector field".into()));
    }
    require_divergence_free(f)?;
    let spec = BesovSpec::new(1.0 / p, dual_double(p), Summability::Infinity)?;
    let lhs_norm = besov_norm(f, &spec)?.homogeneous;
    let rhs_exponent = sembed_exponent(p);
    let rhs_norm = gradient_norm(f, rhs_exponent)?;
    Ok(EmbeddingCheck { p, lhs_norm, rhs_norm, rhs_exponent, ratio: ratio(lhs_norm, rhs_norm) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnVariant {
    /// `‖f‖_r ≤ C ‖f‖_2^a ‖∇f‖_m^b` with `r = 4dp/(dp+d−2p+2)`.
    Energy,
    /// `d = 3`, `r = 3p/(7−2p)`, with an additive `‖f‖_2` on the torus.
    Helicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnExponents {
    pub variant: GnVariant,
    pub dim: usize,
    pub p: f64,
    /// Target Lebesgue exponent.
    pub r: f64,
    /// Gradient Lebesgue exponent.
    pub m: f64,
    /// Power of `‖f‖_2`.
    pub a: f64,
    /// Power of `‖∇f‖_m`.
    pub b: f64,
}

pub fn gn_exponents(dim: usize, p: f64, variant: GnVariant) -> Result<GnExponents> {
    let d = dim as f64;
    let (r, m, a, b) = match variant {
        GnVariant::Energy => {
            if !(p > 1.0 && p <= 3.0) {
                return Err(Error::OutOfRange {
                    what: "p",
                    detail: format!("energy variant needs 1 < p <= 3, got {p}"),
                });
            }
            (
                4.0 * d * p / (d * p + d - 2.0 * p + 2.0),
                2.0 * d * p / ((d + 2.0) * (p - 1.0)),
                (6.0 - 2.0 * p - p * d + 3.0 * d) / (2.0 * d + 4.0),
                (p * d + 2.0 * p - 2.0 - d) / (2.0 * d + 4.0),
            )
        }
        GnVariant::Helicity => {
            if dim != 3 {
                return Err(Error::Domain("helicity variant is three-dimensional".into()));
            }
            if !(p > 2.0 && p <= 3.0) {
                return Err(Error::OutOfRange {
                    what: "p",
                    detail: format!("helicity variant needs 2 < p <= 3, got {p}"),
                });
            }
            (3.0 * p / (7.0 - 2.0 * p), 6.0 * p / (5.0 * p - 7.0), 3.0 - p, p - 2.0)
        }
    };
    for (name, value) in [("r", r), ("m", m)] {
        if value.is_nan() || value < 1.0 {
            return Err(Error::Exponent { name, value });
        }
    }
    for (name, value) in [("a", a), ("b", b)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Exponent { name, value });
        }
    }
    Ok(GnExponents { variant, dim, p, r, m, a, b })
}

/// `|1/r − (a/2 + b(1/m − 1/d))|`, zero for dimensionally consistent
/// exponents.
pub fn gn_scaling_defect(e: &GnExponents) -> f64 {
    let d = e.dim as f64;
    (1.0 / e.r - (e.a / 2.0 + e.b * (1.0 / e.m - 1.0 / d))).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnCheck {
    pub exponents: GnExponents,
    pub lhs: f64,
    /// Right side without the constant.
    pub rhs: f64,
    pub ratio: Option<f64>,
}

pub fn check_gagliardo_nirenberg(f: &TorusField, p: f64, variant: GnVariant) -> Result<GnCheck> {
    let e = gn_exponents(f.grid().dim(), p, variant)?;
    let s = OversampledSamples::new(f);
    let lhs = s.norm(e.r)?;
    let l2 = s.norm(2.0)?;
    let grad = gradient_norm(f, e.m)?;
    let mut rhs = l2.powf(e.a) * grad.powf(e.b);
    if variant == GnVariant::Helicity {
        rhs += l2;
    }
    Ok(GnCheck { exponents: e, lhs, rhs, ratio: ratio(lhs, rhs) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinPair {
    #[serde(with = "serde_ext::extended")]
    pub a: f64,
    #[serde(with = "serde_ext::extended")]
    pub b: f64,
    /// `max_j ‖∇Δ_j f‖_b / (2^{j(1+d(1/a−1/b))} ‖Δ_j f‖_a)`.
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinLower {
    #[serde(with = "serde_ext::extended")]
    pub a: f64,
    /// `max_{j≥0} 2^j ‖Δ_j f‖_a / ‖∇Δ_j f‖_a`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinCheck {
    pub upper: Vec<BernsteinPair>,
    pub lower: Vec<BernsteinLower>,
}

impl BernsteinCheck {
    pub fn max_constant(&self) -> f64 {
        self.upper
            .iter()
            .map(|u| u.constant)
            .chain(self.lower.iter().map(|l| l.constant))
            .fold(0.0, f64::max)
    }
}

/// Fitted Bernstein constants over all blocks and all pairs `a ≤ b` drawn
/// from `exponents`.
pub fn check_bernstein(f: &TorusField, exponents: &[f64]) -> Result<BernsteinCheck> {
    for &p in exponents {
        check_exponent("p", p)?;
    }
    let d = f.grid().dim() as f64;
    let inv = |p: f64| if p.is_infinite() { 0.0 } else { 1.0 / p };
    // per block: (j, norms of block, norms of gradient)
    let per_block: Vec<(i32, Vec<f64>, Vec<f64>)> = (-1..=f.grid().j_max())
        .into_par_iter()
        .map(|j| {
            let block = dyadic_block(f, j)?;
            let sb = OversampledSamples::new(&block);
            let sg = OversampledSamples::new(&gradient(&block));
            let nb = exponents.iter().map(|&p| sb.norm(p)).collect::<Result<Vec<_>>>()?;
            let ng = exponents.iter().map(|&p| sg.norm(p)).collect::<Result<Vec<_>>>()?;
            Ok((j, nb, ng))
        })
        .collect::<Result<_>>()?;
    let floor = ZERO_FLOOR
        * per_block.iter().flat_map(|(_, nb, _)| nb.iter().copied()).fold(0.0, f64::max);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (ia, &a) in exponents.iter().enumerate() {
        for (ib, &b) in exponents.iter().enumerate() {
            if a > b {
                continue;
            }
            let mut c = 0.0f64;
            for (j, nb, ng) in &per_block {
                if nb[ia] <= floor {
                    continue;
                }
                let scale = 2f64.powf(*j as f64 * (1.0 + d * (inv(a) - inv(b))));
                c = c.max(ng[ib] / (scale * nb[ia]));
            }
            upper.push(BernsteinPair { a, b, constant: c });
        }
        let mut c = 0.0f64;
        for (j, nb, ng) in per_block.iter().filter(|(j, _, _)| *j >= 0) {
            if nb[ia] <= floor {
                continue;
            }
            c = c.max(2f64.powi(*j) * nb[ia] / ng[ia]);
        }
        lower.push(BernsteinLower { a, constant: c });
    }
    Ok(BernsteinCheck { upper, lower })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::varphi;
    use std::f64::consts::PI;

    fn cos_x(g: TorusGrid) -> TorusField {
        TorusField::from_fn(g, 1, |x| [x[0].cos(), 0.0, 0.0])
    }

    /// Mean of `|cos|^p` over a period by a fine midpoint rule.
    fn cos_mean(p: f64) -> f64 {
        let n = 200_000;
        (0..n).map(|i| ((i as f64 + 0.5) * 2.0 * PI / n as f64).cos().abs().powf(p)).sum::<f64>()
            / n as f64
    }

    #[test]
    fn lebesgue_of_cos() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = cos_x(g);
        assert!((lebesgue_norm(&f, 2.0).unwrap() - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((lebesgue_norm(&f, f64::INFINITY).unwrap() - 1.0).abs() < 1e-14);
        let want = ((2.0 * PI).powi(2) * 4.0 / (3.0 * PI)).powf(1.0 / 3.0);
        assert!((lebesgue_norm(&f, 3.0).unwrap() - want).abs() < 1e-8 * want);
        assert!((cos_mean(3.0) - 4.0 / (3.0 * PI)).abs() < 1e-8);
        assert!(matches!(lebesgue_norm(&f, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn single_mode_touches_two_blocks() {
        let g = TorusGrid::new(2, 64).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [(16.0 * x[0]).cos(), 0.0, 0.0]);
        let spec = BesovSpec::new(1.0 / 3.0, 3.0, Summability::Infinity).unwrap();
        let r = besov_norm(&f, &spec).unwrap();
        let l3 = ((2.0 * PI).powi(2) * cos_mean(3.0)).powf(1.0 / 3.0);
        let mut nonzero = 0;
        for (&j, &d) in r.j.iter().zip(&r.d_j) {
            let want = if j < 0 {
                0.0
            } else {
                2f64.powf(j as f64 / 3.0) * varphi(16.0 / 2f64.powi(j)) * l3
            };
            // 32 quadrature nodes per wavelength of the mode
            assert!((d - want).abs() < 1e-4 * l3, "j = {j}: {d} vs {want}");
            if d > 1e-12 {
                nonzero += 1;
            }
        }
        assert!(nonzero <= 2);
        assert_eq!(r.norm, r.d_j.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn constant_field_report() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = TorusField::from_fn(g, 1, |_| [3.0, 0.0, 0.0]);
        let spec = BesovSpec::new(0.5, 3.0, Summability::Infinity).unwrap();
        let r = besov_norm(&f, &spec).unwrap();
        assert!(r.homogeneous < 1e-12);
        assert!((r.equivalent_norm - r.lp_part).abs() < 1e-12);
    }

    #[test]
    fn q_monotone_and_scaling() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = TorusField::from_fn(g, 1, |x| {
            [x[0].sin() + 0.3 * (5.0 * x[1]).cos() + 0.1 * (9.0 * x[0] + 2.0 * x[1]).sin(), 0.0, 0.0]
        });
        let mut prev = f64::INFINITY;
        for q in [Summability::Finite(1.0), Summability::Finite(2.0), Summability::Finite(4.0), Summability::Infinity] {
            let r = besov_norm(&f, &BesovSpec::new(0.4, 2.5, q).unwrap()).unwrap();
            assert!(r.norm <= prev * (1.0 + 1e-14));
            prev = r.norm;
        }
        let spec = BesovSpec::new(0.4, 3.0, Summability::Finite(2.0)).unwrap();
        let a = besov_norm(&f, &spec).unwrap().norm;
        let b = besov_norm(&f.scale(-2.5), &spec).unwrap().norm;
        assert!((b - 2.5 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn summability_round_trips() {
        for q in [Summability::Finite(2.0), Summability::Infinity, Summability::CNat, Summability::Vmo] {
            let s = serde_json::to_string(&q).unwrap();
            let back: Summability = serde_json::from_str(&s).unwrap();
            assert_eq!(q, back);
        }
        let spec = BesovSpec::new(1.0, f64::INFINITY, Summability::CNat).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<BesovSpec>(&s).unwrap(), spec);
    }

    #[test]
    fn tail_needs_enough_scales() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = cos_x(g);
        let r = besov_norm(&f, &BesovSpec::new(0.3, 2.0, Summability::CNat).unwrap()).unwrap();
        assert!(matches!(cnat_tail_diagnostic(&r), Err(Error::TooFewScales(_))));
    }

    #[test]
    fn vmo_of_constant_and_cos() {
        let g = TorusGrid::new(2, 64).unwrap();
        let spec = BesovSpec::new(1.0 / 3.0, 2.0, Summability::Vmo).unwrap();
        let c = TorusField::from_fn(g, 1, |_| [1.0, 0.0, 0.0]);
        let v = besov_vmo_functional(&c, &spec, &[0.3, 0.5]).unwrap();
        assert!(v.iter().all(|p| p.value == 0.0));
        let g = TorusGrid::new(2, 512).unwrap();
        let f = cos_x(g);
        let eps = [0.1, 0.2];
        let v = besov_vmo_functional(&f, &spec, &eps).unwrap();
        for (pt, &e) in v.iter().zip(&eps) {
            // ∫|cos x − cos(x − y)|² dx = (2π)² 2 sin²(y₁/2)
            let offs = ball_offsets(&g, e);
            let avg = offs
                .iter()
                .map(|m| 2.0 * (0.5 * m[0] as f64 * g.spacing()).sin().powi(2))
                .sum::<f64>()
                / offs.len() as f64;
            let want = e.powf(-1.0 / 3.0) * ((2.0 * PI).powi(2) * avg).sqrt();
            assert!((pt.value - want).abs() < 1e-10 * want);
        }
        let slope = (v[1].value / v[0].value).log2();
        assert!((slope - 2.0 / 3.0).abs() < 0.05, "slope {slope}");
        assert!(matches!(
            besov_vmo_functional(&f, &spec, &[0.01]),
            Err(Error::UnresolvedScale { .. })
        ));
    }

    #[test]
    fn interpolation_degenerate_and_single_mode() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [(3.0 * x[0]).cos() + (5.0 * x[1]).sin(), 0.0, 0.0]);
        let c = check_interpolation_chain(&f, 3.0).unwrap();
        for r in &c.rows {
            if let Some(q) = r.ratio {
                assert_eq!(q, 1.0);
            }
        }
        let m = cos_x(g);
        let c = check_interpolation_chain(&m, 1.5).unwrap();
        let want = cos_mean(3.0).powf(1.0 / 3.0) / (cos_mean(2.0).powf(0.25) * cos_mean(6.0).powf(1.0 / 12.0));
        let ratio = c.rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
        assert!((ratio - want).abs() < 1e-8, "{ratio} vs {want}");
        assert!(ratio <= 1.0);
        assert!(check_interpolation_chain(&m, 3.5).is_err());
        assert!(check_interpolation_chain(&m, 1.0).is_ok());
    }

    #[test]
    fn gn_exponent_arithmetic() {
        let e = gn_exponents(3, 3.0, GnVariant::Energy).unwrap();
        assert!((e.r - 4.5).abs() < 1e-15);
        for dim in [2, 3] {
            for p in [1.2, 1.5, 2.0, 2.5, 3.0] {
                let e = gn_exponents(dim, p, GnVariant::Energy).unwrap();
                assert!(gn_scaling_defect(&e) < 1e-14);
                assert!((e.a + e.b - 1.0).abs() < 1e-14);
            }
        }
        for p in [2.2, 2.5, 3.0] {
            let e = gn_exponents(3, p, GnVariant::Helicity).unwrap();
            assert!(gn_scaling_defect(&e) < 1e-14);
        }
        assert!(gn_exponents(3, 1.0, GnVariant::Energy).is_err());
        assert!(gn_exponents(3, 2.0, GnVariant::Helicity).is_err());
        assert!((sembed_exponent(3.0) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn time_norm() {
        let t = [0.0, 0.5, 1.0];
        let v = [2.0, 2.0, 7.0];
        assert!((time_lp_norm(&t, &v, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(time_lp_norm(&t, &v, f64::INFINITY).unwrap(), 7.0);
    }
}
