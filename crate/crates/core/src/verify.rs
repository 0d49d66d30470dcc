//! Self-check battery. Every check compares a computed quantity against a
//! fixed tolerance; oracles are closed forms or independent evaluations.

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TorusField;
use crate::fields::{abc_flow, lacunary_field, random_smooth_field, random_smooth_scalar, single_mode, taylor_green_2d};
use crate::flux::{
    energy_flux_lp_direct, gamma_bound_series, helicity_flux_forms, level_scan, Advection, FluxKind,
    GammaKernel,
};
use crate::grid::TorusGrid;
use crate::mollify::{ceti_commutator, commutator_scan, mollification_rates, Mollifier};
use crate::norms::{check_bernstein, interpolation_ratios, BesovSpec, Summability};
use crate::partition::{dyadic_block, make_partition, DyadicDecomposition};
use crate::solver::{richardson_estimate, run, Probe, RunOptions, SimState, CFL_SAFETY};
use crate::tfld;

pub const DEFAULT_SEED: u64 = 3;

/// Problem sizes. `Full` is the acceptance battery; `Quick` keeps every
/// tolerance but shrinks grids and sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(criterion: u8, name: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            criterion,
            name: name.into(),
            passed: value <= tolerance,
            value,
            relation: Relation::AtMost,
            tolerance,
            detail: detail.into(),
        }
    }

    fn at_least(criterion: u8, name: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            criterion,
            name: name.into(),
            passed: value >= tolerance,
            value,
            relation: Relation::AtLeast,
            tolerance,
            detail: detail.into(),
        }
    }

    fn failed(criterion: u8, name: impl Into<String>, err: &Error) -> Self {
        Self {
            criterion,
            name: name.into(),
            passed: false,
            value: f64::NAN,
            relation: Relation::AtMost,
            tolerance: f64::NAN,
            detail: err.to_string(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        write!(
            f,
            "[{}] {:>2} {}: {:.3e} {op} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.value,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "partition of unity and block reconstruction"),
    (2, "Bernstein constants"),
    (3, "block interpolation inequality"),
    (4, "commutator decomposition"),
    (5, "mollification rates"),
    (6, "tensor commutator rates at critical exponents"),
    (7, "flux bound dichotomy"),
    (8, "steady solutions carry no flux"),
    (9, "solver budgets"),
    (10, "helicity flux formulations"),
    (11, "determinism"),
];

/// Runs one criterion; errors become a single failed check.
pub fn run_criterion(id: u8, scale: Scale, seed: u64) -> Vec<Check> {
    let res = match id {
        1 => partition(scale, seed),
        2 => bernstein(scale, seed),
        3 => interpolation(scale, seed),
        4 => ceti(scale, seed),
        5 => mollification(scale, seed),
        6 => commutator(scale, seed),
        7 => gamma(),
        8 => steady(),
        9 => budgets(scale, seed),
        10 => helicity(scale, seed),
        11 => determinism(seed),
        _ => Err(Error::Domain(format!("no criterion {id}"))),
    };
    res.unwrap_or_else(|e| vec![Check::failed(id, "evaluation", &e)])
}

pub fn run_all(scale: Scale, seed: u64) -> Vec<Check> {
    CRITERIA.iter().flat_map(|&(id, _)| run_criterion(id, scale, seed)).collect()
}

fn pick(scale: Scale, quick: usize, full: usize) -> usize {
    match scale {
        Scale::Quick => quick,
        Scale::Full => full,
    }
}

fn partition(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for (dim, n) in [(2, 64), (2, 128), (3, 32)] {
        let g = TorusGrid::new(dim, n)?;
        let d = make_partition(&g)?.unity_defect();
        out.push(Check::at_most(1, format!("unity defect {dim}D n={n}"), d, 1e-12, ""));
    }
    let count = pick(scale, 5, 50);
    for n in [64, 128] {
        let g = TorusGrid::new(2, n)?;
        let mut worst = 0.0f64;
        for i in 0..count {
            let f = random_smooth_scalar(&g, 0.5, seed.wrapping_add(100 + i as u64))?;
            worst = worst.max(DyadicDecomposition::new(&f)?.reconstruct()?.rel_l2_diff(&f));
        }
        out.push(Check::at_most(1, format!("reconstruction n={n}"), worst, 1e-10, format!("{count} fields")));
    }
    out.push(Check::at_most(1, "runtime seconds", start.elapsed().as_secs_f64(), 10.0, ""));
    Ok(out)
}

const BERNSTEIN_EXPONENTS: [f64; 6] = [1.0, 1.5, 2.0, 3.0, 4.0, f64::INFINITY];

fn bernstein(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let g = TorusGrid::new(2, 64)?;
    let count = pick(scale, 5, 50);
    let mut worst = [0.0f64; BERNSTEIN_EXPONENTS.len()];
    for i in 0..count {
        let f = random_smooth_scalar(&g, 1.0, seed.wrapping_add(200 + i as u64))?;
        let b = check_bernstein(&f, &BERNSTEIN_EXPONENTS)?;
        for (ia, &a) in BERNSTEIN_EXPONENTS.iter().enumerate() {
            let c = b
                .upper
                .iter()
                .filter(|u| u.a == a)
                .map(|u| u.constant)
                .chain(b.lower.iter().filter(|l| l.a == a).map(|l| l.constant))
                .fold(0.0, f64::max);
            worst[ia] = worst[ia].max(c);
        }
    }
    Ok(BERNSTEIN_EXPONENTS
        .iter()
        .zip(worst)
        .map(|(a, c)| Check::at_most(2, format!("max constant a={a}"), c, 20.0, format!("{count} fields, all b >= a")))
        .collect())
}

const INTERPOLATION_P: [f64; 4] = [1.5, 2.0, 2.5, 3.0];

fn interpolation(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let g = TorusGrid::new(2, 32)?;
    let count = pick(scale, 100, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(300));
    let mut worst = [0.0f64; INTERPOLATION_P.len()];
    let mut p3_dev = 0.0f64;
    let mut used = 0;
    for _ in 0..count {
        let f = random_smooth_scalar(&g, rng.gen_range(0.0..3.0) + 0.25, rng.gen())?;
        let block = dyadic_block(&f, rng.gen_range(-1..=g.j_max()))?;
        let ratios = interpolation_ratios(&block, &INTERPOLATION_P)?;
        if ratios.iter().any(Option::is_none) {
            continue;
        }
        used += 1;
        for (w, r) in worst.iter_mut().zip(&ratios) {
            *w = w.max(r.unwrap_or(0.0));
        }
        p3_dev = p3_dev.max((ratios[3].unwrap_or(0.0) - 1.0).abs());
    }
    let mut out: Vec<Check> = INTERPOLATION_P
        .iter()
        .zip(worst)
        .map(|(p, w)| Check::at_most(3, format!("max ratio p={p}"), w, 1.0 + 1e-8, format!("{used} blocks")))
        .collect();
    out.push(Check::at_most(3, "p=3 deviation from 1", p3_dev, 1e-12, ""));
    out.push(Check::at_least(3, "non-trivial blocks", used as f64, count as f64, ""));
    Ok(out)
}

fn ceti_mismatch(f: &TorusField, g: &TorusField, m: &Mollifier) -> Result<(f64, Option<TorusField>)> {
    match ceti_commutator(f, g, m) {
        Ok(c) => Ok((c.rel_mismatch, Some(c.commutator))),
        Err(Error::CetiMismatch { rel }) => Ok((rel, None)),
        Err(e) => Err(e),
    }
}

fn ceti(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let g = TorusGrid::new(2, 64)?;
    let count = pick(scale, 10, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(400));
    let mut worst = 0.0f64;
    for _ in 0..count {
        let m = Mollifier::new(&g, rng.gen_range(0.4..0.78))?;
        let f = random_smooth_scalar(&g, rng.gen_range(0.5..2.5), rng.gen())?;
        let h = random_smooth_scalar(&g, rng.gen_range(0.5..2.5), rng.gen())?;
        worst = worst.max(ceti_mismatch(&f, &h, &m)?.0);
    }
    // cos(k·x)² mollified against the product of mollified factors
    let k = [3.0, 1.0];
    let m = Mollifier::new(&g, 0.5)?;
    let f = TorusField::from_fn(g, 1, |x| [(k[0] * x[0] + k[1] * x[1]).cos(), 0.0, 0.0]);
    let (mismatch, comm) = ceti_mismatch(&f, &f, &m)?;
    let hat = |s: f64| -> f64 {
        (0..g.len())
            .map(|i| {
                let y = g.node(i);
                m.kernel[i] * (s * (k[0] * y[0] + k[1] * y[1])).cos()
            })
            .sum::<f64>()
            * g.cell_volume()
    };
    let (h1, h2) = (hat(1.0), hat(2.0));
    let closed = TorusField::from_fn(g, 1, |x| {
        let c = (2.0 * (k[0] * x[0] + k[1] * x[1])).cos();
        [0.5 * (1.0 - h1 * h1) + 0.5 * (h2 - h1 * h1) * c, 0.0, 0.0]
    });
    let closed_err = comm.map_or(f64::INFINITY, |c| c.max_abs_diff(&closed));
    Ok(vec![
        Check::at_most(4, "direct vs decomposed, random pairs", worst, 1e-9, format!("{count} pairs")),
        Check::at_most(4, "direct vs decomposed, single mode", mismatch, 1e-9, ""),
        Check::at_most(4, "single mode vs closed form", closed_err, 1e-9, "k = (3, 1), eps = 0.5"),
    ])
}

/// `0.7 · 2^{-i/2}`: 16:1 over nine values in the full battery.
fn rate_ladder(scale: Scale) -> (TorusGrid, Vec<f64>) {
    let (n, len) = match scale {
        Scale::Quick => (512, 8),
        Scale::Full => (1024, 9),
    };
    let g = TorusGrid::new(2, n).expect("valid grid");
    (g, (0..len).map(|i| 0.7 * 2f64.powf(-(i as f64) / 2.0)).collect())
}

fn mollification(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let (g, ladder) = rate_ladder(scale);
    let planted = vec![1.0; (g.j_max() + 1) as usize];
    let range = format!("n={}, eps {:.3}..{:.4}", g.n(), ladder[0], ladder[ladder.len() - 1]);
    let mut out = Vec::new();
    for alpha in [0.25, 1.0 / 3.0, 0.5] {
        let (f, _) = lacunary_field(&g, &planted, alpha, 2.0, seed)?;
        let spec = BesovSpec::new(alpha, 2.0, Summability::Infinity)?;
        let rates = mollification_rates(&f, &spec, &ladder, 1, Some(alpha))?;
        let slope = rates.difference.slope();
        out.push(Check::at_most(
            5,
            format!("|slope - alpha| at alpha={alpha:.4}"),
            (slope - alpha).abs(),
            0.1,
            format!("slope {slope:.4}, {range}"),
        ));
    }
    Ok(out)
}

fn commutator(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let (g, ladder) = rate_ladder(scale);
    let planted = vec![1.0; (g.j_max() + 1) as usize];
    let mut out = Vec::new();
    for p in [2.0f64, 3.0] {
        let theta = p - 1.0;
        let q = 2.0 * p / (p - 1.0);
        let alpha = 1.0 / p;
        let (f, _) = lacunary_field(&g, &planted, alpha, q, seed.wrapping_add(2))?;
        let slope = commutator_scan(&f, &ladder, theta, p, q)?.slope();
        out.push(Check::at_least(
            6,
            format!("commutator slope p={p}"),
            slope,
            theta * alpha - 0.1,
            format!("theta={theta}, q={q}, alpha={alpha:.4}, n={}", g.n()),
        ));
    }
    Ok(out)
}

fn gamma() -> Result<Vec<Check>> {
    let start = Instant::now();
    let (alpha, theta) = (2.0 / 3.0, 2.0);
    let len = 62;
    let levels: Vec<i64> = (20..=40).collect();
    let ones = vec![1.0; len];
    let (flat, _) = gamma_bound_series(&ones, &ones, alpha, None, theta, &levels)?;
    let (lo, hi) = flat.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), b| (lo.min(b.value), hi.max(b.value)));
    let l1 = GammaKernel::new(alpha)?.l1_norm();
    let limit = l1.powf(theta) * l1;
    let mid = flat[flat.len() / 2].value;
    let decaying: Vec<f64> = (0..len).map(|i| 2f64.powf(-(i as f64 - 1.0) / 8.0)).collect();
    let (dec, fit) = gamma_bound_series(&decaying, &decaying, alpha, None, theta, &levels)?;
    let slope = fit.map_or(f64::NAN, |f| f.slope);
    let monotone = dec.windows(2).filter(|w| w[1].value >= w[0].value).count();
    Ok(vec![
        Check::at_most(7, "d=1 spread max/min - 1", hi / lo - 1.0, 0.05, "N in 20..=40"),
        Check::at_most(7, "d=1 against infinite-sum limit", (mid - limit).abs() / limit, 0.05, "N = 30"),
        Check::at_most(7, "d=2^(-j/8) log2 slope", slope, -1.0 / 16.0, "N in 20..=40"),
        Check::at_most(7, "d=2^(-j/8) non-decreasing steps", monotone as f64, 0.0, ""),
        Check::at_most(7, "runtime seconds", start.elapsed().as_secs_f64(), 1.0, ""),
    ])
}

const STEADY_EPS: [f64; 4] = [0.4, 0.5, 0.6, 0.7];

fn max_abs(xs: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    xs.into_iter().try_fold(0.0f64, |m, x| Ok(m.max(x?.abs())))
}

fn steady() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g2 = TorusGrid::new(2, 64)?;
    let g3 = TorusGrid::new(3, 64)?;
    let tg = taylor_green_2d(&g2)?;
    let abc = abc_flow(&g3, 1.0, 1.0, 1.0)?;
    let eps: Vec<f64> = STEADY_EPS.iter().copied().filter(|&e| e < FRAC_PI_4).collect();
    for (label, v) in [("Taylor-Green", &tg), ("ABC", &abc)] {
        let grid = *v.grid();
        let levels: Vec<i32> = (0..=grid.j_max()).collect();
        let ms = eps.iter().map(|&e| Mollifier::new(&grid, e)).collect::<Result<Vec<_>>>()?;
        let adv = Advection::new(v)?;
        let pi = max_abs(
            levels.iter().map(|&n| adv.energy_lp(n)).chain(levels.iter().map(|&n| energy_flux_lp_direct(v, n))),
        )?;
        out.push(Check::at_most(8, format!("{label} max |energy flux LP|"), pi, 1e-9, "all N, both forms"));
        let em = max_abs(ms.iter().map(|m| adv.energy_moll(m)))?;
        out.push(Check::at_most(8, format!("{label} max |energy flux moll|"), em, 1e-9, format!("eps {eps:?}")));
        if grid.dim() == 3 {
            let forms = levels.iter().map(|&n| helicity_flux_forms(v, n)).collect::<Result<Vec<_>>>()?;
            let hl = max_abs(
                levels
                    .iter()
                    .map(|&n| adv.helicity_lp(n))
                    .chain(forms.iter().flat_map(|f| [Ok(f.divergence_form), Ok(f.lamb_form)])),
            )?;
            out.push(Check::at_most(8, format!("{label} max |helicity flux LP|"), hl, 1e-9, "all N, three forms"));
            let hm = max_abs(ms.iter().map(|m| adv.helicity_moll(m)))?;
            out.push(Check::at_most(8, format!("{label} max |helicity flux moll|"), hm, 1e-9, format!("eps {eps:?}")));
        }
    }
    Ok(out)
}

fn budgets(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut out = Vec::new();
    let g = TorusGrid::new(2, pick(scale, 64, 256))?;
    let (v, _) = random_smooth_field(&g, 4.0, seed.wrapping_add(900))?;
    let s = SimState::from_velocity(&v)?;
    let dt = 0.5 * CFL_SAFETY * g.spacing() / s.max_speed();
    let levels = [2, 3, 4];
    let opts = RunOptions {
        t_final: 1.0,
        dt,
        snapshot_every: None,
        probes: levels.iter().map(|&n| Probe::EnergyLp(n)).collect(),
    };
    let sum = run(&v, &opts, |_| Ok(()))?;
    let rich = richardson_estimate(&v, 1.0, dt)?;
    let n = g.n();
    out.push(Check::at_most(9, format!("2D n={n} energy drift"), sum.energy_drift(), 1e-8, format!("{} steps", sum.steps)));
    out.push(Check::at_most(9, format!("2D n={n} enstrophy drift"), sum.second_drift(), 1e-6, ""));
    let allowed = 10.0 * rich.quadratic_error;
    for b in &sum.probes {
        out.push(Check::at_most(
            9,
            format!("2D n={n} LP budget residual {:?}", b.probe),
            b.residual.abs(),
            allowed,
            format!("10x step-halving error {:.3e}", rich.quadratic_error),
        ));
    }
    let g3 = TorusGrid::new(3, 32)?;
    let abc = abc_flow(&g3, 1.0, 1.0, 1.0)?;
    let s3 = SimState::from_velocity(&abc)?;
    let dt3 = 0.5 * CFL_SAFETY * g3.spacing() / s3.max_speed();
    let sum3 = run(&abc, &RunOptions { t_final: 0.1, dt: dt3, snapshot_every: None, probes: vec![] }, |_| Ok(()))?;
    out.push(Check::at_most(9, "3D n=32 energy drift", sum3.energy_drift(), 1e-7, format!("{} steps", sum3.steps)));
    out.push(Check::at_most(9, "3D n=32 helicity drift", sum3.second_drift(), 1e-6, ""));
    out.push(Check::at_most(9, "runtime seconds", start.elapsed().as_secs_f64(), 300.0, ""));
    Ok(out)
}

fn helicity(scale: Scale, seed: u64) -> Result<Vec<Check>> {
    let g = TorusGrid::new(3, 32)?;
    let count = pick(scale, 3, 20);
    let mut worst = 0.0f64;
    let mut defect = 0.0f64;
    for i in 0..count {
        let (v, _) = random_smooth_field(&g, 2.0, seed.wrapping_add(1000 + i as u64))?;
        for n in 0..=g.j_max() {
            let f = helicity_flux_forms(&v, n)?;
            worst = worst.max(f.rel_diff);
            defect = defect.max(f.triple_identity_defect);
        }
    }
    Ok(vec![
        Check::at_most(10, "divergence vs Lamb form rel diff", worst, 1e-8, format!("{count} fields, all N")),
        Check::at_most(10, "(w x v).w pointwise defect", defect, 1e-12, ""),
    ])
}

fn same(a: &[u8], b: &[u8]) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

fn determinism(seed: u64) -> Result<Vec<Check>> {
    let g2 = TorusGrid::new(2, 64)?;
    let g3 = TorusGrid::new(3, 16)?;
    let planted = vec![1.0; (g2.j_max() + 1) as usize];
    let lac = || lacunary_field(&g2, &planted, 1.0 / 3.0, 2.0, seed).map(|(f, _)| tfld::to_bytes(&f));
    let rsf = || random_smooth_field(&g3, 2.0, seed).map(|(f, _)| tfld::to_bytes(&f));
    let rss = || random_smooth_scalar(&g2, 1.0, seed).map(|f| tfld::to_bytes(&f));
    let fixed = || -> Result<Vec<u8>> {
        let mut b = tfld::to_bytes(&taylor_green_2d(&g2)?);
        b.extend(tfld::to_bytes(&abc_flow(&g3, 1.0, 0.7, 0.3)?));
        b.extend(tfld::to_bytes(&single_mode(&g3, [1, 2, 0], [2.0, -1.0, 0.5])?));
        Ok(b)
    };
    let sim = || -> Result<Vec<u8>> {
        let (v, _) = random_smooth_field(&TorusGrid::new(2, 32)?, 3.0, seed)?;
        let opts = RunOptions { t_final: 0.05, dt: 0.01, snapshot_every: None, probes: vec![Probe::EnergyLp(2)] };
        let sum = run(&v, &opts, |_| Ok(()))?;
        let mut b = tfld::to_bytes(&sum.final_state.velocity());
        b.extend(sum.budgets_csv().into_bytes());
        b.extend(serde_json::to_vec(&sum.probes)?);
        Ok(b)
    };
    let scan = || -> Result<Vec<u8>> {
        let (v, _) = random_smooth_field(&g3, 2.0, seed)?;
        Ok(serde_json::to_vec(&level_scan(&v, FluxKind::HelicityLp, &[0, 1, 2])?)?)
    };
    Ok(vec![
        Check::at_most(11, "lacunary generator", same(&lac()?, &lac()?), 0.0, ""),
        Check::at_most(11, "random solenoidal generator", same(&rsf()?, &rsf()?), 0.0, ""),
        Check::at_most(11, "random scalar generator", same(&rss()?, &rss()?), 0.0, ""),
        Check::at_most(11, "closed-form generators", same(&fixed()?, &fixed()?), 0.0, ""),
        Check::at_most(11, "solver run", same(&sim()?, &sim()?), 0.0, ""),
        Check::at_most(11, "flux scan", same(&scan()?, &scan()?), 0.0, ""),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        for id in [7, 8, 11] {
            for c in run_criterion(id, Scale::Quick, DEFAULT_SEED) {
                assert!(c.passed, "{c}");
            }
        }
    }

    #[test]
    fn check_display_and_relation() {
        let c = Check::at_least(6, "slope", 0.5, 0.4, "");
        assert!(c.passed);
        assert!(c.to_string().starts_with("[PASS]"));
        assert!(!Check::at_most(1, "x", f64::NAN, 1.0, "").passed);
    }
}
