//! Pseudo-spectral incompressible Euler integrator: vorticity form in 2D,
//! projected velocity form in 3D, classical RK4, 2/3-rule dealiasing.
//!
//! Products of band-limited fields are formed on the native grid; all
//! aliases land outside the band and are discarded, so the retained
//! nonlinear term is exact and the semi-discrete system conserves energy
//! (and enstrophy or helicity) exactly.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::TorusField;
use crate::flux::{filtered_energy, filtered_helicity, mollified_energy, mollified_helicity, Advection};
use crate::grid::TorusGrid;
use crate::mollify::Mollifier;
use crate::norms::require_divergence_free;
use crate::ops::curl;

/// `dt ≤ CFL_SAFETY · h / max|v|`.
pub const CFL_SAFETY: f64 = 0.5;

type Spectrum = Vec<Vec<Complex64>>;

/// Solver state: spectral vorticity (2D) or spectral velocity (3D).
#[derive(Debug, Clone)]
pub struct SimState {
    pub grid: TorusGrid,
    pub t: f64,
    pub step: usize,
    /// Spatial mean of the velocity (2D only; conserved).
    pub mean: [f64; 3],
    pub state: Spectrum,
}

impl SimState {
    /// Dealiases `v` and converts it to the prognostic variable.
    pub fn from_velocity(v: &TorusField) -> Result<Self> {
        let g = *v.grid();
        if v.components() != g.dim() {
            return Err(Error::Components { expected: g.dim(), found: v.components() });
        }
        require_divergence_free(v)?;
        let mut mean = [0.0; 3];
        for (a, m) in mean.iter_mut().enumerate().take(g.dim()) {
            *m = v.spectral_component(a)[0].re;
        }
        let mut state: Spectrum = if g.dim() == 2 {
            curl(v)?.spectral().to_vec()
        } else {
            v.spectral().to_vec()
        };
        for comp in state.iter_mut() {
            for (idx, z) in comp.iter_mut().enumerate() {
                if !g.in_band(idx) {
                    *z = Complex64::default();
                }
            }
        }
        Ok(Self { grid: g, t: 0.0, step: 0, mean, state })
    }

    fn velocity_spectrum(&self) -> Spectrum {
        let g = &self.grid;
        if g.dim() == 3 {
            return self.state.clone();
        }
        let w = &self.state[0];
        let mut u = vec![Complex64::default(); g.len()];
        let mut v = vec![Complex64::default(); g.len()];
        for idx in 0..g.len() {
            let k2 = g.mode_norm2(idx);
            if k2 == 0 {
                continue;
            }
            let k = g.mode(idx);
            let psi = w[idx] / k2 as f64;
            u[idx] = Complex64::new(0.0, k[1] as f64) * psi;
            v[idx] = Complex64::new(0.0, -(k[0] as f64)) * psi;
        }
        u[0] = Complex64::new(self.mean[0], 0.0);
        v[0] = Complex64::new(self.mean[1], 0.0);
        vec![u, v]
    }

    pub fn velocity(&self) -> TorusField {
        TorusField::from_spectral(self.grid, self.velocity_spectrum())
    }

    /// Scalar vorticity in 2D, the curl in 3D.
    pub fn vorticity(&self) -> TorusField {
        if self.grid.dim() == 2 {
            TorusField::from_spectral(self.grid, self.state.clone())
        } else {
            curl(&self.velocity()).expect("3D velocity")
        }
    }

    /// `½∫|v|²`.
    pub fn energy(&self) -> f64 {
        0.5 * spectral_inner(&self.grid, &self.velocity_spectrum(), &self.velocity_spectrum())
    }

    /// `½∫ω²` in 2D, `∫v·ω` in 3D.
    pub fn second_invariant(&self) -> f64 {
        if self.grid.dim() == 2 {
            0.5 * spectral_inner(&self.grid, &self.state, &self.state)
        } else {
            let w = self.vorticity();
            spectral_inner(&self.grid, &self.state, w.spectral())
        }
    }

    pub fn is_finite(&self) -> bool {
        self.state.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// True when every coefficient outside the 2/3 band is exactly zero.
    pub fn is_dealiased(&self) -> bool {
        self.state
            .iter()
            .all(|c| c.iter().enumerate().all(|(idx, z)| self.grid.in_band(idx) || *z == Complex64::default()))
    }

    /// `max |v|` over the nodes.
    pub fn max_speed(&self) -> f64 {
        self.velocity().max_magnitude()
    }
}

/// `∫ a · b` by Parseval for the normalized forward transform.
fn spectral_inner(grid: &TorusGrid, a: &Spectrum, b: &[Vec<Complex64>]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x.iter().zip(y).map(|(p, q)| (p * q.conj()).re).sum::<f64>();
    }
    s * grid.volume()
}

/// Precomputed wavenumbers and band mask.
struct Operator {
    grid: TorusGrid,
    k: Vec<[f64; 3]>,
    band: Vec<bool>,
}

impl Operator {
    fn new(grid: &TorusGrid) -> Self {
        let nyq = -(grid.n() as i64) / 2;
        let k = (0..grid.len())
            .map(|idx| {
                let m = grid.mode(idx);
                let f = |c: i64| if c == nyq { 0.0 } else { c as f64 };
                [f(m[0]), f(m[1]), f(m[2])]
            })
            .collect();
        let band = (0..grid.len()).map(|idx| grid.in_band(idx)).collect();
        Self { grid: *grid, k, band }
    }

    fn deriv(&self, s: &[Complex64], axis: usize) -> Vec<f64> {
        let d: Vec<Complex64> = s.iter().zip(&self.k).map(|(z, k)| Complex64::new(0.0, k[axis]) * z).collect();
        fft::inverse_real(&self.grid, &d)
    }

    fn truncate(&self, mut s: Vec<Complex64>) -> Vec<Complex64> {
        for (z, &b) in s.iter_mut().zip(&self.band) {
            if !b {
                *z = Complex64::default();
            }
        }
        s[0] = Complex64::default();
        s
    }

    /// Time derivative of the prognostic spectrum.
    fn rhs(&self, st: &SimState, spec: &Spectrum) -> Spectrum {
        let g = &self.grid;
        let probe = SimState { state: spec.clone(), ..st.clone() };
        let vel = probe.velocity_spectrum();
        let v: Vec<Vec<f64>> = vel.par_iter().map(|c| fft::inverse_real(g, c)).collect();
        if g.dim() == 2 {
            let dw: Vec<Vec<f64>> = (0..2).into_par_iter().map(|a| self.deriv(&spec[0], a)).collect();
            let adv: Vec<f64> = (0..g.len()).map(|x| v[0][x] * dw[0][x] + v[1][x] * dw[1][x]).collect();
            let n = self.truncate(fft::forward_real(g, &adv));
            vec![n.into_iter().map(|z| -z).collect()]
        } else {
            let adv: Vec<Vec<Complex64>> = (0..3)
                .into_par_iter()
                .map(|i| {
                    let mut acc = vec![0.0; g.len()];
                    for j in 0..3 {
                        let d = self.deriv(&spec[i], j);
                        for x in 0..g.len() {
                            acc[x] += v[j][x] * d[x];
                        }
                    }
                    self.truncate(fft::forward_real(g, &acc))
                })
                .collect();
            let mut out = vec![vec![Complex64::default(); g.len()]; 3];
            for idx in 0..g.len() {
                let k = self.k[idx];
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                let mut kn = Complex64::default();
                if k2 > 0.0 {
                    for a in 0..3 {
                        kn += adv[a][idx] * k[a];
                    }
                    kn /= k2;
                }
                for a in 0..3 {
                    out[a][idx] = -(adv[a][idx] - kn * k[a]);
                }
            }
            out
        }
    }
}

fn axpy(y: &Spectrum, a: f64, x: &Spectrum) -> Spectrum {
    y.iter().zip(x).map(|(yc, xc)| yc.iter().zip(xc).map(|(p, q)| p + q * a).collect()).collect()
}

fn cfl_bound(s: &SimState) -> f64 {
    let speed = s.max_speed();
    if speed == 0.0 {
        f64::INFINITY
    } else {
        CFL_SAFETY * s.grid.spacing() / speed
    }
}

/// One RK4 step; the four stage states are passed to `observe`.
fn step_observed(op: &Operator, s: &SimState, dt: f64, mut observe: impl FnMut(&SimState, usize)) -> Result<SimState> {
    let bound = cfl_bound(s);
    if dt > bound {
        return Err(Error::Cfl { step: s.step, dt, bound, suggested: 0.9 * bound });
    }
    let stage = |spec: Spectrum, t: f64| SimState { state: spec, t, ..s.clone() };
    let y1 = s.state.clone();
    observe(s, 0);
    let k1 = op.rhs(s, &y1);
    let y2 = axpy(&y1, 0.5 * dt, &k1);
    let s2 = stage(y2, s.t + 0.5 * dt);
    observe(&s2, 1);
    let k2 = op.rhs(s, &s2.state);
    let y3 = axpy(&y1, 0.5 * dt, &k2);
    let s3 = stage(y3, s.t + 0.5 * dt);
    observe(&s3, 2);
    let k3 = op.rhs(s, &s3.state);
    let y4 = axpy(&y1, dt, &k3);
    let s4 = stage(y4, s.t + dt);
    observe(&s4, 3);
    let k4 = op.rhs(s, &s4.state);
    let mut next = y1;
    for c in 0..next.len() {
        for idx in 0..next[c].len() {
            next[c][idx] += (k1[c][idx] + (k2[c][idx] + k3[c][idx]) * 2.0 + k4[c][idx]) * (dt / 6.0);
        }
    }
    let out = SimState { state: next, t: s.t + dt, step: s.step + 1, ..s.clone() };
    if !out.is_finite() {
        return Err(Error::NonFinite { step: out.step });
    }
    Ok(out)
}

/// Classical RK4 step with a CFL check.
pub fn step(s: &SimState, dt: f64) -> Result<SimState> {
    step_observed(&Operator::new(&s.grid), s, dt, |_, _| {})
}

/// Quantity tracked along a run together with its exact rate of change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Probe {
    /// `½‖S_N v‖²`, rate `−Π_N`.
    EnergyLp(i32),
    /// `½‖v^ε‖²`, rate `+energy_flux_moll`.
    EnergyMoll(f64),
    /// `∫S_N v·S_N ω`, rate `+helicity_flux_lp`.
    HelicityLp(i32),
    /// `∫v^ε·ω^ε`, rate `−helicity_flux_moll`.
    HelicityMoll(f64),
}

struct ProbeEval {
    probe: Probe,
    mollifier: Option<Mollifier>,
}

impl ProbeEval {
    fn new(grid: &TorusGrid, probe: Probe) -> Result<Self> {
        let mollifier = match probe {
            Probe::EnergyMoll(e) | Probe::HelicityMoll(e) => Some(Mollifier::new(grid, e)?),
            _ => None,
        };
        Ok(Self { probe, mollifier })
    }

    fn quantity(&self, v: &TorusField) -> Result<f64> {
        match (self.probe, &self.mollifier) {
            (Probe::EnergyLp(n), _) => filtered_energy(v, n),
            (Probe::HelicityLp(n), _) => filtered_helicity(v, n),
            (Probe::EnergyMoll(_), Some(m)) => mollified_energy(v, m),
            (Probe::HelicityMoll(_), Some(m)) => mollified_helicity(v, m),
            _ => unreachable!("mollifier built in new"),
        }
    }

    fn rate(&self, a: &Advection) -> Result<f64> {
        match (self.probe, &self.mollifier) {
            (Probe::EnergyLp(n), _) => Ok(-a.energy_lp(n)?),
            (Probe::HelicityLp(n), _) => a.helicity_lp(n),
            (Probe::EnergyMoll(_), Some(m)) => a.energy_moll(m),
            (Probe::HelicityMoll(_), Some(m)) => Ok(-a.helicity_moll(m)?),
            _ => unreachable!("mollifier built in new"),
        }
    }
}

/// Closure of `Q(T) − Q(0) = ∫ rate dt` for one probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeBudget {
    pub probe: Probe,
    pub initial: f64,
    pub final_value: f64,
    /// Rate integrated with the RK4 stage weights.
    pub integral: f64,
    /// `final − initial − integral`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    /// Enstrophy in 2D, helicity in 3D.
    pub second: f64,
    /// `dt · max|v| / h` for the step that starts here.
    pub cfl: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub t_final: f64,
    /// Upper bound; the step actually used divides `t_final` evenly.
    pub dt: f64,
    /// Snapshot every k steps; `None` keeps only the first and last state.
    pub snapshot_every: Option<usize>,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub budgets: Vec<BudgetRow>,
    pub probes: Vec<ProbeBudget>,
    pub snapshots: usize,
    pub final_state: SimState,
}

impl RunSummary {
    /// `|E(T) − E(0)| / E(0)` (zero for the zero field).
    pub fn energy_drift(&self) -> f64 {
        rel_drift(self.budgets.iter().map(|b| b.energy))
    }

    pub fn second_drift(&self) -> f64 {
        rel_drift(self.budgets.iter().map(|b| b.second))
    }

    /// Rows `step,t,energy,enstrophy_or_helicity`.
    pub fn budgets_csv(&self) -> String {
        let second = if self.final_state.grid.dim() == 2 { "enstrophy" } else { "helicity" };
        let mut out = format!("step,t,energy,{second}\n");
        for b in &self.budgets {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", b.step, b.t, b.energy, b.second));
        }
        out
    }
}

fn rel_drift(mut xs: impl Iterator<Item = f64>) -> f64 {
    let first = xs.next().unwrap_or(0.0);
    let last = xs.last().unwrap_or(first);
    if first == 0.0 {
        (last - first).abs()
    } else {
        ((last - first) / first).abs()
    }
}

/// Integrates from `initial` to `t_final`, handing snapshots to `on_snapshot`
/// as they are produced.
pub fn run(
    initial: &TorusField,
    opts: &RunOptions,
    mut on_snapshot: impl FnMut(&SimState) -> Result<()>,
) -> Result<RunSummary> {
    if !(opts.t_final > 0.0 && opts.dt > 0.0) {
        return Err(Error::Domain(format!("need t_final > 0 and dt > 0, got {} and {}", opts.t_final, opts.dt)));
    }
    if opts.snapshot_every == Some(0) {
        return Err(Error::Domain("snapshot_every must be at least 1".into()));
    }
    let mut s = SimState::from_velocity(initial)?;
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = opts.t_final / steps as f64;
    let op = Operator::new(&s.grid);
    let evals = opts.probes.iter().map(|&p| ProbeEval::new(&s.grid, p)).collect::<Result<Vec<_>>>()?;
    let v0 = s.velocity();
    let initial_q = evals.iter().map(|e| e.quantity(&v0)).collect::<Result<Vec<_>>>()?;
    let mut integrals = vec![0.0; evals.len()];
    let mut budgets = Vec::with_capacity(steps + 1);
    let mut snapshots = 1;
    on_snapshot(&s)?;
    const WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];
    for _ in 0..steps {
        budgets.push(BudgetRow {
            step: s.step,
            t: s.t,
            energy: s.energy(),
            second: s.second_invariant(),
            cfl: dt / cfl_bound(&s) * CFL_SAFETY,
        });
        let mut err: Option<Error> = None;
        let next = step_observed(&op, &s, dt, |stage, i| {
            if evals.is_empty() || err.is_some() {
                return;
            }
            let rates: Result<Vec<f64>> =
                Advection::new(&stage.velocity()).and_then(|a| evals.iter().map(|e| e.rate(&a)).collect());
            match rates {
                Ok(r) => {
                    for (acc, x) in integrals.iter_mut().zip(r) {
                        *acc += WEIGHTS[i] * dt / 6.0 * x;
                    }
                }
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        s = next;
        let last = s.step == steps;
        if opts.snapshot_every.is_some_and(|k| s.step % k == 0) || last {
            on_snapshot(&s)?;
            snapshots += 1;
        }
    }
    budgets.push(BudgetRow { step: s.step, t: s.t, energy: s.energy(), second: s.second_invariant(), cfl: f64::NAN });
    let vt = s.velocity();
    let probes = evals
        .iter()
        .zip(initial_q)
        .zip(integrals)
        .map(|((e, q0), integral)| {
            let q1 = e.quantity(&vt)?;
            Ok(ProbeBudget { probe: e.probe, initial: q0, final_value: q1, integral, residual: q1 - q0 - integral })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary { steps, dt, budgets, probes, snapshots, final_state: s })
}

/// [`run`] keeping every snapshot in memory.
pub fn run_collect(initial: &TorusField, opts: &RunOptions) -> Result<(Vec<SimState>, RunSummary)> {
    let mut snaps = Vec::new();
    let summary = run(initial, opts, |s| {
        snaps.push(s.clone());
        Ok(())
    })?;
    Ok((snaps, summary))
}

/// Step-halving estimate of the time-discretization error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Richardson {
    /// `‖v_dt(T) − v_{dt/2}(T)‖₂ · 16/15`.
    pub state_error: f64,
    /// `state_error · ‖v(T)‖₂`, the matching error scale for quadratic budgets.
    pub quadratic_error: f64,
    pub energy_drift_coarse: f64,
    pub energy_drift_fine: f64,
}

impl Richardson {
    /// `log2` of the drift ratio between the two step sizes.
    pub fn drift_order(&self) -> f64 {
        (self.energy_drift_coarse / self.energy_drift_fine).log2()
    }
}

pub fn richardson_estimate(initial: &TorusField, t_final: f64, dt: f64) -> Result<Richardson> {
    let base = RunOptions { t_final, dt, snapshot_every: None, probes: vec![] };
    let fine_opts = RunOptions { dt: dt / 2.0, ..base.clone() };
    let (coarse, fine) = rayon::join(|| run(initial, &base, |_| Ok(())), || run(initial, &fine_opts, |_| Ok(())));
    let (coarse, fine) = (coarse?, fine?);
    let va = coarse.final_state.velocity();
    let vb = fine.final_state.velocity();
    let state_error = va.sub(&vb)?.norm2_sq().sqrt() * 16.0 / 15.0;
    Ok(Richardson {
        state_error,
        quadratic_error: state_error * vb.norm2_sq().sqrt(),
        energy_drift_coarse: coarse.energy_drift(),
        energy_drift_fine: fine.energy_drift(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{abc_flow, random_smooth_field, taylor_green_2d};

    #[test]
    fn taylor_green_is_steady() {
        let g = TorusGrid::new(2, 32).unwrap();
        let v = taylor_green_2d(&g).unwrap();
        let opts = RunOptions { t_final: 1.0, dt: 0.05, snapshot_every: None, probes: vec![] };
        let (snaps, sum) = run_collect(&v, &opts).unwrap();
        assert_eq!(snaps.len(), 2);
        let rel = sum.final_state.velocity().rel_l2_diff(&v);
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = TorusGrid::new(3, 16).unwrap();
        let z = TorusField::zeros(g, 3);
        let s = step(&SimState::from_velocity(&z).unwrap(), 0.1).unwrap();
        assert!(s.velocity().max_abs() == 0.0);
    }

    #[test]
    fn cfl_violation_suggests_dt() {
        let g = TorusGrid::new(2, 32).unwrap();
        let v = taylor_green_2d(&g).unwrap();
        match step(&SimState::from_velocity(&v).unwrap(), 1.0) {
            Err(Error::Cfl { suggested, bound, .. }) => assert!(suggested < bound),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn abc_conserves_and_stays_solenoidal() {
        let g = TorusGrid::new(3, 16).unwrap();
        let (pert, _) = random_smooth_field(&g, 3.0, 9).unwrap();
        let v = abc_flow(&g, 1.0, 1.0, 1.0).unwrap().axpby(1.0, &pert, 0.3).unwrap();
        let mut s = SimState::from_velocity(&v).unwrap();
        for _ in 0..5 {
            s = step(&s, 0.02).unwrap();
            assert!(s.velocity().divergence_defect() < 1e-10);
            assert!(s.is_dealiased());
        }
    }

    #[test]
    fn probes_close_budgets() {
        let g = TorusGrid::new(2, 32).unwrap();
        let (v, _) = random_smooth_field(&g, 4.0, 1).unwrap();
        let opts = RunOptions { t_final: 0.2, dt: 0.01, snapshot_every: Some(5), probes: vec![Probe::EnergyLp(1), Probe::EnergyLp(2)] };
        let (snaps, sum) = run_collect(&v, &opts).unwrap();
        assert_eq!(snaps.len(), 5);
        for p in &sum.probes {
            assert!(p.residual.abs() < 1e-8 * p.initial.abs().max(1.0), "{p:?}");
        }
        assert!(sum.energy_drift() < 1e-8);
    }
}
