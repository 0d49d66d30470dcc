//! Divergence-free test fields: exact steady solutions, single modes and
//! random-phase fields with a planted per-scale sequence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TorusField;
use crate::grid::TorusGrid;
use crate::norms::{besov_norm, BesovReport, BesovSpec, Summability};

/// Rescale passes allowed to hit planted targets.
const MAX_RESCALES: usize = 5;
/// Accepted relative mismatch between planted and measured `d_j`.
pub const PLANT_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TaylorGreen,
    Abc,
    SingleMode,
    Lacunary,
    RandomSmooth,
}

/// Provenance of a generated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCertificate {
    pub kind: GeneratorKind,
    pub grid: TorusGrid,
    pub planted_alpha: Option<f64>,
    pub planted_dj: Option<Vec<f64>>,
    pub p_target: Option<f64>,
    pub decay_rate: Option<f64>,
    pub seed: u64,
    /// Measured report in the planting gauge.
    pub norms_at_build: Option<BesovReport>,
    /// Rescale passes used by the planting loop.
    pub rescale_passes: usize,
}

impl GeneratorCertificate {
    fn plain(kind: GeneratorKind, grid: TorusGrid) -> Self {
        Self {
            kind,
            grid,
            planted_alpha: None,
            planted_dj: None,
            p_target: None,
            decay_rate: None,
            seed: 0,
            norms_at_build: None,
            rescale_passes: 0,
        }
    }
}

fn require_dim(grid: &TorusGrid, dim: usize) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::Domain(format!("generator needs dim = {dim}, grid has {}", grid.dim())));
    }
    Ok(())
}

/// `(sin x cos y, −cos x sin y)`.
pub fn taylor_green_2d(grid: &TorusGrid) -> Result<TorusField> {
    require_dim(grid, 2)?;
    Ok(TorusField::from_fn(*grid, 2, |x| {
        [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
    }))
}

/// `(A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)`; `curl v = v`.
pub fn abc_flow(grid: &TorusGrid, a: f64, b: f64, c: f64) -> Result<TorusField> {
    require_dim(grid, 3)?;
    Ok(TorusField::from_fn(*grid, 3, |x| {
        [
            a * x[2].sin() + c * x[1].cos(),
            b * x[0].sin() + a * x[2].cos(),
            c * x[1].sin() + b * x[0].cos(),
        ]
    }))
}

/// `amplitude · cos(k·x)`; requires `amplitude · k = 0`.
pub fn single_mode(grid: &TorusGrid, k: [i64; 3], amplitude: [f64; 3]) -> Result<TorusField> {
    let dim = grid.dim();
    let dot: f64 = (0..dim).map(|a| amplitude[a] * k[a] as f64).sum();
    let scale = (0..dim).map(|a| amplitude[a].abs()).fold(0.0, f64::max) * (grid.n() as f64);
    if dot.abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::NotDivergenceFree { defect: dot.abs() });
    }
    let half = grid.n() as i64 / 2;
    if (0..dim).any(|a| k[a].abs() >= half) {
        return Err(Error::OutOfRange {
            what: "wavevector",
            detail: format!("{k:?} beyond Nyquist {half}"),
        });
    }
    Ok(TorusField::from_fn(*grid, dim, |x| {
        let phase: f64 = (0..dim).map(|a| k[a] as f64 * x[a]).sum();
        let c = phase.cos();
        [amplitude[0] * c, amplitude[1] * c, amplitude[2] * c]
    }))
}

/// True for exactly one of `k`, `−k` (and false for `k = 0`).
fn is_canonical(k: [i64; 3]) -> bool {
    for &c in &k {
        if c != 0 {
            return c > 0;
        }
    }
    false
}

/// Unit vector orthogonal to `k`: `k⊥` in 2D, a random projection in 3D.
fn solenoidal_direction(k: [i64; 3], dim: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let k2 = kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2];
    if dim == 2 {
        let r = k2.sqrt();
        return [-kf[1] / r, kf[0] / r, 0.0];
    }
    loop {
        let u: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let s = (u[0] * kf[0] + u[1] * kf[1] + u[2] * kf[2]) / k2;
        let w = [u[0] - s * kf[0], u[1] - s * kf[1], u[2] - s * kf[2]];
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if norm > 1e-3 {
            return [w[0] / norm, w[1] / norm, w[2] / norm];
        }
    }
}

/// Spectrum with coefficient `amp · e^{iθ} · dir` at each canonical mode and
/// its conjugate at `−k`.
fn place_modes(
    grid: &TorusGrid,
    modes: &[usize],
    amp: impl Fn(usize) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Complex64>> {
    let dim = grid.dim();
    let mut spec = vec![vec![Complex64::default(); grid.len()]; dim];
    for &idx in modes {
        let k = grid.mode(idx);
        let theta = rng.gen::<f64>() * 2.0 * PI;
        let dir = solenoidal_direction(k, dim, rng);
        let z = Complex64::from_polar(amp(idx), theta);
        let conj = grid.conjugate_index(idx);
        for a in 0..dim {
            spec[a][idx] = z * dir[a];
            spec[a][conj] = z.conj() * dir[a];
        }
    }
    spec
}

/// Canonical lattice modes with `lo ≤ |k| ≤ hi`, in index order.
fn annulus(grid: &TorusGrid, lo: f64, hi: f64) -> Vec<usize> {
    let half = grid.n() as i64 / 2;
    (0..grid.len())
        .filter(|&idx| {
            let k = grid.mode(idx);
            if !is_canonical(k) || k.iter().any(|c| c.abs() >= half) {
                return false;
            }
            let r = (grid.mode_norm2(idx) as f64).sqrt();
            r >= lo && r <= hi
        })
        .collect()
}

/// Shell `j` occupies `4/3·2^j ≤ |k| ≤ 3/2·2^j`, where `φ(2^{-j}·) = 1` and
/// every other block multiplier vanishes.
fn shell_modes(grid: &TorusGrid, j: i32) -> Vec<usize> {
    let s = 2f64.powi(j);
    annulus(grid, 4.0 / 3.0 * s * (1.0 - 1e-12), 1.5 * s * (1.0 + 1e-12))
}

/// Random-phase field whose block `j` is a single shell, with
/// `2^{jα}‖Δ_j v‖_{L^p} = planted_dj[j]` for `j = 0, 1, ...`.
pub fn lacunary_field(
    grid: &TorusGrid,
    planted_dj: &[f64],
    alpha: f64,
    p_target: f64,
    seed: u64,
) -> Result<(TorusField, GeneratorCertificate)> {
    let j_max = grid.j_max();
    if planted_dj.len() > (j_max + 1) as usize {
        return Err(Error::OutOfRange {
            what: "planted sequence",
            detail: format!("{} entries, at most {} (j = 0..={j_max})", planted_dj.len(), j_max + 1),
        });
    }
    if !(p_target >= 2.0 && p_target.is_finite()) {
        return Err(Error::OutOfRange { what: "p_target", detail: format!("{p_target} not in [2, inf)") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shells: Vec<(i32, TorusField, f64)> = Vec::new();
    for (i, &target) in planted_dj.iter().enumerate() {
        let j = i as i32;
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::Unachievable { j, reason: format!("target {target} is not a finite non-negative number") });
        }
        if target == 0.0 {
            continue;
        }
        let modes = shell_modes(grid, j);
        if modes.is_empty() {
            return Err(Error::Unachievable { j, reason: "no lattice modes in the shell".into() });
        }
        let spec = place_modes(grid, &modes, |_| 1.0, &mut rng);
        shells.push((j, TorusField::from_spectral(*grid, spec), target));
    }
    let spec = BesovSpec::new(alpha, p_target, Summability::CNat)?;
    let compose = |shells: &[(i32, TorusField, f64)]| -> Result<TorusField> {
        let mut acc = TorusField::zeros(*grid, grid.dim());
        for (_, s, _) in shells {
            acc = acc.add(s)?;
        }
        Ok(acc)
    };
    let mut field = compose(&shells)?;
    let mut report = besov_norm(&field, &spec)?;
    let mut passes = 0;
    loop {
        let worst = shells
            .iter()
            .map(|(j, _, t)| (report.d(*j) / t - 1.0).abs())
            .fold(0.0, f64::max);
        if worst <= 1e-3 * PLANT_TOL {
            break;
        }
        if passes == MAX_RESCALES {
            let (j, _, t) = shells
                .iter()
                .max_by(|a, b| {
                    let ea = (report.d(a.0) / a.2 - 1.0).abs();
                    let eb = (report.d(b.0) / b.2 - 1.0).abs();
                    ea.total_cmp(&eb)
                })
                .expect("non-empty");
            if worst > PLANT_TOL {
                return Err(Error::Unachievable {
                    j: *j,
                    reason: format!("measured {} vs target {t} after {MAX_RESCALES} rescales", report.d(*j)),
                });
            }
            break;
        }
        for (j, s, t) in shells.iter_mut() {
            let d = report.d(*j);
            if d == 0.0 {
                return Err(Error::Unachievable { j: *j, reason: "shell measures zero".into() });
            }
            *s = s.scale(*t / d);
        }
        field = compose(&shells)?;
        report = besov_norm(&field, &spec)?;
        passes += 1;
    }
    let cert = GeneratorCertificate {
        kind: GeneratorKind::Lacunary,
        grid: *grid,
        planted_alpha: Some(alpha),
        planted_dj: Some(planted_dj.to_vec()),
        p_target: Some(p_target),
        decay_rate: None,
        seed,
        norms_at_build: Some(report),
        rescale_passes: passes,
    };
    Ok((field, cert))
}

/// Re-measures a certified field in its planting gauge.
pub fn remeasure(field: &TorusField, cert: &GeneratorCertificate) -> Result<Option<BesovReport>> {
    match (&cert.norms_at_build, cert.planted_alpha, cert.p_target) {
        (Some(r), Some(_), Some(_)) => Ok(Some(besov_norm(field, &r.spec)?)),
        _ => Ok(None),
    }
}

/// Divergence-free field with `|v̂(k)| ∝ (1+|k|)^{-decay}` on the dealiased
/// band, random phases, normalized to unit mean square.
pub fn random_smooth_field(
    grid: &TorusGrid,
    decay_rate: f64,
    seed: u64,
) -> Result<(TorusField, GeneratorCertificate)> {
    if !(decay_rate > 1.0) {
        return Err(Error::OutOfRange { what: "decay rate", detail: format!("{decay_rate} must exceed 1") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<usize> = (0..grid.len())
        .filter(|&idx| grid.in_band(idx) && is_canonical(grid.mode(idx)))
        .collect();
    let spec = place_modes(
        grid,
        &modes,
        |idx| (1.0 + (grid.mode_norm2(idx) as f64).sqrt()).powf(-decay_rate),
        &mut rng,
    );
    let raw = TorusField::from_spectral(*grid, spec);
    let ms = raw.norm2_sq() / grid.volume();
    let field = raw.scale(1.0 / ms.sqrt());
    let mut cert = GeneratorCertificate::plain(GeneratorKind::RandomSmooth, *grid);
    cert.decay_rate = Some(decay_rate);
    cert.seed = seed;
    Ok((field, cert))
}

/// Random scalar field on the dealiased band with the same spectral law.
pub fn random_smooth_scalar(grid: &TorusGrid, decay_rate: f64, seed: u64) -> Result<TorusField> {
    if !(decay_rate > 0.0) {
        return Err(Error::OutOfRange { what: "decay rate", detail: format!("{decay_rate} must be positive") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::default(); grid.len()];
    for idx in 0..grid.len() {
        let k = grid.mode(idx);
        if !grid.in_band(idx) || !is_canonical(k) {
            continue;
        }
        let amp = (1.0 + (grid.mode_norm2(idx) as f64).sqrt()).powf(-decay_rate);
        let z = Complex64::from_polar(amp, rng.gen::<f64>() * 2.0 * PI);
        spec[idx] = z;
        spec[grid.conjugate_index(idx)] = z.conj();
    }
    Ok(TorusField::from_spectral(*grid, vec![spec]))
}

pub fn taylor_green_certificate(grid: &TorusGrid) -> GeneratorCertificate {
    GeneratorCertificate::plain(GeneratorKind::TaylorGreen, *grid)
}

pub fn abc_certificate(grid: &TorusGrid) -> GeneratorCertificate {
    GeneratorCertificate::plain(GeneratorKind::Abc, *grid)
}

pub fn single_mode_certificate(grid: &TorusGrid) -> GeneratorCertificate {
    GeneratorCertificate::plain(GeneratorKind::SingleMode, *grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{cnat_tail_diagnostic, tail_slope};
    use crate::ops::{curl, leray_project};
    use crate::partition::dyadic_block;

    #[test]
    fn abc_energy_and_helicity() {
        let g = TorusGrid::new(3, 16).unwrap();
        let v = abc_flow(&g, 1.0, 0.0, 0.0).unwrap();
        assert!((v.norm2_sq() - (2.0 * PI).powi(3)).abs() < 1e-10);
        let v = abc_flow(&g, 1.0, 1.0, 1.0).unwrap();
        let w = curl(&v).unwrap();
        assert!((w.inner(&v).unwrap() - 3.0 * (2.0 * PI).powi(3)).abs() < 1e-9);
        let v = abc_flow(&g, 0.3, -1.2, 2.0).unwrap();
        assert!(curl(&v).unwrap().max_abs_diff(&v) < 1e-12);
        assert!(v.divergence_defect() < 1e-12);
    }

    #[test]
    fn single_mode_checks_solenoidality() {
        let g = TorusGrid::new(2, 32).unwrap();
        assert!(single_mode(&g, [1, 2, 0], [2.0, -1.0, 0.0]).is_ok());
        assert!(matches!(single_mode(&g, [1, 2, 0], [1.0, 1.0, 0.0]), Err(Error::NotDivergenceFree { .. })));
    }

    #[test]
    fn lacunary_reads_back() {
        let g = TorusGrid::new(2, 128).unwrap();
        let planted: Vec<f64> = (0..=g.j_max()).map(|j| 2f64.powf(-j as f64 / 4.0)).collect();
        let (v, cert) = lacunary_field(&g, &planted, 1.0 / 3.0, 3.0, 7).unwrap();
        assert!(v.divergence_defect() < 1e-10);
        let r = cert.norms_at_build.clone().unwrap();
        for j in 1..=g.j_resolved() {
            assert!((r.d(j) / planted[j as usize] - 1.0).abs() < PLANT_TOL);
        }
        let t = cnat_tail_diagnostic(&r).unwrap();
        assert!((t.slope + 0.25).abs() < 0.05, "slope {}", t.slope);
        let again = remeasure(&v, &cert).unwrap().unwrap();
        for (a, b) in again.d_j.iter().zip(&r.d_j) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        let p = leray_project(&v).unwrap();
        assert!(p.max_abs_diff(&v) < 1e-10);
    }

    #[test]
    fn lacunary_single_shell_is_local() {
        let g = TorusGrid::new(3, 32).unwrap();
        let (v, _) = lacunary_field(&g, &[0.0, 0.0, 1.0], 0.5, 2.0, 1).unwrap();
        for j in -1..=g.j_max() {
            let b = dyadic_block(&v, j).unwrap();
            if (j - 2).abs() >= 2 {
                assert!(b.max_abs() < 1e-12 * v.max_abs());
            }
        }
        let r = besov_norm(&v, &BesovSpec::new(0.5, 2.0, Summability::Infinity).unwrap()).unwrap();
        assert!((r.d(2) - 1.0).abs() < 1e-10);
        let flat: Vec<f64> = vec![1.0; 4];
        let (_, cert) = lacunary_field(&g, &flat, 1.0 / 3.0, 3.0, 2).unwrap();
        let t = tail_slope(cert.norms_at_build.as_ref().unwrap()).unwrap();
        assert!(t.slope.abs() < 0.05);
        assert!(lacunary_field(&g, &[1.0; 6], 0.3, 3.0, 1).is_err());
        assert!(lacunary_field(&g, &[1.0], 0.3, 1.5, 1).is_err());
    }

    #[test]
    fn random_smooth_properties() {
        let g = TorusGrid::new(2, 64).unwrap();
        let (a, _) = random_smooth_field(&g, 10.0, 42).unwrap();
        let (b, _) = random_smooth_field(&g, 10.0, 42).unwrap();
        for c in 0..2 {
            assert!(a.component(c).iter().zip(b.component(c)).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let r = besov_norm(&a, &BesovSpec::new(1.0 / 3.0, 3.0, Summability::CNat).unwrap()).unwrap();
        assert!(tail_slope(&r).unwrap().slope <= -2.0);
        let (c, _) = random_smooth_field(&g, 1.1, 3).unwrap();
        assert!(c.divergence_defect() < 1e-10);
        assert!((c.norm2_sq() / g.volume() - 1.0).abs() < 1e-12);
        assert!(random_smooth_field(&g, 1.0, 3).is_err());
    }

    #[test]
    fn taylor_green_is_solenoidal() {
        let g = TorusGrid::new(2, 32).unwrap();
        let v = taylor_green_2d(&g).unwrap();
        assert!(v.divergence_defect() < 1e-12);
        assert!(taylor_green_2d(&TorusGrid::new(3, 16).unwrap()).is_err());
    }
}
