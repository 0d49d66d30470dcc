//! Multi-dimensional complex FFTs on torus grids.
//!
//! Convention: `f̂(k) = n^{-dim} Σ_x f(x) e^{-ik·x}`, so that
//! `∫|f|² = (2π)^dim Σ_k |f̂(k)|²`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::TorusGrid;

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

fn transform(grid: &TorusGrid, data: &mut [Complex64], forward: bool) {
    let n = grid.n();
    let dim = grid.dim();
    assert_eq!(data.len(), grid.len(), "buffer does not match grid");
    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);

    let mut buf = Vec::new();
    for axis in 0..dim - 1 {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = n * stride;
        buf.resize(block, Complex64::default());
        for base in (0..data.len()).step_by(block) {
            let chunk = &mut data[base..base + block];
            for inner in 0..stride {
                for i in 0..n {
                    buf[inner * n + i] = chunk[i * stride + inner];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for inner in 0..stride {
                for i in 0..n {
                    chunk[i * stride + inner] = buf[inner * n + i];
                }
            }
        }
    }
}

/// Forward transform in place, normalized by `1/len`.
pub fn forward(grid: &TorusGrid, data: &mut [Complex64]) {
    transform(grid, data, true);
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse transform in place (no normalization).
pub fn inverse(grid: &TorusGrid, data: &mut [Complex64]) {
    transform(grid, data, false);
}

pub fn forward_real(grid: &TorusGrid, samples: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(grid, &mut data);
    data
}

pub fn inverse_real(grid: &TorusGrid, spectrum: &[Complex64]) -> Vec<f64> {
    let mut data = spectrum.to_vec();
    inverse(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// Moves a spectrum between grids of the same dimension.
///
/// Upsampling (`dst.n() > src.n()`) zero-pads and splits Nyquist
/// coefficients evenly between `±n/2`, which gives the trigonometric
/// interpolant on the finer grid. Downsampling keeps only the modes with
/// `|k_i| < m/2` and drops the destination Nyquist planes.
pub fn resample(src: &TorusGrid, spectrum: &[Complex64], dst: &TorusGrid) -> Vec<Complex64> {
    assert_eq!(src.dim(), dst.dim());
    if src.n() == dst.n() {
        return spectrum.to_vec();
    }
    let mut out = vec![Complex64::default(); dst.len()];
    let dim = src.dim();
    if dst.n() >= src.n() {
        let half = src.n() as i64 / 2;
        for (idx, &c) in spectrum.iter().enumerate() {
            if c == Complex64::default() {
                continue;
            }
            let k = src.mode(idx);
            let nyq: Vec<usize> = (0..dim).filter(|&a| k[a] == -half).collect();
            if nyq.is_empty() || dst.n() == src.n() {
                out[dst.mode_index(k)] += c;
                continue;
            }
            let weight = 0.5f64.powi(nyq.len() as i32);
            for signs in 0..(1usize << nyq.len()) {
                let mut kk = k;
                for (bit, &a) in nyq.iter().enumerate() {
                    if signs & (1 << bit) != 0 {
                        kk[a] = half;
                    }
                }
                out[dst.mode_index(kk)] += c * weight;
            }
        }
    } else {
        let limit = dst.n() as i64 / 2;
        for (idx, &c) in spectrum.iter().enumerate() {
            let k = src.mode(idx);
            if (0..dim).all(|a| k[a].abs() < limit) {
                out[dst.mode_index(k)] = c;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_lands_in_its_bin() {
        let g = TorusGrid::new(2, 16).unwrap();
        let samples: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.node(i);
                (3.0 * x[0] - 2.0 * x[1]).cos()
            })
            .collect();
        let spec = forward_real(&g, &samples);
        let a = g.mode_index([3, -2, 0]);
        let b = g.mode_index([-3, 2, 0]);
        assert!((spec[a].re - 0.5).abs() < 1e-14);
        assert!((spec[b].re - 0.5).abs() < 1e-14);
        let rest: f64 = spec
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn round_trip_3d() {
        let g = TorusGrid::new(3, 16).unwrap();
        let samples: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let back = inverse_real(&g, &forward_real(&g, &samples));
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn upsampling_interpolates() {
        let g = TorusGrid::new(2, 16).unwrap();
        let fine = g.resized(32);
        let f = |x: [f64; 3]| (x[0] + 2.0 * x[1]).sin() + (8.0 * x[0]).cos();
        let samples: Vec<f64> = (0..g.len()).map(|i| f(g.node(i))).collect();
        let up = inverse_real(&fine, &resample(&g, &forward_real(&g, &samples), &fine));
        for (i, v) in up.iter().enumerate() {
            assert!((v - f(fine.node(i))).abs() < 1e-12);
        }
    }
}
