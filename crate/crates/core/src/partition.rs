//! Dyadic partition of unity, Littlewood-Paley blocks `Δ_j` and low-pass
//! operators `S_N`.
//!
//! The low-pass profile `ϱ` equals 1 on `|ξ| ≤ 3/4`, vanishes for
//! `|ξ| ≥ 4/3` and decreases smoothly in between. The shell profile is
//! `φ(ξ) = ϱ(ξ/2) − ϱ(ξ)`, so `ϱ(ξ) + Σ_{j=0}^{J} φ(2^{-j}ξ) = ϱ(2^{-J-1}ξ)`
//! telescopes and the partition of unity is exact wherever the last
//! low-pass equals one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::field::TorusField;
use crate::grid::TorusGrid;

const LOW_EDGE: f64 = 0.75;
const HIGH_EDGE: f64 = 4.0 / 3.0;

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn flat_exp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ step rising from 0 at `t ≤ 0` to 1 at `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = flat_exp(t);
        a / (a + flat_exp(1.0 - t))
    }
}

/// Radial low-pass profile `ϱ(r)`.
pub fn varrho(r: f64) -> f64 {
    1.0 - smooth_step((r - LOW_EDGE) / (HIGH_EDGE - LOW_EDGE))
}

/// Radial shell profile `φ(r) = ϱ(r/2) − ϱ(r)`, supported in `[3/4, 8/3]`.
pub fn varphi(r: f64) -> f64 {
    varrho(0.5 * r) - varrho(r)
}

/// The partition profiles sampled on a grid's lattice.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    grid: TorusGrid,
    /// `ϱ(k)` per spectral index.
    pub varrho: Vec<f64>,
    /// `φ(k)` per spectral index.
    pub varphi: Vec<f64>,
    pub j_min: i32,
    pub j_max: i32,
}

/// Builds the partition for `grid`. Grids with `n < 16` are rejected when
/// the grid itself is constructed.
pub fn make_partition(grid: &TorusGrid) -> Result<DyadicPartition> {
    if grid.j_max() < 2 {
        return Err(Error::InsufficientResolution(format!(
            "n = {} supports fewer than 3 dyadic shells",
            grid.n()
        )));
    }
    let radii = radii(grid);
    Ok(DyadicPartition {
        grid: *grid,
        varrho: radii.iter().map(|&r| varrho(r)).collect(),
        varphi: radii.iter().map(|&r| varphi(r)).collect(),
        j_min: -1,
        j_max: grid.j_max(),
    })
}

impl DyadicPartition {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Multiplier of block `j` (`ϱ` for `j = -1`).
    pub fn block_multiplier(&self, j: i32) -> Result<Vec<f64>> {
        block_multiplier(&self.grid, j)
    }

    /// Largest deviation of `ϱ + Σ_j φ(2^{-j}·)` from 1 over lattice points
    /// of the dealiasing ball. The sum is accumulated block by block.
    pub fn unity_defect(&self) -> f64 {
        let mut total = self.varrho.clone();
        for j in 0..=self.j_max {
            let m = self.block_multiplier(j).expect("j in range");
            for (t, v) in total.iter_mut().zip(m) {
                *t += v;
            }
        }
        (0..self.grid.len())
            .filter(|&idx| self.grid.in_band(idx))
            .map(|idx| (total[idx] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn radii(grid: &TorusGrid) -> Vec<f64> {
    (0..grid.len()).map(|idx| (grid.mode_norm2(idx) as f64).sqrt()).collect()
}

fn check_block(grid: &TorusGrid, j: i32) -> Result<()> {
    if j < -1 || j > grid.j_max() {
        return Err(Error::OutOfRange {
            what: "block index",
            detail: format!("j = {j} not in [-1, {}]", grid.j_max()),
        });
    }
    Ok(())
}

/// Multipliers on grids up to this many points are memoized.
const CACHE_MAX_LEN: usize = 1 << 18;

type MultiplierCache = Mutex<HashMap<(usize, usize, bool, i32), Arc<Vec<f64>>>>;

fn cached(grid: &TorusGrid, low: bool, level: i32, build: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
    if grid.len() > CACHE_MAX_LEN {
        return build();
    }
    static CACHE: OnceLock<MultiplierCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (grid.dim(), grid.n(), low, level);
    if let Some(m) = cache.lock().expect("multiplier cache").get(&key) {
        return m.as_ref().clone();
    }
    let m = Arc::new(build());
    cache.lock().expect("multiplier cache").insert(key, m.clone());
    m.as_ref().clone()
}

pub fn block_multiplier(grid: &TorusGrid, j: i32) -> Result<Vec<f64>> {
    check_block(grid, j)?;
    let scale = 2f64.powi(-j);
    Ok(cached(grid, false, j, || {
        radii(grid)
            .into_iter()
            .map(|r| if j == -1 { varrho(r) } else { varphi(scale * r) })
            .collect()
    }))
}

/// Multiplier `ϱ(2^{-N}ξ)` of `S_N`.
pub fn low_pass_multiplier(grid: &TorusGrid, n_level: i32) -> Result<Vec<f64>> {
    if n_level < 0 || n_level > grid.j_max() + 1 {
        return Err(Error::OutOfRange {
            what: "low-pass level",
            detail: format!("N = {n_level} not in [0, {}]", grid.j_max() + 1),
        });
    }
    let scale = 2f64.powi(-n_level);
    Ok(cached(grid, true, n_level, || radii(grid).into_iter().map(|r| varrho(scale * r)).collect()))
}

/// `Δ_j f`.
pub fn dyadic_block(f: &TorusField, j: i32) -> Result<TorusField> {
    Ok(f.apply_multiplier(&block_multiplier(f.grid(), j)?))
}

/// `S_N f`, applied as the single multiplier `ϱ(2^{-N}ξ)`.
pub fn low_pass(f: &TorusField, n_level: i32) -> Result<TorusField> {
    Ok(f.apply_multiplier(&low_pass_multiplier(f.grid(), n_level)?))
}

/// `S_N² f`, multiplier `ϱ(2^{-N}ξ)²`.
pub fn low_pass_squared(f: &TorusField, n_level: i32) -> Result<TorusField> {
    let m: Vec<f64> = low_pass_multiplier(f.grid(), n_level)?.into_iter().map(|x| x * x).collect();
    Ok(f.apply_multiplier(&m))
}

/// `(I − S_N²) f`.
pub fn high_pass_squared(f: &TorusField, n_level: i32) -> Result<TorusField> {
    let m: Vec<f64> =
        low_pass_multiplier(f.grid(), n_level)?.into_iter().map(|x| 1.0 - x * x).collect();
    Ok(f.apply_multiplier(&m))
}

/// All blocks `Δ_j f` for `j = -1..=j_max`.
#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    pub source: TorusField,
    blocks: Vec<TorusField>,
}

impl DyadicDecomposition {
    pub fn new(f: &TorusField) -> Result<Self> {
        let j_max = f.grid().j_max();
        let blocks = (-1..=j_max).map(|j| dyadic_block(f, j)).collect::<Result<Vec<_>>>()?;
        Ok(Self { source: f.clone(), blocks })
    }

    pub fn block(&self, j: i32) -> &TorusField {
        &self.blocks[(j + 1) as usize]
    }

    pub fn blocks(&self) -> &[TorusField] {
        &self.blocks
    }

    /// `S_N f` assembled from blocks `j ≤ N − 1`.
    pub fn partial_sum(&self, n_level: i32) -> Result<TorusField> {
        let upto = (n_level.max(0) as usize).min(self.blocks.len());
        let mut acc = TorusField::zeros(*self.source.grid(), self.source.components());
        for b in &self.blocks[..upto] {
            acc = acc.add(b)?;
        }
        Ok(acc)
    }

    /// `Σ_{j=-1}^{j_max} Δ_j f`.
    pub fn reconstruct(&self) -> Result<TorusField> {
        self.partial_sum(self.blocks.len() as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_supports() {
        assert_eq!(varrho(0.0), 1.0);
        assert_eq!(varrho(0.75), 1.0);
        assert_eq!(varrho(4.0 / 3.0), 0.0);
        assert_eq!(varphi(0.0), 0.0);
        assert_eq!(varphi(0.74), 0.0);
        assert_eq!(varphi(8.0 / 3.0 + 1e-9), 0.0);
        assert_eq!(varphi(1.4), 1.0);
        for i in 0..200 {
            let r = i as f64 * 0.02;
            let p = varphi(r);
            assert!((0.0..=1.0).contains(&p));
            assert!(varrho(r) >= varrho(r + 0.01));
        }
    }

    #[test]
    fn unity_at_origin_and_radius_two() {
        let g = TorusGrid::new(2, 64).unwrap();
        let p = make_partition(&g).unwrap();
        let origin = g.mode_index([0, 0, 0]);
        assert_eq!(p.varrho[origin], 1.0);
        for j in 0..=p.j_max {
            assert_eq!(p.block_multiplier(j).unwrap()[origin], 0.0);
        }
        let two = g.mode_index([2, 0, 0]);
        let s = p.varrho[two] + varphi(2.0) + varphi(1.0);
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.unity_defect() < 1e-12);
    }

    #[test]
    fn block_range_errors() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = TorusField::zeros(g, 1);
        assert!(dyadic_block(&f, -2).is_err());
        assert!(dyadic_block(&f, g.j_max() + 1).is_err());
        assert!(low_pass(&f, g.j_max() + 2).is_err());
        assert!(low_pass(&f, -1).is_err());
    }

    #[test]
    fn single_mode_block() {
        let g = TorusGrid::new(2, 128).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [(4.0 * x[0]).cos(), 0.0, 0.0]);
        for j in 0..=g.j_max() {
            let ratio = 4.0 / 2f64.powi(j);
            let expected = varphi(ratio);
            let b = dyadic_block(&f, j).unwrap();
            let want = f.scale(expected);
            assert!(b.max_abs_diff(&want) < 1e-13, "j = {j}");
        }
    }

    #[test]
    fn constant_lives_in_low_block() {
        let g = TorusGrid::new(3, 16).unwrap();
        let f = TorusField::from_fn(g, 1, |_| [2.5, 0.0, 0.0]);
        let d = DyadicDecomposition::new(&f).unwrap();
        assert!(d.block(-1).max_abs_diff(&f) < 1e-14);
        for j in 0..=g.j_max() {
            assert!(d.block(j).max_abs() < 1e-14);
        }
    }

    #[test]
    fn mode_above_cutoff_is_removed() {
        let g = TorusGrid::new(2, 128).unwrap();
        let f = TorusField::from_fn(g, 1, |x| [(32.0 * x[0]).cos(), 0.0, 0.0]);
        // 2^N * 4/3 < 32 for N = 4
        let s = low_pass(&f, 4).unwrap();
        assert!(s.max_abs() < 1e-13);
    }
}
