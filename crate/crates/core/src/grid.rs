//! Uniform periodic grids on `[0, 2π)^dim`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported number of points per axis.
pub const MIN_POINTS: usize = 16;

/// A uniform grid with `n` points per axis on the torus `[0, 2π)^dim`.
///
/// Nodes are stored row-major with the x axis slowest, so in 3D the flat
/// index of node `(ix, iy, iz)` is `(ix * n + iy) * n + iz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} is not a power of two")));
        }
        if n < MIN_POINTS {
            return Err(Error::InsufficientResolution(format!(
                "n = {n} gives fewer than 3 dyadic shells (need n >= {MIN_POINTS})"
            )));
        }
        Ok(Self { dim, n })
    }

    /// Grid with the same dimension and `m` points per axis. Used for
    /// oversampled quadrature; the power-of-two check still applies but
    /// the minimum does not.
    pub(crate) fn resized(&self, m: usize) -> Self {
        debug_assert!(m.is_power_of_two());
        Self { dim: self.dim, n: m }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Quadrature weight of a single node, `(2π/n)^dim`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Volume of the torus, `(2π)^dim`.
    #[inline]
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    /// Signed wavenumber of FFT bin `i`, in `[-n/2, n/2)`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT bin holding wavenumber `k` (taken modulo `n`).
    #[inline]
    pub fn bin(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Per-axis indices of flat index `idx`; unused axes are zero.
    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        match self.dim {
            2 => [idx / n, idx % n, 0],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    #[inline]
    pub fn flatten(&self, ijk: [usize; 3]) -> usize {
        let n = self.n;
        match self.dim {
            2 => ijk[0] * n + ijk[1],
            _ => (ijk[0] * n + ijk[1]) * n + ijk[2],
        }
    }

    /// Integer wavevector of spectral index `idx`.
    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let ijk = self.unflatten(idx);
        let mut k = [0i64; 3];
        for (a, kk) in k.iter_mut().enumerate().take(self.dim) {
            *kk = self.wavenumber(ijk[a]);
        }
        k
    }

    /// Flat spectral index of wavevector `k` (components taken modulo n).
    #[inline]
    pub fn mode_index(&self, k: [i64; 3]) -> usize {
        let mut ijk = [0usize; 3];
        for (a, v) in ijk.iter_mut().enumerate().take(self.dim) {
            *v = self.bin(k[a]);
        }
        self.flatten(ijk)
    }

    /// Spectral index of `-k` for the mode stored at `idx`.
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let k = self.mode(idx);
        self.mode_index([-k[0], -k[1], -k[2]])
    }

    #[inline]
    pub fn mode_norm2(&self, idx: usize) -> i64 {
        let k = self.mode(idx);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    /// Physical coordinates of node `idx`.
    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unflatten(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = ijk[a] as f64 * h;
        }
        x
    }

    /// True when `k` lies strictly inside the 2/3 dealiasing ball `|k| < n/3`.
    #[inline]
    pub fn in_band(&self, idx: usize) -> bool {
        let n = self.n as i64;
        9 * self.mode_norm2(idx) < n * n
    }

    /// Radius of the dealiasing ball.
    #[inline]
    pub fn band_radius(&self) -> f64 {
        self.n as f64 / 3.0
    }

    /// Largest dyadic block index whose shell still meets the dealiasing
    /// ball. With this choice `S_{j_max+1}` is the identity on the ball.
    pub fn j_max(&self) -> i32 {
        self.n.trailing_zeros() as i32 - 2
    }

    /// Largest block index whose whole shell `[3/4, 8/3] 2^j` sits inside
    /// the dealiasing ball.
    pub fn j_resolved(&self) -> i32 {
        self.j_max() - 1
    }

    /// Flat index of `x − m h` for every node `x`, with `m` an integer offset.
    pub fn shift_table(&self, m: [i64; 3]) -> Vec<usize> {
        let n = self.n as i64;
        let axis = |a: usize| -> Vec<usize> {
            (0..n).map(|i| (i - m[a]).rem_euclid(n) as usize).collect()
        };
        let (ax, ay) = (axis(0), axis(1));
        let mut out = Vec::with_capacity(self.len());
        if self.dim == 2 {
            for &i in &ax {
                for &j in &ay {
                    out.push(i * self.n + j);
                }
            }
        } else {
            let az = axis(2);
            for &i in &ax {
                for &j in &ay {
                    for &k in &az {
                        out.push((i * self.n + j) * self.n + k);
                    }
                }
            }
        }
        out
    }

    /// Largest Nyquist-safe absolute wavenumber component, `n/2 - 1`.
    #[inline]
    pub fn max_wavenumber(&self) -> i64 {
        self.n as i64 / 2 - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(TorusGrid::new(2, 8), Err(Error::InsufficientResolution(_))));
        assert!(matches!(TorusGrid::new(2, 48), Err(Error::InvalidGrid(_))));
        assert!(matches!(TorusGrid::new(4, 64), Err(Error::InvalidGrid(_))));
        assert!(TorusGrid::new(3, 16).is_ok());
    }

    #[test]
    fn j_max_examples() {
        assert_eq!(TorusGrid::new(2, 64).unwrap().j_max(), 4);
        assert_eq!(TorusGrid::new(2, 128).unwrap().j_max(), 5);
        assert_eq!(TorusGrid::new(2, 16).unwrap().j_max(), 2);
        assert_eq!(TorusGrid::new(2, 64).unwrap().j_resolved(), 3);
    }

    #[test]
    fn j_max_is_first_covering_scale() {
        // Enumerate: j_max is the smallest j with 2^j * 3/2 >= n/3 and the
        // largest with 2^j * 3/4 < n/3.
        for log_n in 4..12 {
            let n = 1usize << log_n;
            let g = TorusGrid::new(2, n).unwrap();
            let r = n as f64 / 3.0;
            let mut first_cover = 0;
            while 2f64.powi(first_cover) * 1.5 < r {
                first_cover += 1;
            }
            assert_eq!(g.j_max(), first_cover);
            assert!(2f64.powi(g.j_max()) * 0.75 < r);
            assert!(2f64.powi(g.j_max() + 1) * 0.75 >= r);
        }
    }

    #[test]
    fn shift_table_moves_nodes() {
        let g = TorusGrid::new(3, 16).unwrap();
        let t = g.shift_table([1, -2, 3]);
        for idx in [0, 5, 100, 4095] {
            let a = g.unflatten(idx);
            let b = g.unflatten(t[idx]);
            assert_eq!(b[0], (a[0] + 15) % 16);
            assert_eq!(b[1], (a[1] + 2) % 16);
            assert_eq!(b[2], (a[2] + 13) % 16);
        }
    }

    #[test]
    fn index_round_trip() {
        let g = TorusGrid::new(3, 16).unwrap();
        for idx in [0, 1, 17, 300, g.len() - 1] {
            let k = g.mode(idx);
            assert_eq!(g.mode_index(k), idx);
            let c = g.conjugate_index(idx);
            let kc = g.mode(c);
            for a in 0..3 {
                assert_eq!((k[a] + kc[a]).rem_euclid(16), 0);
            }
        }
    }
}
