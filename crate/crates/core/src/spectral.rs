//! Horizontal Fourier lattice, graded vertical grid, spectral fields and 2-d FFTs.

use crate::error::{EkblError, Result};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Vertical nodes `0 = z_0 < ... < z_J = z_max`, geometrically stretched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalGrid {
    pub z: Vec<f64>,
    pub ratio: f64,
}

impl VerticalGrid {
    /// `n_nodes` points with `h_{j+1} = ratio·h_j`.
    pub fn geometric(n_nodes: usize, z_max: f64, ratio: f64) -> Result<Self> {
        if n_nodes < 4 || !(z_max > 0.0) || !(ratio >= 1.0) {
            return Err(EkblError::Config(format!(
                "vertical grid needs n_nodes >= 4, z_max > 0, ratio >= 1 (got {n_nodes}, {z_max}, {ratio})"
            )));
        }
        let nint = (n_nodes - 1) as i32;
        let z = if (ratio - 1.0).abs() < 1e-12 {
            (0..n_nodes).map(|j| z_max * j as f64 / nint as f64).collect()
        } else {
            let total = (ratio.powi(nint) - 1.0) / (ratio - 1.0);
            let h0 = z_max / total;
            let mut z: Vec<f64> = (0..n_nodes)
                .map(|j| h0 * (ratio.powi(j as i32) - 1.0) / (ratio - 1.0))
                .collect();
            z[n_nodes - 1] = z_max;
            z
        };
        Ok(Self { z, ratio })
    }

    pub fn from_nodes(z: Vec<f64>) -> Result<Self> {
        if z.len() < 4 || z[0] != 0.0 || z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EkblError::Config("vertical nodes must start at 0 and increase".into()));
        }
        Ok(Self { z, ratio: f64::NAN })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().unwrap()
    }
}

/// Horizontally periodic lattice `ξ ∈ (2π/L)·ℤ²` truncated to `n × n` modes, plus a vertical grid.
///
/// Mode `m = i·n + j` has integer wavenumbers `(k(i), k(j))` with the usual FFT ordering;
/// physical point `m = i·n + j` sits at `(i·L/n, j·L/n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub period: f64,
    pub n: usize,
    pub vertical: VerticalGrid,
}

impl SpectralGrid {
    pub fn new(period: f64, n: usize, vertical: VerticalGrid) -> Result<Self> {
        if !(period > 0.0) || n < 2 || n % 2 != 0 {
            return Err(EkblError::Config(format!(
                "need period > 0 and even n >= 2 (got {period}, {n})"
            )));
        }
        Ok(Self { period, n, vertical })
    }

    pub fn n_modes(&self) -> usize {
        self.n * self.n
    }

    pub fn nz(&self) -> usize {
        self.vertical.len()
    }

    pub fn z(&self) -> &[f64] {
        &self.vertical.z
    }

    pub fn wavenumber(n: usize, i: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn wavenumbers(&self, m: usize) -> (i64, i64) {
        (Self::wavenumber(self.n, m / self.n), Self::wavenumber(self.n, m % self.n))
    }

    pub fn xi(&self, m: usize) -> (f64, f64) {
        let (a, b) = self.wavenumbers(m);
        let c = 2.0 * PI / self.period;
        (c * a as f64, c * b as f64)
    }

    /// Modes with a Nyquist wavenumber are not resolved and are kept at zero.
    pub fn is_nyquist(&self, m: usize) -> bool {
        let h = (self.n / 2) as i64;
        let (a, b) = self.wavenumbers(m);
        a == -h || b == -h
    }

    pub fn mode_index(&self, k1: i64, k2: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        if k1 <= -h || k1 >= h || k2 <= -h || k2 >= h {
            return None;
        }
        let i = k1.rem_euclid(self.n as i64) as usize;
        let j = k2.rem_euclid(self.n as i64) as usize;
        Some(i * self.n + j)
    }

    pub fn conj_index(&self, m: usize) -> usize {
        let (a, b) = self.wavenumbers(m);
        let i = (-a).rem_euclid(self.n as i64) as usize;
        let j = (-b).rem_euclid(self.n as i64) as usize;
        i * self.n + j
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let h = self.period / self.n as f64;
        (0..self.n_modes())
            .map(|m| ((m / self.n) as f64 * h, (m % self.n) as f64 * h))
            .collect()
    }

    /// Integer cutoff of the 2/3 rule: modes with `|k| > kmax` are removed.
    pub fn dealias_cutoff(&self) -> i64 {
        ((self.n - 1) / 3) as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRole {
    Velocity,
    Vorticity,
    Pressure,
    Source,
    Other,
}

/// Complex coefficients laid out mode-major: `data[m·nz + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub n: usize,
    pub nz: usize,
    pub data: Vec<C64>,
    pub role: FieldRole,
}

impl SpectralField {
    pub fn zeros(n: usize, nz: usize, role: FieldRole) -> Self {
        Self {
            n,
            nz,
            data: vec![ZERO; n * n * nz],
            role,
        }
    }

    pub fn for_grid(grid: &SpectralGrid, role: FieldRole) -> Self {
        Self::zeros(grid.n, grid.nz(), role)
    }

    #[inline]
    pub fn at(&self, m: usize, j: usize) -> C64 {
        self.data[m * self.nz + j]
    }

    #[inline]
    pub fn set(&mut self, m: usize, j: usize, v: C64) {
        self.data[m * self.nz + j] = v;
    }

    pub fn mode(&self, m: usize) -> &[C64] {
        &self.data[m * self.nz..(m + 1) * self.nz]
    }

    pub fn mode_mut(&mut self, m: usize) -> &mut [C64] {
        &mut self.data[m * self.nz..(m + 1) * self.nz]
    }

    /// All modes at level j.
    pub fn slice(&self, j: usize) -> Vec<C64> {
        (0..self.n * self.n).map(|m| self.data[m * self.nz + j]).collect()
    }

    pub fn set_slice(&mut self, j: usize, s: &[C64]) {
        for (m, v) in s.iter().enumerate() {
            self.data[m * self.nz + j] = *v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == ZERO)
    }

    pub fn scale(&mut self, c: C64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c·other`.
    pub fn axpy(&mut self, c: C64, other: &SpectralField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }
}

/// Forward/inverse 2-d FFT on `n × n` row-major arrays.
///
/// `forward` returns coefficients `ĉ` with `f(y) = Σ ĉ e^{iξ·y}`, i.e. it divides by `n²`.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n,
            fwd: p.plan_fft_forward(n),
            inv: p.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn run(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        let mut col = vec![ZERO; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
        let s = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
    }

    pub fn to_physical(&self, spec: &[C64]) -> Vec<C64> {
        let mut d = spec.to_vec();
        self.inverse(&mut d);
        d
    }

    pub fn to_spectral(&self, phys: &[C64]) -> Vec<C64> {
        let mut d = phys.to_vec();
        self.forward(&mut d);
        d
    }
}

/// Re-index a spectrum from an `n_from` lattice to an `n_to` lattice of the same period
/// (zero padding or truncation; Nyquist modes dropped).
pub fn resample_spectrum(spec: &[C64], n_from: usize, n_to: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n_to * n_to];
    let hf = (n_from / 2) as i64;
    let ht = (n_to / 2) as i64;
    for m in 0..n_from * n_from {
        let k1 = SpectralGrid::wavenumber(n_from, m / n_from);
        let k2 = SpectralGrid::wavenumber(n_from, m % n_from);
        if k1 == -hf || k2 == -hf || k1.abs() >= ht || k2.abs() >= ht {
            continue;
        }
        let i = k1.rem_euclid(n_to as i64) as usize;
        let j = k2.rem_euclid(n_to as i64) as usize;
        out[i * n_to + j] = spec[m];
    }
    out
}

/// Product of two band-limited fields, computed on a doubled grid so that no aliasing occurs,
/// returned on the original lattice.
pub fn product_unaliased(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    product_unaliased_with(&Fft2::new(2 * n), a, b, n)
}

/// Same as [`product_unaliased`] with a caller-owned transform on the doubled lattice.
pub fn product_unaliased_with(f: &Fft2, a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let big = 2 * n;
    debug_assert_eq!(f.n(), big);
    let pa = f.to_physical(&resample_spectrum(a, n, big));
    let pb = f.to_physical(&resample_spectrum(b, n, big));
    let prod: Vec<C64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    resample_spectrum(&f.to_spectral(&prod), big, n)
}

/// Zero every mode with a Nyquist index.
pub fn zero_nyquist(spec: &mut [C64], n: usize) {
    let h = (n / 2) as i64;
    for m in 0..n * n {
        let k1 = SpectralGrid::wavenumber(n, m / n);
        let k2 = SpectralGrid::wavenumber(n, m % n);
        if k1 == -h || k2 == -h {
            spec[m] = ZERO;
        }
    }
}

/// Largest deviation from Hermitian symmetry `c(−ξ) = conj(c(ξ))`, Nyquist modes skipped.
pub fn hermitian_defect(spec: &[C64], grid: &SpectralGrid) -> f64 {
    let mut d: f64 = 0.0;
    for m in 0..grid.n_modes() {
        if grid.is_nyquist(m) {
            continue;
        }
        let c = grid.conj_index(m);
        d = d.max((spec[m] - spec[c].conj()).norm());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid_endpoints() {
        let g = VerticalGrid::geometric(256, 50.0, 1.02).unwrap();
        assert_eq!(g.z[0], 0.0);
        assert_eq!(g.z_max(), 50.0);
        let h0 = g.z[1] - g.z[0];
        let h1 = g.z[2] - g.z[1];
        assert!((h1 / h0 - 1.02).abs() < 1e-10);
    }

    #[test]
    fn fft_roundtrip_and_mode_placement() {
        let n = 8;
        let grid = SpectralGrid::new(2.0 * PI, n, VerticalGrid::geometric(4, 1.0, 1.0).unwrap()).unwrap();
        let f = Fft2::new(n);
        let pts = grid.points();
        let phys: Vec<C64> = pts.iter().map(|(x, y)| C64::new(0.0, 2.0 * x - 3.0 * y).exp()).collect();
        let spec = f.to_spectral(&phys);
        let m = grid.mode_index(2, -3).unwrap();
        assert!((spec[m] - 1.0).norm() < 1e-12);
        let back = f.to_physical(&spec);
        assert!(back.iter().zip(&phys).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn unaliased_product_of_modes() {
        let n = 8;
        let grid = SpectralGrid::new(2.0 * PI, n, VerticalGrid::geometric(4, 1.0, 1.0).unwrap()).unwrap();
        let mut a = vec![ZERO; 64];
        let mut b = vec![ZERO; 64];
        a[grid.mode_index(3, 0).unwrap()] = C64::new(1.0, 0.0);
        b[grid.mode_index(3, 0).unwrap()] = C64::new(1.0, 0.0);
        let p = product_unaliased(&a, &b, n);
        // k = 6 is outside the 8-lattice, so nothing may alias back
        assert!(p.iter().all(|v| v.norm() < 1e-14));
    }
}
