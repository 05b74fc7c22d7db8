//! Nonlinear rotating flow in the rough strip `γ(y_h) < y₃ < M`, Dirichlet data at the
//! bottom and prescribed generalized stress `∂₃v − (p + |v|²/2)e₃ = ψ` on `y₃ = M`.
//!
//! Discretisation: Fourier in `y_h`, Chebyshev–Gauss–Lobatto collocation in the terrain
//! coordinate `σ = (y₃ − γ)/(M − γ)`. Velocity lives on all `N+1` nodes, pressure on the
//! `N−1` interior nodes (degree `N−2` polynomial). Newton steps are solved by GMRES with a
//! per-mode flat-bottom Stokes–Coriolis preconditioner.

use crate::error::{EkblError, Result};
use crate::linalg::{gmres, DenseLu};
use crate::spectral::{product_unaliased_with, resample_spectrum, Fft2, SpectralGrid};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

pub use crate::halfspace::compatibility_potentials;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

fn wavenumber(n: usize, i: usize) -> i64 {
    SpectralGrid::wavenumber(n, i)
}

fn xi_of(n: usize, period: f64, m: usize) -> (f64, f64) {
    let c = 2.0 * PI / period;
    (c * wavenumber(n, m / n) as f64, c * wavenumber(n, m % n) as f64)
}

fn nyquist(n: usize, m: usize) -> bool {
    let h = (n / 2) as i64;
    wavenumber(n, m / n) == -h || wavenumber(n, m % n) == -h
}

/// Built-in roughness families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoughnessFamily {
    Flat,
    /// `A sin(k·y)` with integer lattice wavevector `k`.
    Sinusoidal { amplitude: f64, k: [i64; 2] },
    /// `A (sin(k_a·y) + ½ cos(k_b·y))`.
    TwoFrequency { amplitude: f64, k_a: [i64; 2], k_b: [i64; 2] },
    /// Random phases on `|k|∞ ≤ kmax` with `(1+|k|²)^{-1}` weights, rescaled so `max|γ| = A`.
    FilteredNoise { amplitude: f64, kmax: i64, seed: u64 },
    /// Samples `(y1, y2, gamma)` from a CSV file on the lattice.
    Csv { path: String },
}

/// Bottom profile sampled on the `n × n` lattice of period `L`, row-major in `(y₁, y₂)`.
#[derive(Clone, Debug)]
pub struct RoughnessProfile {
    pub n: usize,
    pub period: f64,
    pub gamma: Vec<f64>,
    pub lipschitz_bound: f64,
    pub sup_gamma: f64,
}

impl RoughnessProfile {
    pub fn from_samples(n: usize, period: f64, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != n * n {
            return Err(EkblError::Shape(format!("roughness needs {} samples, got {}", n * n, gamma.len())));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(EkblError::Domain("roughness samples must be finite".into()));
        }
        let mut r = Self {
            n,
            period,
            gamma,
            lipschitz_bound: 0.0,
            sup_gamma: 0.0,
        };
        let [g1, g2] = r.gradient();
        r.lipschitz_bound = g1.iter().zip(&g2).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
        r.sup_gamma = r.gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(r)
    }

    pub fn flat(n: usize, period: f64) -> Self {
        Self::from_samples(n, period, vec![0.0; n * n]).expect("flat profile")
    }

    pub fn generate(family: &RoughnessFamily, n: usize, period: f64) -> Result<Self> {
        let h = period / n as f64;
        let c = 2.0 * PI / period;
        let pts = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            (0..n * n).map(|m| f((m / n) as f64 * h, (m % n) as f64 * h)).collect()
        };
        let g = match family {
            RoughnessFamily::Flat => vec![0.0; n * n],
            RoughnessFamily::Sinusoidal { amplitude, k } => {
                pts(&|y1, y2| amplitude * (c * (k[0] as f64 * y1 + k[1] as f64 * y2)).sin())
            }
            RoughnessFamily::TwoFrequency { amplitude, k_a, k_b } => pts(&|y1, y2| {
                amplitude
                    * ((c * (k_a[0] as f64 * y1 + k_a[1] as f64 * y2)).sin()
                        + 0.5 * (c * (k_b[0] as f64 * y1 + k_b[1] as f64 * y2)).cos())
            }),
            RoughnessFamily::FilteredNoise { amplitude, kmax, seed } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut terms = Vec::new();
                for a in -kmax..=*kmax {
                    for b in -kmax..=*kmax {
                        if (a, b) <= (0, 0) {
                            continue;
                        }
                        let w = 1.0 / (1.0 + (a * a + b * b) as f64);
                        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                        let amp: f64 = rng.gen_range(0.0..1.0) * w;
                        terms.push((a as f64, b as f64, amp, phase));
                    }
                }
                let raw = pts(&|y1, y2| {
                    terms.iter().map(|&(a, b, w, ph)| w * (c * (a * y1 + b * y2) + ph).cos()).sum()
                });
                let mx = raw.iter().map(|v| v.abs()).fold(0.0, f64::max);
                if mx == 0.0 {
                    raw
                } else {
                    raw.iter().map(|v| v * amplitude / mx).collect()
                }
            }
            RoughnessFamily::Csv { path } => return Self::from_csv(Path::new(path), n, period),
        };
        Self::from_samples(n, period, g)
    }

    /// Reads `y1,y2,gamma` rows (header optional); every lattice point must appear once.
    pub fn from_csv(path: &Path, n: usize, period: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let h = period / n as f64;
        let mut g = vec![f64::NAN; n * n];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
            if cols.len() != 3 {
                return Err(EkblError::Config(format!("{}:{}: expected 3 columns", path.display(), ln + 1)));
            }
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|s| s.parse::<f64>()).collect();
            let Ok(v) = parsed else {
                if ln == 0 {
                    continue;
                }
                return Err(EkblError::Config(format!("{}:{}: not numeric", path.display(), ln + 1)));
            };
            let i = (v[0] / h).round();
            let j = (v[1] / h).round();
            if (v[0] - i * h).abs() > 1e-6 * h || (v[1] - j * h).abs() > 1e-6 * h || i < 0.0 || j < 0.0 {
                return Err(EkblError::Config(format!("{}:{}: point is off the lattice", path.display(), ln + 1)));
            }
            let (i, j) = (i as usize % n, j as usize % n);
            g[i * n + j] = v[2];
        }
        if g.iter().any(|v| v.is_nan()) {
            return Err(EkblError::Config(format!("{}: lattice not fully covered", path.display())));
        }
        Self::from_samples(n, period, g)
    }

    pub fn spectrum(&self) -> Vec<C64> {
        let f = Fft2::new(self.n);
        let c: Vec<C64> = self.gamma.iter().map(|g| C64::new(*g, 0.0)).collect();
        f.to_spectral(&c)
    }

    fn spectral_derivative(&self, o1: u32, o2: u32) -> Vec<f64> {
        let f = Fft2::new(self.n);
        let mut s = self.spectrum();
        for (m, v) in s.iter_mut().enumerate() {
            if nyquist(self.n, m) {
                *v = ZERO;
                continue;
            }
            let (a, b) = xi_of(self.n, self.period, m);
            *v *= (I * a).powu(o1) * (I * b).powu(o2);
        }
        f.to_physical(&s).iter().map(|z| z.re).collect()
    }

    pub fn gradient(&self) -> [Vec<f64>; 2] {
        [self.spectral_derivative(1, 0), self.spectral_derivative(0, 1)]
    }

    pub fn mean(&self) -> f64 {
        self.gamma.iter().sum::<f64>() / self.gamma.len() as f64
    }

    /// Spectral interpolation onto another lattice size.
    pub fn resample(&self, n_to: usize) -> Result<Self> {
        let s = resample_spectrum(&self.spectrum(), self.n, n_to);
        let g = Fft2::new(n_to).to_physical(&s).iter().map(|z| z.re).collect();
        Self::from_samples(n_to, self.period, g)
    }
}

/// Chebyshev–Gauss–Lobatto nodes on `[0,1]` with differentiation and pressure interpolation.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    pub sigma: Vec<f64>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    /// interior-node values → all nodes
    pub pi: Vec<Vec<f64>>,
    pub dpi: Vec<Vec<f64>>,
}

fn bary_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| 1.0 / (0..x.len()).filter(|&k| k != j).map(|k| x[j] - x[k]).product::<f64>())
        .collect()
}

fn diff_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let w = bary_weights(x);
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = (w[j] / w[i]) / (x[i] - x[j]);
                s += d[i][j];
            }
        }
        d[i][i] = -s;
    }
    d
}

fn interp_matrix(from: &[f64], to: &[f64]) -> Vec<Vec<f64>> {
    let w = bary_weights(from);
    to.iter()
        .map(|&t| {
            if let Some(k) = from.iter().position(|&x| x == t) {
                let mut row = vec![0.0; from.len()];
                row[k] = 1.0;
                return row;
            }
            let terms: Vec<f64> = from.iter().zip(&w).map(|(x, wj)| wj / (t - x)).collect();
            let s: f64 = terms.iter().sum();
            terms.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

impl Chebyshev {
    /// `n_sigma = N + 1` nodes.
    pub fn new(n_sigma: usize) -> Result<Self> {
        if n_sigma < 4 {
            return Err(EkblError::Config("n_sigma must be at least 4".into()));
        }
        let nn = n_sigma - 1;
        let sigma: Vec<f64> = (0..=nn).map(|k| 0.5 * (1.0 - (PI * k as f64 / nn as f64).cos())).collect();
        let d1 = diff_matrix(&sigma);
        let d2 = matmul(&d1, &d1);
        let interior = &sigma[1..nn];
        let pi = interp_matrix(interior, &sigma);
        let dpi = matmul(&d1, &pi);
        Ok(Self { sigma, d1, d2, pi, dpi })
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma.len()
    }
}

/// Terrain-following grid and metric terms at every physical point.
#[derive(Clone, Debug)]
pub struct StripGrid {
    pub n: usize,
    pub period: f64,
    pub m_top: f64,
    pub cheb: Chebyshev,
    pub gamma: RoughnessProfile,
    /// `H = M − γ`
    pub h: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g11: Vec<f64>,
    pub g22: Vec<f64>,
}

impl StripGrid {
    pub fn new(gamma: RoughnessProfile, m_top: f64, n_sigma: usize) -> Result<Self> {
        if gamma.n % 2 != 0 || gamma.n < 4 {
            return Err(EkblError::Config("strip lattice size must be even and >= 4".into()));
        }
        if !(m_top > gamma.sup_gamma) {
            return Err(EkblError::Config(format!(
                "interface height M = {m_top} must exceed sup gamma = {}",
                gamma.sup_gamma
            )));
        }
        let cheb = Chebyshev::new(n_sigma)?;
        let h = gamma.gamma.iter().map(|g| m_top - g).collect();
        let [g1, g2] = gamma.gradient();
        let g11 = gamma.spectral_derivative(2, 0);
        let g22 = gamma.spectral_derivative(0, 2);
        Ok(Self {
            n: gamma.n,
            period: gamma.period,
            m_top,
            cheb,
            gamma,
            h,
            g1,
            g2,
            g11,
            g22,
        })
    }

    pub fn n_sigma(&self) -> usize {
        self.cheb.n_sigma()
    }

    pub fn n_modes(&self) -> usize {
        self.n * self.n
    }

    /// Unknowns per mode: three velocity columns and the interior pressure.
    pub fn block(&self) -> usize {
        4 * (self.n_sigma() - 1) + 2
    }

    pub fn xi(&self, m: usize) -> (f64, f64) {
        xi_of(self.n, self.period, m)
    }

    /// Physical height `y₃` of node `(point q, level k)`.
    pub fn height(&self, q: usize, k: usize) -> f64 {
        self.gamma.gamma[q] + self.cheb.sigma[k] * self.h[q]
    }

    fn vidx(&self, m: usize, c: usize, k: usize) -> usize {
        m * self.block() + c * self.n_sigma() + k
    }

    fn pidx(&self, m: usize, k: usize) -> usize {
        m * self.block() + 3 * self.n_sigma() + (k - 1)
    }
}

/// Prescribed `(∂₃v − (p + |v|²/2)e₃)|_{y₃=M}` as three spectral arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct StressTrace {
    pub n: usize,
    pub psi: [Vec<C64>; 3],
}

impl StressTrace {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            psi: [vec![ZERO; n * n], vec![ZERO; n * n], vec![ZERO; n * n]],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.psi.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_vec(&self) -> Vec<C64> {
        self.psi.concat()
    }

    pub fn from_vec(n: usize, v: &[C64]) -> Self {
        let nm = n * n;
        Self {
            n,
            psi: [v[..nm].to_vec(), v[nm..2 * nm].to_vec(), v[2 * nm..3 * nm].to_vec()],
        }
    }
}

/// Bottom velocity `φ` as spectral arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct BottomData {
    pub n: usize,
    pub phi: [Vec<C64>; 3],
}

impl BottomData {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            phi: [vec![ZERO; n * n], vec![ZERO; n * n], vec![ZERO; n * n]],
        }
    }

    /// Tangent data: given horizontal components, `φ₃ = φ_h·∇γ` (pseudo-spectral product).
    pub fn tangent(gamma: &RoughnessProfile, phi_h: [Vec<C64>; 2]) -> Self {
        let n = gamma.n;
        let f = Fft2::new(n);
        let [g1, g2] = gamma.gradient();
        let p1 = f.to_physical(&phi_h[0]);
        let p2 = f.to_physical(&phi_h[1]);
        let p3: Vec<C64> = (0..n * n).map(|q| p1[q] * g1[q] + p2[q] * g2[q]).collect();
        let mut s3 = f.to_spectral(&p3);
        crate::spectral::zero_nyquist(&mut s3, n);
        let [a, b] = phi_h;
        Self { n, phi: [a, b, s3] }
    }

    /// Uniform horizontal velocity `(a₁, a₂)` made tangent to the bottom.
    pub fn uniform(gamma: &RoughnessProfile, a: [f64; 2]) -> Self {
        let n = gamma.n;
        let mut h = [vec![ZERO; n * n], vec![ZERO; n * n]];
        h[0][0] = C64::new(a[0], 0.0);
        h[1][0] = C64::new(a[1], 0.0);
        Self::tangent(gamma, h)
    }

    pub fn max_abs(&self) -> f64 {
        self.phi.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest `|φ·n|` on the lattice (unnormalised normal `(−∇γ, 1)`).
    pub fn tangency_defect(&self, gamma: &RoughnessProfile) -> f64 {
        let f = Fft2::new(self.n);
        let [g1, g2] = gamma.gradient();
        let p: Vec<Vec<C64>> = self.phi.iter().map(|s| f.to_physical(s)).collect();
        (0..self.n * self.n)
            .map(|q| (p[2][q] - p[0][q] * g1[q] - p[1][q] * g2[q]).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub gmres_iterations: Vec<usize>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct StripOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub gmres_restart: usize,
    pub gmres_max: usize,
}

impl Default for StripOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 25,
            gmres_restart: 80,
            gmres_max: 800,
        }
    }
}

/// Discrete strip solution: the Newton unknown vector and helpers to read it.
#[derive(Clone, Debug)]
pub struct StripSolution {
    pub x: Vec<C64>,
    pub report: NewtonReport,
}

/// Velocity derivative channels kept per level.
const VAL: usize = 0;
const D1: usize = 1;
const D2: usize = 2;
const DS: usize = 3;
const LAPH: usize = 4;
const D1S: usize = 5;
const D2S: usize = 6;
const DSS: usize = 7;

/// Physical-space values of all derivatives needed by the residual.
struct Phys {
    /// `v[k][c][channel][q]`
    v: Vec<[[Vec<C64>; 8]; 3]>,
    /// `p[k][channel][q]` with channels value, ∂₁, ∂₂, ∂σ
    p: Vec<[Vec<C64>; 4]>,
    /// spectral top velocity
    top: [Vec<C64>; 3],
}

/// Residual operator and preconditioner bound to one strip grid.
pub struct StripOperator {
    pub grid: StripGrid,
    fft: Fft2,
    fft_big: Fft2,
    precond: Vec<Option<DenseLu>>,
}

impl StripOperator {
    pub fn new(grid: StripGrid) -> Result<Self> {
        let fft = Fft2::new(grid.n);
        let fft_big = Fft2::new(2 * grid.n);
        let hbar = grid.m_top - grid.gamma.mean();
        let precond = (0..grid.n_modes())
            .into_par_iter()
            .map(|m| {
                if nyquist(grid.n, m) {
                    Ok(None)
                } else {
                    flat_block(&grid, m, hbar).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            fft,
            fft_big,
            precond,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.n_modes() * self.grid.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn phys(&self, x: &[C64]) -> Phys {
        let g = &self.grid;
        let ns = g.n_sigma();
        let nm = g.n_modes();
        let ch = &g.cheb;
        // spectral velocity per component per level, with σ-derivatives
        let mut spec: [Vec<Vec<C64>>; 3] = std::array::from_fn(|_| vec![vec![ZERO; nm]; ns]);
        let mut pin = vec![vec![ZERO; nm]; ns.saturating_sub(2)];
        for m in 0..nm {
            if nyquist(g.n, m) {
                continue;
            }
            for c in 0..3 {
                for k in 0..ns {
                    spec[c][k][m] = x[g.vidx(m, c, k)];
                }
            }
            for k in 1..ns - 1 {
                pin[k - 1][m] = x[g.pidx(m, k)];
            }
        }
        let apply = |mat: &Vec<Vec<f64>>, src: &Vec<Vec<C64>>| -> Vec<Vec<C64>> {
            (0..mat.len())
                .map(|k| {
                    let mut out = vec![ZERO; nm];
                    for (l, w) in mat[k].iter().enumerate() {
                        if *w != 0.0 {
                            for (o, s) in out.iter_mut().zip(&src[l]) {
                                *o += s * *w;
                            }
                        }
                    }
                    out
                })
                .collect()
        };
        let vs: Vec<Vec<Vec<C64>>> = (0..3).map(|c| apply(&ch.d1, &spec[c])).collect();
        let vss: Vec<Vec<Vec<C64>>> = (0..3).map(|c| apply(&ch.d2, &spec[c])).collect();
        let pf = apply(&ch.pi, &pin);
        let ps = apply(&ch.dpi, &pin);
        let xis: Vec<(C64, C64)> = (0..nm)
            .map(|m| {
                let (a, b) = g.xi(m);
                (I * a, I * b)
            })
            .collect();
        let fft = &self.fft;
        let levels: Vec<([[Vec<C64>; 8]; 3], [Vec<C64>; 4])> = (0..ns)
            .into_par_iter()
            .map(|k| {
                let mk = |f: &dyn Fn(usize) -> C64| -> Vec<C64> { fft.to_physical(&(0..nm).map(f).collect::<Vec<_>>()) };
                let mut v: [[Vec<C64>; 8]; 3] = Default::default();
                for c in 0..3 {
                    let s = &spec[c][k];
                    let d = &vs[c][k];
                    v[c][VAL] = mk(&|m| s[m]);
                    v[c][D1] = mk(&|m| xis[m].0 * s[m]);
                    v[c][D2] = mk(&|m| xis[m].1 * s[m]);
                    v[c][DS] = mk(&|m| d[m]);
                    v[c][LAPH] = mk(&|m| (xis[m].0 * xis[m].0 + xis[m].1 * xis[m].1) * s[m]);
                    v[c][D1S] = mk(&|m| xis[m].0 * d[m]);
                    v[c][D2S] = mk(&|m| xis[m].1 * d[m]);
                    v[c][DSS] = mk(&|m| vss[c][k][m]);
                }
                let p = [
                    mk(&|m| pf[k][m]),
                    mk(&|m| xis[m].0 * pf[k][m]),
                    mk(&|m| xis[m].1 * pf[k][m]),
                    mk(&|m| ps[k][m]),
                ];
                (v, p)
            })
            .collect();
        let top = [spec[0][ns - 1].clone(), spec[1][ns - 1].clone(), spec[2][ns - 1].clone()];
        let (v, p) = levels.into_iter().unzip();
        Phys { v, p, top }
    }

    /// Residual (`base = None`, data given) or Jacobian action at `base` (data ignored).
    fn eval(&self, x: &[C64], base: Option<&Phys>, data: Option<(&BottomData, &StressTrace)>) -> Vec<C64> {
        let g = &self.grid;
        let ns = g.n_sigma();
        let nn = ns - 1;
        let nm = g.n_modes();
        let np = nm;
        let ph = self.phys(x);
        let (pa, pb): (&Phys, &Phys) = match base {
            None => (&ph, &ph),
            Some(b) => (b, &ph),
        };
        // convective term N(a,b)_c = Σ_l a_l ∂_l b_c at level k, point q
        let conv = |a: &Phys, b: &Phys, k: usize, q: usize, c: usize, am: [f64; 2], hq: f64| -> C64 {
            let bv = &b.v[k][c];
            let d1 = bv[D1][q] + bv[DS][q] * am[0];
            let d2 = bv[D2][q] + bv[DS][q] * am[1];
            let d3 = bv[DS][q] / hq;
            a.v[k][0][VAL][q] * d1 + a.v[k][1][VAL][q] * d2 + a.v[k][2][VAL][q] * d3
        };
        let fft = &self.fft;
        // rows per level in physical space, then transformed
        let rows: Vec<Vec<Vec<C64>>> = (1..nn)
            .into_par_iter()
            .map(|k| {
                let s = g.cheb.sigma[k];
                let mut r = vec![vec![ZERO; np]; 4];
                for q in 0..np {
                    let hq = g.h[q];
                    let a = [-(1.0 - s) * g.g1[q] / hq, -(1.0 - s) * g.g2[q] / hq];
                    let b = [
                        -(1.0 - s) * g.g11[q] / hq - 2.0 * (1.0 - s) * g.g1[q] * g.g1[q] / (hq * hq),
                        -(1.0 - s) * g.g22[q] / hq - 2.0 * (1.0 - s) * g.g2[q] * g.g2[q] / (hq * hq),
                    ];
                    let v = &ph.v[k];
                    let lap = |c: usize| -> C64 {
                        let f = &v[c];
                        f[LAPH][q]
                            + (f[D1S][q] * a[0] + f[D2S][q] * a[1]) * 2.0
                            + f[DSS][q] * (a[0] * a[0] + a[1] * a[1] + 1.0 / (hq * hq))
                            + f[DS][q] * (b[0] + b[1])
                    };
                    let p = &ph.p[k];
                    let gp = [p[1][q] + p[3][q] * a[0], p[2][q] + p[3][q] * a[1], p[3][q] / hq];
                    let cor = [-v[1][VAL][q], v[0][VAL][q], ZERO];
                    for c in 0..3 {
                        let mut val = cor[c] + gp[c] - lap(c);
                        val += conv(pa, pb, k, q, c, a, hq);
                        if base.is_some() {
                            val += conv(pb, pa, k, q, c, a, hq);
                        }
                        r[c][q] = val;
                    }
                    r[3][q] = v[0][D1][q] + v[0][DS][q] * a[0] + v[1][D2][q] + v[1][DS][q] * a[1] + v[2][DS][q] / hq;
                }
                r.into_iter().map(|f| fft.to_spectral(&f)).collect()
            })
            .collect();
        // top rows
        let mut top: Vec<Vec<C64>> = (0..3)
            .map(|c| {
                let f: Vec<C64> = (0..np).map(|q| ph.v[nn][c][DS][q] / g.h[q]).collect();
                fft.to_spectral(&f)
            })
            .collect();
        let ptop: Vec<C64> = {
            let f: Vec<C64> = ph.p[nn][0].clone();
            fft.to_spectral(&f)
        };
        let mut ke = vec![ZERO; nm];
        for c in 0..3 {
            let prod = match base {
                None => product_unaliased_with(&self.fft_big, &ph.top[c], &ph.top[c], g.n),
                Some(b) => product_unaliased_with(&self.fft_big, &b.top[c], &ph.top[c], g.n)
                    .iter()
                    .map(|v| v * 2.0)
                    .collect(),
            };
            for m in 0..nm {
                ke[m] += prod[m] * 0.5;
            }
        }
        for m in 0..nm {
            top[2][m] -= ptop[m] + ke[m];
        }
        let mut out = vec![ZERO; self.len()];
        for m in 0..nm {
            if nyquist(g.n, m) {
                let b = g.block();
                out[m * b..(m + 1) * b].copy_from_slice(&x[m * b..(m + 1) * b]);
                continue;
            }
            for c in 0..3 {
                let mut bottom = x[g.vidx(m, c, 0)];
                let mut t = top[c][m];
                if let Some((phi, psi)) = data {
                    bottom -= phi.phi[c][m];
                    t -= psi.psi[c][m];
                }
                out[g.vidx(m, c, 0)] = bottom;
                out[g.vidx(m, c, nn)] = t;
                for k in 1..nn {
                    out[g.vidx(m, c, k)] = rows[k - 1][c][m];
                }
            }
            for k in 1..nn {
                out[g.pidx(m, k)] = rows[k - 1][3][m];
            }
        }
        out
    }

    pub fn residual(&self, x: &[C64], phi: &BottomData, psi: &StressTrace) -> Vec<C64> {
        self.eval(x, None, Some((phi, psi)))
    }

    fn precondition(&self, v: &mut [C64]) {
        let b = self.grid.block();
        v.par_chunks_mut(b).enumerate().for_each(|(m, chunk)| {
            if let Some(lu) = &self.precond[m] {
                lu.solve_in_place(chunk);
            }
        });
    }

    /// Flat-bottom linear response of the top velocity to a unit stress on mode m:
    /// column c is `v(M)` for `ψ = e_c`, zero bottom data.
    pub fn flat_trace_response(&self, m: usize) -> Option<[[C64; 3]; 3]> {
        let lu = self.precond[m].as_ref()?;
        let g = &self.grid;
        let ns = g.n_sigma();
        let nn = ns - 1;
        let mut t = [[ZERO; 3]; 3];
        for c in 0..3 {
            let mut b = vec![ZERO; g.block()];
            b[c * ns + nn] = C64::new(1.0, 0.0);
            lu.solve_in_place(&mut b);
            for r in 0..3 {
                t[r][c] = b[r * ns + nn];
            }
        }
        Some(t)
    }

    /// Lifted initial guess: `v_h = φ_h`, `v₃ = φ₃ − (∇_h·φ_h)(y₃ − γ)`, `p = 0`.
    pub fn lift(&self, phi: &BottomData) -> Vec<C64> {
        let g = &self.grid;
        let nm = g.n_modes();
        let mut x = vec![ZERO; self.len()];
        let mut div = vec![ZERO; nm];
        for m in 0..nm {
            if nyquist(g.n, m) {
                continue;
            }
            let (a, b) = g.xi(m);
            div[m] = I * a * phi.phi[0][m] + I * b * phi.phi[1][m];
        }
        let divp = self.fft.to_physical(&div);
        for k in 0..g.n_sigma() {
            let s = g.cheb.sigma[k];
            let f: Vec<C64> = (0..nm).map(|q| divp[q] * (s * g.h[q])).collect();
            let corr = self.fft.to_spectral(&f);
            for m in 0..nm {
                if nyquist(g.n, m) {
                    continue;
                }
                x[g.vidx(m, 0, k)] = phi.phi[0][m];
                x[g.vidx(m, 1, k)] = phi.phi[1][m];
                x[g.vidx(m, 2, k)] = phi.phi[2][m] - corr[m];
            }
        }
        x
    }

    /// Newton–GMRES solve of the strip problem.
    pub fn solve(
        &self,
        phi: &BottomData,
        psi: &StressTrace,
        opts: &StripOptions,
        initial: Option<Vec<C64>>,
    ) -> Result<StripSolution> {
        let g = &self.grid;
        if phi.n != g.n || psi.n != g.n {
            return Err(EkblError::Shape("strip data lattice differs from grid".into()));
        }
        let scale = phi.max_abs().max(psi.max_abs());
        let defect = phi.tangency_defect(&g.gamma);
        if defect > 1e-8 * scale.max(1.0) {
            return Err(EkblError::Precondition(format!(
                "bottom data is not tangent to the boundary (|phi.n| up to {defect:.3e})"
            )));
        }
        let mut x = initial.unwrap_or_else(|| self.lift(phi));
        if x.len() != self.len() {
            return Err(EkblError::Shape("initial guess has the wrong length".into()));
        }
        let mut report = NewtonReport::default();
        let norm = |r: &[C64]| r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut r = self.residual(&x, phi, psi);
        let mut rn = norm(&r);
        report.residual_history.push(rn);
        while rn > opts.tol {
            if report.iterations >= opts.max_newton {
                return Err(EkblError::NewtonStagnation(format!(
                    "strip Newton did not reach {:.1e} in {} steps (last residual {rn:.3e}); data may violate smallness or the grid is too coarse",
                    opts.tol, opts.max_newton
                )));
            }
            let base = self.phys(&x);
            let rhs: Vec<C64> = r.iter().map(|v| -v).collect();
            let eta = (0.1 * rn).clamp(1e-12, 1e-3);
            let mut apply = |d: &[C64]| -> Result<Vec<C64>> { Ok(self.eval(d, Some(&base), None)) };
            let (dx, st) = gmres(&mut apply, &|v: &mut [C64]| self.precondition(v), &rhs, eta, opts.gmres_restart, opts.gmres_max)?;
            report.gmres_iterations.push(st.iterations);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let trial: Vec<C64> = x.iter().zip(&dx).map(|(a, d)| a + d * t).collect();
                let rt = self.residual(&trial, phi, psi);
                let nt = norm(&rt);
                if nt.is_finite() && nt < (1.0 - 1e-4 * t) * rn {
                    x = trial;
                    r = rt;
                    rn = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            report.iterations += 1;
            report.residual_history.push(rn);
            if !accepted {
                return Err(EkblError::NewtonStagnation(format!(
                    "strip Newton line search failed at residual {rn:.3e}; data may violate smallness or the grid is too coarse"
                )));
            }
        }
        report.converged = true;
        Ok(StripSolution { x, report })
    }

    /// Spectral velocity component `c` on level `k`.
    pub fn velocity(&self, sol: &StripSolution, c: usize, k: usize) -> Vec<C64> {
        (0..self.grid.n_modes()).map(|m| sol.x[self.grid.vidx(m, c, k)]).collect()
    }

    /// Spectral pressure on level `k` (polynomial extension at the end levels).
    pub fn pressure(&self, sol: &StripSolution, k: usize) -> Vec<C64> {
        let g = &self.grid;
        let ns = g.n_sigma();
        (0..g.n_modes())
            .map(|m| {
                if nyquist(g.n, m) {
                    return ZERO;
                }
                (1..ns - 1).map(|i| sol.x[g.pidx(m, i)] * g.cheb.pi[k][i - 1]).sum()
            })
            .collect()
    }

    pub fn trace_top(&self, sol: &StripSolution) -> [Vec<C64>; 3] {
        let k = self.grid.n_sigma() - 1;
        [self.velocity(sol, 0, k), self.velocity(sol, 1, k), self.velocity(sol, 2, k)]
    }

    /// `(∂₃v − (p + |v|²/2)e₃)|_{y₃=M}` from a strip solution.
    pub fn stress_trace_top(&self, sol: &StripSolution) -> StressTrace {
        let zero = StressTrace::zeros(self.grid.n);
        let r = self.eval(&sol.x, None, Some((&BottomData::zeros(self.grid.n), &zero)));
        let nn = self.grid.n_sigma() - 1;
        let mut psi = StressTrace::zeros(self.grid.n);
        for m in 0..self.grid.n_modes() {
            if nyquist(self.grid.n, m) {
                continue;
            }
            for c in 0..3 {
                psi.psi[c][m] = r[self.grid.vidx(m, c, nn)];
            }
        }
        psi
    }

    /// Split residual norms: bottom, momentum, continuity, top.
    pub fn residual_parts(&self, sol: &StripSolution, phi: &BottomData, psi: &StressTrace) -> [f64; 4] {
        let g = &self.grid;
        let r = self.residual(&sol.x, phi, psi);
        let nn = g.n_sigma() - 1;
        let mut out = [0.0f64; 4];
        for m in 0..g.n_modes() {
            for c in 0..3 {
                out[0] = out[0].max(r[g.vidx(m, c, 0)].norm());
                out[3] = out[3].max(r[g.vidx(m, c, nn)].norm());
                for k in 1..nn {
                    out[1] = out[1].max(r[g.vidx(m, c, k)].norm());
                }
            }
            for k in 1..nn {
                out[2] = out[2].max(r[g.pidx(m, k)].norm());
            }
        }
        out
    }

    /// Physical-space velocity samples `(y₁, y₂, y₃, v)` at every node.
    pub fn physical_nodes(&self, sol: &StripSolution) -> Vec<(f64, f64, f64, [f64; 3], f64)> {
        let g = &self.grid;
        let hstep = g.period / g.n as f64;
        let mut out = Vec::with_capacity(g.n_modes() * g.n_sigma());
        for k in 0..g.n_sigma() {
            let v: Vec<Vec<C64>> = (0..3).map(|c| self.fft.to_physical(&self.velocity(sol, c, k))).collect();
            let p = self.fft.to_physical(&self.pressure(sol, k));
            for q in 0..g.n_modes() {
                out.push((
                    (q / g.n) as f64 * hstep,
                    (q % g.n) as f64 * hstep,
                    g.height(q, k),
                    [v[0][q].re, v[1][q].re, v[2][q].re],
                    p[q].re,
                ));
            }
        }
        out
    }

    /// Horizontal mean of `v₃` on each level.
    pub fn mean_vertical_flux(&self, sol: &StripSolution) -> Vec<f64> {
        (0..self.grid.n_sigma())
            .map(|k| {
                // mean over physical points on a σ-level (not a y₃-level)
                let p = self.fft.to_physical(&self.velocity(sol, 2, k));
                p.iter().map(|v| v.re).sum::<f64>() / p.len() as f64
            })
            .collect()
    }
}

/// Flat-bottom linear Stokes–Coriolis block for mode m with depth `hbar`.
fn flat_block(g: &StripGrid, m: usize, hbar: f64) -> Result<DenseLu> {
    let ns = g.n_sigma();
    let nn = ns - 1;
    let b = g.block();
    let (x1, x2) = g.xi(m);
    let (k1, k2) = (I * x1, I * x2);
    let s = x1 * x1 + x2 * x2;
    let ch = &g.cheb;
    let mut a = vec![ZERO; b * b];
    let vi = |c: usize, k: usize| c * ns + k;
    let pi = |k: usize| 3 * ns + (k - 1);
    let mut set = |r: usize, c: usize, v: C64| a[r * b + c] += v;
    for c in 0..3 {
        set(vi(c, 0), vi(c, 0), C64::new(1.0, 0.0));
        for k in 1..nn {
            let r = vi(c, k);
            // −Δ
            set(r, vi(c, k), C64::new(s, 0.0));
            for l in 0..ns {
                set(r, vi(c, l), C64::new(-ch.d2[k][l] / (hbar * hbar), 0.0));
            }
            match c {
                0 => set(r, vi(1, k), C64::new(-1.0, 0.0)),
                1 => set(r, vi(0, k), C64::new(1.0, 0.0)),
                _ => {}
            }
            for i in 1..nn {
                let w = match c {
                    0 => k1 * ch.pi[k][i - 1],
                    1 => k2 * ch.pi[k][i - 1],
                    _ => C64::new(ch.dpi[k][i - 1] / hbar, 0.0),
                };
                set(r, pi(i), w);
            }
        }
        let r = vi(c, nn);
        for l in 0..ns {
            set(r, vi(c, l), C64::new(ch.d1[nn][l] / hbar, 0.0));
        }
        if c == 2 {
            for i in 1..nn {
                set(r, pi(i), C64::new(-ch.pi[nn][i - 1], 0.0));
            }
        }
    }
    for k in 1..nn {
        let r = pi(k);
        set(r, vi(0, k), k1);
        set(r, vi(1, k), k2);
        for l in 0..ns {
            set(r, vi(2, l), C64::new(ch.d1[k][l] / hbar, 0.0));
        }
    }
    DenseLu::new(b, &a)
}

/// Convenience wrapper: build the operator and solve.
pub fn solve_strip(
    phi: &BottomData,
    psi: &StressTrace,
    grid: StripGrid,
    tol: f64,
) -> Result<(StripOperator, StripSolution)> {
    let op = StripOperator::new(grid)?;
    let opts = StripOptions {
        tol,
        ..Default::default()
    };
    let sol = op.solve(phi, psi, &opts, None)?;
    Ok((op, sol))
}

/// Lifted field `v^L` on all nodes as spectral arrays `[c][k]`.
pub fn lift_boundary(phi: &BottomData, op: &StripOperator) -> Result<Vec<[Vec<C64>; 3]>> {
    let scale = phi.max_abs().max(1.0);
    let defect = phi.tangency_defect(&op.grid.gamma);
    if defect > 1e-8 * scale {
        return Err(EkblError::Precondition(format!(
            "bottom data must be tangent to the boundary (phi.n = 0); defect {defect:.3e}"
        )));
    }
    let x = op.lift(phi);
    let sol = StripSolution {
        x,
        report: NewtonReport::default(),
    };
    Ok((0..op.grid.n_sigma())
        .map(|k| [op.velocity(&sol, 0, k), op.velocity(&sol, 1, k), op.velocity(&sol, 2, k)])
        .collect())
}
