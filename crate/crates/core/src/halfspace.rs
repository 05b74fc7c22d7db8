//! Linear Stokes–Coriolis solver on the horizontally periodic half-space `z > 0`:
//!
//! `e×v + ∇p − Δv = div F`, `div v = 0`, `v|_{z=0} = v₀`,
//!
//! solved mode by mode through the vertical-velocity / vertical-vorticity reformulation.
//! The particular solution is the exact convolution of the Green function with a cubic-spline
//! interpolant of the decomposed source; the boundary values are then corrected with the
//! decaying homogeneous modes `e^{−λ_i z} V_i⁻`.

use crate::error::{EkblError, Result};
use crate::green::{boundary_coeffs, interior_coeffs, InteriorCoeffs};
use crate::roots::{char_roots_sq, CharRoots};
use crate::spectral::{FieldRole, Fft2, SpectralField, SpectralGrid};
use crate::vertical::{nodal_derivatives, MomentTable, SplineFactor};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::{Arc, OnceLock};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Dirichlet data at `z = 0` together with the horizontal potentials `ν` of its vertical part.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub n: usize,
    pub v0: [Vec<C64>; 3],
    pub nu: [Vec<C64>; 2],
}

impl BoundaryData {
    pub fn zeros(n: usize) -> Self {
        let z = vec![ZERO; n * n];
        Self {
            n,
            v0: [z.clone(), z.clone(), z.clone()],
            nu: [z.clone(), z],
        }
    }

    /// Horizontal trace plus potentials; the vertical trace is set to `iξ·ν̂`.
    pub fn from_potentials(grid: &SpectralGrid, v0h: [Vec<C64>; 2], nu: [Vec<C64>; 2]) -> Result<Self> {
        let nm = grid.n_modes();
        if v0h.iter().chain(nu.iter()).any(|v| v.len() != nm) {
            return Err(EkblError::Shape("boundary arrays must have n^2 entries".into()));
        }
        let mut v3 = vec![ZERO; nm];
        for m in 0..nm {
            let (x1, x2) = grid.xi(m);
            v3[m] = I * x1 * nu[0][m] + I * x2 * nu[1][m];
        }
        let [a, b] = v0h;
        Ok(Self {
            n: grid.n,
            v0: [a, b, v3],
            nu,
        })
    }

    /// Full velocity trace; potentials are reconstructed from the vertical part.
    pub fn from_trace(grid: &SpectralGrid, v0: [Vec<C64>; 3], mean_tol: f64) -> Result<Self> {
        let nu = compatibility_potentials(grid, &v0[2], mean_tol)?;
        let [a, b, mut c] = v0;
        c[0] = ZERO;
        Ok(Self {
            n: grid.n,
            v0: [a, b, c],
            nu,
        })
    }

    /// Uniform horizontal data `(φ₁, φ₂, 0)`.
    pub fn uniform(grid: &SpectralGrid, phi: [f64; 2]) -> Self {
        let mut d = Self::zeros(grid.n);
        d.v0[0][0] = C64::new(phi[0], 0.0);
        d.v0[1][0] = C64::new(phi[1], 0.0);
        d
    }

    /// Check `v̂₀,₃ = iξ·ν̂` on every mode.
    pub fn check(&self, grid: &SpectralGrid, tol: f64) -> Result<()> {
        if self.n != grid.n {
            return Err(EkblError::Shape("boundary data lattice differs from grid".into()));
        }
        let scale = self.v0[2].iter().map(|v| v.norm()).fold(1.0, f64::max);
        if self.v0[2][0].norm() > tol * scale {
            return Err(EkblError::CompatViolated(format!(
                "vertical boundary velocity has nonzero horizontal mean {:.3e}; the data must be the divergence of horizontal potentials",
                self.v0[2][0].norm()
            )));
        }
        for m in 0..grid.n_modes() {
            let (x1, x2) = grid.xi(m);
            let d = self.v0[2][m] - (I * x1 * self.nu[0][m] + I * x2 * self.nu[1][m]);
            if d.norm() > tol * scale {
                return Err(EkblError::CompatViolated(format!(
                    "vertical boundary velocity differs from div(nu) by {:.3e} at mode {m}",
                    d.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &Vec<C64>| v.iter().map(|x| x * c).collect::<Vec<_>>();
        Self {
            n: self.n,
            v0: [s(&self.v0[0]), s(&self.v0[1]), s(&self.v0[2])],
            nu: [s(&self.nu[0]), s(&self.nu[1])],
        }
    }
}

/// `ν̂_j = −iξ_j v̂₃/|ξ|²`, so that `iξ·ν̂ = v̂₃`; errors if the mean of `v₃` is not zero.
pub fn compatibility_potentials(grid: &SpectralGrid, v3: &[C64], mean_tol: f64) -> Result<[Vec<C64>; 2]> {
    let nm = grid.n_modes();
    if v3.len() != nm {
        return Err(EkblError::Shape("trace must have n^2 entries".into()));
    }
    let scale = v3.iter().map(|v| v.norm()).fold(1.0, f64::max);
    if v3[0].norm() > mean_tol * scale {
        return Err(EkblError::CompatViolated(format!(
            "vertical trace has nonzero horizontal mean {:.3e}",
            v3[0].norm()
        )));
    }
    let mut n1 = vec![ZERO; nm];
    let mut n2 = vec![ZERO; nm];
    for m in 1..nm {
        let (x1, x2) = grid.xi(m);
        let s = x1 * x1 + x2 * x2;
        n1[m] = -I * x1 * v3[m] / s;
        n2[m] = -I * x2 * v3[m] / s;
    }
    Ok([n1, n2])
}

/// Source tensor `F_ij`; absent components are zero. `div F` has components `Σ_j ∂_j F_ij`.
#[derive(Clone, Debug, Default)]
pub struct SourceTensor {
    pub comps: [[Option<Arc<SpectralField>>; 3]; 3],
}

impl SourceTensor {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn set(&mut self, i: usize, j: usize, f: SpectralField) {
        self.comps[i][j] = Some(Arc::new(f));
    }

    /// Set `F_ij` and `F_ji` to the same field.
    pub fn set_symmetric(&mut self, i: usize, j: usize, f: SpectralField) {
        let a = Arc::new(f);
        self.comps[i][j] = Some(a.clone());
        self.comps[j][i] = Some(a);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&SpectralField> {
        self.comps[i][j].as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().flatten().all(|c| c.as_ref().map_or(true, |f| f.is_zero()))
    }

    /// Components of mode m as 9 profiles (zero profiles for absent entries).
    pub fn mode(&self, m: usize, nz: usize) -> [[Vec<C64>; 3]; 3] {
        let get = |i: usize, j: usize| match &self.comps[i][j] {
            Some(f) => f.mode(m).to_vec(),
            None => vec![ZERO; nz],
        };
        [
            [get(0, 0), get(0, 1), get(0, 2)],
            [get(1, 0), get(1, 1), get(1, 2)],
            [get(2, 0), get(2, 1), get(2, 2)],
        ]
    }

    fn mode_is_zero(&self, m: usize) -> bool {
        self.comps
            .iter()
            .flatten()
            .all(|c| c.as_ref().map_or(true, |f| f.mode(m).iter().all(|v| *v == ZERO)))
    }

    pub fn check(&self, grid: &SpectralGrid) -> Result<()> {
        for f in self.comps.iter().flatten().flatten() {
            if f.n != grid.n || f.nz != grid.nz() {
                return Err(EkblError::Shape("source component does not match the grid".into()));
            }
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SourceTensor, b: f64) -> SourceTensor {
        let mut out = SourceTensor::zero();
        for i in 0..3 {
            for j in 0..3 {
                let x = self.get(i, j);
                let y = other.get(i, j);
                let f = match (x, y) {
                    (None, None) => continue,
                    (Some(x), None) => {
                        let mut f = x.clone();
                        f.scale(C64::new(a, 0.0));
                        f
                    }
                    (None, Some(y)) => {
                        let mut f = y.clone();
                        f.scale(C64::new(b, 0.0));
                        f
                    }
                    (Some(x), Some(y)) => {
                        let mut f = x.clone();
                        f.scale(C64::new(a, 0.0));
                        f.axpy(C64::new(b, 0.0), y);
                        f
                    }
                };
                out.set(i, j, f);
            }
        }
        out
    }
}

/// `S⁰, S¹, S²` with `S = S⁰ + ∂zS¹ + ∂z²S²` equal to the right-hand side `(s₃, s_ω)`
/// of the reformulated system; only horizontal derivatives of `F` appear.
#[derive(Clone, Debug)]
pub struct SourceDecomposition {
    pub s0: [SpectralField; 2],
    pub s1: [SpectralField; 2],
    pub s2: [SpectralField; 2],
}

/// Per-mode, per-node decomposition; returns `[[S⁰₁,S⁰₂],[S¹₁,S¹₂],[S²₁,S²₂]]`.
pub fn decompose_mode(xi: (f64, f64), f: [[C64; 3]; 3]) -> [[C64; 2]; 3] {
    let k1 = I * xi.0;
    let k2 = I * xi.1;
    let s = xi.0 * xi.0 + xi.1 * xi.1;
    let d1 = k1 * f[0][0] + k2 * f[0][1];
    let d2 = k1 * f[1][0] + k2 * f[1][1];
    let d3 = k1 * f[2][0] + k2 * f[2][1];
    [
        [k2 * d1 - k1 * d2, d3 * s],
        [k2 * f[0][2] - k1 * f[1][2], k1 * d1 + k2 * d2 + f[2][2] * s],
        [ZERO, k1 * f[0][2] + k2 * f[1][2]],
    ]
}

pub fn decompose_source(f: &SourceTensor, grid: &SpectralGrid) -> Result<SourceDecomposition> {
    f.check(grid)?;
    let nz = grid.nz();
    let mk = || SpectralField::for_grid(grid, FieldRole::Source);
    let mut out = SourceDecomposition {
        s0: [mk(), mk()],
        s1: [mk(), mk()],
        s2: [mk(), mk()],
    };
    for m in 0..grid.n_modes() {
        let fm = f.mode(m, nz);
        let xi = grid.xi(m);
        for j in 0..nz {
            let at = [
                [fm[0][0][j], fm[0][1][j], fm[0][2][j]],
                [fm[1][0][j], fm[1][1][j], fm[1][2][j]],
                [fm[2][0][j], fm[2][1][j], fm[2][2][j]],
            ];
            let d = decompose_mode(xi, at);
            for c in 0..2 {
                out.s0[c].set(m, j, d[0][c]);
                out.s1[c].set(m, j, d[1][c]);
                out.s2[c].set(m, j, d[2][c]);
            }
        }
    }
    Ok(out)
}

/// Velocity, vertical derivative of velocity, pressure and vertical vorticity.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub v: [SpectralField; 3],
    pub dz_v: [SpectralField; 3],
    pub p: SpectralField,
    pub omega: SpectralField,
}

impl FlowField {
    pub fn zeros(grid: &SpectralGrid) -> Self {
        let v = || SpectralField::for_grid(grid, FieldRole::Velocity);
        Self {
            v: [v(), v(), v()],
            dz_v: [v(), v(), v()],
            p: SpectralField::for_grid(grid, FieldRole::Pressure),
            omega: SpectralField::for_grid(grid, FieldRole::Vorticity),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }
}

/// Roots, Green coefficients and interval moments shared by all modes with the same |ξ|².
pub struct ModeKernel {
    pub roots: CharRoots,
    pub coeffs: Option<InteriorCoeffs>,
    pub moments: Vec<MomentTable>,
}

/// Momentum/divergence/boundary residuals of a computed solution (sup over modes and nodes).
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct ResidualReport {
    pub momentum: f64,
    pub divergence: f64,
    pub boundary: f64,
    pub scale: f64,
}

impl ResidualReport {
    pub fn relative_momentum(&self) -> f64 {
        self.momentum / self.scale.max(1e-300)
    }
}

/// Per-mode output of the vertical solve: derivatives `V^{(k)}` of `(v̂₃, ω̂)` at the nodes.
struct ModeProfiles {
    dv: Vec<Vec<[C64; 2]>>,
}

/// Linear half-space solver bound to one grid. Caches per-|ξ|² kernels across solves.
pub struct HalfSpaceSolver {
    pub grid: SpectralGrid,
    spline: SplineFactor,
    class_of_mode: Vec<usize>,
    class_s: Vec<f64>,
    kernels: Vec<OnceLock<Arc<ModeKernel>>>,
    zero_moments: [MomentTable; 2],
    fft: Fft2,
}

fn mu(sign: f64) -> C64 {
    C64::new(FRAC_1_SQRT_2, sign * FRAC_1_SQRT_2)
}

impl HalfSpaceSolver {
    pub fn new(grid: SpectralGrid) -> Self {
        let spline = SplineFactor::new(grid.z());
        let mut map: HashMap<i64, usize> = HashMap::new();
        let mut class_s = Vec::new();
        let c = 2.0 * std::f64::consts::PI / grid.period;
        let class_of_mode = (0..grid.n_modes())
            .map(|m| {
                let (a, b) = grid.wavenumbers(m);
                let key = a * a + b * b;
                *map.entry(key).or_insert_with(|| {
                    class_s.push(c * c * key as f64);
                    class_s.len() - 1
                })
            })
            .collect();
        let kernels = (0..class_s.len()).map(|_| OnceLock::new()).collect();
        let zero_moments = [MomentTable::new(mu(1.0), &spline.h), MomentTable::new(mu(-1.0), &spline.h)];
        let fft = Fft2::new(grid.n);
        Self {
            grid,
            spline,
            class_of_mode,
            class_s,
            kernels,
            zero_moments,
            fft,
        }
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn spline(&self) -> &SplineFactor {
        &self.spline
    }

    pub fn kernel(&self, m: usize) -> Result<Arc<ModeKernel>> {
        let c = self.class_of_mode[m];
        if let Some(k) = self.kernels[c].get() {
            return Ok(k.clone());
        }
        let s = self.class_s[c];
        let roots = char_roots_sq(s);
        let coeffs = if s > 0.0 { Some(interior_coeffs(&roots)?) } else { None };
        let moments = if s > 0.0 {
            roots.lambda.iter().map(|&l| MomentTable::new(l, &self.spline.h)).collect()
        } else {
            Vec::new()
        };
        let k = Arc::new(ModeKernel { roots, coeffs, moments });
        let _ = self.kernels[c].set(k.clone());
        Ok(self.kernels[c].get().cloned().unwrap_or(k))
    }

    /// Semi-analytic evaluation of `V = ∫ Σ_k ∂z^k G(z−z') S^k(z') dz'` for one mode,
    /// returning derivatives up to `max_order` at every node.
    fn particular(&self, kern: &ModeKernel, s: &[[Vec<C64>; 2]; 3], max_order: usize) -> Vec<Vec<[C64; 2]>> {
        let nz = self.grid.nz();
        let coeffs = kern.coeffs.as_ref().expect("nonzero mode");
        let sc: Vec<[Vec<[C64; 4]>; 2]> = (0..3)
            .map(|k| [self.spline.coefficients(&s[k][0]), self.spline.coefficients(&s[k][1])])
            .collect();
        let nint = nz - 1;
        let mut dv = vec![vec![[ZERO; 2]; nz]; max_order + 1];
        for i in 0..3 {
            let l = kern.roots.lambda[i];
            let om = kern.roots.omega[i];
            let (ai, bi) = (coeffs.a[i], coeffs.b[i]);
            let mut p = [Vec::new(), Vec::new()];
            let mut q = [Vec::new(), Vec::new()];
            let mut sp = [Vec::new(), Vec::new()];
            let mut sm = [Vec::new(), Vec::new()];
            for c in 0..2 {
                let mut plus = vec![[ZERO; 4]; nint];
                let mut minus = vec![[ZERO; 4]; nint];
                let w = [C64::new(1.0, 0.0), l, l * l];
                for j in 0..nint {
                    for d in 0..4 {
                        let (a0, a1, a2) = (sc[0][c][j][d], sc[1][c][j][d], sc[2][c][j][d]);
                        plus[j][d] = a0 - w[1] * a1 + w[2] * a2;
                        minus[j][d] = a0 + w[1] * a1 + w[2] * a2;
                    }
                }
                p[c] = kern.moments[i].forward(&plus);
                q[c] = kern.moments[i].backward(&minus);
                sp[c] = nodal_derivatives(&plus, &self.spline.h);
                sm[c] = nodal_derivatives(&minus, &self.spline.h);
            }
            let ml = -l;
            for j in 0..nz {
                for k in 0..=max_order {
                    let mut xp = [ZERO; 2];
                    let mut xm = [ZERO; 2];
                    for c in 0..2 {
                        let mut a = ml.powu(k as u32) * p[c][j];
                        let mut b = l.powu(k as u32) * q[c][j];
                        for mm in 0..k {
                            let e = (k - 1 - mm) as u32;
                            a += ml.powu(e) * sp[c][j][mm];
                            b -= l.powu(e) * sm[c][j][mm];
                        }
                        xp[c] = a;
                        xm[c] = b;
                    }
                    let gp = ai * xp[0] + bi * xp[1];
                    let gm = -ai * xm[0] + bi * xm[1];
                    dv[k][j][0] += gp + gm;
                    dv[k][j][1] += -om * gp + om * gm;
                }
            }
        }
        dv
    }

    fn solve_mode(
        &self,
        m: usize,
        fm: Option<&[[Vec<C64>; 3]; 3]>,
        v0: [C64; 3],
        max_order: usize,
    ) -> Result<ModeProfiles> {
        let nz = self.grid.nz();
        let kern = self.kernel(m)?;
        let xi = self.grid.xi(m);
        let s = xi.0 * xi.0 + xi.1 * xi.1;
        let (k1, k2) = (I * xi.0, I * xi.1);
        let mut dv = vec![vec![[ZERO; 2]; nz]; max_order + 1];
        if let Some(f) = fm {
            let mut sk: [[Vec<C64>; 2]; 3] = Default::default();
            for k in 0..3 {
                sk[k] = [vec![ZERO; nz], vec![ZERO; nz]];
            }
            for j in 0..nz {
                let at = [
                    [f[0][0][j], f[0][1][j], f[0][2][j]],
                    [f[1][0][j], f[1][1][j], f[1][2][j]],
                    [f[2][0][j], f[2][1][j], f[2][2][j]],
                ];
                let d = decompose_mode(xi, at);
                for k in 0..3 {
                    sk[k][0][j] = d[k][0];
                    sk[k][1][j] = d[k][1];
                }
            }
            dv = self.particular(&kern, &sk, max_order);
        }
        // boundary correction
        let vp = dv[0][0];
        let dvp = dv[1][0];
        let vh1 = (k1 * dvp[0] + k2 * vp[1]) / s;
        let vh2 = (k2 * dvp[0] - k1 * vp[1]) / s;
        let u3 = v0[2] - vp[0];
        let du3 = -(k1 * (v0[0] - vh1) + k2 * (v0[1] - vh2));
        let w = k1 * (v0[1] - vh2) - k2 * (v0[0] - vh1);
        let bc = boundary_coeffs(&kern.roots, [u3, -du3, -w])?;
        if bc.c.iter().any(|c| *c != ZERO) {
            for i in 0..3 {
                let l = kern.roots.lambda[i];
                let om = kern.roots.omega[i];
                let mt = &kern.moments[i];
                let mut e = bc.c[i];
                for j in 0..nz {
                    let mut f = e;
                    for k in 0..=max_order {
                        dv[k][j][0] += f;
                        dv[k][j][1] += -om * f;
                        f *= -l;
                    }
                    if j + 1 < nz {
                        e *= mt.decay[j];
                    }
                }
            }
        }
        Ok(ModeProfiles { dv })
    }

    /// Horizontal velocity, its z-derivative, pressure for mode m from the profiles.
    #[allow(clippy::type_complexity)]
    fn assemble_mode(
        &self,
        m: usize,
        prof: &ModeProfiles,
        fm: Option<&[[Vec<C64>; 3]; 3]>,
    ) -> ([Vec<C64>; 3], [Vec<C64>; 3], Vec<C64>, Vec<C64>) {
        let nz = self.grid.nz();
        let xi = self.grid.xi(m);
        let s = xi.0 * xi.0 + xi.1 * xi.1;
        let (k1, k2) = (I * xi.0, I * xi.1);
        let dv = &prof.dv;
        let mut v = [vec![ZERO; nz], vec![ZERO; nz], vec![ZERO; nz]];
        let mut dz = [vec![ZERO; nz], vec![ZERO; nz], vec![ZERO; nz]];
        let mut p = vec![ZERO; nz];
        let mut om = vec![ZERO; nz];
        let fh = fm.map(|f| self.horizontal_force(xi, f));
        for j in 0..nz {
            let (v3, w) = (dv[0][j][0], dv[0][j][1]);
            let (v3p, wp) = (dv[1][j][0], dv[1][j][1]);
            let v3pp = dv[2][j][0];
            let v3ppp = dv[3][j][0];
            v[0][j] = (k1 * v3p + k2 * w) / s;
            v[1][j] = (k2 * v3p - k1 * w) / s;
            v[2][j] = v3;
            dz[0][j] = (k1 * v3pp + k2 * wp) / s;
            dz[1][j] = (k2 * v3pp - k1 * wp) / s;
            dz[2][j] = v3p;
            om[j] = w;
            let mut num = -w + v3ppp - v3p * s;
            if let Some(fh) = &fh {
                num -= k1 * fh[0][j] + k2 * fh[1][j];
            }
            p[j] = num / s;
        }
        (v, dz, p, om)
    }

    /// `f̂_i = iξ₁F̂_i1 + iξ₂F̂_i2 + ∂zF̂_i3` for i = 1,2 at the nodes.
    fn horizontal_force(&self, xi: (f64, f64), f: &[[Vec<C64>; 3]; 3]) -> [Vec<C64>; 2] {
        let (k1, k2) = (I * xi.0, I * xi.1);
        let mut out = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let d = nodal_derivatives(&self.spline.coefficients(&f[i][2]), &self.spline.h);
            out[i] = (0..self.grid.nz()).map(|j| k1 * f[i][0][j] + k2 * f[i][1][j] + d[j][1]).collect();
        }
        out
    }

    /// Mode ξ = 0: `v₃ = 0`, `(v₁ ± iv₂)'' = ±i(v₁ ± iv₂) − (f₁ ± if₂)` with decay, and
    /// `p = F₃₃ − F₃₃(Z)`.
    #[allow(clippy::type_complexity)]
    fn zero_mode(&self, fm: Option<&[[Vec<C64>; 3]; 3]>, v0: [C64; 3]) -> ([Vec<C64>; 3], [Vec<C64>; 3], Vec<C64>) {
        let nz = self.grid.nz();
        let mut u = [vec![ZERO; nz], vec![ZERO; nz]];
        let mut du = [vec![ZERO; nz], vec![ZERO; nz]];
        for (idx, sign) in [1.0, -1.0].iter().enumerate() {
            let mu = mu(*sign);
            let u0 = v0[0] + I * *sign * v0[1];
            let mt = &self.zero_moments[idx];
            let (pp, qq) = match fm {
                Some(f) => {
                    let g: Vec<C64> = (0..nz).map(|j| f[0][2][j] + I * *sign * f[1][2][j]).collect();
                    // g = ∂z(F13 ± iF23): differentiate the cubic pieces exactly
                    let c = self.spline.coefficients(&g);
                    let dc: Vec<[C64; 4]> = c.iter().map(|a| [a[1], a[2] * 2.0, a[3] * 3.0, ZERO]).collect();
                    (mt.forward(&dc), mt.backward(&dc))
                }
                None => (vec![ZERO; nz], vec![ZERO; nz]),
            };
            let q0 = qq[0];
            let mut e = C64::new(1.0, 0.0);
            for j in 0..nz {
                u[idx][j] = u0 * e + (pp[j] + qq[j] - e * q0) / (mu * 2.0);
                du[idx][j] = -mu * u0 * e + (-pp[j] + qq[j] + e * q0) * 0.5;
                if j + 1 < nz {
                    e *= mt.decay[j];
                }
            }
        }
        let half = C64::new(0.5, 0.0);
        let v1: Vec<C64> = (0..nz).map(|j| (u[0][j] + u[1][j]) * half).collect();
        let v2: Vec<C64> = (0..nz).map(|j| (u[0][j] - u[1][j]) / (I * 2.0)).collect();
        let d1: Vec<C64> = (0..nz).map(|j| (du[0][j] + du[1][j]) * half).collect();
        let d2: Vec<C64> = (0..nz).map(|j| (du[0][j] - du[1][j]) / (I * 2.0)).collect();
        let p = match fm {
            Some(f) => {
                let top = f[2][2][nz - 1];
                f[2][2].iter().map(|v| v - top).collect()
            }
            None => vec![ZERO; nz],
        };
        ([v1, v2, vec![ZERO; nz]], [d1, d2, vec![ZERO; nz]], p)
    }

    /// Solve with boundary data `v0` and optional source tensor `F` (right-hand side `div F`).
    pub fn solve(&self, v0: &BoundaryData, f: Option<&SourceTensor>) -> Result<FlowField> {
        v0.check(&self.grid, 1e-9)?;
        if let Some(f) = f {
            f.check(&self.grid)?;
        }
        let nz = self.grid.nz();
        let grid = &self.grid;
        type ModeOut = Option<([Vec<C64>; 3], [Vec<C64>; 3], Vec<C64>, Vec<C64>)>;
        let results: Vec<Result<ModeOut>> = (0..grid.n_modes())
            .into_par_iter()
            .map(|m| {
                if grid.is_nyquist(m) {
                    return Ok(None);
                }
                let bc = [v0.v0[0][m], v0.v0[1][m], v0.v0[2][m]];
                let has_src = f.map_or(false, |t| !t.mode_is_zero(m));
                if !has_src && bc.iter().all(|v| *v == ZERO) {
                    return Ok(None);
                }
                let fm = if has_src { Some(f.unwrap().mode(m, nz)) } else { None };
                if m == 0 {
                    let (v, dz, p) = self.zero_mode(fm.as_ref(), bc);
                    return Ok(Some((v, dz, p, vec![ZERO; nz])));
                }
                let prof = self.solve_mode(m, fm.as_ref(), bc, 3)?;
                Ok(Some(self.assemble_mode(m, &prof, fm.as_ref())))
            })
            .collect();
        let mut out = FlowField::zeros(grid);
        for (m, r) in results.into_iter().enumerate() {
            if let Some((v, dz, p, om)) = r? {
                for c in 0..3 {
                    out.v[c].mode_mut(m).copy_from_slice(&v[c]);
                    out.dz_v[c].mode_mut(m).copy_from_slice(&dz[c]);
                }
                out.p.mode_mut(m).copy_from_slice(&p);
                out.omega.mode_mut(m).copy_from_slice(&om);
            }
        }
        Ok(out)
    }

    /// `(v̂₃, ω̂)` of the particular solution for a decomposed source (no boundary correction).
    pub fn convolve_green(&self, s: &SourceDecomposition) -> Result<(SpectralField, SpectralField)> {
        let grid = &self.grid;
        let mut v3 = SpectralField::for_grid(grid, FieldRole::Velocity);
        let mut om = SpectralField::for_grid(grid, FieldRole::Vorticity);
        for m in 1..grid.n_modes() {
            if grid.is_nyquist(m) {
                continue;
            }
            let sk = [
                [s.s0[0].mode(m).to_vec(), s.s0[1].mode(m).to_vec()],
                [s.s1[0].mode(m).to_vec(), s.s1[1].mode(m).to_vec()],
                [s.s2[0].mode(m).to_vec(), s.s2[1].mode(m).to_vec()],
            ];
            if sk.iter().flatten().flatten().all(|v| *v == ZERO) {
                continue;
            }
            let kern = self.kernel(m)?;
            let dv = self.particular(&kern, &sk, 0);
            for j in 0..grid.nz() {
                v3.set(m, j, dv[0][j][0]);
                om.set(m, j, dv[0][j][1]);
            }
        }
        Ok((v3, om))
    }

    /// Residuals of the solution for `(v0, f_used)` measured against the source `f_check`
    /// (defaults to `f_used`): momentum, divergence and boundary mismatch, plus a scale.
    pub fn residual(
        &self,
        v0: &BoundaryData,
        f_used: Option<&SourceTensor>,
        f_check: Option<&SourceTensor>,
    ) -> Result<ResidualReport> {
        let grid = &self.grid;
        let nz = grid.nz();
        let h = &self.spline.h;
        let reports: Vec<Result<ResidualReport>> = (0..grid.n_modes())
            .into_par_iter()
            .map(|m| {
                let mut rep = ResidualReport::default();
                if grid.is_nyquist(m) {
                    return Ok(rep);
                }
                let bc = [v0.v0[0][m], v0.v0[1][m], v0.v0[2][m]];
                let fu = f_used.filter(|t| !t.mode_is_zero(m)).map(|t| t.mode(m, nz));
                let fc = match f_check {
                    Some(t) => Some(t.mode(m, nz)),
                    None => fu.clone(),
                };
                let xi = grid.xi(m);
                let s = xi.0 * xi.0 + xi.1 * xi.1;
                let (k1, k2) = (I * xi.0, I * xi.1);
                // div F of the checking source, with spline z-derivatives
                let mut fdiv = [vec![ZERO; nz], vec![ZERO; nz], vec![ZERO; nz]];
                let mut fdiv_dz = [vec![ZERO; nz], vec![ZERO; nz], vec![ZERO; nz]];
                if let Some(f) = &fc {
                    for i in 0..3 {
                        let d3 = nodal_derivatives(&self.spline.coefficients(&f[i][2]), h);
                        let d1 = nodal_derivatives(&self.spline.coefficients(&f[i][0]), h);
                        let d2 = nodal_derivatives(&self.spline.coefficients(&f[i][1]), h);
                        for j in 0..nz {
                            fdiv[i][j] = k1 * f[i][0][j] + k2 * f[i][1][j] + d3[j][1];
                            fdiv_dz[i][j] = k1 * d1[j][1] + k2 * d2[j][1] + d3[j][2];
                        }
                        for j in 0..nz {
                            rep.scale = rep.scale.max(fdiv[i][j].norm());
                        }
                    }
                }
                if m == 0 {
                    let (v, dz, p) = self.zero_mode(fu.as_ref(), bc);
                    let vv = |c: usize| -> Vec<[C64; 4]> {
                        nodal_derivatives(&self.spline.coefficients(&dz[c]), h)
                    };
                    let d1 = vv(0);
                    let d2 = vv(1);
                    for j in 1..nz - 1 {
                        // second derivatives from the exact ODE would be circular; use the
                        // spline of the analytic first derivative instead
                        let r1 = -v[1][j] - d1[j][1] - fdiv[0][j];
                        let r2 = v[0][j] - d2[j][1] - fdiv[1][j];
                        let pd = nodal_derivatives(&self.spline.coefficients(&p), h);
                        let r3 = pd[j][1] - fdiv[2][j];
                        rep.momentum = rep.momentum.max(r1.norm()).max(r2.norm()).max(r3.norm());
                        rep.scale = rep.scale.max(v[0][j].norm()).max(v[1][j].norm());
                    }
                    rep.boundary = (v[0][0] - bc[0]).norm().max((v[1][0] - bc[1]).norm());
                    return Ok(rep);
                }
                if fu.is_none() && bc.iter().all(|v| *v == ZERO) && fc.is_none() {
                    return Ok(rep);
                }
                let prof = self.solve_mode(m, fu.as_ref(), bc, 4)?;
                let (v, dz, p, _) = self.assemble_mode(m, &prof, fu.as_ref());
                let dv = &prof.dv;
                // p' from differentiating the pressure formula
                let fh_dz: Option<[Vec<C64>; 2]> = fu.as_ref().map(|f| {
                    let mut out = [Vec::new(), Vec::new()];
                    for i in 0..2 {
                        let d1 = nodal_derivatives(&self.spline.coefficients(&f[i][0]), h);
                        let d2 = nodal_derivatives(&self.spline.coefficients(&f[i][1]), h);
                        let d3 = nodal_derivatives(&self.spline.coefficients(&f[i][2]), h);
                        out[i] = (0..nz).map(|j| k1 * d1[j][1] + k2 * d2[j][1] + d3[j][2]).collect();
                    }
                    out
                });
                for j in 0..nz {
                    let v3pp = dv[2][j][0];
                    let wpp = dv[2][j][1];
                    let v3ppp = dv[3][j][0];
                    let v3pppp = dv[4][j][0];
                    let wp = dv[1][j][1];
                    let v1pp = (k1 * v3ppp + k2 * wpp) / s;
                    let v2pp = (k2 * v3ppp - k1 * wpp) / s;
                    let mut pnum = -wp + v3pppp - v3pp * s;
                    if let Some(fd) = &fh_dz {
                        pnum -= k1 * fd[0][j] + k2 * fd[1][j];
                    }
                    let pp = pnum / s;
                    let r1 = -v[1][j] + k1 * p[j] - (v1pp - v[0][j] * s) - fdiv[0][j];
                    let r2 = v[0][j] + k2 * p[j] - (v2pp - v[1][j] * s) - fdiv[1][j];
                    let r3 = pp - (v3pp - v[2][j] * s) - fdiv[2][j];
                    let dvg = k1 * v[0][j] + k2 * v[1][j] + dz[2][j];
                    rep.momentum = rep.momentum.max(r1.norm()).max(r2.norm()).max(r3.norm());
                    rep.divergence = rep.divergence.max(dvg.norm());
                    let sc = [
                        v[0][j].norm(),
                        v[1][j].norm(),
                        v[2][j].norm(),
                        (v1pp - v[0][j] * s).norm(),
                        (v3pp - v[2][j] * s).norm(),
                        (k1 * p[j]).norm(),
                        pp.norm(),
                    ];
                    rep.scale = sc.iter().fold(rep.scale, |a, b| a.max(*b));
                }
                let _ = fdiv_dz;
                rep.boundary = (0..3).map(|c| (v[c][0] - bc[c]).norm()).fold(0.0, f64::max);
                Ok(rep)
            })
            .collect();
        let mut total = ResidualReport::default();
        for r in reports {
            let r = r?;
            total.momentum = total.momentum.max(r.momentum);
            total.divergence = total.divergence.max(r.divergence);
            total.boundary = total.boundary.max(r.boundary);
            total.scale = total.scale.max(r.scale);
        }
        Ok(total)
    }
}

/// One-shot linear solve.
pub fn solve_linear_halfspace(v0: &BoundaryData, f: Option<&SourceTensor>, grid: &SpectralGrid) -> Result<FlowField> {
    HalfSpaceSolver::new(grid.clone()).solve(v0, f)
}

/// `(v̂₁, v̂₂)` from `(v̂₃, ω̂)` and `∂zv̂₃` for a nonzero mode.
pub fn recover_horizontal_mode(xi: (f64, f64), dz_v3: C64, omega: C64) -> Result<(C64, C64)> {
    let s = xi.0 * xi.0 + xi.1 * xi.1;
    if s == 0.0 {
        return Err(EkblError::Precondition("horizontal recovery is undefined at xi = 0".into()));
    }
    let (k1, k2) = (I * xi.0, I * xi.1);
    Ok(((k1 * dz_v3 + k2 * omega) / s, (k2 * dz_v3 - k1 * omega) / s))
}

/// Field-level horizontal recovery (mode 0 left at zero).
pub fn recover_horizontal(
    grid: &SpectralGrid,
    dz_v3: &SpectralField,
    omega: &SpectralField,
) -> Result<(SpectralField, SpectralField)> {
    let mut v1 = SpectralField::for_grid(grid, FieldRole::Velocity);
    let mut v2 = SpectralField::for_grid(grid, FieldRole::Velocity);
    for m in 1..grid.n_modes() {
        let xi = grid.xi(m);
        for j in 0..grid.nz() {
            let (a, b) = recover_horizontal_mode(xi, dz_v3.at(m, j), omega.at(m, j))?;
            v1.set(m, j, a);
            v2.set(m, j, b);
        }
    }
    Ok((v1, v2))
}

/// Physical values of a field at level j.
pub fn physical_slice(fft: &Fft2, f: &SpectralField, j: usize) -> Vec<C64> {
    fft.to_physical(&f.slice(j))
}

/// `sup_j (1+z_j)^α · max_y |f(y, z_j)|`.
pub fn weighted_sup_norm(grid: &SpectralGrid, field: &SpectralField, alpha: f64) -> f64 {
    weighted_sup_norm_vec(grid, &[field], alpha)
}

/// Same with the Euclidean magnitude of several components.
pub fn weighted_sup_norm_vec(grid: &SpectralGrid, comps: &[&SpectralField], alpha: f64) -> f64 {
    let fft = Fft2::new(grid.n);
    let z = grid.z();
    (0..grid.nz())
        .into_par_iter()
        .map(|j| {
            if comps.iter().all(|f| (0..grid.n_modes()).all(|m| f.at(m, j) == ZERO)) {
                return 0.0;
            }
            let phys: Vec<Vec<C64>> = comps.iter().map(|f| physical_slice(&fft, f, j)).collect();
            let mx = (0..grid.n_modes())
                .map(|k| phys.iter().map(|p| p[k].norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            (1.0 + z[j]).powf(alpha) * mx
        })
        .reduce(|| 0.0, f64::max)
}

/// `max_y |f(y, z_j)|` per level (Euclidean magnitude over components).
pub fn sup_profile(grid: &SpectralGrid, comps: &[&SpectralField]) -> Vec<f64> {
    let fft = Fft2::new(grid.n);
    (0..grid.nz())
        .into_par_iter()
        .map(|j| {
            let phys: Vec<Vec<C64>> = comps.iter().map(|f| physical_slice(&fft, f, j)).collect();
            (0..grid.n_modes())
                .map(|k| phys.iter().map(|p| p[k].norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Pressure recomputed from a velocity field: for ξ ≠ 0 from the horizontal momentum
/// equations, `p̂ = −iξ·(f̂_h − (e×v̂)_h + (∂z² − |ξ|²)v̂_h)/|ξ|²`; for ξ = 0 from the vertical
/// equation integrated down from the top, `p̂ = F̂₃₃ + ∂zv̂₃ − (same at Z)`.
/// Second z-derivatives come from splines of `∂zv`.
pub fn recover_pressure(solver: &HalfSpaceSolver, u: &FlowField, f: Option<&SourceTensor>) -> SpectralField {
    let grid = &solver.grid;
    let nz = grid.nz();
    let sp = solver.spline();
    let mut p = SpectralField::for_grid(grid, FieldRole::Pressure);
    let modes: Vec<Vec<C64>> = (0..grid.n_modes())
        .into_par_iter()
        .map(|m| {
            if grid.is_nyquist(m) {
                return vec![ZERO; nz];
            }
            let fm = f.filter(|t| !t.mode_is_zero(m)).map(|t| t.mode(m, nz));
            if m == 0 {
                let top_f = fm.as_ref().map_or(ZERO, |f| f[2][2][nz - 1]);
                let top_d = u.dz_v[2].at(0, nz - 1);
                return (0..nz)
                    .map(|j| fm.as_ref().map_or(ZERO, |f| f[2][2][j]) - top_f + u.dz_v[2].at(0, j) - top_d)
                    .collect();
            }
            let xi = grid.xi(m);
            let s = xi.0 * xi.0 + xi.1 * xi.1;
            let (k1, k2) = (I * xi.0, I * xi.1);
            let fh = fm.as_ref().map(|f| solver.horizontal_force(xi, f));
            let d1 = nodal_derivatives(&sp.coefficients(u.dz_v[0].mode(m)), &sp.h);
            let d2 = nodal_derivatives(&sp.coefficients(u.dz_v[1].mode(m)), &sp.h);
            (0..nz)
                .map(|j| {
                    let v1 = u.v[0].at(m, j);
                    let v2 = u.v[1].at(m, j);
                    let mut g1 = v2 + d1[j][1] - v1 * s;
                    let mut g2 = -v1 + d2[j][1] - v2 * s;
                    if let Some(fh) = &fh {
                        g1 += fh[0][j];
                        g2 += fh[1][j];
                    }
                    -(k1 * g1 + k2 * g2) / s
                })
                .collect()
        })
        .collect();
    for (m, v) in modes.into_iter().enumerate() {
        p.mode_mut(m).copy_from_slice(&v);
    }
    p
}
