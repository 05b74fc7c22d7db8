//! Matching the strip and half-space solutions at `y₃ = M` by solving
//! `F(ψ, φ) = Σ(v⁺, p⁺)e₃|_{M⁺} − ψ = 0` with Jacobian-free Newton–Krylov.

use crate::error::{EkblError, Result};
use crate::fixpoint::{solve_nsc_with, ConvergenceReport, PicardOptions};
use crate::green::boundary_coeffs;
use crate::halfspace::{sup_profile, BoundaryData, FlowField, HalfSpaceSolver};
use crate::linalg::{gmres, norm2, solve3};
use crate::roots::char_roots_sq;
use crate::spectral::{resample_spectrum, Fft2, SpectralGrid};
use crate::strip::{BottomData, StressTrace, StripOperator, StripOptions, StripSolution};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::cell::RefCell;
use std::f64::consts::FRAC_1_SQRT_2;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Linear half-space Dirichlet-to-stress map on one mode:
/// column c is `(∂zv₁, ∂zv₂, ∂zv₃ − p)(0)` for the decaying solution with `v(0) = e_c`.
pub fn dn_matrix(xi: (f64, f64)) -> Result<[[C64; 3]; 3]> {
    let s = xi.0 * xi.0 + xi.1 * xi.1;
    let mut out = [[ZERO; 3]; 3];
    if s == 0.0 {
        let mp = C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let mm = mp.conj();
        // u± = v₁ ± iv₂, u±' = −μ± u±
        for c in 0..2 {
            let v0 = if c == 0 { [C64::new(1.0, 0.0), ZERO] } else { [ZERO, C64::new(1.0, 0.0)] };
            let up = -mp * (v0[0] + I * v0[1]);
            let um = -mm * (v0[0] - I * v0[1]);
            out[0][c] = (up + um) * 0.5;
            out[1][c] = (up - um) / (I * 2.0);
        }
        return Ok(out);
    }
    let r = char_roots_sq(s);
    let (k1, k2) = (I * xi.0, I * xi.1);
    for c in 0..3 {
        let mut v0 = [ZERO; 3];
        v0[c] = C64::new(1.0, 0.0);
        let du3 = -(k1 * v0[0] + k2 * v0[1]);
        let w = k1 * v0[1] - k2 * v0[0];
        let bc = boundary_coeffs(&r, [v0[2], -du3, -w])?;
        let mut d = [[ZERO; 2]; 4];
        for i in 0..3 {
            let mut f = bc.c[i];
            for dk in d.iter_mut() {
                dk[0] += f;
                dk[1] += -r.omega[i] * f;
                f *= -r.lambda[i];
            }
        }
        let p = (-d[0][1] + d[3][0] - d[1][0] * s) / s;
        out[0][c] = (k1 * d[2][0] + k2 * d[1][1]) / s;
        out[1][c] = (k2 * d[2][0] - k1 * d[1][1]) / s;
        out[2][c] = d[1][0] - p;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct TransmissionOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub probe: f64,
    pub strip_tol: f64,
    pub picard_tol: f64,
    pub gmres_max: usize,
}

impl Default for TransmissionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_newton: 12,
            probe: 1e-6,
            strip_tol: 1e-12,
            picard_tol: 1e-12,
            gmres_max: 60,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct JumpNorms {
    pub velocity: f64,
    pub stress: f64,
    /// Upper stress content outside the strip's resolved band.
    pub stress_out_of_band: f64,
}

/// Assembled two-piece solution.
pub struct FullFlow {
    pub lower: StripSolution,
    pub upper: FlowField,
    pub psi: StressTrace,
    pub m_top: f64,
    pub jumps: JumpNorms,
    pub newton_history: Vec<f64>,
    pub gmres_iterations: Vec<usize>,
    pub upper_report: ConvergenceReport,
}

/// Evaluator of `F` holding both solvers and warm-start state.
pub struct Transmission {
    pub strip: StripOperator,
    pub upper: HalfSpaceSolver,
    pub phi: BottomData,
    pub opts: TransmissionOptions,
    warm_strip: RefCell<Option<Vec<C64>>>,
    warm_upper: RefCell<Option<FlowField>>,
    precond: Vec<Option<[[C64; 3]; 3]>>,
    pub evaluations: RefCell<usize>,
}

struct Evaluation {
    f: Vec<C64>,
    lower: StripSolution,
    upper: FlowField,
    report: ConvergenceReport,
    sigma_plus: [Vec<C64>; 3],
}

fn strip_nyquist(n: usize, m: usize) -> bool {
    let h = (n / 2) as i64;
    SpectralGrid::wavenumber(n, m / n) == -h || SpectralGrid::wavenumber(n, m % n) == -h
}

fn inv3(m: [[C64; 3]; 3]) -> Option<[[C64; 3]; 3]> {
    let mut out = [[ZERO; 3]; 3];
    for c in 0..3 {
        let mut e = [ZERO; 3];
        e[c] = C64::new(1.0, 0.0);
        let x = solve3(m, e).ok()?;
        for r in 0..3 {
            out[r][c] = x[r];
        }
    }
    Some(out)
}

impl Transmission {
    pub fn new(strip: StripOperator, upper: HalfSpaceSolver, phi: BottomData, opts: TransmissionOptions) -> Result<Self> {
        if (strip.grid.period - upper.grid.period).abs() > 1e-12 * strip.grid.period {
            return Err(EkblError::Config("strip and half-space periods differ".into()));
        }
        if upper.grid.n < strip.grid.n {
            return Err(EkblError::Config("half-space lattice must be at least as fine as the strip lattice".into()));
        }
        let n = strip.grid.n;
        let precond = (0..n * n)
            .map(|m| {
                if strip_nyquist(n, m) {
                    return None;
                }
                let t = strip.flat_trace_response(m)?;
                let dn = dn_matrix(strip.grid.xi(m)).ok()?;
                let mut a = [[ZERO; 3]; 3];
                for r in 0..3 {
                    for c in 0..3 {
                        a[r][c] = (0..3).map(|k| dn[r][k] * t[k][c]).sum::<C64>();
                    }
                    a[r][r] -= C64::new(1.0, 0.0);
                }
                inv3(a)
            })
            .collect();
        Ok(Self {
            strip,
            upper,
            phi,
            opts,
            warm_strip: RefCell::new(None),
            warm_upper: RefCell::new(None),
            precond,
            evaluations: RefCell::new(0),
        })
    }

    fn n(&self) -> usize {
        self.strip.grid.n
    }

    /// Generalized stress of the upper solution at `z = 0`, on the upper lattice.
    fn upper_stress(&self, u: &FlowField) -> [Vec<C64>; 3] {
        let nu = self.upper.grid.n;
        let f = self.upper.fft();
        let trace: Vec<Vec<C64>> = (0..3).map(|c| u.v[c].slice(0)).collect();
        let phys: Vec<Vec<C64>> = trace.iter().map(|s| f.to_physical(s)).collect();
        let ke: Vec<C64> = (0..nu * nu)
            .map(|q| (phys[0][q] * phys[0][q] + phys[1][q] * phys[1][q] + phys[2][q] * phys[2][q]) * 0.5)
            .collect();
        let ke = f.to_spectral(&ke);
        let mut s3 = u.dz_v[2].slice(0);
        let p = u.p.slice(0);
        for m in 0..nu * nu {
            s3[m] -= p[m] + ke[m];
        }
        [u.dz_v[0].slice(0), u.dz_v[1].slice(0), s3]
    }

    fn evaluate(&self, psi: &[C64]) -> Result<Evaluation> {
        *self.evaluations.borrow_mut() += 1;
        let n = self.n();
        let nu = self.upper.grid.n;
        let psi_t = StressTrace::from_vec(n, psi);
        let sopts = StripOptions {
            tol: self.opts.strip_tol,
            ..Default::default()
        };
        let warm = self.warm_strip.borrow().clone();
        let lower = self.strip.solve(&self.phi, &psi_t, &sopts, warm)?;
        *self.warm_strip.borrow_mut() = Some(lower.x.clone());
        let top = self.strip.trace_top(&lower);
        let mut v0: [Vec<C64>; 3] = std::array::from_fn(|c| resample_spectrum(&top[c], n, nu));
        let scale = top.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        if v0[2][0].norm() > 1e-8 * scale.max(1e-300) && v0[2][0].norm() > 1e-14 {
            return Err(EkblError::CompatViolated(format!(
                "strip top trace carries a vertical mean flux {:.3e}",
                v0[2][0].norm()
            )));
        }
        v0[2][0] = ZERO;
        let bd = BoundaryData::from_trace(&self.upper.grid, v0, 1.0)?;
        let popts = PicardOptions {
            tol: self.opts.picard_tol,
            ..Default::default()
        };
        let warm = self.warm_upper.borrow().clone();
        let (upper, report) = solve_nsc_with(&self.upper, &bd, &popts, warm)?;
        *self.warm_upper.borrow_mut() = Some(upper.clone());
        let sp = self.upper_stress(&upper);
        let mut f = vec![ZERO; 3 * n * n];
        for c in 0..3 {
            let band = resample_spectrum(&sp[c], nu, n);
            for m in 0..n * n {
                f[c * n * n + m] = if strip_nyquist(n, m) { psi[c * n * n + m] } else { band[m] - psi[c * n * n + m] };
            }
        }
        Ok(Evaluation {
            f,
            lower,
            upper,
            report,
            sigma_plus: sp,
        })
    }

    /// `F(ψ)` on the strip band.
    pub fn eval(&self, psi: &StressTrace) -> Result<StressTrace> {
        let e = self.evaluate(&psi.to_vec())?;
        Ok(StressTrace::from_vec(self.n(), &e.f))
    }

    fn precondition(&self, v: &mut [C64]) {
        let n = self.n();
        let nm = n * n;
        for m in 0..nm {
            if let Some(p) = &self.precond[m] {
                let x = [v[m], v[nm + m], v[2 * nm + m]];
                for r in 0..3 {
                    v[r * nm + m] = p[r][0] * x[0] + p[r][1] * x[1] + p[r][2] * x[2];
                }
            }
        }
    }

    /// JFNK from `ψ⁰ = 0` (or `initial`).
    pub fn solve(&self, initial: Option<StressTrace>) -> Result<FullFlow> {
        let n = self.n();
        let mut psi = initial.map(|p| p.to_vec()).unwrap_or_else(|| vec![ZERO; 3 * n * n]);
        let mut cur = self.evaluate(&psi)?;
        let sup = |v: &[C64]| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut rn = sup(&cur.f);
        let mut history = vec![rn];
        let mut gm_iters = Vec::new();
        let mut steps = 0;
        while rn > self.opts.tol {
            if steps >= self.opts.max_newton {
                return Err(EkblError::NewtonStagnation(format!(
                    "transmission Newton did not converge in {steps} steps; residual history {history:?}"
                )));
            }
            let rhs: Vec<C64> = cur.f.iter().map(|v| -v).collect();
            let base_f = cur.f.clone();
            let psi_norm = norm2(&psi);
            let probe = self.opts.probe;
            let mut apply = |d: &[C64]| -> Result<Vec<C64>> {
                let dn = norm2(d);
                if dn == 0.0 {
                    return Ok(vec![ZERO; d.len()]);
                }
                let h = probe * (1.0 + psi_norm) / dn;
                let trial: Vec<C64> = psi.iter().zip(d).map(|(a, b)| a + b * h).collect();
                let e = self.evaluate(&trial)?;
                Ok(e.f.iter().zip(&base_f).map(|(a, b)| (a - b) / h).collect())
            };
            let eta = (0.1 * rn / history[0].max(1e-300)).clamp(1e-6, 1e-2);
            let (dx, st) = gmres(&mut apply, &|v: &mut [C64]| self.precondition(v), &rhs, eta, self.opts.gmres_max, self.opts.gmres_max)?;
            gm_iters.push(st.iterations);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let trial: Vec<C64> = psi.iter().zip(&dx).map(|(a, d)| a + d * t).collect();
                let e = self.evaluate(&trial)?;
                let nt = sup(&e.f);
                if nt < (1.0 - 1e-4 * t) * rn {
                    psi = trial;
                    cur = e;
                    rn = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            steps += 1;
            history.push(rn);
            if !accepted {
                return Err(EkblError::NewtonStagnation(format!(
                    "transmission line search failed; residual history {history:?}"
                )));
            }
        }
        // re-evaluate at the accepted ψ so the stored fields are consistent with it
        cur = self.evaluate(&psi)?;
        let jumps = self.jumps(&cur);
        Ok(FullFlow {
            lower: cur.lower,
            upper: cur.upper,
            psi: StressTrace::from_vec(n, &psi),
            m_top: self.strip.grid.m_top,
            jumps,
            newton_history: history,
            gmres_iterations: gm_iters,
            upper_report: cur.report,
        })
    }

    fn jumps(&self, e: &Evaluation) -> JumpNorms {
        let n = self.n();
        let nu = self.upper.grid.n;
        let top = self.strip.trace_top(&e.lower);
        let psi_lower = self.strip.stress_trace_top(&e.lower);
        let lower_ke = {
            // |v⁻|²/2 with the strip's unaliased product
            let mut ke = vec![ZERO; n * n];
            for c in 0..3 {
                let p = crate::spectral::product_unaliased(&top[c], &top[c], n);
                for m in 0..n * n {
                    ke[m] += p[m] * 0.5;
                }
            }
            ke
        };
        let upper_ke = {
            let f = self.upper.fft();
            let tr: Vec<Vec<C64>> = (0..3).map(|c| f.to_physical(&e.upper.v[c].slice(0))).collect();
            let k: Vec<C64> = (0..nu * nu).map(|q| (tr[0][q] * tr[0][q] + tr[1][q] * tr[1][q] + tr[2][q] * tr[2][q]) * 0.5).collect();
            f.to_spectral(&k)
        };
        let mut j = JumpNorms::default();
        let f = Fft2::new(n);
        for c in 0..3 {
            let up = resample_spectrum(&e.upper.v[c].slice(0), nu, n);
            let dv: Vec<C64> = up.iter().zip(&top[c]).map(|(a, b)| a - b).collect();
            j.velocity = j.velocity.max(f.to_physical(&dv).iter().map(|v| v.norm()).fold(0.0, f64::max));
            // Newtonian stress ∂₃v − p e₃ on both sides
            let mut lo = psi_lower.psi[c].clone();
            let mut hi = resample_spectrum(&e.sigma_plus[c], nu, n);
            if c == 2 {
                let uk = resample_spectrum(&upper_ke, nu, n);
                for m in 0..n * n {
                    lo[m] += lower_ke[m];
                    hi[m] += uk[m];
                }
            }
            let mut d: Vec<C64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
            crate::spectral::zero_nyquist(&mut d, n);
            j.stress = j.stress.max(f.to_physical(&d).iter().map(|v| v.norm()).fold(0.0, f64::max));
            let back = resample_spectrum(&resample_spectrum(&e.sigma_plus[c], nu, n), n, nu);
            let out: f64 = e.sigma_plus[c].iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            j.stress_out_of_band = j.stress_out_of_band.max(out);
        }
        j
    }
}

/// `z ↦ sup_y |v(y, z)|` above the interface, as `(z, value)` with `z = y₃ − M`.
pub fn decay_profile(upper: &FlowField, grid: &SpectralGrid) -> Vec<(f64, f64)> {
    let prof = sup_profile(grid, &[&upper.v[0], &upper.v[1], &upper.v[2]]);
    grid.z().iter().cloned().zip(prof).collect()
}
