//! Picard iteration `u ↦ T(u)` for the rotating Navier–Stokes half-space problem,
//! where `T(u)` solves the linear system with source `F = −u⊗u`.

use crate::error::{EkblError, Result};
use crate::halfspace::{weighted_sup_norm_vec, BoundaryData, FlowField, HalfSpaceSolver, ResidualReport, SourceTensor};
use crate::spectral::{FieldRole, SpectralField, SpectralGrid};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

/// Weight exponent of the solution norm `sup (1+z)^α |v|`.
pub const SOLUTION_ALPHA: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub iterates: usize,
    #[serde(rename = "residuals")]
    pub residual_history: Vec<f64>,
    #[serde(rename = "ratios")]
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    #[serde(rename = "norm")]
    pub norm_of_solution: f64,
    pub final_residual: Option<ResidualReport>,
}

#[derive(Clone, Debug)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Number of consecutive non-contracting steps tolerated before giving up.
    pub patience: usize,
    pub check_residual: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 60,
            patience: 3,
            check_residual: true,
        }
    }
}

/// `F_ij = −u_i u_j`, formed per level in physical space with 2/3-rule truncation.
pub fn quadratic_source(solver: &HalfSpaceSolver, u: &FlowField) -> SourceTensor {
    let grid = &solver.grid;
    let n = grid.n;
    let nz = grid.nz();
    let cut = grid.dealias_cutoff();
    let keep: Vec<bool> = (0..grid.n_modes())
        .map(|m| {
            let (a, b) = grid.wavenumbers(m);
            a.abs() <= cut && b.abs() <= cut
        })
        .collect();
    let pairs = [(0usize, 0usize), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let fft = solver.fft();
    let slices: Vec<[Vec<C64>; 6]> = (0..nz)
        .into_par_iter()
        .map(|j| {
            let phys: Vec<Vec<C64>> = (0..3)
                .map(|c| {
                    let mut s = u.v[c].slice(j);
                    for (m, v) in s.iter_mut().enumerate() {
                        if !keep[m] {
                            *v = C64::new(0.0, 0.0);
                        }
                    }
                    fft.to_physical(&s)
                })
                .collect();
            let mut out: [Vec<C64>; 6] = Default::default();
            for (k, &(a, b)) in pairs.iter().enumerate() {
                let prod: Vec<C64> = (0..n * n).map(|p| C64::new(-phys[a][p].re * phys[b][p].re, 0.0)).collect();
                let mut spec = fft.to_spectral(&prod);
                for (m, v) in spec.iter_mut().enumerate() {
                    if !keep[m] {
                        *v = C64::new(0.0, 0.0);
                    }
                }
                out[k] = spec;
            }
            out
        })
        .collect();
    let mut src = SourceTensor::zero();
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let mut f = SpectralField::for_grid(grid, FieldRole::Source);
        for (j, sl) in slices.iter().enumerate() {
            f.set_slice(j, &sl[k]);
        }
        if f.is_zero() {
            continue;
        }
        if a == b {
            src.set(a, b, f);
        } else {
            src.set_symmetric(a, b, f);
        }
    }
    src
}

/// One application of `T`: the linear solution with data `v0` and source `−u⊗u`.
pub fn picard_step(solver: &HalfSpaceSolver, u: &FlowField, v0: &BoundaryData) -> Result<FlowField> {
    let f = quadratic_source(solver, u);
    solver.solve(v0, if f.is_zero() { None } else { Some(&f) })
}

pub fn velocity_norm(grid: &SpectralGrid, u: &FlowField) -> f64 {
    weighted_sup_norm_vec(grid, &[&u.v[0], &u.v[1], &u.v[2]], SOLUTION_ALPHA)
}

fn difference_norm(grid: &SpectralGrid, a: &FlowField, b: &FlowField) -> f64 {
    let d: Vec<SpectralField> = (0..3)
        .map(|c| {
            let mut f = a.v[c].clone();
            f.axpy(C64::new(-1.0, 0.0), &b.v[c]);
            f
        })
        .collect();
    weighted_sup_norm_vec(grid, &[&d[0], &d[1], &d[2]], SOLUTION_ALPHA)
}

/// Picard iteration from `u⁰ = 0` (or a warm start).
pub fn solve_nsc_with(
    solver: &HalfSpaceSolver,
    v0: &BoundaryData,
    opts: &PicardOptions,
    warm_start: Option<FlowField>,
) -> Result<(FlowField, ConvergenceReport)> {
    let grid = &solver.grid;
    let mut u = warm_start.unwrap_or_else(|| FlowField::zeros(grid));
    let mut report = ConvergenceReport {
        iterates: 0,
        residual_history: Vec::new(),
        contraction_ratios: Vec::new(),
        converged: false,
        norm_of_solution: 0.0,
        final_residual: None,
    };
    let mut prev_diff: Option<f64> = None;
    let mut bad = 0usize;
    let mut last_source: Option<SourceTensor> = None;
    for _ in 0..opts.max_iter {
        let f = quadratic_source(solver, &u);
        let next = solver.solve(v0, if f.is_zero() { None } else { Some(&f) })?;
        let diff = difference_norm(grid, &next, &u);
        let norm = velocity_norm(grid, &next);
        report.iterates += 1;
        report.residual_history.push(diff);
        if !diff.is_finite() || !norm.is_finite() {
            return Err(EkblError::SmallnessViolated(
                "Picard iterates diverged; the boundary data is too large for the contraction argument".into(),
            ));
        }
        if let Some(p) = prev_diff {
            let ratio = if p > 0.0 { diff / p } else { 0.0 };
            report.contraction_ratios.push(ratio);
            if ratio >= 1.0 {
                bad += 1;
                if bad >= opts.patience {
                    return Err(EkblError::SmallnessViolated(format!(
                        "contraction ratio >= 1 for {bad} consecutive steps (last {ratio:.3}); the data violates the smallness hypothesis"
                    )));
                }
            } else {
                bad = 0;
            }
        }
        prev_diff = Some(diff);
        u = next;
        last_source = Some(f);
        report.norm_of_solution = norm;
        if diff <= opts.tol * norm.max(1.0) {
            report.converged = true;
            break;
        }
    }
    if opts.check_residual {
        let used = last_source.filter(|f| !f.is_zero());
        let check = quadratic_source(solver, &u);
        let check = if check.is_zero() { None } else { Some(check) };
        let zero = SourceTensor::zero();
        report.final_residual = Some(solver.residual(
            v0,
            used.as_ref(),
            Some(check.as_ref().unwrap_or(&zero)),
        )?);
    }
    Ok((u, report))
}

pub fn solve_nsc_halfspace(
    v0: &BoundaryData,
    grid: &SpectralGrid,
    tol: f64,
    max_iter: usize,
) -> Result<(FlowField, ConvergenceReport)> {
    let solver = HalfSpaceSolver::new(grid.clone());
    let opts = PicardOptions {
        tol,
        max_iter,
        ..Default::default()
    };
    solve_nsc_with(&solver, v0, &opts, None)
}

/// Roots `R± = (1 ± √(1 − 4δ₀C₀²))/(2C₀)` of `C₀(δ₀ + R²) = R`.
pub fn contraction_radius(c0: f64, delta0: f64) -> Result<(f64, f64)> {
    if !(c0 > 0.0) || !(delta0 >= 0.0) {
        return Err(EkblError::Domain("need C0 > 0 and delta0 >= 0".into()));
    }
    let disc = 1.0 - 4.0 * delta0 * c0 * c0;
    if disc < -1e-15 {
        return Err(EkblError::Domain(format!(
            "no admissible radius: 4*delta0*C0^2 = {:.6} > 1",
            1.0 - disc
        )));
    }
    let r = disc.max(0.0).sqrt();
    let rm = (1.0 - r) / (2.0 * c0);
    let rp = (1.0 + r) / (2.0 * c0);
    let check = c0 * (delta0 + rm * rm) - rm;
    if check > 1e-12 * rm.max(1.0) {
        return Err(EkblError::Internal(format!("radius check failed by {check:e}")));
    }
    Ok((rm, rp))
}

/// Sup of the physical boundary trace, the data-size proxy used with `C₀`.
pub fn boundary_size(solver: &HalfSpaceSolver, v0: &BoundaryData) -> f64 {
    let phys: Vec<Vec<C64>> = v0.v0.iter().map(|s| solver.fft().to_physical(s)).collect();
    (0..phys[0].len())
        .map(|p| phys.iter().map(|c| c[p].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Empirical `C₀ = max ‖T(u)‖ / (|v₀| + ‖u‖²)` over the given samples.
pub fn estimate_c0(solver: &HalfSpaceSolver, samples: &[(BoundaryData, FlowField)]) -> Result<f64> {
    let mut c0: f64 = 0.0;
    for (v0, u) in samples {
        let t = picard_step(solver, u, v0)?;
        let num = velocity_norm(&solver.grid, &t);
        let un = velocity_norm(&solver.grid, u);
        let den = boundary_size(solver, v0) + un * un;
        if den > 0.0 {
            c0 = c0.max(num / den);
        }
    }
    Ok(c0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_examples() {
        assert_eq!(contraction_radius(1.0, 0.0).unwrap(), (0.0, 1.0));
        let (a, b) = contraction_radius(1.0, 0.25).unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        let (a, b) = contraction_radius(2.0, 1.0 / 32.0).unwrap();
        assert!((a - 0.0732233).abs() < 1e-7 && (b - 0.4267767).abs() < 1e-7);
        assert_eq!(contraction_radius(1.0, 0.3).unwrap_err().code(), "DOMAIN");
    }
}
