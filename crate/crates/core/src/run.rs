//! Executes a resolved scenario and writes its artifacts.
//!
//! Everything is written into a staging directory next to the target and moved
//! into place only after the run succeeds, so a failed run leaves nothing behind.

use crate::error::{EkblError, Result};
use crate::export::{write_ekbl, write_flow_csv, write_profile_csv, write_strip_csv, CSV_HEADER};
use crate::fixpoint::{boundary_size, solve_nsc_with, PicardOptions, SOLUTION_ALPHA};
use crate::halfspace::{sup_profile, weighted_sup_norm_vec, BoundaryData, FlowField, HalfSpaceSolver};
use crate::scenario::{PhiFamily, Scenario, ScenarioKind};
use crate::spectral::{Fft2, SpectralGrid};
use crate::strip::{BottomData, StripGrid, StripOperator, StripOptions, StripSolution, StressTrace};
use crate::transmission::{decay_profile, Transmission, TransmissionOptions};
use crate::verify::{
    ekman_reference, fit_decay, fit_exponential, green_check, highfreq_kernel_check, integral_inequalities_check,
    kernel_decay_check, roots_check, DecayFit, SymbolSpec,
};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const FIELDS_CSV: &str = "fields.csv";
pub const FIELDS_EKBL: &str = "fields.ekbl";
pub const PROFILE_CSV: &str = "profile.csv";

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Value,
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
}

/// Machine-readable error document printed by the CLI.
pub fn error_json(e: &EkblError) -> Value {
    json!({ "status": "error", "error": { "code": e.code(), "message": e.to_string() } })
}

struct Staging {
    dir: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn create(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn commit(self, target: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(target)?;
        for f in &self.files {
            fs::rename(self.dir.join(f), target.join(f))?;
        }
        fs::remove_dir_all(&self.dir)?;
        Ok(self.files.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn fit_or_null(r: Result<DecayFit>) -> Value {
    r.map(|f| serde_json::to_value(f).unwrap_or(Value::Null)).unwrap_or(Value::Null)
}

/// Fits on the part of `window` where the profile is still above round-off.
fn decay_fits(profile: &[(f64, f64)], window: (f64, f64)) -> Value {
    let top = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    let live: Vec<(f64, f64)> = profile.iter().cloned().filter(|p| p.1 > 1e-13 * top).collect();
    json!({
        "window": [window.0, window.1],
        "power": fit_or_null(fit_decay(&live, window)),
        "exponential": fit_or_null(fit_exponential(&live, window)),
    })
}

fn halfspace_data(s: &Scenario, grid: &SpectralGrid) -> Result<BoundaryData> {
    match &s.data.phi {
        PhiFamily::Uniform { .. } => {
            let c = s.data.phi.coefficients(grid.n);
            Ok(BoundaryData::uniform(grid, [c[0][0].re, c[1][0].re]))
        }
        PhiFamily::Modes { .. } => BoundaryData::from_trace(grid, s.data.phi.coefficients(grid.n), 1e-12),
    }
}

fn bottom_data(s: &Scenario, gamma: &crate::strip::RoughnessProfile) -> BottomData {
    let [a, b, _] = s.data.phi.coefficients(gamma.n);
    BottomData::tangent(gamma, [a, b])
}

fn physical_sup(n: usize, comps: &[Vec<C64>]) -> f64 {
    let f = Fft2::new(n);
    let phys: Vec<Vec<C64>> = comps.iter().map(|c| f.to_physical(c)).collect();
    (0..n * n)
        .map(|q| phys.iter().map(|p| p[q].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn write_halfspace_fields(st: &mut Staging, s: &Scenario, grid: &SpectralGrid, u: &FlowField) -> Result<()> {
    if s.output.fields.csv() {
        let mut w = st.writer(FIELDS_CSV)?;
        writeln!(w, "{CSV_HEADER}")?;
        let sub = thinned(grid, u, s.output.z_stride);
        match &sub {
            Some((g, f)) => write_flow_csv(&mut w, g, f, 0.0, false)?,
            None => write_flow_csv(&mut w, grid, u, 0.0, false)?,
        }
        finish(w)?;
    }
    if s.output.fields.ekbl() {
        let w = st.writer(FIELDS_EKBL)?;
        write_ekbl(w, grid, u)?;
    }
    Ok(())
}

/// Levels `0, k, 2k, …` plus the top, as a separate grid and field (None if `k = 1`).
fn thinned(grid: &SpectralGrid, u: &FlowField, k: usize) -> Option<(SpectralGrid, FlowField)> {
    if k <= 1 {
        return None;
    }
    let nz = grid.nz();
    let mut keep: Vec<usize> = (0..nz).step_by(k).collect();
    if *keep.last().unwrap() != nz - 1 {
        keep.push(nz - 1);
    }
    let z: Vec<f64> = keep.iter().map(|&j| grid.z()[j]).collect();
    let vg = crate::spectral::VerticalGrid::from_nodes(z).ok()?;
    let g = SpectralGrid::new(grid.period, grid.n, vg).ok()?;
    let mut out = FlowField::zeros(&g);
    let copy = |dst: &mut crate::spectral::SpectralField, src: &crate::spectral::SpectralField| {
        for m in 0..grid.n_modes() {
            for (jj, &j) in keep.iter().enumerate() {
                dst.set(m, jj, src.at(m, j));
            }
        }
    };
    for c in 0..3 {
        copy(&mut out.v[c], &u.v[c]);
    }
    copy(&mut out.p, &u.p);
    Some((g, out))
}

fn strip_profile(op: &StripOperator, sol: &StripSolution) -> Vec<(f64, f64)> {
    let g = &op.grid;
    let f = Fft2::new(g.n);
    (0..g.n_sigma())
        .map(|k| {
            let v: Vec<Vec<C64>> = (0..3).map(|c| f.to_physical(&op.velocity(sol, c, k))).collect();
            let z = (0..g.n_modes()).map(|q| g.height(q, k)).sum::<f64>() / g.n_modes() as f64;
            let s = (0..g.n_modes())
                .map(|q| v.iter().map(|p| p[q].norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            (z, s)
        })
        .collect()
}

/// Ekman stress trace at height `m` for uniform horizontal data `a`.
fn ekman_stress(n: usize, a: [f64; 2], m: f64) -> StressTrace {
    let mu = C64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
    let u = C64::new(a[0], a[1]) * (-mu * m).exp();
    let du = -mu * u;
    let mut psi = StressTrace::zeros(n);
    psi.psi[0][0] = C64::new(du.re, 0.0);
    psi.psi[1][0] = C64::new(du.im, 0.0);
    psi.psi[2][0] = C64::new(-0.5 * u.norm_sqr(), 0.0);
    psi
}

fn run_ekman(s: &Scenario, st: &mut Staging) -> Result<Value> {
    let grid = s.grid.spectral_grid()?;
    let v0 = halfspace_data(s, &grid)?;
    let a = [v0.v0[0][0].re, v0.v0[1][0].re];
    let solver = HalfSpaceSolver::new(grid.clone());
    let u = solver.solve(&v0, None)?;
    let fft = Fft2::new(grid.n);
    let mut max_abs: f64 = 0.0;
    for (j, &z) in grid.z().iter().enumerate() {
        let (e1, e2) = ekman_reference(a, z);
        let p: Vec<Vec<C64>> = u.v.iter().map(|f| fft.to_physical(&f.slice(j))).collect();
        for q in 0..grid.n_modes() {
            let d = ((p[0][q].re - e1).powi(2) + (p[1][q].re - e2).powi(2) + p[2][q].re.powi(2)).sqrt();
            max_abs = max_abs.max(d);
        }
    }
    let amp = a[0].hypot(a[1]);
    let res = solver.residual(&v0, None, None)?;
    let profile = decay_profile(&u, &grid);
    let fits = decay_fits(&profile, (1.0, 20.0));
    let rate = fits["exponential"]["exponent"].as_f64().map(|e| -e);
    write_halfspace_fields(st, s, &grid, &u)?;
    let mut w = st.writer(crate::run::PROFILE_CSV)?;
    write_profile_csv(&mut w, &profile)?;
    finish(w)?;
    Ok(json!({
        "max_abs_error": max_abs,
        "max_rel_error": if amp > 0.0 { max_abs / amp } else { max_abs },
        "phi": a,
        "residual": res,
        "weighted_norm": weighted_sup_norm_vec(&grid, &[&u.v[0], &u.v[1], &u.v[2]], SOLUTION_ALPHA),
        "decay_fits": fits,
        "decay_rate": rate,
        "expected_decay_rate": std::f64::consts::FRAC_1_SQRT_2,
    }))
}

fn run_linear(s: &Scenario, st: &mut Staging) -> Result<Value> {
    let grid = s.grid.spectral_grid()?;
    let v0 = halfspace_data(s, &grid)?;
    let f = s.data.source.tensor(&grid);
    let solver = HalfSpaceSolver::new(grid.clone());
    let u = solver.solve(&v0, f.as_ref())?;
    let res = solver.residual(&v0, f.as_ref(), None)?;
    let source_norm = f.as_ref().map(|t| {
        let comps: Vec<&crate::spectral::SpectralField> = t.comps.iter().flatten().flatten().map(|a| a.as_ref()).collect();
        weighted_sup_norm_vec(&grid, &comps, 2.0 / 3.0)
    });
    let profile = decay_profile(&u, &grid);
    write_halfspace_fields(st, s, &grid, &u)?;
    let mut w = st.writer(PROFILE_CSV)?;
    write_profile_csv(&mut w, &profile)?;
    finish(w)?;
    Ok(json!({
        "residual": res,
        "relative_momentum": res.relative_momentum(),
        "boundary_size": boundary_size(&solver, &v0),
        "weighted_norm": weighted_sup_norm_vec(&grid, &[&u.v[0], &u.v[1], &u.v[2]], SOLUTION_ALPHA),
        "source_weighted_norm": source_norm,
        "decay_fits": decay_fits(&profile, (1.0, grid.vertical.z_max() / 2.0)),
    }))
}

fn run_nonlinear(s: &Scenario, st: &mut Staging) -> Result<Value> {
    let grid = s.grid.spectral_grid()?;
    let v0 = halfspace_data(s, &grid)?;
    let solver = HalfSpaceSolver::new(grid.clone());
    let opts = PicardOptions {
        tol: s.tolerances.tol,
        max_iter: s.tolerances.max_iter,
        ..Default::default()
    };
    let (u, rep) = solve_nsc_with(&solver, &v0, &opts, None)?;
    // distance to the Ekman profile; only meaningful for uniform data
    let uniform = matches!(s.data.phi, PhiFamily::Uniform { .. });
    let a = [v0.v0[0][0].re, v0.v0[1][0].re];
    let fft = Fft2::new(grid.n);
    let mut ekman_dev: f64 = 0.0;
    for (j, &z) in grid.z().iter().enumerate() {
        let (e1, e2) = ekman_reference(a, z);
        let p: Vec<Vec<C64>> = u.v.iter().map(|f| fft.to_physical(&f.slice(j))).collect();
        for q in 0..grid.n_modes() {
            let d = ((p[0][q].re - e1).powi(2) + (p[1][q].re - e2).powi(2) + p[2][q].re.powi(2)).sqrt();
            ekman_dev = ekman_dev.max(d);
        }
    }
    let size = boundary_size(&solver, &v0);
    let profile = decay_profile(&u, &grid);
    write_halfspace_fields(st, s, &grid, &u)?;
    let mut w = st.writer(PROFILE_CSV)?;
    write_profile_csv(&mut w, &profile)?;
    finish(w)?;
    let max_ratio = rep.contraction_ratios.iter().cloned().fold(0.0, f64::max);
    Ok(json!({
        "convergence": rep,
        "max_contraction_ratio": max_ratio,
        "boundary_size": size,
        "weighted_norm": weighted_sup_norm_vec(&grid, &[&u.v[0], &u.v[1], &u.v[2]], SOLUTION_ALPHA),
        "ekman_deviation": uniform.then_some(ekman_dev),
        "ekman_deviation_over_size_squared": uniform.then(|| if size > 0.0 { ekman_dev / (size * size) } else { 0.0 }),
        "decay_fits": decay_fits(&profile, (1.0, grid.vertical.z_max() / 2.0)),
    }))
}

fn run_strip(s: &Scenario, st: &mut Staging) -> Result<Value> {
    let gamma = s.roughness()?;
    let m_top = s.grid.m_top.expect("resolved");
    let phi = bottom_data(s, &gamma);
    let mean = [phi.phi[0][0].re, phi.phi[1][0].re];
    let psi = ekman_stress(gamma.n, mean, m_top);
    let sup_gamma = gamma.sup_gamma;
    let op = StripOperator::new(StripGrid::new(gamma, m_top, s.grid.n_sigma)?)?;
    let opts = StripOptions {
        tol: s.tolerances.strip_tol,
        ..Default::default()
    };
    let sol = op.solve(&phi, &psi, &opts, None)?;
    let parts = op.residual_parts(&sol, &phi, &psi);
    let flux = op.mean_vertical_flux(&sol);
    let top = op.stress_trace_top(&sol);
    if s.output.fields.csv() {
        let mut w = st.writer(FIELDS_CSV)?;
        write_strip_csv(&mut w, &op, &sol, true)?;
        finish(w)?;
    }
    let profile = strip_profile(&op, &sol);
    let mut w = st.writer(PROFILE_CSV)?;
    write_profile_csv(&mut w, &profile)?;
    finish(w)?;
    Ok(json!({
        "newton": sol.report,
        "residual_parts": {
            "momentum": parts[0], "divergence": parts[1], "bottom": parts[2], "top": parts[3],
        },
        "mean_vertical_flux_max": flux.iter().map(|f| f.abs()).fold(0.0, f64::max),
        "top_stress_max": top.max_abs(),
        "applied_stress": "ekman trace of the mean data at M",
        "sup_gamma": sup_gamma,
        "M": m_top,
        "tangency_defect": phi.tangency_defect(&op.grid.gamma),
    }))
}

fn run_full(s: &Scenario, st: &mut Staging) -> Result<Value> {
    let gamma = s.roughness()?;
    let m_top = s.grid.m_top.expect("resolved");
    let phi = bottom_data(s, &gamma);
    let phi_size = physical_sup(gamma.n, &phi.phi);
    let sup_gamma = gamma.sup_gamma;
    let strip = StripOperator::new(StripGrid::new(gamma, m_top, s.grid.n_sigma)?)?;
    let grid = s.grid.spectral_grid()?;
    let upper = HalfSpaceSolver::new(grid.clone());
    let t = &s.tolerances;
    let opts = TransmissionOptions {
        tol: t.tol,
        max_newton: t.max_newton,
        strip_tol: t.strip_tol.min(1e-12),
        picard_tol: t.inner_tol,
        ..Default::default()
    };
    let tr = Transmission::new(strip, upper, phi, opts)?;
    let flow = tr.solve(None)?;
    let up_profile = decay_profile(&flow.upper, &grid);
    let low_profile = strip_profile(&tr.strip, &flow.lower);
    let profile: Vec<(f64, f64)> = low_profile
        .iter()
        .cloned()
        .chain(up_profile.iter().map(|&(z, v)| (z + m_top, v)))
        .collect();
    let weighted = profile.iter().map(|&(z, v)| (1.0 + z).powf(SOLUTION_ALPHA) * v).fold(0.0, f64::max);
    if s.output.fields.csv() {
        let mut w = st.writer(FIELDS_CSV)?;
        write_strip_csv(&mut w, &tr.strip, &flow.lower, true)?;
        match thinned(&grid, &flow.upper, s.output.z_stride) {
            Some((g, f)) => write_flow_csv(&mut w, &g, &f, m_top, false)?,
            None => write_flow_csv(&mut w, &grid, &flow.upper, m_top, false)?,
        }
        finish(w)?;
    }
    if s.output.fields.ekbl() {
        let w = st.writer(FIELDS_EKBL)?;
        write_ekbl(w, &grid, &flow.upper)?;
    }
    let mut w = st.writer(PROFILE_CSV)?;
    write_profile_csv(&mut w, &profile)?;
    finish(w)?;
    let upper_sup = sup_profile(&grid, &[&flow.upper.v[0], &flow.upper.v[1], &flow.upper.v[2]]);
    Ok(json!({
        "newton_history": flow.newton_history,
        "gmres_iterations": flow.gmres_iterations,
        "jump_norms": flow.jumps,
        "upper_convergence": flow.upper_report,
        "weighted_norms": {
            "solution": weighted,
            "data": phi_size,
            "ratio": if phi_size > 0.0 { weighted / phi_size } else { 0.0 },
            "upper_top_sup": upper_sup.last().cloned().unwrap_or(0.0),
        },
        "interface_stress_max": flow.psi.max_abs(),
        "decay_fits": decay_fits(&up_profile, (1.0, grid.vertical.z_max() / 2.0)),
        "evaluations": *tr.evaluations.borrow(),
        "sup_gamma": sup_gamma,
        "M": m_top,
    }))
}

fn run_verify_roots(s: &Scenario) -> Result<Value> {
    let v = &s.verify;
    Ok(json!({
        "roots": roots_check(v.samples, v.seed)?,
        "green": green_check(v.green_samples, v.seed)?,
    }))
}

fn run_verify_kernels(s: &Scenario) -> Result<Value> {
    let k = &s.verify.kernel;
    let spec = SymbolSpec { a: k.a, b: k.b, beta: k.beta };
    let low = kernel_decay_check(spec, k.chi_radius, &k.z_list, (k.x_range[0], k.x_range[1]))?;
    let high = highfreq_kernel_check(SymbolSpec { a: 0, b: 0, beta: 0.0 }, k.highfreq_chi_radius, &k.highfreq_z_list)?;
    Ok(json!({ "low_frequency": low, "high_frequency": high }))
}

fn run_verify_integrals(s: &Scenario) -> Result<Value> {
    let i = &s.verify.integrals;
    let rep = integral_inequalities_check(i.z_max, i.n_z, i.gamma, i.delta)?;
    let sup: serde_json::Map<String, Value> = rep.entries.iter().map(|e| (e.name.clone(), json!(e.sup_constant))).collect();
    Ok(json!({ "sup_constants": sup, "integrals": rep }))
}

/// Runs a scenario (resolving it first) and moves its artifacts into `out`.
pub fn run_scenario(scenario: &Scenario, out: &Path) -> Result<RunOutcome> {
    let mut s = scenario.clone();
    let warnings = s.resolve()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut st = Staging::create(out)?;
    let results = match s.kind {
        ScenarioKind::EkmanFlat => run_ekman(&s, &mut st)?,
        ScenarioKind::LinearHalfspace => run_linear(&s, &mut st)?,
        ScenarioKind::NonlinearHalfspace => run_nonlinear(&s, &mut st)?,
        ScenarioKind::Strip => run_strip(&s, &mut st)?,
        ScenarioKind::FullRough => run_full(&s, &mut st)?,
        ScenarioKind::VerifyRoots => run_verify_roots(&s)?,
        ScenarioKind::VerifyKernels => run_verify_kernels(&s)?,
        ScenarioKind::VerifyIntegrals => run_verify_integrals(&s)?,
    };
    let wall = clock.elapsed().as_secs_f64();
    let mut artifacts = st.files.clone();
    artifacts.push(REPORT_FILE.into());
    artifacts.push(TIMING_FILE.into());
    let report = json!({
        "status": "ok",
        "program": { "name": "ekbl", "version": env!("CARGO_PKG_VERSION") },
        "kind": s.kind.name(),
        "scenario": s,
        "warnings": warnings,
        "results": results,
        "artifacts": artifacts,
    });
    let mut w = st.writer(REPORT_FILE)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    finish(w)?;
    let timing = json!({
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_seconds": wall,
        "workers": rayon::current_num_threads(),
    });
    let mut w = st.writer(TIMING_FILE)?;
    serde_json::to_writer_pretty(&mut w, &timing)?;
    writeln!(w)?;
    finish(w)?;
    let files = st.commit(out)?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        report,
        artifacts: files,
        wall_seconds: wall,
    })
}
