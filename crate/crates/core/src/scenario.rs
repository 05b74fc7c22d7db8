//! Versioned JSON scenarios: types, defaults, parsing and validation.

use crate::error::{EkblError, Result};
use crate::spectral::{Fft2, FieldRole, SpectralField, SpectralGrid, VerticalGrid};
use crate::strip::{RoughnessFamily, RoughnessProfile};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    EkmanFlat,
    LinearHalfspace,
    NonlinearHalfspace,
    Strip,
    FullRough,
    VerifyRoots,
    VerifyKernels,
    VerifyIntegrals,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::EkmanFlat => "ekman_flat",
            ScenarioKind::LinearHalfspace => "linear_halfspace",
            ScenarioKind::NonlinearHalfspace => "nonlinear_halfspace",
            ScenarioKind::Strip => "strip",
            ScenarioKind::FullRough => "full_rough",
            ScenarioKind::VerifyRoots => "verify_roots",
            ScenarioKind::VerifyKernels => "verify_kernels",
            ScenarioKind::VerifyIntegrals => "verify_integrals",
        }
    }

    fn uses_strip(self) -> bool {
        matches!(self, ScenarioKind::Strip | ScenarioKind::FullRough)
    }

    fn is_nonlinear(self) -> bool {
        matches!(self, ScenarioKind::NonlinearHalfspace | ScenarioKind::Strip | ScenarioKind::FullRough)
    }
}

/// A complete run description. Optional fields are filled in by [`parse_scenario`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Schema version; must equal 1.
    pub version: u32,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Horizontal period.
    #[serde(rename = "L", default = "default_period")]
    pub period: f64,
    /// Half-space lattice size per direction.
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(rename = "Z_max", default = "default_z_max")]
    pub z_max: f64,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    /// Geometric stretching of the vertical grid; default keeps the 256-node spacing profile.
    #[serde(default)]
    pub ratio: Option<f64>,
    /// Chebyshev nodes across the strip.
    #[serde(default = "default_n_sigma")]
    pub n_sigma: usize,
    /// Strip lattice size per direction.
    #[serde(default = "default_strip_modes")]
    pub strip_modes: usize,
    /// Interface height; defaults to `sup γ + 1`.
    #[serde(rename = "M", default)]
    pub m_top: Option<f64>,
}

fn default_period() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_n_modes() -> usize {
    64
}
fn default_z_max() -> f64 {
    50.0
}
fn default_n_z() -> usize {
    256
}
fn default_n_sigma() -> usize {
    24
}
fn default_strip_modes() -> usize {
    32
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            period: default_period(),
            n_modes: default_n_modes(),
            z_max: default_z_max(),
            n_z: default_n_z(),
            ratio: None,
            n_sigma: default_n_sigma(),
            strip_modes: default_strip_modes(),
            m_top: None,
        }
    }
}

impl GridSpec {
    pub fn default_ratio(n_z: usize) -> f64 {
        1.02f64.powf(255.0 / (n_z.max(2) - 1) as f64)
    }

    pub fn spectral_grid(&self) -> Result<SpectralGrid> {
        let ratio = self.ratio.unwrap_or_else(|| Self::default_ratio(self.n_z));
        SpectralGrid::new(self.period, self.n_modes, VerticalGrid::geometric(self.n_z, self.z_max, ratio)?)
    }
}

/// Bottom velocity data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiFamily {
    /// Constant horizontal velocity `A·d/|d|`.
    Uniform { amplitude: f64, direction: [f64; 2] },
    /// Mean `mean` plus random modes on `0 < |k|∞ ≤ kmax` with `(1+|k|²)⁻¹` weights,
    /// rescaled so `max|φ| = A`. The vertical component is drawn only if `vertical`;
    /// strip kinds ignore it and use the tangent lift instead.
    Modes {
        amplitude: f64,
        mean: [f64; 2],
        kmax: i64,
        seed: u64,
        #[serde(default)]
        vertical: bool,
    },
}

impl PhiFamily {
    pub fn amplitude(&self) -> f64 {
        match self {
            PhiFamily::Uniform { amplitude, .. } | PhiFamily::Modes { amplitude, .. } => *amplitude,
        }
    }

    /// Spectral coefficients on the `n × n` lattice.
    pub fn coefficients(&self, n: usize) -> [Vec<C64>; 3] {
        let zero = C64::new(0.0, 0.0);
        let mut v = [vec![zero; n * n], vec![zero; n * n], vec![zero; n * n]];
        match self {
            PhiFamily::Uniform { amplitude, direction } => {
                let d = direction[0].hypot(direction[1]);
                v[0][0] = C64::new(amplitude * direction[0] / d, 0.0);
                v[1][0] = C64::new(amplitude * direction[1] / d, 0.0);
            }
            PhiFamily::Modes { amplitude, mean, kmax, seed, vertical } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                v[0][0] = C64::new(mean[0], 0.0);
                v[1][0] = C64::new(mean[1], 0.0);
                let comps = if *vertical { 3 } else { 2 };
                for_half_lattice(n, *kmax, |m, mc, w| {
                    for vc in v.iter_mut().take(comps) {
                        let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
                        vc[m] += c;
                        vc[mc] += c.conj();
                    }
                });
                let f = Fft2::new(n);
                let phys: Vec<Vec<C64>> = v.iter().map(|s| f.to_physical(s)).collect();
                let sup = (0..n * n)
                    .map(|q| phys.iter().map(|p| p[q].norm_sqr()).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                if sup > 0.0 {
                    for c in v.iter_mut().flatten() {
                        *c *= amplitude / sup;
                    }
                }
            }
        }
        v
    }
}

/// Visits each pair `±k` with `0 < |k|∞ ≤ kmax` once, passing both indices and `(1+|k|²)⁻¹`.
fn for_half_lattice(n: usize, kmax: i64, mut f: impl FnMut(usize, usize, f64)) {
    let idx = |a: i64, b: i64| (a.rem_euclid(n as i64) as usize) * n + b.rem_euclid(n as i64) as usize;
    for a in -kmax..=kmax {
        for b in -kmax..=kmax {
            if (a, b) <= (0, 0) {
                continue;
            }
            f(idx(a, b), idx(-a, -b), 1.0 / (1.0 + (a * a + b * b) as f64));
        }
    }
}

/// Interior forcing `F_ij` for the linear half-space problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceFamily {
    None,
    /// `F_ij = F_ji = A cos(k·y) exp(−((z−z0)/width)²)`, indices 1-based.
    Layer {
        amplitude: f64,
        k: [i64; 2],
        ij: [usize; 2],
        z0: f64,
        width: f64,
    },
    /// Random symmetric tensor with modes on `|k|∞ ≤ kmax`, times `(1+z)^{−decay}`,
    /// rescaled so the largest entry at `z = 0` has size `A`.
    Random { amplitude: f64, kmax: i64, seed: u64, decay: f64 },
}

impl SourceFamily {
    pub fn tensor(&self, grid: &SpectralGrid) -> Option<crate::halfspace::SourceTensor> {
        let n = grid.n;
        let z = grid.z();
        let zero = C64::new(0.0, 0.0);
        let mut t = crate::halfspace::SourceTensor::zero();
        match self {
            SourceFamily::None => return None,
            SourceFamily::Layer { amplitude, k, ij, z0, width } => {
                let mut f = SpectralField::for_grid(grid, FieldRole::Source);
                let prof: Vec<f64> = z.iter().map(|zz| amplitude * (-((zz - z0) / width).powi(2)).exp()).collect();
                let m = grid.mode_index(k[0], k[1]).expect("validated wavevector");
                let mc = grid.conj_index(m);
                let w = if m == mc { 1.0 } else { 0.5 };
                for (j, p) in prof.iter().enumerate() {
                    f.set(m, j, f.at(m, j) + w * p);
                    if mc != m {
                        f.set(mc, j, f.at(mc, j) + w * p);
                    }
                }
                t.set_symmetric(ij[0] - 1, ij[1] - 1, f);
            }
            SourceFamily::Random { amplitude, kmax, seed, decay } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut coef: Vec<Vec<C64>> = Vec::new();
                for _ in 0..6 {
                    let mut c = vec![zero; n * n];
                    c[0] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
                    for_half_lattice(n, *kmax, |m, mc, w| {
                        let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
                        c[m] += a;
                        c[mc] += a.conj();
                    });
                    coef.push(c);
                }
                let fft = Fft2::new(n);
                let sup = coef
                    .iter()
                    .map(|c| fft.to_physical(c).iter().map(|v| v.norm()).fold(0.0, f64::max))
                    .fold(0.0, f64::max);
                let s = if sup > 0.0 { amplitude / sup } else { 0.0 };
                let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
                for (c, &(i, j)) in coef.iter().zip(&pairs) {
                    let mut f = SpectralField::for_grid(grid, FieldRole::Source);
                    for m in 0..grid.n_modes() {
                        if grid.is_nyquist(m) {
                            continue;
                        }
                        for (jz, zz) in z.iter().enumerate() {
                            f.set(m, jz, c[m] * s * (1.0 + zz).powf(-decay));
                        }
                    }
                    t.set_symmetric(i, j, f);
                }
            }
        }
        Some(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default = "default_phi")]
    pub phi: PhiFamily,
    #[serde(default = "default_gamma")]
    pub gamma: RoughnessFamily,
    #[serde(default = "default_source")]
    pub source: SourceFamily,
    /// Amplitude above which nonlinear runs carry a warning.
    #[serde(default = "default_smallness")]
    pub smallness: f64,
}

fn default_phi() -> PhiFamily {
    PhiFamily::Uniform {
        amplitude: 0.01,
        direction: [1.0, 0.0],
    }
}
fn default_gamma() -> RoughnessFamily {
    RoughnessFamily::Flat
}
fn default_source() -> SourceFamily {
    SourceFamily::None
}
fn default_smallness() -> f64 {
    0.1
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            phi: default_phi(),
            gamma: default_gamma(),
            source: default_source(),
            smallness: default_smallness(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Outer tolerance: Picard increment or transmission residual.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    /// Strip Newton tolerance.
    #[serde(default = "default_strip_tol")]
    pub strip_tol: f64,
    /// Inner half-space Picard tolerance inside the coupled solve.
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    60
}
fn default_max_newton() -> usize {
    12
}
fn default_strip_tol() -> f64 {
    1e-10
}
fn default_inner_tol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            max_newton: default_max_newton(),
            strip_tol: default_strip_tol(),
            inner_tol: default_inner_tol(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    None,
    Csv,
    Ekbl,
    Both,
}

impl FieldFormat {
    pub fn csv(self) -> bool {
        matches!(self, FieldFormat::Csv | FieldFormat::Both)
    }
    pub fn ekbl(self) -> bool {
        matches!(self, FieldFormat::Ekbl | FieldFormat::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; the CLI falls back to `$EKBL_OUT_ROOT/<scenario name>`.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_fields")]
    pub fields: FieldFormat,
    /// Write every `z_stride`-th half-space level to fields.csv.
    #[serde(default = "default_z_stride")]
    pub z_stride: usize,
}

fn default_fields() -> FieldFormat {
    FieldFormat::Csv
}
fn default_z_stride() -> usize {
    8
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            fields: default_fields(),
            z_stride: default_z_stride(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Frequencies sampled by the root check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Frequencies sampled by the Green jump check.
    #[serde(default = "default_green_samples")]
    pub green_samples: usize,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub integrals: IntegralParams,
}

fn default_seed() -> u64 {
    1
}
fn default_samples() -> usize {
    1000
}
fn default_green_samples() -> usize {
    100
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            samples: default_samples(),
            green_samples: default_green_samples(),
            kernel: KernelParams::default(),
            integrals: IntegralParams::default(),
        }
    }
}

/// Symbol `ξ₁^a ξ₂^b |ξ|^β` and the sampling used for the kernel envelopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default = "default_a")]
    pub a: u32,
    #[serde(default)]
    pub b: u32,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_chi_radius")]
    pub chi_radius: f64,
    #[serde(default = "default_kernel_z")]
    pub z_list: Vec<f64>,
    #[serde(default = "default_x_range")]
    pub x_range: [f64; 2],
    #[serde(default = "default_chi_radius")]
    pub highfreq_chi_radius: f64,
    #[serde(default = "default_highfreq_z")]
    pub highfreq_z_list: Vec<f64>,
}

fn default_a() -> u32 {
    2
}
fn default_beta() -> f64 {
    -1.0
}
fn default_chi_radius() -> f64 {
    4.0
}
fn default_kernel_z() -> Vec<f64> {
    vec![125.0, 343.0, 1000.0, 3375.0, 8000.0]
}
fn default_x_range() -> [f64; 2] {
    [10.0, 50.0]
}
fn default_highfreq_z() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0, 6.0]
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            a: default_a(),
            b: 0,
            beta: default_beta(),
            chi_radius: default_chi_radius(),
            z_list: default_kernel_z(),
            x_range: default_x_range(),
            highfreq_chi_radius: default_chi_radius(),
            highfreq_z_list: default_highfreq_z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IntegralParams {
    #[serde(default = "default_int_zmax")]
    pub z_max: f64,
    #[serde(default = "default_int_nz")]
    pub n_z: usize,
    #[serde(default = "default_two_thirds")]
    pub gamma: f64,
    #[serde(default = "default_two_thirds")]
    pub delta: f64,
}

fn default_int_zmax() -> f64 {
    1e4
}
fn default_int_nz() -> usize {
    60
}
fn default_two_thirds() -> f64 {
    2.0 / 3.0
}

impl Default for IntegralParams {
    fn default() -> Self {
        Self {
            z_max: default_int_zmax(),
            n_z: default_int_nz(),
            gamma: default_two_thirds(),
            delta: default_two_thirds(),
        }
    }
}

fn config(path: &str, msg: impl std::fmt::Display) -> EkblError {
    EkblError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(config(path, format!("must be a positive finite number, got {x}")))
    }
}

impl Scenario {
    /// Minimal scenario of the given kind with every default applied.
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            version: SCENARIO_VERSION,
            kind,
            grid: GridSpec::default(),
            data: DataSpec::default(),
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
            verify: VerifySpec::default(),
        }
    }

    /// Roughness profile on the strip lattice.
    pub fn roughness(&self) -> Result<RoughnessProfile> {
        RoughnessProfile::generate(&self.data.gamma, self.grid.strip_modes, self.grid.period)
    }

    /// Checks every constraint, fills `ratio` and `M`, and returns warnings.
    pub fn resolve(&mut self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.version != SCENARIO_VERSION {
            return Err(config("version", format!("unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version)));
        }
        let kind = self.kind;
        let g = &mut self.grid;
        positive("grid.L", g.period)?;
        positive("grid.Z_max", g.z_max)?;
        if g.n_modes < 4 || g.n_modes % 2 != 0 {
            return Err(config("grid.n_modes", format!("must be even and at least 4, got {}", g.n_modes)));
        }
        if g.n_z < 8 {
            return Err(config("grid.n_z", format!("must be at least 8, got {}", g.n_z)));
        }
        let ratio = *g.ratio.get_or_insert(GridSpec::default_ratio(g.n_z));
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(config("grid.ratio", format!("must be at least 1, got {ratio}")));
        }
        if g.n_sigma < 5 {
            return Err(config("grid.n_sigma", format!("must be at least 5, got {}", g.n_sigma)));
        }
        if g.strip_modes < 4 || g.strip_modes % 2 != 0 {
            return Err(config("grid.strip_modes", format!("must be even and at least 4, got {}", g.strip_modes)));
        }
        if kind == ScenarioKind::FullRough && g.strip_modes > g.n_modes {
            return Err(config(
                "grid.strip_modes",
                format!("strip lattice ({}) must not exceed the half-space lattice ({})", g.strip_modes, g.n_modes),
            ));
        }

        let d = &self.data;
        positive("data.smallness", d.smallness)?;
        let amp = d.phi.amplitude();
        if !(amp.is_finite() && amp >= 0.0) {
            return Err(config("data.phi.amplitude", format!("must be finite and nonnegative, got {amp}")));
        }
        match &d.phi {
            PhiFamily::Uniform { direction, .. } => {
                if !(direction[0].hypot(direction[1]) > 0.0) {
                    return Err(config("data.phi.direction", "must be a nonzero vector"));
                }
            }
            PhiFamily::Modes { kmax, mean, vertical, .. } => {
                let n = if kind.uses_strip() { g.strip_modes } else { g.n_modes } as i64;
                if *kmax < 0 || *kmax >= n / 2 {
                    return Err(config("data.phi.kmax", format!("must lie in [0, {}) for this lattice, got {kmax}", n / 2)));
                }
                if !mean.iter().all(|m| m.is_finite()) {
                    return Err(config("data.phi.mean", "must be finite"));
                }
                if *vertical && kind.uses_strip() {
                    warnings.push("data.phi.vertical is ignored by strip kinds (tangent lift is used)".into());
                }
            }
        }
        if kind == ScenarioKind::EkmanFlat && !matches!(d.phi, PhiFamily::Uniform { .. }) {
            return Err(config("data.phi", "ekman_flat needs uniform data"));
        }
        if !kind.uses_strip() && d.gamma != RoughnessFamily::Flat {
            return Err(config("data.gamma", format!("roughness only applies to strip and full_rough, not {}", kind.name())));
        }
        match &d.source {
            SourceFamily::None => {}
            _ if kind != ScenarioKind::LinearHalfspace => {
                return Err(config("data.source", "interior forcing is only supported by linear_halfspace"));
            }
            SourceFamily::Layer { amplitude, k, ij, width, .. } => {
                if !amplitude.is_finite() {
                    return Err(config("data.source.amplitude", "must be finite"));
                }
                positive("data.source.width", *width)?;
                if !ij.iter().all(|i| (1..=3).contains(i)) {
                    return Err(config("data.source.ij", "indices must lie in 1..=3"));
                }
                let h = (g.n_modes / 2) as i64;
                if k.iter().any(|c| c.abs() >= h) {
                    return Err(config("data.source.k", format!("wavevector must satisfy |k_i| < {h}")));
                }
            }
            SourceFamily::Random { amplitude, kmax, decay, .. } => {
                if !amplitude.is_finite() || !decay.is_finite() {
                    return Err(config("data.source", "amplitude and decay must be finite"));
                }
                if *kmax < 0 || *kmax >= (g.n_modes / 2) as i64 {
                    return Err(config("data.source.kmax", format!("must lie in [0, {})", g.n_modes / 2)));
                }
            }
        }
        if kind.is_nonlinear() && amp > d.smallness {
            warnings.push(format!(
                "data.phi.amplitude = {amp} exceeds the configured smallness {}; convergence is not guaranteed",
                d.smallness
            ));
        }

        if kind.uses_strip() {
            let gamma = RoughnessProfile::generate(&self.data.gamma, self.grid.strip_modes, self.grid.period)
                .map_err(|e| config("data.gamma", e))?;
            let m = *self.grid.m_top.get_or_insert(gamma.sup_gamma + 1.0);
            if !(m.is_finite() && m > gamma.sup_gamma) {
                return Err(config(
                    "grid.M",
                    format!("interface height M = {m} must exceed sup gamma = {}", gamma.sup_gamma),
                ));
            }
        }

        let t = &self.tolerances;
        for (name, v) in [("tol", t.tol), ("strip_tol", t.strip_tol), ("inner_tol", t.inner_tol)] {
            positive(&format!("tolerances.{name}"), v)?;
        }
        if t.max_iter == 0 || t.max_newton == 0 {
            return Err(config("tolerances", "iteration limits must be at least 1"));
        }
        if self.output.z_stride == 0 {
            return Err(config("output.z_stride", "must be at least 1"));
        }

        let v = &self.verify;
        match kind {
            ScenarioKind::VerifyRoots => {
                if v.samples < 2 || v.green_samples == 0 {
                    return Err(config("verify.samples", "need at least 2 root samples and 1 Green sample"));
                }
            }
            ScenarioKind::VerifyKernels => {
                let k = &v.kernel;
                if !(k.beta >= -2.0 && k.beta < 0.0) {
                    return Err(config("verify.kernel.beta", format!("must lie in [-2, 0), got {}", k.beta)));
                }
                positive("verify.kernel.chi_radius", k.chi_radius)?;
                positive("verify.kernel.highfreq_chi_radius", k.highfreq_chi_radius)?;
                if k.z_list.len() < 2 || k.z_list.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
                    return Err(config("verify.kernel.z_list", "need at least two positive heights"));
                }
                if k.highfreq_z_list.len() < 2 || k.highfreq_z_list.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
                    return Err(config("verify.kernel.highfreq_z_list", "need at least two positive heights"));
                }
                if !(k.x_range[0] > 0.0 && k.x_range[1] > k.x_range[0]) {
                    return Err(config("verify.kernel.x_range", "need 0 < x_min < x_max"));
                }
            }
            ScenarioKind::VerifyIntegrals => {
                let i = &v.integrals;
                positive("verify.integrals.z_max", i.z_max)?;
                if i.n_z < 2 {
                    return Err(config("verify.integrals.n_z", "need at least 2 heights"));
                }
                if !(i.delta > 0.0 && i.delta < 1.0) {
                    return Err(config("verify.integrals.delta", format!("must lie in (0, 1), got {}", i.delta)));
                }
                if !(i.gamma > 0.0 && i.gamma + i.delta > 1.0) {
                    return Err(config("verify.integrals.gamma", "need gamma > 0 and gamma + delta > 1"));
                }
            }
            _ => {}
        }
        Ok(warnings)
    }
}

/// Parses and resolves a scenario from JSON text. Schema errors carry the key path.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            EkblError::Config(format!("schema violation at `{path}`: {inner}"))
        } else {
            EkblError::Json(inner)
        }
    })?;
    s.resolve()?;
    Ok(s)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_scenario_str(&text)
}

/// JSON schema of the scenario format.
pub fn scenario_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(Scenario)).expect("schema serializes")
}
