//! Fundamental solution of the per-mode Orr–Sommerfeld operator
//! `L(ξ,∂z) = [[∂z, ∂z²−|ξ|²], [(∂z²−|ξ|²)², −∂z]]` acting on `(v̂₃, ω̂)`.
//!
//! For z > 0: `G₁ = Σ A_i e^{−λ_i z} V_i⁻`, `G₂ = Σ B_i e^{−λ_i z} V_i⁻`;
//! for z < 0: `G₁ = −Σ A_i e^{λ_i z} V_i⁺`, `G₂ = Σ B_i e^{λ_i z} V_i⁺`,
//! with `V_i^± = (1, ±Ω_i)`.

use crate::error::{EkblError, Result};
use crate::linalg::solve3;
use crate::roots::CharRoots;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorCoeffs {
    pub a: [C64; 3],
    pub b: [C64; 3],
    pub d1: C64,
    pub d2: C64,
}

/// Solve the two jump-condition systems for A and B.
///
/// The B-system is solved with its first column divided by |ξ| so that it stays
/// well conditioned as ξ → 0 (where B₁ grows like 1/|ξ|).
pub fn interior_coeffs(r: &CharRoots) -> Result<InteriorCoeffs> {
    let s = r.xi_sq;
    if s <= 0.0 {
        return Err(EkblError::Precondition(
            "interior coefficients are undefined at xi = 0".into(),
        ));
    }
    let (l, om, y) = (&r.lambda, &r.omega, &r.y);
    // λΩ = −λ²/Y = Y², λ² = −Y³
    let ma = [
        [y[0] * y[0], y[1] * y[1], y[2] * y[2]],
        [ONE, ONE, ONE],
        [-(y[0] * y[0] * y[0]), -(y[1] * y[1] * y[1]), -(y[2] * y[2] * y[2])],
    ];
    let a = solve3(ma, [C64::new(0.5, 0.0), ZERO, ZERO])?;

    let k = s.sqrt();
    let mb = [
        [om[0] / k, om[1], om[2]],
        [l[0] / k, l[1], l[2]],
        [l[0] * l[0] * l[0] / k, l[1] * l[1] * l[1], l[2] * l[2] * l[2]],
    ];
    let mut b = solve3(mb, [ZERO, ZERO, C64::new(-0.5, 0.0)])?;
    b[0] /= k;

    let (d1, d2) = determinants(r);
    Ok(InteriorCoeffs { a, b, d1, d2 })
}

/// D₁ = |ξ|²D and D₂ = −λ₁λ₂λ₃D with D = (Y₂−Y₁)(Y₃−Y₁)(Y₃−Y₂)/(Y₁Y₂Y₃),
/// written with |ξ|²/Y₁ = −(1+Y₁²) and λ₁/Y₁ = −Ω₁ to avoid 0/0.
pub fn determinants(r: &CharRoots) -> (C64, C64) {
    let y = &r.y;
    let v = (y[1] - y[0]) * (y[2] - y[0]) * (y[2] - y[1]) / (y[1] * y[2]);
    let d1 = -(ONE + y[0] * y[0]) * v;
    let d2 = r.omega[0] * r.lambda[1] * r.lambda[2] * v;
    (d1, d2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// ∂z^k G(ξ, z) with flags for entries that jump at z = 0.
#[derive(Clone, Copy, Debug)]
pub struct GreenEval {
    pub entries: [[C64; 2]; 2],
    pub deriv_order: usize,
    pub z: f64,
    pub jumps: [[bool; 2]; 2],
}

/// One-sided value of ∂z^k G at z (z = 0 uses the requested side).
pub fn green_eval_side(r: &CharRoots, c: &InteriorCoeffs, z: f64, k: usize, side: Side) -> [[C64; 2]; 2] {
    let mut g = [[ZERO; 2]; 2];
    for i in 0..3 {
        let l = r.lambda[i];
        let (e, fac, vv, sa) = match side {
            Side::Plus => ((-l * z).exp(), (-l).powu(k as u32), [ONE, -r.omega[i]], ONE),
            Side::Minus => ((l * z).exp(), l.powu(k as u32), [ONE, r.omega[i]], -ONE),
        };
        let w = e * fac;
        for row in 0..2 {
            g[row][0] += sa * c.a[i] * w * vv[row];
            g[row][1] += c.b[i] * w * vv[row];
        }
    }
    g
}

pub fn green_eval(r: &CharRoots, c: &InteriorCoeffs, z: f64, deriv_order: usize) -> Result<GreenEval> {
    if deriv_order > 3 {
        return Err(EkblError::Domain("derivative order must be 0..3".into()));
    }
    if z > 0.0 {
        return Ok(GreenEval {
            entries: green_eval_side(r, c, z, deriv_order, Side::Plus),
            deriv_order,
            z,
            jumps: [[false; 2]; 2],
        });
    }
    if z < 0.0 {
        return Ok(GreenEval {
            entries: green_eval_side(r, c, z, deriv_order, Side::Minus),
            deriv_order,
            z,
            jumps: [[false; 2]; 2],
        });
    }
    let p = green_eval_side(r, c, 0.0, deriv_order, Side::Plus);
    let m = green_eval_side(r, c, 0.0, deriv_order, Side::Minus);
    let mut entries = [[ZERO; 2]; 2];
    let mut jumps = [[false; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            entries[i][j] = (p[i][j] + m[i][j]) * 0.5;
            let scale = p[i][j].norm().max(m[i][j].norm()).max(1.0);
            jumps[i][j] = (p[i][j] - m[i][j]).norm() > 1e-9 * scale;
        }
    }
    Ok(GreenEval {
        entries,
        deriv_order,
        z,
        jumps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryCoeffs {
    pub c: [C64; 3],
    pub d3: C64,
}

/// Coefficients of `Σ C_i e^{−λ_i z} V_i⁻` matching `(û₃, −∂zû₃, −ŵ)` at z = 0.
pub fn boundary_coeffs(r: &CharRoots, rhs: [C64; 3]) -> Result<BoundaryCoeffs> {
    let (l, om) = (&r.lambda, &r.omega);
    let d3 = (l[1] - l[0]) * (om[2] - om[0]) - (l[2] - l[0]) * (om[1] - om[0]);
    if rhs.iter().all(|v| *v == ZERO) {
        return Ok(BoundaryCoeffs { c: [ZERO; 3], d3 });
    }
    let m = [[ONE, ONE, ONE], [l[0], l[1], l[2]], [om[0], om[1], om[2]]];
    let c = solve3(m, rhs)?;
    Ok(BoundaryCoeffs { c, d3 })
}

/// Homogeneous correction `V − V_G = G(z)(S¹(0) + ∂zS²(0)) + ∂zG(z) S²(0)` for z > 0,
/// as `Σ_i coeffs_i e^{−λ_i z} V_i⁻`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousCorrection {
    pub coeffs: [C64; 3],
    pub vectors: [[C64; 2]; 3],
}

impl HomogeneousCorrection {
    pub fn eval(&self, r: &CharRoots, z: f64) -> [C64; 2] {
        let mut v = [ZERO; 2];
        for i in 0..3 {
            let e = (-r.lambda[i] * z).exp() * self.coeffs[i];
            v[0] += e * self.vectors[i][0];
            v[1] += e * self.vectors[i][1];
        }
        v
    }
}

pub fn homogeneous_correction(
    c: &InteriorCoeffs,
    r: &CharRoots,
    s1_0: [C64; 2],
    ds2_0: [C64; 2],
    s2_0: [C64; 2],
) -> HomogeneousCorrection {
    let a = [s1_0[0] + ds2_0[0], s1_0[1] + ds2_0[1]];
    let mut coeffs = [ZERO; 3];
    let mut vectors = [[ZERO; 2]; 3];
    for i in 0..3 {
        coeffs[i] = c.a[i] * a[0] + c.b[i] * a[1] - r.lambda[i] * (c.a[i] * s2_0[0] + c.b[i] * s2_0[1]);
        vectors[i] = [ONE, -r.omega[i]];
    }
    HomogeneousCorrection { coeffs, vectors }
}

/// Closed-form coefficient expressions, kept as cross-checks of the linear solves.
pub mod closed_form {
    use super::*;

    pub fn a(r: &CharRoots) -> [C64; 3] {
        let (d1, _) = determinants(r);
        let l2: Vec<C64> = r.lambda.iter().map(|l| l * l).collect();
        let f = -ONE / (d1 * 2.0);
        [f * (l2[2] - l2[1]), f * (l2[0] - l2[2]), f * (l2[1] - l2[0])]
    }

    pub fn b(r: &CharRoots) -> [C64; 3] {
        let (_, d2) = determinants(r);
        let l = &r.lambda;
        let y = &r.y;
        let f = ONE / (d2 * 2.0);
        [
            f * l[1] * l[2] * (ONE / y[1] - ONE / y[2]),
            f * l[0] * l[2] * (ONE / y[2] - ONE / y[0]),
            f * l[0] * l[1] * (ONE / y[0] - ONE / y[1]),
        ]
    }

    /// `rhs_raw = (û₃(0), ∂zû₃(0), ŵ(0))`.
    pub fn c(r: &CharRoots, rhs_raw: [C64; 3]) -> [C64; 3] {
        let (l, om) = (&r.lambda, &r.omega);
        let d3 = (l[1] - l[0]) * (om[2] - om[0]) - (l[2] - l[0]) * (om[1] - om[0]);
        let (u, du, w) = (rhs_raw[0], rhs_raw[1], rhs_raw[2]);
        [
            ((l[1] * om[2] - l[2] * om[1]) * u + (om[2] - om[1]) * du + (l[1] - l[2]) * w) / d3,
            ((l[2] * om[0] - l[0] * om[2]) * u + (om[0] - om[2]) * du + (l[2] - l[0]) * w) / d3,
            ((l[0] * om[1] - l[1] * om[0]) * u + (om[1] - om[0]) * du + (l[0] - l[1]) * w) / d3,
        ]
    }
}
