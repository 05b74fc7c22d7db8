//! Characteristic roots of the Stokes–Coriolis operator per horizontal frequency.
//!
//! With `Y = λ² − |ξ|²` the characteristic equation `−λ² − (λ² − |ξ|²)³ = 0` becomes
//! the resolvent cubic `Y³ + Y + |ξ|² = 0`, and `λ² = −Y³` on its roots.

use crate::error::{EkblError, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Horizontal frequency ξ = (ξ₁, ξ₂).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub xi1: f64,
    pub xi2: f64,
}

impl Frequency {
    pub fn new(xi1: f64, xi2: f64) -> Self {
        Self { xi1, xi2 }
    }

    pub fn xi_sq(&self) -> f64 {
        self.xi1 * self.xi1 + self.xi2 * self.xi2
    }

    pub fn norm(&self) -> f64 {
        self.xi1.hypot(self.xi2)
    }
}

/// Roots λ_i (Re > 0), eigen-slopes Ω_i and resolvent roots Y_i = λ_i² − |ξ|².
///
/// Ordering is (real, Im > 0, Im < 0); index 2 is the conjugate of index 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharRoots {
    pub lambda: [C64; 3],
    pub omega: [C64; 3],
    pub y: [C64; 3],
    pub xi_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Low,
    High,
}

/// Below this |ξ| the exact small-frequency limits are returned.
pub const XI_ASYMPTOTIC: f64 = 1e-8;

/// Roots of `Y³ + Y + s = 0` for `s ≥ 0`: the real root (≤ 0) and the conjugate pair.
pub fn solve_cubic_resolvent(xi_sq: f64) -> Result<(f64, C64, C64)> {
    if !xi_sq.is_finite() || xi_sq < 0.0 {
        return Err(EkblError::Domain(format!(
            "resolvent needs a finite nonnegative |xi|^2, got {xi_sq}"
        )));
    }
    Ok(resolvent_unchecked(xi_sq))
}

fn resolvent_unchecked(s: f64) -> (f64, C64, C64) {
    // The discriminant is negative for every s, so the hyperbolic form applies:
    // Y = -(2/√3) sinh(asinh(3√3 s / 2) / 3).
    let k = 2.0 / 3f64.sqrt();
    let mut y = -k * ((1.5 * 3f64.sqrt() * s).asinh() / 3.0).sinh();
    for _ in 0..2 {
        let f = y * y * y + y + s;
        let df = 3.0 * y * y + 1.0;
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        y -= step;
    }
    // Remaining quadratic factor Y² + aY + (1 + a²) with a the real root.
    let im = (3.0 * y * y + 4.0).sqrt() / 2.0;
    let plus = C64::new(-y / 2.0, im);
    (y, plus, plus.conj())
}

fn principal_root_positive(w: C64) -> C64 {
    let r = w.sqrt();
    if r.re < 0.0 {
        -r
    } else {
        r
    }
}

fn omegas(lambda: &[C64; 3], y: &[C64; 3]) -> [C64; 3] {
    let mut om = [C64::new(0.0, 0.0); 3];
    for i in 0..3 {
        om[i] = if y[i].norm() == 0.0 {
            // removable: Ω₁ ~ |ξ| as ξ → 0
            C64::new(0.0, 0.0)
        } else {
            -lambda[i] / y[i]
        };
    }
    om
}

/// Characteristic roots for frequency ξ.
pub fn char_roots(xi: Frequency) -> Result<CharRoots> {
    if !xi.xi1.is_finite() || !xi.xi2.is_finite() {
        return Err(EkblError::Domain("non-finite frequency".into()));
    }
    Ok(char_roots_sq(xi.xi_sq()))
}

/// Same as [`char_roots`] but keyed on |ξ|² directly (roots are rotation invariant).
pub fn char_roots_sq(xi_sq: f64) -> CharRoots {
    if xi_sq.sqrt() < XI_ASYMPTOTIC {
        return asymptotic_sq(xi_sq, Regime::Low);
    }
    let (yr, yp, ym) = resolvent_unchecked(xi_sq);
    let y = [C64::new(yr, 0.0), yp, ym];
    let l1 = C64::new((-yr).max(0.0).powf(1.5), 0.0);
    let l2 = principal_root_positive(-(yp * yp * yp));
    let lambda = [l1, l2, l2.conj()];
    let mut omega = omegas(&lambda, &y);
    omega[2] = omega[1].conj();
    CharRoots {
        lambda,
        omega,
        y,
        xi_sq,
    }
}

/// Truncated expansions of the roots at low or high frequency.
pub fn asymptotic_roots(xi: Frequency, regime: Regime) -> CharRoots {
    asymptotic_sq(xi.xi_sq(), regime)
}

fn asymptotic_sq(s: f64, regime: Regime) -> CharRoots {
    let r = s.sqrt();
    let lambda = match regime {
        Regime::Low => {
            let e = C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
            [C64::new(r * r * r, 0.0), e, e.conj()]
        }
        Regime::High => {
            let j = C64::from_polar(1.0, 2.0 * PI / 3.0);
            let c = [C64::new(0.5, 0.0), j * j * 0.5, j * 0.5];
            let t = r.powf(-1.0 / 3.0);
            [
                C64::new(r, 0.0) - c[0] * t,
                C64::new(r, 0.0) - c[1] * t,
                C64::new(r, 0.0) - c[2] * t,
            ]
        }
    };
    let y = if regime == Regime::Low && s == 0.0 {
        [C64::new(0.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)]
    } else {
        [
            lambda[0] * lambda[0] - s,
            lambda[1] * lambda[1] - s,
            lambda[2] * lambda[2] - s,
        ]
    };
    let omega = omegas(&lambda, &y);
    CharRoots {
        lambda,
        omega,
        y,
        xi_sq: s,
    }
}

/// |−λ² − (λ² − |ξ|²)³|, the residual of the characteristic equation.
pub fn sextic_residual(lambda: C64, xi_sq: f64) -> f64 {
    let l2 = lambda * lambda;
    let y = l2 - xi_sq;
    (-l2 - y * y * y).norm()
}
