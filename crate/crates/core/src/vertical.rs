//! Complex cubic splines on the vertical grid and exact exponential moments against them.
//!
//! For a root λ and a spline `s`, the two one-sided convolutions
//! `P(z) = ∫₀^z e^{−λ(z−z')} s(z') dz'` and `Q(z) = ∫_z^{Z} e^{−λ(z'−z)} s(z') dz'`
//! are accumulated interval by interval with closed-form moments of `t^m`.

use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Precomputed factorisation of the clamped-spline slope system for one grid.
#[derive(Clone, Debug)]
pub struct SplineFactor {
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    // Thomas algorithm factors for the interior slope system
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    lower: Vec<f64>,
    // one-sided end-derivative weights (4 points)
    w_left: [f64; 4],
    w_right: [f64; 4],
}

fn lagrange_derivative_weights(x: [f64; 4], at: usize) -> [f64; 4] {
    let mut w = [0.0; 4];
    for k in 0..4 {
        if k == at {
            w[k] = (0..4).filter(|&m| m != at).map(|m| 1.0 / (x[at] - x[m])).sum();
        } else {
            let num: f64 = (0..4).filter(|&m| m != at && m != k).map(|m| x[at] - x[m]).product();
            let den: f64 = (0..4).filter(|&m| m != k).map(|m| x[k] - x[m]).product();
            w[k] = num / den;
        }
    }
    w
}

impl SplineFactor {
    pub fn new(z: &[f64]) -> Self {
        let n = z.len();
        assert!(n >= 4, "spline needs at least 4 nodes");
        let h: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();
        // unknowns d_1..d_{n-2}; row j: h_j d_{j-1} + 2(h_{j-1}+h_j) d_j + h_{j-1} d_{j+1}
        let m = n - 2;
        let mut c_prime = vec![0.0; m];
        let mut denom = vec![0.0; m];
        let mut lower = vec![0.0; m];
        for r in 0..m {
            let j = r + 1;
            let a = h[j];
            let b = 2.0 * (h[j - 1] + h[j]);
            let c = h[j - 1];
            lower[r] = a;
            let d = if r == 0 { b } else { b - a * c_prime[r - 1] };
            denom[r] = d;
            c_prime[r] = c / d;
        }
        let w_left = lagrange_derivative_weights([z[0], z[1], z[2], z[3]], 0);
        let w_right = lagrange_derivative_weights([z[n - 4], z[n - 3], z[n - 2], z[n - 1]], 3);
        Self {
            z: z.to_vec(),
            h,
            c_prime,
            denom,
            lower,
            w_left,
            w_right,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Nodal slopes of the clamped spline through `f`.
    pub fn slopes(&self, f: &[C64]) -> Vec<C64> {
        let n = self.z.len();
        let h = &self.h;
        let mut d = vec![ZERO; n];
        d[0] = (0..4).map(|k| f[k] * self.w_left[k]).sum();
        d[n - 1] = (0..4).map(|k| f[n - 4 + k] * self.w_right[k]).sum();
        let m = n - 2;
        let mut rhs = vec![ZERO; m];
        for r in 0..m {
            let j = r + 1;
            let dl = (f[j] - f[j - 1]) / h[j - 1];
            let dr = (f[j + 1] - f[j]) / h[j];
            rhs[r] = (dl * h[j] + dr * h[j - 1]) * 3.0;
        }
        rhs[0] -= d[0] * h[1];
        rhs[m - 1] -= d[n - 1] * h[n - 3];
        // forward sweep
        let mut y = vec![ZERO; m];
        for r in 0..m {
            let prev = if r == 0 { ZERO } else { y[r - 1] * self.lower[r] };
            y[r] = (rhs[r] - prev) / self.denom[r];
        }
        for r in (0..m).rev() {
            let next = if r + 1 < m { self.c_prime[r] * d[r + 2] } else { ZERO };
            d[r + 1] = y[r] - next;
        }
        d
    }

    /// Per-interval coefficients `[a0,a1,a2,a3]` in the local variable `t ∈ [0,h_j]`.
    pub fn coefficients(&self, f: &[C64]) -> Vec<[C64; 4]> {
        let d = self.slopes(f);
        self.h
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                let delta = (f[j + 1] - f[j]) / h;
                [
                    f[j],
                    d[j],
                    (delta * 3.0 - d[j] * 2.0 - d[j + 1]) / h,
                    (d[j] + d[j + 1] - delta * 2.0) / (h * h),
                ]
            })
            .collect()
    }
}

/// Derivatives `[s, s', s'', s''']` at every node; the third derivative is right-sided
/// (left-sided at the last node).
pub fn nodal_derivatives(coef: &[[C64; 4]], h: &[f64]) -> Vec<[C64; 4]> {
    let nint = coef.len();
    let mut out = Vec::with_capacity(nint + 1);
    for c in coef {
        out.push([c[0], c[1], c[2] * 2.0, c[3] * 6.0]);
    }
    let c = coef[nint - 1];
    let t = h[nint - 1];
    out.push([
        c[0] + t * (c[1] + t * (c[2] + t * c[3])),
        c[1] + t * (c[2] * 2.0 + t * c[3] * 3.0),
        c[2] * 2.0 + c[3] * (6.0 * t),
        c[3] * 6.0,
    ]);
    out
}

/// Exact moments of one root against each interval.
///
/// `fwd[j][m] = ∫₀^h e^{−λ(h−t)} t^m dt`, `bwd[j][m] = ∫₀^h e^{−λt} t^m dt`, `decay[j] = e^{−λh}`.
#[derive(Clone, Debug)]
pub struct MomentTable {
    pub lambda: C64,
    pub decay: Vec<C64>,
    pub fwd: Vec<[C64; 4]>,
    pub bwd: Vec<[C64; 4]>,
}

const SERIES_RADIUS: f64 = 2.0;

/// Unit-interval moments `χ_m = ∫₀¹ e^{−x(1−u)} u^m du` and `ψ_m = ∫₀¹ e^{−xu} u^m du`.
pub fn unit_moments(x: C64) -> ([C64; 4], [C64; 4], C64) {
    let e = (-x).exp();
    let mut chi = [ZERO; 4];
    let mut psi = [ZERO; 4];
    if x.norm() < SERIES_RADIUS {
        // χ_m = m! Σ (−x)^n/(n+m+1)!,  ψ_m = Σ (−x)^n/(n!(n+m+1))
        let mx = -x;
        let mut pw = C64::new(1.0, 0.0); // (−x)^n / n!
        // r_m(n) = m!·n!/(n+m+1)!
        let mut r = [1.0, 0.5, 1.0 / 3.0, 0.25];
        for n in 0..60usize {
            let mut small = true;
            for m in 0..4 {
                let t = pw * r[m];
                chi[m] += t;
                let u = pw / (n + m + 1) as f64;
                psi[m] += u;
                if t.norm() > 1e-18 || u.norm() > 1e-18 {
                    small = false;
                }
                // r_m(n+1) = r_m(n)·(n+1)/(n+m+2)
                r[m] *= (n + 1) as f64 / (n + m + 2) as f64;
            }
            if small && n > 2 {
                break;
            }
            pw = pw * mx / (n + 1) as f64;
        }
    } else {
        chi[0] = (1.0 - e) / x;
        psi[0] = chi[0];
        for m in 1..4 {
            chi[m] = (C64::new(1.0, 0.0) - chi[m - 1] * m as f64) / x;
            psi[m] = (psi[m - 1] * m as f64 - e) / x;
        }
    }
    (chi, psi, e)
}

impl MomentTable {
    pub fn new(lambda: C64, h: &[f64]) -> Self {
        let mut decay = Vec::with_capacity(h.len());
        let mut fwd = Vec::with_capacity(h.len());
        let mut bwd = Vec::with_capacity(h.len());
        for &hj in h {
            let (chi, psi, e) = unit_moments(lambda * hj);
            let mut f = [ZERO; 4];
            let mut b = [ZERO; 4];
            let mut hp = hj;
            for m in 0..4 {
                f[m] = chi[m] * hp;
                b[m] = psi[m] * hp;
                hp *= hj;
            }
            decay.push(e);
            fwd.push(f);
            bwd.push(b);
        }
        Self {
            lambda,
            decay,
            fwd,
            bwd,
        }
    }

    /// Forward convolution `P` at every node for a spline with coefficients `coef`.
    pub fn forward(&self, coef: &[[C64; 4]]) -> Vec<C64> {
        let mut p = Vec::with_capacity(coef.len() + 1);
        let mut acc = ZERO;
        p.push(acc);
        for (j, c) in coef.iter().enumerate() {
            let m = &self.fwd[j];
            acc = self.decay[j] * acc + c[0] * m[0] + c[1] * m[1] + c[2] * m[2] + c[3] * m[3];
            p.push(acc);
        }
        p
    }

    /// Backward convolution `Q` at every node (zero at the top node).
    pub fn backward(&self, coef: &[[C64; 4]]) -> Vec<C64> {
        let n = coef.len();
        let mut q = vec![ZERO; n + 1];
        let mut acc = ZERO;
        for j in (0..n).rev() {
            let m = &self.bwd[j];
            let c = &coef[j];
            acc = self.decay[j] * acc + c[0] * m[0] + c[1] * m[1] + c[2] * m[2] + c[3] * m[3];
            q[j] = acc;
        }
        q
    }
}
