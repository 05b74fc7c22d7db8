//! Dense complex solves and a matrix-free restarted GMRES.

use crate::error::{EkblError, Result};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64 as C64;

/// Solve a 3×3 complex system with partial pivoting.
pub fn solve3(m: [[C64; 3]; 3], rhs: [C64; 3]) -> Result<[C64; 3]> {
    let a = Matrix3::from_fn(|i, j| m[i][j]);
    let b = Vector3::new(rhs[0], rhs[1], rhs[2]);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| EkblError::Internal("singular 3x3 system".into()))?;
    if !x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(EkblError::Internal("non-finite 3x3 solution".into()));
    }
    Ok([x[0], x[1], x[2]])
}

pub fn det3(m: &[[C64; 3]; 3]) -> C64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// LU factorisation of a dense complex matrix, reusable for many right-hand sides.
#[derive(Clone)]
pub struct DenseLu {
    lu: nalgebra::linalg::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl DenseLu {
    pub fn new(n: usize, row_major: &[C64]) -> Result<Self> {
        if row_major.len() != n * n {
            return Err(EkblError::Shape("dense matrix size".into()));
        }
        let m = DMatrix::from_row_slice(n, n, row_major);
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(EkblError::Internal("singular dense block".into()));
        }
        Ok(Self { lu, n })
    }

    pub fn solve_in_place(&self, x: &mut [C64]) {
        let mut v = DVector::from_column_slice(&x[..self.n]);
        self.lu.solve_mut(&mut v);
        x[..self.n].copy_from_slice(v.as_slice());
    }
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Debug)]
pub struct GmresStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x = 0`.
///
/// `apply` computes `A v`, `precond` applies `M⁻¹` in place. The stopping test is
/// `‖b − A x‖ ≤ rtol·‖b‖`.
pub fn gmres<A, P>(
    apply: &mut A,
    precond: &P,
    b: &[C64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<C64>, GmresStats)>
where
    A: FnMut(&[C64]) -> Result<Vec<C64>>,
    P: Fn(&mut [C64]),
{
    let n = b.len();
    let mut x = vec![C64::new(0.0, 0.0); n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            GmresStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = rtol * bnorm;
    let mut total = 0usize;
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    while total < max_iter {
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / rnorm).collect());
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(rnorm, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut z = basis[k].clone();
            precond(&mut z);
            let mut w = apply(&z)?;
            total += 1;
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(q, &w);
                h[i][k] = hij;
                for (wv, qv) in w.iter_mut().zip(q) {
                    *wv -= hij * qv;
                }
            }
            // one reorthogonalisation pass
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[i][k] += c;
                for (wv, qv) in w.iter_mut().zip(q) {
                    *wv -= c * qv;
                }
            }
            let wn = norm2(&w);
            h[k + 1][k] = C64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let a = h[k][k];
            let bb = h[k + 1][k];
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[k] = C64::new(1.0, 0.0);
                sn[k] = C64::new(0.0, 0.0);
            } else {
                cs[k] = a / den;
                sn[k] = bb / den;
            }
            h[k][k] = C64::new(den, 0.0);
            h[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if wn > 0.0 {
                basis.push(w.iter().map(|v| v / wn).collect());
            }
            if g[k + 1].norm() <= target || wn == 0.0 || total >= max_iter {
                break;
            }
        }
        // back substitution
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut dx = vec![C64::new(0.0, 0.0); n];
        for (j, yj) in y.iter().enumerate() {
            for (d, q) in dx.iter_mut().zip(&basis[j]) {
                *d += yj * q;
            }
        }
        precond(&mut dx);
        for (xv, d) in x.iter_mut().zip(&dx) {
            *xv += d;
        }
        let ax = apply(&x)?;
        total += 1;
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            return Ok((
                x,
                GmresStats {
                    iterations: total,
                    residual: rnorm / bnorm,
                    converged: true,
                },
            ));
        }
        if rnorm == 0.0 {
            break;
        }
    }
    Ok((
        x,
        GmresStats {
            iterations: total,
            residual: rnorm / bnorm,
            converged: rnorm <= target,
        },
    ))
}
