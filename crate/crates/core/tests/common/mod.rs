//! Manufactured half-space solutions built from exponential polynomials.
#![allow(dead_code)]

use ekbl::halfspace::{BoundaryData, SourceTensor};
use ekbl::spectral::{FieldRole, SpectralField, SpectralGrid};
use ekbl::C64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sums of `c · z^k · e^{−a z}` with exact calculus.
#[derive(Clone, Debug, Default)]
pub struct ExpPoly(pub Vec<(C64, i32, f64)>);

impl ExpPoly {
    pub fn term(c: C64, k: i32, a: f64) -> Self {
        ExpPoly(vec![(c, k, a)])
    }
    pub fn eval(&self, z: f64) -> C64 {
        self.0.iter().map(|&(c, k, a)| c * z.powi(k) * (-a * z).exp()).sum()
    }
    pub fn d(&self) -> Self {
        let mut out = Vec::new();
        for &(c, k, a) in &self.0 {
            if k > 0 {
                out.push((c * k as f64, k - 1, a));
            }
            out.push((-c * a, k, a));
        }
        ExpPoly(out)
    }
    pub fn scale(&self, s: C64) -> Self {
        ExpPoly(self.0.iter().map(|&(c, k, a)| (c * s, k, a)).collect())
    }
    pub fn add(&self, o: &Self) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&o.0);
        ExpPoly(v)
    }
    /// `−∫_z^∞`, the antiderivative vanishing at infinity.
    pub fn neg_tail(&self) -> Self {
        let mut out = Vec::new();
        for &(c, k, a) in &self.0 {
            // ∫_z^∞ t^k e^{−at} = e^{−az} Σ_m k!/(m! a^{k−m+1}) z^m
            let mut fk = 1.0;
            for i in 1..=k {
                fk *= i as f64;
            }
            let mut fm = 1.0;
            for m in 0..=k {
                if m > 0 {
                    fm *= m as f64;
                }
                out.push((-c * (fk / fm / a.powi(k - m + 1)), m, a));
            }
        }
        ExpPoly(out)
    }
}

pub struct Manufactured {
    pub v: [ExpPoly; 3],
    pub p: ExpPoly,
    pub f: [ExpPoly; 3],
}

pub fn manufactured(xi: (f64, f64)) -> Manufactured {
    let s = xi.0 * xi.0 + xi.1 * xi.1;
    let (k1, k2) = (I * xi.0, I * xi.1);
    let v3 = ExpPoly::term(C64::new(1.0, 0.5), 0, 1.0).add(&ExpPoly::term(C64::new(0.3, 0.0), 2, 1.0));
    let om = ExpPoly::term(C64::new(0.0, 0.7), 1, 1.5);
    let v1 = v3.d().scale(k1 / s).add(&om.scale(k2 / s));
    let v2 = v3.d().scale(k2 / s).add(&om.scale(-k1 / s));
    let p = ExpPoly::term(C64::new(0.4, -0.2), 0, 2.0).add(&ExpPoly::term(C64::new(0.1, 0.0), 1, 1.2));
    let lap = |u: &ExpPoly| u.d().d().add(&u.scale(C64::new(-s, 0.0)));
    let f1 = v2.scale(C64::new(-1.0, 0.0)).add(&p.scale(k1)).add(&lap(&v1).scale(C64::new(-1.0, 0.0)));
    let f2 = v1.add(&p.scale(k2)).add(&lap(&v2).scale(C64::new(-1.0, 0.0)));
    let f3 = p.d().add(&lap(&v3).scale(C64::new(-1.0, 0.0)));
    Manufactured {
        v: [v1, v2, v3],
        p,
        f: [f1, f2, f3],
    }
}

pub fn setup(g: &SpectralGrid, m: usize, sol: &Manufactured) -> (BoundaryData, SourceTensor) {
    let mut v0 = [vec![C64::new(0.0, 0.0); g.n_modes()], vec![C64::new(0.0, 0.0); g.n_modes()], vec![
        C64::new(0.0, 0.0);
        g.n_modes()
    ]];
    for c in 0..3 {
        v0[c][m] = sol.v[c].eval(0.0);
    }
    let bd = BoundaryData::from_trace(g, v0, 1e-12).unwrap();
    let mut src = SourceTensor::zero();
    for i in 0..3 {
        let big_f = sol.f[i].neg_tail();
        let mut fld = SpectralField::for_grid(g, FieldRole::Source);
        for (j, &z) in g.z().iter().enumerate() {
            fld.set(m, j, big_f.eval(z));
        }
        src.set(i, 2, fld);
    }
    (bd, src)
}

