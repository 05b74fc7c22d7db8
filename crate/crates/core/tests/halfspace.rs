use ekbl::green::{homogeneous_correction, interior_coeffs};
use ekbl::halfspace::*;
use ekbl::roots::char_roots_sq;
use ekbl::spectral::{FieldRole, SpectralField, SpectralGrid, VerticalGrid};
use ekbl::C64;

mod common;
use common::{manufactured, setup, I};

fn grid(n: usize, nz: usize) -> SpectralGrid {
    SpectralGrid::new(2.0 * std::f64::consts::PI, n, VerticalGrid::geometric(nz, 50.0, 1.02).unwrap()).unwrap()
}

#[test]
fn manufactured_nonzero_mode() {
    let g = grid(8, 256);
    let solver = HalfSpaceSolver::new(g.clone());
    for &(a, b) in &[(1i64, 0i64), (2, -1), (0, 3)] {
        let m = g.mode_index(a, b).unwrap();
        let sol = manufactured(g.xi(m));
        let (bd, src) = setup(&g, m, &sol);
        let out = solver.solve(&bd, Some(&src)).unwrap();
        let mut err: f64 = 0.0;
        let mut perr: f64 = 0.0;
        for (j, &z) in g.z().iter().enumerate() {
            for c in 0..3 {
                err = err.max((out.v[c].at(m, j) - sol.v[c].eval(z)).norm());
            }
            perr = perr.max((out.p.at(m, j) - sol.p.eval(z)).norm());
        }
        assert!(err < 1e-6, "mode ({a},{b}) velocity error {err:e}");
        assert!(perr < 1e-5, "mode ({a},{b}) pressure error {perr:e}");
        let res = solver.residual(&bd, Some(&src), None).unwrap();
        assert!(res.relative_momentum() < 1e-6, "{res:?}");
        assert!(res.divergence < 1e-8, "{res:?}");
        assert!(res.boundary < 1e-10, "{res:?}");
    }
}

#[test]
fn manufactured_converges_with_refinement() {
    let m_idx = |g: &SpectralGrid| g.mode_index(1, 1).unwrap();
    let mut errs = Vec::new();
    for &nz in &[64usize, 128, 256] {
        let ratio = 1.02f64.powf(255.0 / (nz - 1) as f64);
        let g = SpectralGrid::new(2.0 * std::f64::consts::PI, 4, VerticalGrid::geometric(nz, 50.0, ratio).unwrap()).unwrap();
        let m = m_idx(&g);
        let sol = manufactured(g.xi(m));
        let (bd, src) = setup(&g, m, &sol);
        let out = solve_linear_halfspace(&bd, Some(&src), &g).unwrap();
        let e = g
            .z()
            .iter()
            .enumerate()
            .map(|(j, &z)| (out.v[2].at(m, j) - sol.v[2].eval(z)).norm())
            .fold(0.0, f64::max);
        errs.push(e);
    }
    assert!(errs[1] < errs[0] / 4.0 && errs[2] < errs[1] / 4.0, "{errs:?}");
}

#[test]
fn zero_mode_matches_closed_form() {
    let g = grid(4, 256);
    let mut src = SourceTensor::zero();
    let mut f13 = SpectralField::for_grid(&g, FieldRole::Source);
    let mut f33 = SpectralField::for_grid(&g, FieldRole::Source);
    for (j, &z) in g.z().iter().enumerate() {
        // ∂z F13 = e^{−z}
        f13.set(0, j, C64::new(-(-z).exp(), 0.0));
        f33.set(0, j, C64::new((-2.0 * z).exp(), 0.0));
    }
    src.set(0, 2, f13);
    src.set(2, 2, f33);
    let phi = [0.3, -0.8];
    let bd = BoundaryData::uniform(&g, phi);
    let out = solve_linear_halfspace(&bd, Some(&src), &g).unwrap();
    let mut err: f64 = 0.0;
    for (j, &z) in g.z().iter().enumerate() {
        let mut u = [C64::new(0.0, 0.0); 2];
        for (k, sg) in [1.0, -1.0].iter().enumerate() {
            let mu = C64::new(1.0, *sg).scale(std::f64::consts::FRAC_1_SQRT_2);
            let c = -C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - mu * mu);
            let u0 = C64::new(phi[0], 0.0) + I * *sg * phi[1];
            u[k] = (u0 - c) * (-mu * z).exp() + c * (-z).exp();
        }
        let v1 = (u[0] + u[1]) * 0.5;
        let v2 = (u[0] - u[1]) / (I * 2.0);
        err = err.max((out.v[0].at(0, j) - v1).norm()).max((out.v[1].at(0, j) - v2).norm());
        let p = (-2.0 * z).exp() - (-100.0f64).exp();
        err = err.max((out.p.at(0, j) - p).norm());
    }
    assert!(err < 1e-7, "{err:e}");
}

#[test]
fn nonzero_vertical_mean_is_rejected() {
    let g = grid(4, 32);
    let z = vec![C64::new(0.0, 0.0); g.n_modes()];
    let mut v3 = z.clone();
    v3[0] = C64::new(0.1, 0.0);
    let err = BoundaryData::from_trace(&g, [z.clone(), z, v3], 1e-12).unwrap_err();
    assert_eq!(err.code(), "COMPAT_VIOLATED");
}

#[test]
fn homogeneous_correction_accounts_for_integration_by_parts() {
    // particular(S⁰,S¹,S²) − particular(S⁰+∂S¹+∂²S², 0, 0) equals the boundary-term correction
    let g = grid(8, 256);
    let m = g.mode_index(1, 2).unwrap();
    let xi = g.xi(m);
    let nz = g.nz();
    let prof = |z: f64, a: f64| C64::new((-a * z).exp() * (1.0 + z), 0.3 * (-a * z).exp());
    let mut src = SourceTensor::zero();
    for (i, k) in [(0usize, 2usize), (1, 2), (0, 0), (2, 2), (1, 0)] {
        let mut f = SpectralField::for_grid(&g, FieldRole::Source);
        for (j, &z) in g.z().iter().enumerate() {
            f.set(m, j, prof(z, 1.0 + 0.3 * (i + k) as f64));
        }
        src.set(i, k, f);
    }
    let dec = decompose_source(&src, &g).unwrap();
    let solver = HalfSpaceSolver::new(g.clone());
    let (v3a, oma) = solver.convolve_green(&dec).unwrap();
    // collapse S into S⁰ with spline derivatives
    let sf = solver.spline();
    let mut total = dec.clone();
    for c in 0..2 {
        let d1 = ekbl::vertical::nodal_derivatives(&sf.coefficients(dec.s1[c].mode(m)), &sf.h);
        let d2 = ekbl::vertical::nodal_derivatives(&sf.coefficients(dec.s2[c].mode(m)), &sf.h);
        for j in 0..nz {
            total.s0[c].set(m, j, dec.s0[c].at(m, j) + d1[j][1] + d2[j][2]);
            total.s1[c].set(m, j, C64::new(0.0, 0.0));
            total.s2[c].set(m, j, C64::new(0.0, 0.0));
        }
    }
    let (v3b, omb) = solver.convolve_green(&total).unwrap();
    let r = char_roots_sq(xi.0 * xi.0 + xi.1 * xi.1);
    let c = interior_coeffs(&r).unwrap();
    let ds2 = [
        ekbl::vertical::nodal_derivatives(&sf.coefficients(dec.s2[0].mode(m)), &sf.h)[0][1],
        ekbl::vertical::nodal_derivatives(&sf.coefficients(dec.s2[1].mode(m)), &sf.h)[0][1],
    ];
    let hc = homogeneous_correction(
        &c,
        &r,
        [dec.s1[0].at(m, 0), dec.s1[1].at(m, 0)],
        ds2,
        [dec.s2[0].at(m, 0), dec.s2[1].at(m, 0)],
    );
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (j, &z) in g.z().iter().enumerate() {
        let h = hc.eval(&r, z);
        let d = [v3a.at(m, j) - v3b.at(m, j), oma.at(m, j) - omb.at(m, j)];
        err = err.max((d[0] - h[0]).norm()).max((d[1] - h[1]).norm());
        scale = scale.max(h[0].norm()).max(h[1].norm());
    }
    assert!(scale > 1e-3);
    assert!(err < 1e-4 * scale, "err {err:e} scale {scale:e}");
}
