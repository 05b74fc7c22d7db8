use ekbl::fixpoint::*;
use ekbl::halfspace::{BoundaryData, HalfSpaceSolver};
use ekbl::spectral::{SpectralGrid, VerticalGrid};
use ekbl::C64;

fn grid(n: usize, nz: usize) -> SpectralGrid {
    let ratio = 1.02f64.powf(255.0 / (nz - 1) as f64);
    SpectralGrid::new(2.0 * std::f64::consts::PI, n, VerticalGrid::geometric(nz, 50.0, ratio).unwrap()).unwrap()
}

/// Uniform `(φ₁, φ₂)` plus real horizontal perturbation modes `(k, a₁, a₂, a₃)`.
fn data(g: &SpectralGrid, phi: [f64; 2], modes: &[((i64, i64), [C64; 3])]) -> BoundaryData {
    let nm = g.n_modes();
    let mut v = [vec![C64::new(0.0, 0.0); nm], vec![C64::new(0.0, 0.0); nm], vec![C64::new(0.0, 0.0); nm]];
    v[0][0] = C64::new(phi[0], 0.0);
    v[1][0] = C64::new(phi[1], 0.0);
    for &((a, b), amp) in modes {
        let m = g.mode_index(a, b).unwrap();
        let mc = g.mode_index(-a, -b).unwrap();
        for c in 0..3 {
            v[c][m] += amp[c];
            v[c][mc] += amp[c].conj();
        }
    }
    BoundaryData::from_trace(g, v, 1e-12).unwrap()
}

#[test]
fn zero_data_converges_immediately() {
    let g = grid(8, 64);
    let (u, rep) = solve_nsc_halfspace(&BoundaryData::zeros(8), &g, 1e-8, 10).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterates, 1);
    assert_eq!(u.max_abs(), 0.0);
}

#[test]
fn ekman_data_is_an_exact_nonlinear_solution() {
    let g = grid(8, 128);
    let eps = 1e-2;
    let (u, rep) = solve_nsc_halfspace(&data(&g, [eps, 0.0], &[]), &g, 1e-10, 10).unwrap();
    assert!(rep.converged && rep.iterates <= 2, "{rep:?}");
    for (j, &z) in g.z().iter().enumerate() {
        let w = C64::new(-z, -z).scale(std::f64::consts::FRAC_1_SQRT_2).exp() * eps;
        let got = u.v[0].at(0, j) + C64::i() * u.v[1].at(0, j);
        assert!((got - w).norm() < 1e-9 * eps, "z={z}");
    }
    assert!((rep.norm_of_solution - eps).abs() < 1e-8);
}

#[test]
fn perturbed_data_contracts_and_satisfies_the_nonlinear_system() {
    let g = grid(16, 128);
    let solver = HalfSpaceSolver::new(g.clone());
    let eps = 0.05;
    let v0 = data(
        &g,
        [eps, 0.3 * eps],
        &[
            ((1, 0), [C64::new(0.0, 0.5 * eps), C64::new(0.4 * eps, 0.0), C64::new(0.0, 0.0)]),
            ((1, 2), [C64::new(0.2 * eps, 0.0), C64::new(0.0, -0.3 * eps), C64::new(0.0, 0.0)]),
        ],
    );
    let opts = PicardOptions {
        tol: 1e-8,
        ..Default::default()
    };
    let (_, rep) = solve_nsc_with(&solver, &v0, &opts, None).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(rep.contraction_ratios.iter().all(|r| *r < 1.0), "{rep:?}");
    let res = rep.final_residual.unwrap();
    assert!(res.relative_momentum() < 1e-7, "{res:?}");
    assert!(res.divergence < 1e-9 * eps, "{res:?}");
}

#[test]
fn large_data_reports_smallness_violation() {
    let g = grid(16, 96);
    let big = 40.0;
    let v0 = data(
        &g,
        [big, 0.0],
        &[((1, 1), [C64::new(0.0, big), C64::new(big, 0.0), C64::new(0.0, 0.0)])],
    );
    let err = solve_nsc_halfspace(&v0, &g, 1e-8, 40).unwrap_err();
    assert_eq!(err.code(), "SMALLNESS_VIOLATED");
}

#[test]
fn quarter_turn_equivariance() {
    let g = grid(16, 96);
    let solver = HalfSpaceSolver::new(g.clone());
    let eps = 0.1;
    let modes = [
        ((1, 0), [C64::new(0.0, eps), C64::new(0.5 * eps, 0.0), C64::new(0.0, 0.0)]),
        ((2, 1), [C64::new(0.3 * eps, 0.1), C64::new(0.0, -0.2 * eps), C64::new(0.0, 0.0)]),
    ];
    // rotated field: f'(k) = R f(Rᵀk), R = quarter turn
    let rot: Vec<((i64, i64), [C64; 3])> = modes
        .iter()
        .map(|&((a, b), amp)| ((-b, a), [-amp[1], amp[0], amp[2]]))
        .collect();
    let phi = [eps, 0.5 * eps];
    let v0 = data(&g, phi, &modes);
    let v0r = data(&g, [-phi[1], phi[0]], &rot);
    let opts = PicardOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let (u, _) = solve_nsc_with(&solver, &v0, &opts, None).unwrap();
    let (ur, _) = solve_nsc_with(&solver, &v0r, &opts, None).unwrap();
    let mut err: f64 = 0.0;
    for m in 0..g.n_modes() {
        let (a, b) = g.wavenumbers(m);
        let Some(mr) = g.mode_index(-b, a) else { continue };
        if g.is_nyquist(m) || g.is_nyquist(mr) {
            continue;
        }
        for j in 0..g.nz() {
            err = err
                .max((ur.v[0].at(mr, j) + u.v[1].at(m, j)).norm())
                .max((ur.v[1].at(mr, j) - u.v[0].at(m, j)).norm())
                .max((ur.v[2].at(mr, j) - u.v[2].at(m, j)).norm())
                .max((ur.p.at(mr, j) - u.p.at(m, j)).norm());
        }
    }
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn step_norm_bound_constant_is_stable() {
    // ‖T(u)‖ ≤ C₀(|v₀| + ‖u‖²) over small random inputs
    use rand::{Rng, SeedableRng};
    let g = grid(8, 96);
    let solver = HalfSpaceSolver::new(g.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut samples = Vec::new();
    for _ in 0..10 {
        let e = rng.gen_range(0.01..0.1);
        let amp = |r: &mut rand_chacha::ChaCha8Rng| C64::new(r.gen_range(-e..e), r.gen_range(-e..e));
        let v0 = data(&g, [e, 0.0], &[((1, 1), [amp(&mut rng), amp(&mut rng), C64::new(0.0, 0.0)])]);
        let u = solver.solve(&data(&g, [0.0, e], &[((0, 1), [amp(&mut rng), amp(&mut rng), C64::new(0.0, 0.0)])]), None).unwrap();
        samples.push((v0, u));
    }
    let c_all = estimate_c0(&solver, &samples).unwrap();
    let c_half = estimate_c0(&solver, &samples[..5]).unwrap();
    assert!(c_all.is_finite() && c_all > 0.0);
    assert!(c_half > 0.5 * c_all, "{c_half} vs {c_all}");
}
