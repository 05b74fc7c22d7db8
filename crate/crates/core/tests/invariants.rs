use ekbl::fixpoint::{solve_nsc_with, velocity_norm, PicardOptions};
use ekbl::green::{green_eval, interior_coeffs};
use ekbl::halfspace::{physical_slice, BoundaryData, FlowField, HalfSpaceSolver, SourceTensor};
use ekbl::roots::{char_roots, Frequency};
use ekbl::scenario::{PhiFamily, SourceFamily};
use ekbl::spectral::{hermitian_defect, Fft2, SpectralField, SpectralGrid, VerticalGrid};
use ekbl::verify::fit_loglog;
use ekbl::C64;
use proptest::prelude::*;

fn green(s: f64, z: f64) -> [[C64; 2]; 2] {
    let r = char_roots(Frequency::new(s, 0.0)).unwrap();
    let c = interior_coeffs(&r).unwrap();
    green_eval(&r, &c, z, 0).unwrap().entries
}

#[test]
fn green_low_frequency_entry_orders() {
    let xs: Vec<f64> = (0..9).map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0)).collect();
    let expected = [[0.0, -1.0], [0.0, 0.0]];
    for z in [0.5, 1.0, 2.0] {
        for i in 0..2 {
            for j in 0..2 {
                let prof: Vec<(f64, f64)> = xs.iter().map(|&s| (s, green(s, z)[i][j].norm())).collect();
                let f = fit_loglog(&prof, (1e-4, 1e-2)).unwrap();
                assert!((f.exponent - expected[i][j]).abs() <= 0.1, "G{}{} z={z}: {}", i + 1, j + 1, f.exponent);
            }
        }
    }
}

#[test]
fn green_high_frequency_bound() {
    // |G(ξ,z)| ≤ C |ξ|^N e^{−c|ξ||z|} with N = 0, c = 1/2
    let mut worst: f64 = 0.0;
    for k in 0..40 {
        let s = 3.0 * 100f64.powf(k as f64 / 39.0);
        for z in [-1.0, -0.1, 0.0, 0.05, 0.3, 1.0, 2.0] {
            let g = green(s, z);
            let m = g.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
            worst = worst.max(m * (0.5 * s * f64::abs(z)).exp());
        }
    }
    assert!(worst < 0.2, "{worst}");
    // at z = 0 the largest entry falls off like 1/|ξ|
    let big = |s: f64| green(s, 0.0).iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    let prof: Vec<(f64, f64)> = (0..10).map(|k| 10.0 * 10f64.powf(k as f64 / 9.0)).map(|s| (s, big(s))).collect();
    let f = fit_loglog(&prof, (10.0, 100.0)).unwrap();
    assert!((f.exponent + 1.0).abs() < 0.05, "{}", f.exponent);
}

fn grid(n: usize, nz: usize) -> SpectralGrid {
    SpectralGrid::new(2.0 * std::f64::consts::PI, n, VerticalGrid::geometric(nz, 30.0, 1.06).unwrap()).unwrap()
}

fn data(g: &SpectralGrid, amp: f64, seed: u64) -> ([Vec<C64>; 3], BoundaryData) {
    let c = PhiFamily::Modes { amplitude: amp, mean: [1.0, -0.5], kmax: 2, seed, vertical: true }.coefficients(g.n);
    (c.clone(), BoundaryData::from_trace(g, c, 1e-12).unwrap())
}

fn source(g: &SpectralGrid, amp: f64, seed: u64) -> SourceTensor {
    SourceFamily::Random { amplitude: amp, kmax: 2, seed, decay: 2.0 / 3.0 }.tensor(g).unwrap()
}

fn fields(u: &FlowField) -> [&SpectralField; 5] {
    [&u.v[0], &u.v[1], &u.v[2], &u.p, &u.omega]
}

fn max_diff(a: &FlowField, b: &FlowField, alpha: f64, c: &FlowField, beta: f64) -> f64 {
    fields(a)
        .iter()
        .zip(fields(b))
        .zip(fields(c))
        .flat_map(|((x, y), w)| x.data.iter().zip(&y.data).zip(&w.data).map(|((x, y), w)| (x - alpha * y - beta * w).norm()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn linear_solver_superposition(sa in any::<u64>(), sb in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let g = grid(8, 48);
        let solver = HalfSpaceSolver::new(g.clone());
        let (cv, v) = data(&g, 0.3, sa);
        let (cw, w) = data(&g, 0.7, sb);
        let (f, h) = (source(&g, 0.5, sb), source(&g, 0.2, sa));
        let comb: [Vec<C64>; 3] = std::array::from_fn(|c| cv[c].iter().zip(&cw[c]).map(|(a, b)| alpha * a + beta * b).collect());
        let vw = BoundaryData::from_trace(&g, comb, 1e-12).unwrap();
        let fh = f.combine(alpha, &h, beta);
        let u1 = solver.solve(&v, Some(&f)).unwrap();
        let u2 = solver.solve(&w, Some(&h)).unwrap();
        let u3 = solver.solve(&vw, Some(&fh)).unwrap();
        let scale = u1.max_abs().max(u2.max_abs()).max(1.0);
        let d = max_diff(&u3, &u1, alpha, &u2, beta);
        prop_assert!(d <= 1e-10 * scale, "superposition defect {d:e}");
    }

    #[test]
    fn real_data_gives_real_divergence_free_fields(seed in any::<u64>(), amp in 0.01f64..1.0) {
        let g = grid(8, 48);
        let solver = HalfSpaceSolver::new(g.clone());
        let (c, v0) = data(&g, amp, seed);
        let f = source(&g, amp, seed ^ 1);
        let u = solver.solve(&v0, Some(&f)).unwrap();
        let fft = Fft2::new(g.n);
        let scale = u.max_abs();
        for fld in fields(&u) {
            for j in 0..g.nz() {
                prop_assert!(hermitian_defect(&fld.slice(j), &g) <= 1e-12 * scale);
                let im = physical_slice(&fft, fld, j).iter().map(|x| x.im.abs()).fold(0.0, f64::max);
                prop_assert!(im <= 1e-12 * scale, "imag {im:e}");
            }
        }
        // trace at z = 0 reproduces the data in physical space
        for comp in 0..3 {
            let got = physical_slice(&fft, &u.v[comp], 0);
            let want = fft.to_physical(&c[comp]);
            let mean_fix = if comp == 2 { want.iter().sum::<C64>() / want.len() as f64 } else { C64::new(0.0, 0.0) };
            let err = got.iter().zip(&want).map(|(a, b)| (a - (b - mean_fix)).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-8 * amp, "trace {comp}: {err:e}");
        }
        let res = solver.residual(&v0, Some(&f), None).unwrap();
        prop_assert!(res.divergence <= 1e-10, "{res:?}");
    }

    #[test]
    fn linear_solution_scales_with_the_data(seed in any::<u64>(), c in 0.01f64..100.0) {
        let g = grid(8, 32);
        let solver = HalfSpaceSolver::new(g.clone());
        let (_, v0) = data(&g, 0.1, seed);
        let u = solver.solve(&v0, None).unwrap();
        let uc = solver.solve(&v0.scaled(c), None).unwrap();
        let d = max_diff(&uc, &u, c, &u, 0.0);
        prop_assert!(d <= 1e-12 * c * u.max_abs().max(1e-300), "{d:e}");
    }
}

#[test]
fn nonlinear_correction_is_quadratic_in_the_data() {
    let g = grid(8, 96);
    let solver = HalfSpaceSolver::new(g.clone());
    let (_, shape) = data(&g, 1.0, 17);
    let opts = PicardOptions { tol: 1e-13, ..Default::default() };
    let mut dev = Vec::new();
    let mut norms = Vec::new();
    let lin = solver.solve(&shape, None).unwrap();
    for eps in [0.005, 0.01, 0.02] {
        let (u, rep) = solve_nsc_with(&solver, &shape.scaled(eps), &opts, None).unwrap();
        assert!(rep.converged);
        let mut d = FlowField::zeros(&g);
        for c in 0..3 {
            for (k, x) in d.v[c].data.iter_mut().enumerate() {
                *x = u.v[c].data[k] - eps * lin.v[c].data[k];
            }
        }
        dev.push(velocity_norm(&g, &d));
        norms.push(velocity_norm(&g, &u));
    }
    for k in 0..2 {
        let growth = norms[k + 1] / norms[k];
        assert!(growth <= 2.0 * 1.05, "doubling ε grew the norm by {growth}");
        let r = dev[k + 1] / dev[k];
        assert!((r - 4.0).abs() < 0.3, "second-order deviation ratio {r} ({dev:?})");
    }
}
