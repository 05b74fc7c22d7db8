use ekbl::export::*;
use ekbl::halfspace::FlowField;
use ekbl::run::run_scenario;
use ekbl::scenario::*;
use ekbl::spectral::{SpectralGrid, VerticalGrid};
use ekbl::strip::RoughnessFamily;
use ekbl::C64;
use proptest::prelude::*;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ekbl"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn minimal_ekman_config_gets_documented_defaults() {
    let s = parse_scenario_str(r#"{"version": 1, "kind": "ekman_flat"}"#).unwrap();
    assert_eq!(s.kind, ScenarioKind::EkmanFlat);
    assert_eq!(s.grid.period, 2.0 * std::f64::consts::PI);
    assert_eq!(s.grid.n_modes, 64);
    assert_eq!(s.grid.z_max, 50.0);
    assert_eq!(s.grid.n_z, 256);
    assert_eq!(s.grid.ratio, Some(1.02f64.powf(1.0)));
}

#[test]
fn interface_below_roughness_names_the_constraint() {
    let text = r#"{"version": 1, "kind": "full_rough", "grid": {"M": 0.2},
        "data": {"gamma": {"family": "sinusoidal", "amplitude": 0.5, "k": [1, 0]}}}"#;
    let e = parse_scenario_str(text).unwrap_err();
    assert_eq!(e.code(), "CONFIG");
    let msg = e.to_string();
    assert!(msg.contains("grid.M") && msg.contains("sup gamma"), "{msg}");
    // default M sits above the bottom
    let ok = parse_scenario_str(&text.replace(r#""M": 0.2"#, r#""n_sigma": 9"#)).unwrap();
    assert_eq!(ok.grid.m_top, Some(1.5));
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let e = parse_scenario_str(r#"{"version": 1, "kind": "strip", "tolerances": {"tol": 1e-8, "tool": 3}}"#).unwrap_err();
    assert_eq!(e.code(), "CONFIG");
    assert!(e.to_string().contains("tolerances.tool"), "{e}");
    let e = parse_scenario_str(r#"{"version": 1, "kind": "warp_drive"}"#).unwrap_err();
    assert!(e.to_string().contains("kind"), "{e}");
    let e = parse_scenario_str(r#"{"version": 2, "kind": "strip"}"#).unwrap_err();
    assert!(e.to_string().contains("version"), "{e}");
    assert_eq!(parse_scenario_str("{").unwrap_err().code(), "JSON");
}

#[test]
fn invalid_numbers_and_misplaced_data_are_config_errors() {
    for text in [
        r#"{"version":1,"kind":"ekman_flat","grid":{"n_modes":7}}"#,
        r#"{"version":1,"kind":"ekman_flat","grid":{"L":-1}}"#,
        r#"{"version":1,"kind":"ekman_flat","grid":{"Z_max":0}}"#,
        r#"{"version":1,"kind":"ekman_flat","data":{"gamma":{"family":"sinusoidal","amplitude":0.1,"k":[1,0]}}}"#,
        r#"{"version":1,"kind":"nonlinear_halfspace","data":{"source":{"family":"layer","amplitude":1,"k":[1,0],"ij":[1,3],"z0":1,"width":1}}}"#,
        r#"{"version":1,"kind":"verify_integrals","verify":{"integrals":{"gamma":0.2,"delta":0.5}}}"#,
        r#"{"version":1,"kind":"verify_kernels","verify":{"kernel":{"beta":0.5}}}"#,
    ] {
        assert_eq!(parse_scenario_str(text).unwrap_err().code(), "CONFIG", "{text}");
    }
}

#[test]
fn large_amplitude_is_a_warning_not_an_error() {
    let mut s = Scenario::new(ScenarioKind::NonlinearHalfspace);
    s.data.phi = PhiFamily::Uniform { amplitude: 0.5, direction: [1.0, 0.0] };
    let w = s.resolve().unwrap();
    assert_eq!(w.len(), 1);
    assert!(w[0].contains("smallness"));
    s.kind = ScenarioKind::LinearHalfspace;
    assert!(s.resolve().unwrap().is_empty());
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (
        prop_oneof![Just(ScenarioKind::EkmanFlat), Just(ScenarioKind::NonlinearHalfspace), Just(ScenarioKind::FullRough)],
        (2usize..8).prop_map(|k| 2 * k),
        1e-3f64..10.0,
        8usize..300,
        0.01f64..1.0,
        any::<u64>(),
        prop_oneof![Just(FieldFormat::None), Just(FieldFormat::Csv), Just(FieldFormat::Both)],
    )
        .prop_map(|(kind, n, zmax, nz, amp, seed, fields)| {
            let mut s = Scenario::new(kind);
            s.grid.n_modes = 2 * n;
            s.grid.strip_modes = n;
            s.grid.z_max = zmax;
            s.grid.n_z = nz;
            s.output.fields = fields;
            s.verify.seed = seed;
            s.tolerances.tol = amp * 1e-7;
            if kind == ScenarioKind::FullRough {
                s.data.gamma = RoughnessFamily::FilteredNoise { amplitude: amp, kmax: 2, seed };
                s.data.phi = PhiFamily::Modes { amplitude: amp * 0.1, mean: [1.0, amp], kmax: 1, seed, vertical: false };
            } else {
                s.data.phi = PhiFamily::Uniform { amplitude: amp, direction: [amp, 1.0 - amp] };
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn parse_serialize_parse_is_identity(s in arb_scenario()) {
        let text = serde_json::to_string(&s).unwrap();
        let once = parse_scenario_str(&text).unwrap();
        let twice = parse_scenario_str(&serde_json::to_string_pretty(&once).unwrap()).unwrap();
        prop_assert_eq!(&once, &twice);
        // only the resolvable fields may change on the first pass
        let mut s2 = s.clone();
        s2.grid.ratio = once.grid.ratio;
        s2.grid.m_top = once.grid.m_top;
        prop_assert_eq!(s2, once);
    }
}

#[test]
fn ekman_run_matches_closed_form_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ekman");
    let mut s = Scenario::new(ScenarioKind::EkmanFlat);
    s.output.fields = FieldFormat::Both;
    s.output.z_stride = 32;
    let o = run_scenario(&s, &out).unwrap();
    let r = report(&out);
    let err = r["results"]["max_abs_error"].as_f64().unwrap();
    assert!(err <= 1e-8, "{err}");
    assert!((r["results"]["decay_rate"].as_f64().unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    // resolved configuration recorded
    let back: Scenario = serde_json::from_value(r["scenario"].clone()).unwrap();
    let mut resolved = s.clone();
    resolved.resolve().unwrap();
    assert_eq!(back, resolved);
    for f in ["report.json", "timing.json", "fields.csv", "fields.ekbl", "profile.csv"] {
        assert!(out.join(f).is_file(), "{f}");
        assert!(o.artifacts.iter().any(|a| a == f));
    }
    let (g, u) = read_ekbl_file(&out.join("fields.ekbl")).unwrap();
    assert_eq!((g.n, g.nz()), (64, 256));
    assert!(u.v[2].max_abs() == 0.0);
    // nothing left over from staging
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn verify_integrals_reports_finite_sup_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("int");
    let mut s = Scenario::new(ScenarioKind::VerifyIntegrals);
    s.verify.integrals.n_z = 24;
    run_scenario(&s, &out).unwrap();
    let r = report(&out);
    let sup = r["results"]["sup_constants"].as_object().unwrap();
    assert!(sup.len() >= 3);
    for k in ["first", "second", "third_measured"] {
        let v = sup[k].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{k}: {v}");
    }
    assert!(!out.join("fields.csv").exists());
}

#[test]
fn identical_scenarios_give_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"version":1,"kind":"linear_halfspace","grid":{"n_modes":8,"n_z":48},
        "data":{"phi":{"family":"modes","amplitude":0.05,"mean":[1,0],"kmax":2,"seed":3,"vertical":true},
                "source":{"family":"random","amplitude":0.1,"kmax":2,"seed":9,"decay":0.6666666666666666}},
        "output":{"fields":"both","z_stride":1}}"#;
    let s = parse_scenario_str(text).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_scenario(&s, &a).unwrap();
    run_scenario(&s, &b).unwrap();
    for f in ["report.json", "fields.csv", "fields.ekbl", "profile.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!report(&a).to_string().contains("wall_seconds"));
}

fn random_field(n: usize, nz: usize, seed: u64) -> (SpectralGrid, FlowField) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = SpectralGrid::new(3.0, n, VerticalGrid::geometric(nz, 20.0, 1.05).unwrap()).unwrap();
    let mut u = FlowField::zeros(&g);
    let fields = u.v.iter_mut().chain(u.dz_v.iter_mut()).chain([&mut u.p, &mut u.omega]);
    for f in fields {
        for c in f.data.iter_mut() {
            *c = C64::new(f64::from_bits(rng.gen::<u64>() >> 2), rng.gen_range(-1e3..1e3));
        }
    }
    (g, u)
}

fn bits(u: &FlowField) -> Vec<u64> {
    u.v.iter()
        .chain(&u.dz_v)
        .chain([&u.p, &u.omega])
        .flat_map(|f| f.data.iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn ekbl_round_trip_is_bit_exact(seed in any::<u64>(), half in 2usize..6, nz in 4usize..20) {
        let (g, u) = random_field(2 * half, nz, seed);
        let mut buf = Vec::new();
        write_ekbl(&mut buf, &g, &u).unwrap();
        prop_assert_eq!(&buf[..4], b"EKBL");
        prop_assert_eq!(buf.len(), 36 + 8 * nz + 8 * 16 * g.n_modes() * nz);
        let (g2, u2) = read_ekbl(&buf[..]).unwrap();
        prop_assert_eq!(g2.n, g.n);
        prop_assert_eq!(g2.z(), g.z());
        prop_assert_eq!(g2.period.to_bits(), g.period.to_bits());
        prop_assert_eq!(bits(&u2), bits(&u));
        let mut again = Vec::new();
        write_ekbl(&mut again, &g2, &u2).unwrap();
        prop_assert_eq!(again, buf);
    }
}

#[test]
fn corrupt_dumps_are_rejected() {
    let (g, u) = random_field(4, 5, 1);
    let mut buf = Vec::new();
    write_ekbl(&mut buf, &g, &u).unwrap();
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert_eq!(read_ekbl(&bad[..]).unwrap_err().code(), "SHAPE");
    assert_eq!(read_ekbl(&buf[..buf.len() - 3]).unwrap_err().code(), "IO");
    let mut long = buf.clone();
    long.push(0);
    assert_eq!(read_ekbl(&long[..]).unwrap_err().code(), "SHAPE");
}

#[test]
fn csv_has_seven_columns_and_round_trips_values() {
    let (g, mut u) = random_field(4, 6, 2);
    // Hermitian symmetrisation keeps the physical values real
    for f in u.v.iter_mut().chain([&mut u.p]) {
        for m in 0..g.n_modes() {
            let mc = g.conj_index(m);
            for j in 0..g.nz() {
                let a = 0.5 * (f.at(m, j) + f.at(mc, j).conj());
                f.set(m, j, if g.is_nyquist(m) { C64::new(0.0, 0.0) } else { a });
            }
        }
    }
    let mut buf = Vec::new();
    write_flow_csv(&mut buf, &g, &u, 0.0, true).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "y1,y2,z,v1,v2,v3,p");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), g.n_modes() * g.nz());
    assert!(rows.iter().all(|r| r.len() == 7));
    let fft = ekbl::spectral::Fft2::new(g.n);
    for (j, &z) in g.z().iter().enumerate() {
        let p = fft.to_physical(&u.v[1].slice(j));
        for q in 0..g.n_modes() {
            let r = &rows[j * g.n_modes() + q];
            assert_eq!(r[2], z);
            assert_eq!(r[4].to_bits(), p[q].re.to_bits());
        }
    }
    assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    assert_eq!(fmt17(1.0 / 3.0).split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn cli_run_success_and_env_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "tiny.json", r#"{"version":1,"kind":"ekman_flat","grid":{"n_modes":8,"n_z":32},"output":{"fields":"none"}}"#);
    let o = bin().args(["run"]).arg(&sc).env("EKBL_OUT_ROOT", dir.path().join("root")).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "ok");
    let out = dir.path().join("root").join("tiny");
    assert!(out.join("report.json").is_file());
    assert!(out.join("profile.csv").is_file());
    let r = report(&out);
    assert!(r["results"]["max_abs_error"].as_f64().unwrap() < 1e-8);
    // --tol and --workers are honoured
    let o = bin().args(["run"]).arg(&sc).arg("--out").arg(dir.path().join("x")).args(["--tol", "1e-9", "--workers", "2"]).output().unwrap();
    assert!(o.status.success());
    assert_eq!(report(&dir.path().join("x"))["scenario"]["tolerances"]["tol"], 1e-9);
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(dir.path().join("x/timing.json")).unwrap()).unwrap()["workers"],
        2
    );
}

#[test]
fn cli_malformed_scenario_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, text, code) in [
        ("syntax.json", "{\"version\": 1,", "JSON"),
        ("schema.json", r#"{"version":1,"kind":"ekman_flat","grid":{"n_modes":"many"}}"#, "CONFIG"),
        ("m.json", r#"{"version":1,"kind":"strip","grid":{"M":0.05},"data":{"gamma":{"family":"sinusoidal","amplitude":0.3,"k":[1,1]}}}"#, "CONFIG"),
    ] {
        let sc = write(dir.path(), name, text);
        let o = bin().arg("run").arg(&sc).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{name}");
        let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(e["status"], "error");
        assert_eq!(e["error"]["code"], code, "{name}");
        assert!(!out.exists(), "{name}");
    }
    let o = bin().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| n.ends_with(".json")), "{names:?}");
}

#[test]
fn cli_solver_failure_reports_code_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let sc = write(
        dir.path(),
        "big.json",
        r#"{"version":1,"kind":"nonlinear_halfspace","grid":{"n_modes":8,"n_z":64},
            "data":{"phi":{"family":"modes","amplitude":40,"mean":[1,0],"kmax":2,"seed":1}},
            "tolerances":{"max_iter":40}}"#,
    );
    let o = bin().arg("run").arg(&sc).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(10), "{}", String::from_utf8_lossy(&o.stderr));
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"]["code"], "SMALLNESS_VIOLATED");
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn cli_schema_export_and_verify() {
    let o = bin().arg("schema").output().unwrap();
    assert!(o.status.success());
    let schema: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let props = schema["properties"].as_object().unwrap();
    for k in ["version", "kind", "grid", "data", "tolerances", "output", "verify"] {
        assert!(props.contains_key(k), "{k}");
    }

    let dir = tempfile::tempdir().unwrap();
    let (g, u) = random_field(4, 5, 3);
    let dump = dir.path().join("f.ekbl");
    write_ekbl_file(&dump, &g, &u).unwrap();
    let copy = dir.path().join("g.ekbl");
    let o = bin().arg("export").arg(&dump).args(["--format", "ekbl", "--out"]).arg(&copy).output().unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&dump).unwrap(), std::fs::read(&copy).unwrap());
    let csv = dir.path().join("f.csv");
    assert!(bin().arg("export").arg(&dump).arg("--out").arg(&csv).output().unwrap().status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 16 * 5);

    let out = dir.path().join("roots");
    let o = bin().args(["verify", "roots", "--samples", "200", "--seed", "4", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["results"]["roots"]["samples"], 200);
    assert!(r["results"]["roots"]["max_scaled_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn strip_and_full_runs_write_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{"version":1,"kind":"KIND","grid":{"strip_modes":8,"n_modes":8,"n_sigma":11,"n_z":64},
        "data":{"phi":{"family":"uniform","amplitude":0.02,"direction":[1,0]},
                "gamma":{"family":"sinusoidal","amplitude":0.1,"k":[1,0]}},
        "output":{"fields":"both","z_stride":4}}"#;
    let strip = parse_scenario_str(&base.replace("KIND", "strip")).unwrap();
    run_scenario(&strip, &dir.path().join("s")).unwrap();
    let r = report(&dir.path().join("s"));
    assert_eq!(r["results"]["newton"]["converged"], true);
    let rows = std::fs::read_to_string(dir.path().join("s/fields.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 64 * 11);

    let full = parse_scenario_str(&base.replace("KIND", "full_rough")).unwrap();
    run_scenario(&full, &dir.path().join("f")).unwrap();
    let r = report(&dir.path().join("f"));
    let j = &r["results"]["jump_norms"];
    assert!(j["velocity"].as_f64().unwrap() <= 1e-6 && j["stress"].as_f64().unwrap() <= 1e-6, "{j}");
    let prof = std::fs::read_to_string(dir.path().join("f/profile.csv")).unwrap();
    assert_eq!(prof.lines().count(), 1 + 11 + 64);
    assert!(dir.path().join("f/fields.ekbl").is_file());
}
