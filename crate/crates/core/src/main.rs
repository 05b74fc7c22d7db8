use clap::{Parser, Subcommand, ValueEnum};
use ekbl::export::{read_ekbl_file, write_ekbl_file, write_flow_csv_file};
use ekbl::run::{error_json, run_scenario};
use ekbl::scenario::{parse_scenario, scenario_schema, Scenario, ScenarioKind};
use ekbl::{EkblError, Result};
use serde_json::json;
use std::path::PathBuf;

/// Environment variable naming the default output root.
const OUT_ROOT_VAR: &str = "EKBL_OUT_ROOT";

#[derive(Parser)]
#[command(name = "ekbl", version, about = "Rotating boundary layers over rough bottoms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the outer solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run one of the built-in verification checks with default parameters.
    Verify {
        what: Check,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Root samples (roots check only).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Convert an EKBL dump to CSV (or rewrite it as EKBL).
    Export {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the JSON schema of scenario files.
    Schema,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Roots,
    Kernels,
    Integrals,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Ekbl,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn set_workers(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(EkblError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| EkblError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn execute(s: Scenario, out: PathBuf) -> Result<serde_json::Value> {
    let o = run_scenario(&s, &out)?;
    Ok(json!({
        "status": "ok",
        "kind": s.kind.name(),
        "dir": o.dir,
        "artifacts": o.artifacts,
        "warnings": o.report["warnings"],
        "wall_seconds": o.wall_seconds,
    }))
}

fn dispatch(cli: Cli) -> Result<serde_json::Value> {
    match cli.cmd {
        Cmd::Run { scenario, out, workers, tol } => {
            let mut s = parse_scenario(&scenario)?;
            if let Some(t) = tol {
                s.tolerances.tol = t;
            }
            set_workers(workers)?;
            let stem = scenario.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            let out = out
                .or_else(|| s.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| out_root().join(stem));
            execute(s, out)
        }
        Cmd::Verify { what, out, workers, seed, samples } => {
            let kind = match what {
                Check::Roots => ScenarioKind::VerifyRoots,
                Check::Kernels => ScenarioKind::VerifyKernels,
                Check::Integrals => ScenarioKind::VerifyIntegrals,
            };
            let mut s = Scenario::new(kind);
            if let Some(seed) = seed {
                s.verify.seed = seed;
            }
            if let Some(n) = samples {
                s.verify.samples = n;
            }
            s.resolve()?;
            set_workers(workers)?;
            let out = out.unwrap_or_else(|| out_root().join(kind.name()));
            execute(s, out)
        }
        Cmd::Export { input, format, out } => {
            let (grid, u) = read_ekbl_file(&input)?;
            match format {
                Format::Csv => write_flow_csv_file(&out, &grid, &u)?,
                Format::Ekbl => write_ekbl_file(&out, &grid, &u)?,
            }
            Ok(json!({ "status": "ok", "out": out, "n": grid.n, "nz": grid.nz() }))
        }
        Cmd::Schema => Ok(scenario_schema()),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(v) => println!("{}", serde_json::to_string_pretty(&v).expect("json")),
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&error_json(&e)).expect("json"));
            std::process::exit(e.exit_code());
        }
    }
}

