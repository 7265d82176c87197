//! `mse`: estimate population size from three-list tables, simulate
//! populations, and benchmark the estimators against each other.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use mse_core::estimators::{parse_methods, run_estimator, EstimatorConfig};
use mse_core::loglinear::LoglinearOptions;
use mse_core::manifest::RunManifest;
use mse_core::simgen::{generate, PopulationModel, PopulationSpec};
use mse_core::stochastics::RngStream;
use mse_core::table::{builtin_dataset, load_table, TableFormat, TrsTable};
use mse_core::thbm::{fit_thbm, PCond, ThbmConfig};
use mse_core::uncertainty::{benchmark, bootstrap_estimate, BenchmarkConfig, BootstrapConfig, BootstrapMode};
use mse_core::{Method, MseError};

#[derive(Parser)]
#[command(name = "mse", version, about = "Three-list population size estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate N for one table.
    Estimate(EstimateArgs),
    /// Draw tables from a known population.
    Simulate(SimulateArgs),
    /// Score estimators on simulated tables.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Table file (JSON object or CSV with a header row).
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    input: Option<PathBuf>,
    /// Bundled table: als_deployed, als_nondeployed, als_all or wtc.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated methods or `all`.
    #[arg(long, default_value = "all")]
    method: String,
    /// Number of bootstrap replicates; no interval when absent.
    #[arg(long, value_name = "B")]
    bootstrap: Option<usize>,
    #[arg(long, default_value = "nonparametric")]
    bootstrap_mode: BootstrapMode,
    #[arg(long, env = "MSE_SEED", default_value_t = 0)]
    seed: u64,
    /// THBM E-step sample count.
    #[arg(long = "K", default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value = "plugin")]
    pcond: PCond,
    /// Add 0.5 to every observed cell before log-linear fits.
    #[arg(long)]
    add_half: bool,
    /// Write the THBM iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Report path; JSON goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Preset p1..p8, s1..s4, or a JSON population spec.
    #[arg(long)]
    pop: String,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, env = "MSE_SEED", default_value_t = 0)]
    seed: u64,
    /// Literal behavioural update for s1/s2: a capture sets p to the multiplier.
    #[arg(long)]
    s_literal: bool,
    /// Write tables as CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchmarkArgs {
    #[arg(long)]
    pop: String,
    #[arg(long, default_value_t = 500)]
    n: u64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value = "thbm,im,llm,qsm,pqsm,sc,mtb")]
    methods: String,
    /// Bootstrap replicates per simulated table.
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, env = "MSE_SEED", default_value_t = 0)]
    seed: u64,
    /// THBM E-step sample count for point estimates.
    #[arg(long = "K", default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// THBM settings inside the bootstrap.
    #[arg(long = "boot-K", default_value_t = 200)]
    boot_k: usize,
    #[arg(long, default_value_t = 100)]
    boot_max_iter: usize,
    #[arg(long)]
    s_literal: bool,
    /// CSV path; the JSON report and manifest are written alongside.
    #[arg(long)]
    out: PathBuf,
}

/// Exit status: 0 ok, 2 ran but every estimate was infeasible, 1 failure.
enum Status {
    Ok,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    let res = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Benchmark(a) => cmd_benchmark(a, argv),
    };
    match res {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), MseError> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn table_json(t: &TrsTable) -> Value {
    serde_json::from_str(&t.to_json_string()).unwrap_or(Value::Null)
}

fn cmd_estimate(a: &EstimateArgs, argv: Vec<String>) -> Result<Status, MseError> {
    let table = match (&a.input, &a.dataset) {
        (Some(p), _) => load_table(p, TableFormat::from_path(p))?,
        (None, Some(d)) => builtin_dataset(d)?,
        (None, None) => unreachable!("clap requires one of --input/--dataset"),
    };
    let methods = parse_methods(&a.method)?;
    if methods.contains(&Method::Truth) {
        return Err(MseError::Domain("the truth method is only available in benchmarks".into()));
    }
    if a.trace.is_some() && !methods.contains(&Method::Thbm) {
        return Err(MseError::Domain("--trace needs the thbm method".into()));
    }
    let est = EstimatorConfig {
        thbm: ThbmConfig { k: a.k, max_iter: a.max_iter, seed: a.seed, pcond: a.pcond, ..ThbmConfig::default() },
        loglinear: LoglinearOptions { add_half: a.add_half },
        ..EstimatorConfig::default()
    };

    let mut results = Vec::new();
    let (mut feasible, mut errors) = (0, 0);
    for &m in &methods {
        let point = if m == Method::Thbm && a.trace.is_some() {
            fit_thbm(&table, &est.thbm).and_then(|fit| {
                fit.save_trace_csv(a.trace.as_deref().expect("checked"))?;
                Ok(fit.to_estimate(&table, &est.thbm))
            })
        } else {
            run_estimator(&table, m, &est)
        };
        let entry = match point {
            Ok(mut p) => {
                let boot = a.bootstrap.filter(|_| p.feasible).map(|b| {
                    let cfg = BootstrapConfig {
                        mode: a.bootstrap_mode,
                        thbm: ThbmConfig { pcond: a.pcond, ..ThbmConfig::for_bootstrap(a.seed) },
                        ..BootstrapConfig::new(b, a.seed)
                    };
                    bootstrap_estimate(&table, &mut p, &est, &cfg)
                });
                if p.feasible {
                    feasible += 1;
                }
                eprintln!("{:>5}  n_hat = {:.2}{}", m.name(), p.n_hat, if p.feasible { "" } else { "  (infeasible)" });
                match boot {
                    Some(Ok(r)) => json!({ "estimate": p, "bootstrap": r }),
                    Some(Err(e)) => {
                        eprintln!("{:>5}  bootstrap failed: {e}", m.name());
                        json!({ "estimate": p, "bootstrap_error": e.to_string() })
                    }
                    None => json!({ "estimate": p }),
                }
            }
            Err(e) => {
                errors += 1;
                eprintln!("{:>5}  error: {e}", m.name());
                json!({ "method": m, "error": e.to_string() })
            }
        };
        results.push(entry);
    }

    let report = json!({ "table": table_json(&table), "x0": table.x0(), "results": results });
    match &a.out {
        Some(out) => {
            let mut manifest = RunManifest::start(argv, serde_json::to_value(a)?, a.seed);
            if let Some(p) = &a.input {
                manifest.add_input(p)?;
            }
            write_json(out, &report)?;
            manifest.add_output(out)?;
            if let Some(t) = &a.trace {
                manifest.add_output(t)?;
            }
            manifest.finish(&RunManifest::path_for(out))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }

    if errors > 0 {
        Err(MseError::Domain(format!("{errors} of {} methods failed", methods.len())))
    } else if feasible == 0 {
        Ok(Status::Infeasible)
    } else {
        Ok(Status::Ok)
    }
}

fn set_literal(spec: &mut PopulationSpec, literal: bool) {
    if let PopulationModel::Scenario { options, .. } = &mut spec.model {
        options.literal |= literal;
    }
}

fn cmd_simulate(a: &SimulateArgs, argv: Vec<String>) -> Result<Status, MseError> {
    let mut spec = PopulationSpec::resolve(&a.pop, a.n)?;
    set_literal(&mut spec, a.s_literal);
    if a.reps == 0 {
        return Err(MseError::Domain("reps must be positive".into()));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut manifest = RunManifest::start(argv, serde_json::to_value(a)?, a.seed);
    let pop_path = Path::new(&a.pop);
    if pop_path.is_file() {
        manifest.add_input(pop_path)?;
    }
    let ext = if a.csv { "csv" } else { "json" };
    let width = a.reps.to_string().len().max(4);
    let mut replicates = Vec::with_capacity(a.reps);
    for r in 0..a.reps {
        match generate(&spec, &mut RngStream::new(a.seed, r as u64)) {
            Ok(sim) => {
                let name = format!("rep_{r:0width$}.{ext}");
                let path = a.out.join(&name);
                let table = sim.table.clone().with_label(format!("rep_{r:0width$}"));
                table.save(&path, if a.csv { TableFormat::Csv } else { TableFormat::Json })?;
                manifest.add_output(&path)?;
                replicates.push(json!({ "file": name, "x0": table.x0(), "x000": sim.x000 }));
            }
            Err(e) => {
                eprintln!("replicate {r}: {e}");
                replicates.push(json!({ "file": null, "error": e.to_string() }));
            }
        }
    }
    let truth_path = a.out.join("truth.json");
    let population: Value = serde_json::from_str(&spec.to_json_string())?;
    write_json(&truth_path, &json!({ "N": spec.n, "population": population, "seed": a.seed, "replicates": replicates }))?;
    manifest.add_output(&truth_path)?;
    manifest.finish(&a.out.join("manifest.json"))?;
    Ok(Status::Ok)
}

fn cmd_benchmark(a: &BenchmarkArgs, argv: Vec<String>) -> Result<Status, MseError> {
    let mut spec = PopulationSpec::resolve(&a.pop, Some(a.n))?;
    set_literal(&mut spec, a.s_literal);
    let methods = parse_methods(&a.methods)?;
    let mut cfg = BenchmarkConfig::new(a.reps, a.seed);
    cfg.b = a.b;
    cfg.estimator.thbm = ThbmConfig { k: a.k, max_iter: a.max_iter, ..cfg.estimator.thbm };
    cfg.bootstrap_thbm = ThbmConfig { k: a.boot_k, max_iter: a.boot_max_iter, ..cfg.bootstrap_thbm };

    let mut manifest = RunManifest::start(argv, serde_json::to_value(a)?, a.seed);
    let pop_path = Path::new(&a.pop);
    if pop_path.is_file() {
        manifest.add_input(pop_path)?;
    }
    let report = benchmark(&spec, &methods, &cfg)?;
    for r in &report.rows {
        if r.errors > 0 || r.ci_failures > 0 {
            eprintln!("{:>5}: {} estimator errors, {} bootstrap failures", r.method.name(), r.errors, r.ci_failures);
        }
    }
    if report.empty_datasets > 0 {
        eprintln!("{} simulated tables were empty and skipped", report.empty_datasets);
    }

    let (csv_path, json_path) = if a.out.extension().is_some_and(|e| e == "json") {
        (a.out.with_extension("csv"), a.out.clone())
    } else {
        (a.out.clone(), a.out.with_extension("json"))
    };
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.write_csv(std::fs::File::create(&csv_path)?)?;
    write_json(&json_path, &report)?;
    manifest.add_output(&csv_path)?;
    manifest.add_output(&json_path)?;
    manifest.finish(&RunManifest::path_for(&csv_path))?;
    print!("{}", std::fs::read_to_string(&csv_path)?);
    Ok(Status::Ok)
}

