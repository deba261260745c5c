use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use vlmc::config::{parse_config, Config, ExperimentConfig, Kind};
use vlmc::error::CliError;
use vlmc::io::{write_pmf, write_rate_curve};
use vlmc::report::{Verdict, VerificationReport};
use vlmc::runner::{run, to_json, RunManifest, Summary};
use vlmc_core::rate::lemma_tail_constants;
use vlmc_core::{default_horizon, excursion_pmf, moments, rate_curve, simulate_stream, split_regenerations};

/// Regenerative analysis and verification for binary variable-length Markov chains.
#[derive(Parser)]
#[command(name = "vlmc", version)]
struct Cli {
    /// JSON configuration with the model and experiments.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Manifest seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Run independent experiments concurrently.
    #[arg(long, global = true)]
    parallel: bool,
    /// Multiplies the configured tolerance of every experiment.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and its regeneration cycles.
    Simulate {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Tabulate the joint law of cycle length and ones per cycle.
    Excursion {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Tabulate the rate function around the mean.
    Rate {
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
    },
    /// Run the configured experiments of one kind, or `all` of them.
    Verify { kind: String },
    /// Re-judge a report or summary file from its stored numbers.
    Report { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli) -> Result<(Config, String), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Refused("--config <path> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok((parse_config(&text)?, path.display().to_string()))
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(path, e))
}

fn csv_err(name: &str, e: csv::Error) -> CliError {
    CliError::Format { path: name.into(), message: e.to_string() }
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Report { path } => recheck(path),
        Command::Simulate { n, stream } => {
            let (config, _) = load(cli)?;
            let traj = simulate_stream(&config.model.spec, *n, config.model.start, cli.seed, *stream)?;
            let regen = split_regenerations(&traj);
            let chars: String = traj.chars.iter().map(|&c| if c == 1 { '1' } else { '0' }).collect();
            let doc = json!({
                "model": config.model.source,
                "n": traj.n,
                "seed": traj.seed,
                "stream": traj.stream,
                "r_n": traj.r_n,
                "regen_marks": traj.regen_marks,
                "nu_n": regen.nu_n,
                "z_n": regen.z_n,
                "open_len": regen.open_len,
                "chars": chars,
            });
            write_out(&cli.out, "simulate.json", &to_json(&doc))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "tau", "zeta"]).map_err(|e| csv_err("table-simulate.csv", e))?;
            for c in &regen.cycles {
                w.write_record([c.k.to_string(), c.tau.to_string(), c.zeta.to_string()])
                    .map_err(|e| csv_err("table-simulate.csv", e))?;
            }
            let bytes = w.into_inner().map_err(|e| csv_err("table-simulate.csv", e.into_error().into()))?;
            write_out(&cli.out, "table-simulate.csv", &bytes)?;
            println!("R({}) = {} with {} regenerations", traj.n, traj.r_n, traj.regen_marks.len());
            Ok(0)
        }
        Command::Excursion { horizon } => {
            let (config, _) = load(cli)?;
            let spec = &config.model.spec;
            let pmf = excursion_pmf(spec, horizon.unwrap_or_else(|| default_horizon(spec)))?;
            write_out(&cli.out, "pmf.csv", write_pmf(&pmf).map_err(|e| csv_err("pmf.csv", e))?.as_bytes())?;
            let (c, rho) = lemma_tail_constants(spec);
            let mut doc = json!({
                "model": config.model.source,
                "horizon": pmf.horizon(),
                "residual": pmf.residual(),
                "residual_warning": pmf.residual_warning(),
                "tail_constant": c,
                "tail_rate": rho,
            });
            match moments(&pmf) {
                Ok(m) => {
                    doc["moments"] = json!({
                        "mean_cycle_length": m.a_tau,
                        "mean_ones_per_cycle": m.e_zeta,
                        "a": m.a,
                        "sigma2": m.sigma2,
                        "truncation_error_bound": m.truncation_error_bound,
                    });
                    println!("a = {:.12}, sigma^2 = {:.12}, E tau = {:.12}", m.a, m.sigma2, m.a_tau);
                }
                Err(e) => {
                    doc["moments_error"] = Value::String(e.to_string());
                    eprintln!("warning: {e}");
                }
            }
            write_out(&cli.out, "excursion.json", &to_json(&doc))?;
            println!("horizon {} residual {:e}", pmf.horizon(), pmf.residual());
            Ok(0)
        }
        Command::Rate { delta, step } => {
            let (config, _) = load(cli)?;
            let spec = &config.model.spec;
            let pmf = excursion_pmf(spec, default_horizon(spec))?;
            let curve = rate_curve(&pmf, *delta, *step)?;
            write_out(&cli.out, "table-rate.csv", write_rate_curve(&curve).map_err(|e| csv_err("table-rate.csv", e))?.as_bytes())?;
            let doc = json!({
                "model": config.model.source,
                "a": curve.a,
                "delta_requested": delta,
                "delta_used": curve.delta_used,
                "points": curve.points.len(),
                "convex": curve.is_convex(1e-10),
            });
            write_out(&cli.out, "rate.json", &to_json(&doc))?;
            if curve.delta_used < *delta {
                eprintln!("warning: rate certified only on |alpha - a| <= {}", curve.delta_used);
            }
            println!("{} points on [a - {d}, a + {d}]", curve.points.len(), d = curve.delta_used);
            Ok(0)
        }
        Command::Verify { kind } => {
            let (mut config, path) = load(cli)?;
            if kind != "all" {
                let k = Kind::parse(kind).ok_or_else(|| {
                    let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
                    CliError::Refused(format!("unknown experiment kind {kind:?}; expected all or one of {}", names.join(", ")))
                })?;
                config.experiments.retain(|e| e.kind == k);
                if config.experiments.is_empty() {
                    config.experiments.push(ExperimentConfig::defaults(k));
                }
            }
            let manifest = RunManifest::new(&config, &path, cli.seed, &cli.out, cli.tolerance_scale);
            let outcome = run(&config, &manifest, cli.parallel)?;
            for (cfg, r) in manifest.experiments.iter().zip(&outcome.reports) {
                match &r.error {
                    Some(e) => println!("{} {}: {} ({e})", r.kind, cfg.output, r.verdict),
                    None => println!("{} {}: {}", r.kind, cfg.output, r.verdict),
                }
            }
            println!("overall: {}", outcome.summary.verdict);
            Ok(outcome.exit_code() as u8)
        }
    }
}

fn recheck(path: &Path) -> Result<u8, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Format { path: path.into(), message: e.to_string() })?;
    let bad = |e: serde_json::Error| CliError::Format { path: path.into(), message: e.to_string() };
    let (consistent, verdict) = if value.get("manifest").is_some() {
        let s: Summary = serde_json::from_value(value).map_err(bad)?;
        for e in &s.experiments {
            println!("{} {}: {}", e.kind, e.output, e.verdict);
        }
        (s.is_consistent(), s.verdict)
    } else {
        let r: VerificationReport = serde_json::from_value(value).map_err(bad)?;
        for c in &r.checks {
            println!("{}: {} (deviation {} vs threshold {})", c.label, c.verdict, c.deviation.0, c.threshold.0);
        }
        (r.is_consistent(), r.verdict)
    };
    if !consistent {
        println!("stored verdicts do not follow from the stored numbers");
        return Ok(2);
    }
    println!("overall: {verdict}");
    Ok(if verdict == Verdict::Pass { 0 } else { 1 })
}
