use clap::{Parser, Subcommand};
use nlasso::config::parse_config;
use nlasso::experiment::{emit_results, run_experiment, trial_rng, OutputFormat};
use nlasso::predict::{predicted_error_sq, solve_maxmin, sparse_fixed_point, MaxMinConfig};
use nlasso::quantize::lloyd_max;
use nlasso::solver::{error_metric, generate_problem, solve_lasso};
use nlasso::{Error, LinkModel, QuadConfig, RegularizerSpec, Result};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nlasso",
    version,
    about = "Generalized LASSO under nonlinear measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print mu, sigma^2, tau^2 and zeta of a link.
    Moments {
        /// sign | relu | linear:<s> | noisy_sign:<s> | qbit:<design.json>
        #[arg(long)]
        link: String,
    },
    /// Predicted error for every (delta, lambda) of a config.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve one instance per (delta, lambda) of a config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte Carlo sweep and write a CSV or JSON summary.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Design a q-bit Lloyd-Max quantizer for a standard normal input.
    Quantize {
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_or_write(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Moments { link } => {
            let link = LinkModel::parse(&link, Some(Path::new(".")))?;
            let m = link.moments(&QuadConfig::default())?;
            print_or_write(&serde_json::to_value(m)?, None)
        }
        Command::Predict { config } => {
            let spec = parse_config(&config)?;
            let m = spec.link.moments(&QuadConfig::default())?;
            let mut out = Vec::new();
            for &delta in &spec.deltas {
                for &lambda in &spec.lambdas {
                    let mm = solve_maxmin(
                        &spec.reg,
                        &spec.prior,
                        delta,
                        lambda,
                        &m,
                        &MaxMinConfig::default(),
                    )?;
                    let (lambda_crit, regime) = match spec.reg {
                        RegularizerSpec::L1 => {
                            let p = sparse_fixed_point(&spec.prior, delta, lambda, &m)?;
                            (json!(p.lambda_crit), json!(p.regime))
                        }
                        _ => (serde_json::Value::Null, serde_json::Value::Null),
                    };
                    out.push(json!({
                        "delta": delta,
                        "lambda": lambda,
                        "alpha_sq": mm.alpha_star * mm.alpha_star,
                        "beta": mm.beta_star,
                        "tau": mm.tau_star,
                        "cost": mm.cost,
                        "lambda_crit": lambda_crit,
                        "regime": regime,
                    }));
                }
            }
            print_or_write(&json!(out), None)
        }
        Command::Solve { config, seed } => {
            let spec = parse_config(&config)?;
            let m = spec.link.moments(&QuadConfig::default())?;
            let mut out = Vec::new();
            for (di, &delta) in spec.deltas.iter().enumerate() {
                for (li, &lambda) in spec.lambdas.iter().enumerate() {
                    let mut rng = trial_rng(seed, di, li, 0);
                    let p = generate_problem(
                        &spec.prior,
                        &spec.link,
                        spec.reg,
                        spec.n,
                        delta,
                        lambda,
                        &mut rng,
                    )?;
                    let r = solve_lasso(&p, &spec.solver)?;
                    let predicted = predicted_error_sq(&spec.reg, &spec.prior, delta, lambda, &m)
                        .map(|(e, _)| json!(e))
                        .unwrap_or(serde_json::Value::Null);
                    out.push(json!({
                        "delta": delta,
                        "lambda": lambda,
                        "m": p.m(),
                        "n": p.n(),
                        "objective": r.objective,
                        "err_sq": error_metric(&r.x_hat, m.mu, &p.signal.x0),
                        "pred_err_sq": predicted,
                        "iterations": r.iterations,
                        "converged": r.converged,
                        "primal_dual_gap": r.primal_dual_gap,
                    }));
                }
            }
            print_or_write(&json!(out), None)
        }
        Command::Experiment {
            config,
            out,
            format,
        } => {
            let format: OutputFormat = format.parse()?;
            let spec = parse_config(&config)?;
            let report = run_experiment(&spec)?;
            emit_results(&report.records, format, &out)?;
            let flagged = report.diagnostics.iter().filter(|d| d.flagged).count();
            eprintln!(
                "wrote {} records to {} ({} flagged)",
                report.records.len(),
                out.display(),
                flagged
            );
            Ok(())
        }
        Command::Quantize { bits, out } => {
            if bits == 0 {
                return Err(Error::InvalidArgument("bits must be >= 1".into()));
            }
            let r = lloyd_max(bits, None, 1e-12, 10_000)?;
            let value = json!({
                "bits": r.design.bits,
                "levels": r.design.levels,
                "thresholds": serde_json::to_value(&r.design)?["thresholds"],
                "mu": r.mu,
                "tau2": r.tau2,
                "sigma2": r.sigma2,
                "ratio": r.ratio,
                "iterations": r.iterations,
                "stationarity_residual": r.stationarity_residual,
            });
            print_or_write(&value, out.as_deref())
        }
    }
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
