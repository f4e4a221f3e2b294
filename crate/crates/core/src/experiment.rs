//! Monte Carlo sweeps over `(delta, lambda)` that compare the LASSO error under
//! the nonlinear link with its linear surrogate `mu A x0 + sigma z` and with
//! the analytic prediction.

use crate::error::{Error, Result};
use crate::link::{LinkModel, LinkMoments, QuadConfig};
use crate::predict::predicted_error_sq;
use crate::regularizer::RegularizerSpec;
use crate::signal::SignalPrior;
use crate::solver::{
    error_metric, generate_problem, num_measurements, solve_lasso, ProblemInstance, SolverConfig,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

/// Fraction of failed trials above which a point is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.2;

pub const CSV_HEADER: &str =
    "delta,lambda,mean_err_nl,se_nl,mean_err_lin,se_lin,pred_err_sq,lambda_crit,n,trials";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n: usize,
    pub deltas: Vec<f64>,
    /// Strictly increasing, positive.
    pub lambdas: Vec<f64>,
    pub trials: usize,
    pub prior: SignalPrior,
    pub link: LinkModel,
    pub reg: RegularizerSpec,
    pub seed: u64,
    pub solver: SolverConfig,
    pub run_nonlinear: bool,
    pub run_linear: bool,
    pub run_prediction: bool,
}

impl ExperimentSpec {
    /// Collects every violated invariant into one [`Error::Validation`].
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.n == 0 {
            p.push("n must be >= 1".to_string());
        }
        if self.deltas.is_empty() {
            p.push("delta list is empty".to_string());
        }
        for &d in &self.deltas {
            if !(d > 0.0 && d.is_finite()) {
                p.push(format!("delta must be positive, got {d}"));
            } else if self.n > 0 && num_measurements(self.n, d).is_err() {
                p.push(format!(
                    "delta = {d} gives no measurements at n = {}",
                    self.n
                ));
            }
        }
        if self.lambdas.is_empty() {
            p.push("lambda grid is empty".to_string());
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            p.push("lambda values must be positive".to_string());
        }
        if self.lambdas.windows(2).any(|w| !(w[0] < w[1])) {
            p.push("lambda grid must be strictly increasing".to_string());
        }
        if self.trials == 0 {
            p.push("trials must be >= 1".to_string());
        }
        if !(self.solver.tol > 0.0) {
            p.push(format!("tol must be positive, got {}", self.solver.tol));
        }
        if self.solver.max_iters == 0 {
            p.push("max_iters must be >= 1".to_string());
        }
        if let Err(e) = self.reg.f_function(&self.prior, 0.0, 0.0, 0.0) {
            p.push(e.to_string());
        }
        if let Err(e) = self.reg.check_dim(self.n) {
            p.push(e.to_string());
        }
        if let Err(e) = self.link.validate() {
            p.push(e.to_string());
        }
        if !(self.run_nonlinear || self.run_linear || self.run_prediction) {
            p.push("all of run_nonlinear, run_linear and run_prediction are off".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(round_sig(*v))
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Rounds to 10 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v.is_finite() {
        format!("{v:.9e}").parse().expect("formatted float parses")
    } else {
        v
    }
}

/// One `(delta, lambda)` point of a sweep. Absent quantities are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub delta: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub lambda: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub mean_err_nl: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub se_nl: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub mean_err_lin: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub se_lin: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub pred_err_sq: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub lambda_crit: f64,
    pub n: usize,
    pub trials: usize,
}

/// Per-point bookkeeping that does not go into the results file.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDiagnostics {
    pub delta: f64,
    pub lambda: f64,
    /// Trials whose solve errored or hit `max_iters`, per measurement model.
    pub failed_nl: usize,
    pub failed_lin: usize,
    pub flagged: bool,
    /// Hash of `(A, x0)` for each trial's nonlinear and linear solves.
    pub instance_hashes: Vec<(u64, u64)>,
    pub prediction_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<SummaryRecord>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub moments: LinkMoments,
}

/// Seeds a trial generator from `(seed, delta index, lambda index, trial)`.
pub fn trial_rng(seed: u64, delta_idx: usize, lambda_idx: usize, trial: usize) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(delta_idx as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(lambda_idx as u64).to_le_bytes());
    key[24..].copy_from_slice(&(trial as u64).to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// Fingerprint of the design and signal of an instance.
pub fn instance_hash(p: &ProblemInstance) -> u64 {
    let mut h = DefaultHasher::new();
    p.a.nrows().hash(&mut h);
    p.a.ncols().hash(&mut h);
    for v in p.a.iter().chain(p.signal.x0.iter()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

struct TrialOutcome {
    err_nl: Option<f64>,
    err_lin: Option<f64>,
    failed_nl: bool,
    failed_lin: bool,
    hashes: (u64, u64),
}

fn run_trial(
    spec: &ExperimentSpec,
    moments: &LinkMoments,
    delta: f64,
    lambda: f64,
    mut rng: ChaCha20Rng,
) -> TrialOutcome {
    let mut out = TrialOutcome {
        err_nl: None,
        err_lin: None,
        failed_nl: spec.run_nonlinear,
        failed_lin: spec.run_linear,
        hashes: (0, 0),
    };
    let problem = match generate_problem(
        &spec.prior,
        &spec.link,
        spec.reg,
        spec.n,
        delta,
        lambda,
        &mut rng,
    ) {
        Ok(p) => p,
        Err(_) => return out,
    };
    let score = |p: &ProblemInstance| match solve_lasso(p, &spec.solver) {
        Ok(r) => (
            Some(error_metric(&r.x_hat, moments.mu, &p.signal.x0)),
            !r.converged,
        ),
        Err(_) => (None, true),
    };
    if spec.run_nonlinear {
        out.hashes.0 = instance_hash(&problem);
        (out.err_nl, out.failed_nl) = score(&problem);
    }
    if spec.run_linear {
        let sigma = moments.sigma();
        let y_lin = DVector::from_fn(problem.m(), |i, _| {
            moments.mu * problem.u[i] + sigma * rng.sample::<f64, _>(StandardNormal)
        });
        let lin = problem.with_measurements(y_lin).expect("same length");
        out.hashes.1 = instance_hash(&lin);
        (out.err_lin, out.failed_lin) = score(&lin);
    }
    out
}

/// Mean and standard error `sd / sqrt(k)` (NaN for fewer than two samples).
fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Runs the sweep. Trials within a point run in parallel with independent
/// generators; results are reduced in trial order so output is reproducible.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let moments = spec.link.moments(&QuadConfig::default())?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (di, &delta) in spec.deltas.iter().enumerate() {
        for (li, &lambda) in spec.lambdas.iter().enumerate() {
            let outcomes: Vec<TrialOutcome> = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    run_trial(
                        spec,
                        &moments,
                        delta,
                        lambda,
                        trial_rng(spec.seed, di, li, t),
                    )
                })
                .collect();
            let nl: Vec<f64> = outcomes.iter().filter_map(|o| o.err_nl).collect();
            let lin: Vec<f64> = outcomes.iter().filter_map(|o| o.err_lin).collect();
            let failed_nl = outcomes.iter().filter(|o| o.failed_nl).count();
            let failed_lin = outcomes.iter().filter(|o| o.failed_lin).count();
            let limit = FAILURE_FLAG_FRACTION * spec.trials as f64;
            let flagged = failed_nl as f64 > limit || failed_lin as f64 > limit;
            let (mean_err_nl, se_nl) = mean_se(&nl);
            let (mean_err_lin, se_lin) = mean_se(&lin);
            let (pred, crit, prediction_error) = if spec.run_prediction {
                match predicted_error_sq(&spec.reg, &spec.prior, delta, lambda, &moments) {
                    Ok((p, c)) => (p, c, None),
                    Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
                }
            } else {
                (f64::NAN, f64::NAN, None)
            };
            if flagged {
                eprintln!(
                    "warning: delta = {delta}, lambda = {lambda}: {failed_nl} nonlinear and {failed_lin} linear of {} trials failed",
                    spec.trials
                );
            }
            if let Some(e) = &prediction_error {
                eprintln!("warning: delta = {delta}, lambda = {lambda}: no prediction ({e})");
            }
            records.push(SummaryRecord {
                delta,
                lambda,
                mean_err_nl,
                se_nl,
                mean_err_lin,
                se_lin,
                pred_err_sq: pred,
                lambda_crit: crit,
                n: spec.n,
                trials: spec.trials,
            });
            diagnostics.push(PointDiagnostics {
                delta,
                lambda,
                failed_nl,
                failed_lin,
                flagged,
                instance_hashes: outcomes.iter().map(|o| o.hashes).collect(),
                prediction_error,
            });
        }
    }
    Ok(ExperimentReport {
        records,
        diagnostics,
        moments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9e}")
    } else {
        "NaN".to_string()
    }
}

/// Renders records as CSV text with the fixed header.
pub fn to_csv(records: &[SummaryRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let floats = [
            r.delta,
            r.lambda,
            r.mean_err_nl,
            r.se_nl,
            r.mean_err_lin,
            r.se_lin,
            r.pred_err_sq,
            r.lambda_crit,
        ];
        let cols: Vec<String> = floats.iter().map(|v| fmt_float(*v)).collect();
        let _ = writeln!(out, "{},{},{}", cols.join(","), r.n, r.trials);
    }
    out
}

/// Parses text produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<SummaryRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing or unexpected CSV header".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(bad("expected 10 columns"));
        }
        let f = |j: usize| cols[j].trim().parse::<f64>().map_err(|_| bad("bad number"));
        let u = |j: usize| {
            cols[j]
                .trim()
                .parse::<usize>()
                .map_err(|_| bad("bad integer"))
        };
        records.push(SummaryRecord {
            delta: f(0)?,
            lambda: f(1)?,
            mean_err_nl: f(2)?,
            se_nl: f(3)?,
            mean_err_lin: f(4)?,
            se_lin: f(5)?,
            pred_err_sq: f(6)?,
            lambda_crit: f(7)?,
            n: u(8)?,
            trials: u(9)?,
        });
    }
    Ok(records)
}

/// Renders records as a pretty JSON array.
pub fn to_json(records: &[SummaryRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn from_json(text: &str) -> Result<Vec<SummaryRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// Writes records to `path`; an empty record list is an error.
pub fn emit_results(records: &[SummaryRecord], format: OutputFormat, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to write".into()));
    }
    let text = match format {
        OutputFormat::Csv => to_csv(records),
        OutputFormat::Json => to_json(records)? + "\n",
    };
    std::fs::write(path, text)?;
    Ok(())
}
