//! Plain-text `key = value` experiment configuration.
//!
//! ```text
//! # Monte Carlo sweep
//! n = 256
//! delta = 0.75, 1.2
//! lambda = 0.3, 0.6, 0.9
//! trials = 20
//! prior = "sparse_gauss:0.15"
//! link = "noisy_sign:0.3"
//! reg = "l1"
//! seed = 7
//! ```
//!
//! Required keys: `n`, `delta`, `lambda`, `trials`, `prior`, `link`, `reg`.
//! Optional: `seed` (default 0), `tol`, `max_iters`, `run_nonlinear`,
//! `run_linear`, `run_prediction` (booleans, default true).

use crate::error::{Error, Result};
use crate::experiment::ExperimentSpec;
use crate::link::LinkModel;
use crate::regularizer::RegularizerSpec;
use crate::signal::SignalPrior;
use crate::solver::SolverConfig;
use std::collections::HashMap;
use std::path::Path;

pub const DEFAULT_SEED: u64 = 0;

const KNOWN_KEYS: [&str; 13] = [
    "n",
    "delta",
    "lambda",
    "trials",
    "prior",
    "link",
    "reg",
    "seed",
    "tol",
    "max_iters",
    "run_nonlinear",
    "run_linear",
    "run_prediction",
];

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

fn parse_list(e: &Entry) -> Result<Vec<f64>> {
    let body = unquote(&e.value).trim();
    let body = body.strip_prefix('[').unwrap_or(body);
    let body = body.strip_suffix(']').unwrap_or(body);
    body.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| parse_err(e.line, format!("`{s}` is not a number")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    unquote(&e.value)
        .parse()
        .map_err(|_| parse_err(e.line, format!("`{}` is not {what}", e.value.trim())))
}

fn with_line<T>(e: &Entry, r: Result<T>) -> Result<T> {
    r.map_err(|err| match err {
        Error::Parse { .. } => err,
        other => parse_err(e.line, other.to_string()),
    })
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match unquote(&e.value).to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(parse_err(e.line, format!("`{other}` is not a boolean"))),
    }
}

/// Parses configuration text. Relative `qbit:` design paths resolve against
/// `base_dir`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<ExperimentSpec> {
    let mut entries: HashMap<&str, Entry> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let known = KNOWN_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| parse_err(line, format!("unknown key `{key}`")))?;
        if entries.contains_key(known) {
            return Err(parse_err(line, format!("duplicate key `{key}`")));
        }
        entries.insert(
            known,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }

    let mut problems = Vec::new();
    for key in ["n", "delta", "lambda", "trials", "prior", "link", "reg"] {
        if !entries.contains_key(key) {
            problems.push(format!("missing required key `{key}`"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let n: usize = parse_scalar(&entries["n"], "a nonnegative integer")?;
    let deltas = parse_list(&entries["delta"])?;
    let lambdas = parse_list(&entries["lambda"])?;
    let trials: usize = parse_scalar(&entries["trials"], "a nonnegative integer")?;
    let prior = with_line(
        &entries["prior"],
        SignalPrior::parse(unquote(&entries["prior"].value)),
    )?;
    let link = with_line(
        &entries["link"],
        LinkModel::parse(unquote(&entries["link"].value), base_dir),
    )?;
    let reg = with_line(
        &entries["reg"],
        RegularizerSpec::parse(unquote(&entries["reg"].value)),
    )?;
    let seed = match entries.get("seed") {
        Some(e) => parse_scalar(e, "a nonnegative integer")?,
        None => {
            eprintln!("seed not set; using default seed = {DEFAULT_SEED}");
            DEFAULT_SEED
        }
    };
    let mut solver = SolverConfig::default();
    if let Some(e) = entries.get("tol") {
        solver.tol = parse_scalar(e, "a number")?;
    }
    if let Some(e) = entries.get("max_iters") {
        solver.max_iters = parse_scalar(e, "a nonnegative integer")?;
    }
    let flag = |key: &str| entries.get(key).map(parse_bool).unwrap_or(Ok(true));

    let spec = ExperimentSpec {
        n,
        deltas,
        lambdas,
        trials,
        prior,
        link,
        reg,
        seed,
        solver,
        run_nonlinear: flag("run_nonlinear")?,
        run_linear: flag("run_linear")?,
        run_prediction: flag("run_prediction")?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path.parent())
}
