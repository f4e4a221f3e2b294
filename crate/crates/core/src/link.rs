//! Random link functions `g` and their Gaussian moments.

use crate::error::{Error, Result};
use crate::gaussian::{NormalIntegrator, Rule};
use crate::quantize::{quantizer_moments, quantizer_zeta, QuantizerDesign};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// The supported links.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkModel {
    /// `g(x) = x + noise_std * z`
    Linear { noise_std: f64 },
    /// `g(x) = sign(x)`
    Sign,
    /// `g(x) = sign(x + noise_std * z)`
    NoisySign { noise_std: f64 },
    /// `g(x) = Q_q(x)`
    QBit(QuantizerDesign),
    /// `g(x) = max(x, 0)`
    Relu,
}

/// Gaussian moments of a link: with `g ~ N(0,1)`,
/// `mu = E[g g(g)]`, `tau2 = E[g(g)^2]`, `sigma2 = E[(g(g) - mu g)^2]`,
/// `zeta = E[(g(g) - mu g)^2 g^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMoments {
    pub mu: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub zeta: f64,
}

impl LinkMoments {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Quadrature settings for the moment evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Gauss-Legendre nodes per unit panel of the piecewise rule.
    pub nodes: usize,
    /// Gauss-Hermite nodes for the smooth outer integral of noisy links.
    pub hermite_nodes: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            nodes: 64,
            hermite_nodes: 201,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LinkModel::Linear { noise_std } | LinkModel::NoisySign { noise_std } => {
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "noise_std must be finite and >= 0, got {noise_std}"
                    )));
                }
                Ok(())
            }
            LinkModel::QBit(d) => d.validate(),
            LinkModel::Sign | LinkModel::Relu => Ok(()),
        }
    }

    /// Parses `sign`, `noisy_sign:0.3`, `linear:0.0`, `relu` or
    /// `qbit:<design-file>`; relative design paths resolve against `base_dir`.
    pub fn parse(spec: &str, base_dir: Option<&Path>) -> Result<Self> {
        let spec = spec.trim();
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec, None),
        };
        let number = |what: &str| -> Result<f64> {
            let a = arg.ok_or_else(|| {
                Error::InvalidArgument(format!("link `{name}` needs a {what} argument"))
            })?;
            a.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} `{a}` in link `{spec}`")))
        };
        let link = match (name, arg) {
            ("sign", None) => LinkModel::Sign,
            ("relu", None) => LinkModel::Relu,
            ("linear", _) => LinkModel::Linear {
                noise_std: number("noise level")?,
            },
            ("noisy_sign", _) => LinkModel::NoisySign {
                noise_std: number("noise level")?,
            },
            ("qbit", Some(path)) => {
                let p = Path::new(path);
                let full = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.to_path_buf(),
                };
                LinkModel::QBit(QuantizerDesign::load(&full)?)
            }
            _ => return Err(Error::InvalidArgument(format!("unknown link `{spec}`"))),
        };
        link.validate()?;
        Ok(link)
    }

    /// Applies the link componentwise with fresh noise per entry.
    pub fn apply<R: Rng + ?Sized>(&self, u: &[f64], rng: &mut R) -> Vec<f64> {
        u.iter().map(|&x| self.apply_one(x, rng)).collect()
    }

    fn apply_one<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match self {
            LinkModel::Linear { noise_std } => {
                if *noise_std == 0.0 {
                    x
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    x + noise_std * z
                }
            }
            LinkModel::Sign => sign(x),
            LinkModel::NoisySign { noise_std } => {
                let z: f64 = rng.sample(StandardNormal);
                sign(x + noise_std * z)
            }
            LinkModel::QBit(d) => d.apply(x),
            LinkModel::Relu => x.max(0.0),
        }
    }

    /// Gaussian moments of the link.
    pub fn moments(&self, cfg: &QuadConfig) -> Result<LinkMoments> {
        self.validate()?;
        if cfg.nodes < 64 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least 64 nodes, got {}",
                cfg.nodes
            )));
        }
        let m = match self {
            LinkModel::Linear { noise_std } => {
                let s2 = noise_std * noise_std;
                LinkMoments {
                    mu: 1.0,
                    sigma2: s2,
                    tau2: 1.0 + s2,
                    zeta: s2,
                }
            }
            LinkModel::QBit(d) => {
                let (mu, tau2, sigma2) = quantizer_moments(d);
                LinkMoments {
                    mu,
                    sigma2,
                    tau2,
                    zeta: quantizer_zeta(d, mu),
                }
            }
            LinkModel::Sign => {
                deterministic_moments(&NormalIntegrator::new(cfg.nodes), sign, &[0.0])
            }
            LinkModel::Relu => {
                deterministic_moments(&NormalIntegrator::new(cfg.nodes), |x| x.max(0.0), &[0.0])
            }
            LinkModel::NoisySign { noise_std } if *noise_std == 0.0 => {
                deterministic_moments(&NormalIntegrator::new(cfg.nodes), sign, &[0.0])
            }
            LinkModel::NoisySign { noise_std } => noisy_sign_moments(*noise_std, cfg),
        };
        if m.mu.abs() < 1e-12 {
            return Err(Error::DegenerateLink { mu: m.mu });
        }
        Ok(m)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Moments of a deterministic piecewise-smooth link by breakpoint-aware
/// quadrature.
fn deterministic_moments(
    integ: &NormalIntegrator,
    g: impl Fn(f64) -> f64,
    breakpoints: &[f64],
) -> LinkMoments {
    let mu = integ.expect(breakpoints, |x| x * g(x));
    let tau2 = integ.expect(breakpoints, |x| g(x) * g(x));
    let sigma2 = integ.expect(breakpoints, |x| (g(x) - mu * x).powi(2));
    let zeta = integ.expect(breakpoints, |x| (g(x) - mu * x).powi(2) * x * x);
    LinkMoments {
        mu,
        sigma2,
        tau2,
        zeta,
    }
}

/// `g(x) = sign(x + s z)`: two-dimensional integral over `(x, z)`. The inner
/// integral over `z` is split at `z = -x / s`; conditional moments are smooth
/// in `x`, so the outer integral uses Gauss-Hermite.
fn noisy_sign_moments(s: f64, cfg: &QuadConfig) -> LinkMoments {
    let inner = NormalIntegrator::new(cfg.nodes);
    let outer = Rule::hermite(cfg.hermite_nodes);
    // conditional E[g | x] and E[g^2 | x]
    let cond: Vec<(f64, f64, f64)> = outer
        .nodes
        .iter()
        .map(|&x| {
            let cut = -x / s;
            let m1 = inner.expect(&[cut], |z| sign(x + s * z));
            let m2 = inner.expect(&[cut], |z| sign(x + s * z).powi(2));
            (x, m1, m2)
        })
        .collect();
    let outer_sum = |f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        cond.iter()
            .zip(&outer.weights)
            .map(|(&(x, m1, m2), &w)| w * f(x, m1, m2))
            .sum()
    };
    let mu = outer_sum(&|x, m1, _| x * m1);
    let tau2 = outer_sum(&|_, _, m2| m2);
    let sigma2 = outer_sum(&|x, m1, m2| m2 - 2.0 * mu * x * m1 + mu * mu * x * x);
    let zeta = outer_sum(&|x, m1, m2| x * x * (m2 - 2.0 * mu * x * m1 + mu * mu * x * x));
    LinkMoments {
        mu,
        sigma2,
        tau2,
        zeta,
    }
}

impl fmt::Display for LinkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkModel::Linear { noise_std } => write!(f, "linear:{noise_std}"),
            LinkModel::Sign => write!(f, "sign"),
            LinkModel::NoisySign { noise_std } => write!(f, "noisy_sign:{noise_std}"),
            LinkModel::QBit(d) => write!(f, "qbit({} bits)", d.bits),
            LinkModel::Relu => write!(f, "relu"),
        }
    }
}
