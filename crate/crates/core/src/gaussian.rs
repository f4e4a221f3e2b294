//! Standard normal special functions, Gaussian quadrature rules and closed-form
//! truncated moments of Gaussian and scaled-chi variables around a threshold.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Half-width of the truncated real line used by the piecewise rules; the
/// normal mass beyond it is below 1e-32.
const TRUNCATION: f64 = 12.0;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Gaussian tail `Q(x) = P(Z > x)`.
pub fn tail(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal distribution function.
pub fn quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `x * pdf(x)`, with the limit 0 at infinity.
fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * pdf(x)
    }
}

/// `P(a < Z < b)` without cancellation in either tail.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        tail(a) - tail(b)
    } else if b < 0.0 {
        tail(-b) - tail(-a)
    } else {
        1.0 - tail(b) - tail(-a)
    }
}

/// `E[(Z - c)^2 ; Z > c]`.
fn upper_sq(c: f64) -> f64 {
    if c == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if c == f64::INFINITY {
        return 0.0;
    }
    (1.0 + c * c) * tail(c) - c * pdf(c)
}

/// `E[Z - c ; Z > c]`.
fn upper_lin(c: f64) -> f64 {
    if c == f64::INFINITY {
        return 0.0;
    }
    pdf(c) - c * tail(c)
}

/// Truncated moments of a nonnegative or signed variable `W` relative to the
/// symmetric band `|W| <= theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThresholdStats {
    /// `P(|W| <= theta)`
    pub p_in: f64,
    /// `P(|W| > theta)`
    pub p_out: f64,
    /// `E[W^2 ; |W| <= theta]`
    pub in_sq: f64,
    /// `E[|W| - theta ; |W| > theta]`
    pub out_excess: f64,
    /// `E[(|W| - theta)^2 ; |W| > theta]`
    pub out_excess_sq: f64,
}

impl ThresholdStats {
    /// Stats of `W ~ N(mean, sd^2)`.
    pub fn normal(mean: f64, sd: f64, theta: f64) -> Self {
        debug_assert!(sd >= 0.0 && theta >= 0.0);
        if sd == 0.0 {
            return Self::point(mean, theta);
        }
        // right exceedance Z > b, left exceedance Z < a
        let b = (theta - mean) / sd;
        let a = (-theta - mean) / sd;
        let p_right = tail(b);
        let p_left = tail(-a);
        let p_in = interval_prob(a, b);
        let in_z2 = p_in + x_pdf(a) - x_pdf(b);
        let in_z1 = pdf(a) - pdf(b);
        let in_sq = mean * mean * p_in + 2.0 * mean * sd * in_z1 + sd * sd * in_z2;
        Self {
            p_in,
            p_out: p_right + p_left,
            in_sq: in_sq.max(0.0),
            out_excess: sd * (upper_lin(b) + upper_lin(-a)),
            out_excess_sq: sd * sd * (upper_sq(b) + upper_sq(-a)),
        }
    }

    /// Stats of the deterministic value `W = value`.
    pub fn point(value: f64, theta: f64) -> Self {
        let mag = value.abs();
        if mag <= theta {
            Self {
                p_in: 1.0,
                in_sq: value * value,
                ..Self::default()
            }
        } else {
            Self {
                p_out: 1.0,
                out_excess: mag - theta,
                out_excess_sq: (mag - theta) * (mag - theta),
                ..Self::default()
            }
        }
    }

    /// Stats of the radius `R = ||W||` of `W ~ N(0, sd^2 I_dim)`, i.e. a scaled
    /// chi variable with `dim` degrees of freedom.
    pub fn radial(dim: usize, sd: f64, theta: f64) -> Self {
        debug_assert!(dim >= 1);
        if sd == 0.0 {
            return Self::point(0.0, theta);
        }
        let k = dim as f64;
        let x = theta * theta / (2.0 * sd * sd);
        let (p_in, p_out) = if x == 0.0 {
            (0.0, 1.0)
        } else {
            (gamma_lr(0.5 * k, x), gamma_ur(0.5 * k, x))
        };
        let (sq_in, sq_out) = if x == 0.0 {
            (0.0, 1.0)
        } else {
            (gamma_lr(0.5 * k + 1.0, x), gamma_ur(0.5 * k + 1.0, x))
        };
        let first_moment = sd * SQRT_2 * (ln_gamma(0.5 * (k + 1.0)) - ln_gamma(0.5 * k)).exp();
        let lin_out = if x == 0.0 {
            first_moment
        } else {
            first_moment * gamma_ur(0.5 * (k + 1.0), x)
        };
        let r2_out = sd * sd * k * sq_out;
        Self {
            p_in,
            p_out,
            in_sq: sd * sd * k * sq_in,
            out_excess: (lin_out - theta * p_out).max(0.0),
            out_excess_sq: (r2_out - 2.0 * theta * lin_out + theta * theta * p_out).max(0.0),
        }
    }

    /// Accumulates `weight * other` into `self`.
    pub fn add_weighted(&mut self, weight: f64, other: &Self) {
        self.p_in += weight * other.p_in;
        self.p_out += weight * other.p_out;
        self.in_sq += weight * other.in_sq;
        self.out_excess += weight * other.out_excess;
        self.out_excess_sq += weight * other.out_excess_sq;
    }

    /// `E[eta^2(W; theta)]`, the mean squared soft-threshold output.
    pub fn soft_sq(&self) -> f64 {
        self.out_excess_sq
    }

    /// `E[W^2 - eta^2(W; theta)]`, computed without subtracting large terms.
    pub fn clipped_energy(&self, theta: f64) -> f64 {
        self.in_sq + theta * theta * self.p_out + 2.0 * theta * self.out_excess
    }
}

/// A quadrature rule: nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
    /// `mass * (first eigenvector component)^2`.
    fn golub_welsch(off_diagonal: impl Fn(usize) -> f64, n: usize, mass: f64) -> Self {
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            let b = off_diagonal(i + 1);
            jacobi[(i, i + 1)] = b;
            jacobi[(i + 1, i)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let v0 = eig.eigenvectors[(0, j)];
                (eig.eigenvalues[j], mass * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    /// Gauss-Hermite rule for `E[f(Z)]`, `Z ~ N(0, 1)` (probabilists' weight,
    /// weights sum to one).
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        Self::golub_welsch(|k| (k as f64).sqrt(), n, 1.0)
    }

    /// Gauss-Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        Self::golub_welsch(
            |k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            n,
            2.0,
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `w_i f(x_i)`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Breakpoint-aware integration of `E[f(Z)]` for `Z ~ N(0, 1)`.
///
/// The truncated line `[-12, 12]` is split at every breakpoint and into panels
/// of width at most one; each panel gets a Gauss-Legendre rule. Integrands that
/// are smooth between breakpoints are integrated to near machine precision.
#[derive(Debug, Clone)]
pub struct NormalIntegrator {
    rule: Rule,
}

impl NormalIntegrator {
    pub fn new(nodes_per_panel: usize) -> Self {
        Self {
            rule: Rule::legendre(nodes_per_panel),
        }
    }

    pub fn expect(&self, breakpoints: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|b| b.is_finite() && b.abs() < TRUNCATION)
            .collect();
        let whole = (-TRUNCATION as i64..=TRUNCATION as i64).map(|k| k as f64);
        cuts.extend(whole);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        cuts.windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                half * self.rule.apply(|t| {
                    let x = mid + half * t;
                    f(x) * pdf(x)
                })
            })
            .sum()
    }
}
