//! Asymptotic error predictors for the square-root LASSO: the scalar max-min
//! program, the sparse fixed-point system with its critical regularization,
//! `lambda_min`, the least-squares asymptote and the cone bound.

use crate::error::{Error, Result};
use crate::gaussian::{self, ThresholdStats};
use crate::link::LinkMoments;
use crate::optim::{bisect, bisect_log, brent_max_with_ends, brent_min};
use crate::regularizer::{scalar_mixture_stats, RegularizerSpec};
use crate::signal::SignalPrior;
use serde::Serialize;

/// Saddle point of the scalar max-min program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxMinSolution {
    /// Predicted `||x_hat - mu x0||`.
    pub alpha_star: f64,
    pub beta_star: f64,
    pub tau_star: f64,
    /// Optimal value; the limit of the normalized LASSO objective.
    pub cost: f64,
    /// `|dH/dalpha|` at the returned point, by central differences.
    pub stationarity_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxMinConfig {
    /// Relative tolerance of each nested one-dimensional search.
    pub tol: f64,
}

impl Default for MaxMinConfig {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `delta < 1` and `lambda <= lambda_crit`: the error is flat in lambda.
    BelowCritical,
    AboveCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsePrediction {
    pub kappa_star: f64,
    /// Zero when `delta >= 1`.
    pub lambda_crit: f64,
    /// Only defined when `delta < 1`.
    pub kappa_crit: Option<f64>,
    /// Predicted `||x_hat - mu x0||^2 = delta kappa^2 - sigma^2`.
    pub error_sq: f64,
    pub regime: Regime,
}

fn check_common(delta: f64, lambda: f64, m: &LinkMoments) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if m.mu.abs() < 1e-12 {
        return Err(Error::DegenerateLink { mu: m.mu });
    }
    if !(m.sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be >= 0, got {}",
            m.sigma2
        )));
    }
    Ok(())
}

/// The max-min objective
/// `H = beta sqrt(delta) sqrt(alpha^2 + sigma^2) - alpha tau / 2 + mu^2 tau / (2 alpha)
///      - (alpha lambda^2 / tau) F(beta / lambda, mu tau / (lambda alpha))`,
/// evaluated through `1/2 (c1^2 + c2^2) - F`, which cancels the two large
/// terms analytically.
struct Objective<'a> {
    reg: &'a RegularizerSpec,
    prior: &'a SignalPrior,
    sqrt_delta: f64,
    lambda: f64,
    mu: f64,
    sigma2: f64,
}

impl Objective<'_> {
    fn eval(&self, alpha: f64, beta: f64, tau: f64) -> f64 {
        let c1 = beta / self.lambda;
        let c2 = self.mu.abs() * tau / (self.lambda * alpha);
        let fc = self
            .reg
            .f_complement(self.prior, c1, c2)
            .expect("arguments validated");
        beta * self.sqrt_delta * (alpha * alpha + self.sigma2).sqrt()
            - 0.5 * alpha * tau
            - alpha * beta * beta / (2.0 * tau)
            + alpha * self.lambda * self.lambda / tau * fc
    }
}

/// Solves `max_{beta in [0,1], tau > 0} min_{alpha > 0} H(alpha, beta, tau)` by
/// nested one-dimensional searches: H is strictly convex in `alpha` and
/// jointly concave in `(beta, tau)`.
///
/// The box is `alpha <= 10 (sigma / max(sqrt(delta) - 1, 0.1) + 1)`,
/// `tau <= 10 sqrt(delta)`; an optimum on the outer face of either bound is
/// reported as [`Error::NoInteriorSolution`].
pub fn solve_maxmin(
    reg: &RegularizerSpec,
    prior: &SignalPrior,
    delta: f64,
    lambda: f64,
    moments: &LinkMoments,
    cfg: &MaxMinConfig,
) -> Result<MaxMinSolution> {
    check_common(delta, lambda, moments)?;
    // validates compatibility once so that the objective can unwrap
    reg.f_function(prior, 0.0, 0.0, 0.0)?;
    let sigma = moments.sigma2.sqrt();
    let a_max = 10.0 * (sigma / (delta.sqrt() - 1.0).max(0.1) + 1.0);
    let t_max = 10.0 * delta.sqrt();
    let (a_min, t_min) = (1e-10, 1e-10);
    let h = Objective {
        reg,
        prior,
        sqrt_delta: delta.sqrt(),
        lambda,
        mu: moments.mu,
        sigma2: moments.sigma2,
    };
    let tol = cfg.tol;

    let inner = |beta: f64, tau: f64| brent_min(|a| h.eval(a, beta, tau), a_min, a_max, tol);
    let middle = |beta: f64| brent_max_with_ends(|t| inner(beta, t).1, t_min, t_max, tol);
    let (beta, _) = brent_max_with_ends(|b| middle(b).1, 0.0, 1.0, tol);
    let (tau, _) = middle(beta);
    let (alpha, cost) = inner(beta, tau);

    if alpha >= a_max * (1.0 - 1e-6) {
        return Err(Error::NoInteriorSolution(format!(
            "alpha reached its bound {a_max:.4} (delta = {delta}, lambda = {lambda})"
        )));
    }
    if tau >= t_max * (1.0 - 1e-6) {
        return Err(Error::NoInteriorSolution(format!(
            "tau reached its bound {t_max:.4} (delta = {delta}, lambda = {lambda})"
        )));
    }
    let step = 1e-5 * alpha.max(1e-3);
    let residual = if alpha > step {
        ((h.eval(alpha + step, beta, tau) - h.eval(alpha - step, beta, tau)) / (2.0 * step)).abs()
    } else {
        // minimizer at the lower edge: one-sided slope must be nonnegative
        ((h.eval(alpha + step, beta, tau) - h.eval(alpha, beta, tau)) / step)
            .min(0.0)
            .abs()
    };
    Ok(MaxMinSolution {
        alpha_star: alpha,
        beta_star: beta,
        tau_star: tau,
        cost,
        stationarity_residual: residual,
    })
}

/// Statistics of `W = h + s X0` at threshold `theta`.
fn shifted_stats(prior: &SignalPrior, s: f64, theta: f64) -> ThresholdStats {
    scalar_mixture_stats(prior, 1.0, s, theta)
}

/// `E[(eta(h + s X0; theta) - s X0)^2]`, written with Stein's identity as
/// `1 - 2 P(|W| <= theta) + E[W^2; |W| <= theta] + theta^2 P(|W| > theta)`.
pub(crate) fn shrinkage_risk(prior: &SignalPrior, s: f64, theta: f64) -> f64 {
    let st = shifted_stats(prior, s, theta);
    (1.0 - 2.0 * st.p_in + st.in_sq + theta * theta * st.p_out).max(0.0)
}

/// `P(|h + s X0| > theta)`.
fn exceed_prob(prior: &SignalPrior, s: f64, theta: f64) -> f64 {
    shifted_stats(prior, s, theta).p_out
}

fn require_scalar_prior(prior: &SignalPrior) -> Result<()> {
    prior.validate()?;
    match prior {
        SignalPrior::GroupSparseGauss { .. } => Err(Error::IncompatiblePrior(format!(
            "the sparse fixed point needs a scalar prior, got {prior}"
        ))),
        _ => Ok(()),
    }
}

/// Solves `kappa^2 delta = sigma^2 + kappa^2 M(mu / kappa, lambda)` for the
/// unique positive `kappa` by bisection in `ln kappa` over `[1e-6, 1e6]`.
fn solve_kappa(prior: &SignalPrior, delta: f64, lambda: f64, m: &LinkMoments) -> Result<f64> {
    let mu = m.mu.abs();
    let g =
        |kappa: f64| delta - m.sigma2 / (kappa * kappa) - shrinkage_risk(prior, mu / kappa, lambda);
    let (lo, hi) = (1e-6, 1e6);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_hi <= 0.0 {
        return Err(Error::FixedPointDiverged(format!(
            "no solution below kappa = {hi:e} (delta = {delta}, lambda = {lambda}); lambda may be below lambda_min"
        )));
    }
    if g_lo >= 0.0 {
        if m.sigma2 <= 1e-24 {
            // noiseless exact recovery
            return Ok(0.0);
        }
        return Err(Error::FixedPointDiverged(format!(
            "no sign change above kappa = {lo:e} (delta = {delta}, lambda = {lambda})"
        )));
    }
    Ok(bisect_log(g, lo, hi))
}

/// The threshold `lambda` at which `P(|h + s X0| > lambda) = delta`.
fn matching_threshold(prior: &SignalPrior, s: f64, delta: f64) -> f64 {
    let mut hi = 1.0;
    while exceed_prob(prior, s, hi) > delta && hi < 1e8 {
        hi *= 2.0;
    }
    bisect(|t| exceed_prob(prior, s, t) - delta, 0.0, hi, 1e-15)
}

/// `(lambda_crit, kappa_crit)` for `delta < 1`: both fixed-point equations
/// hold with `beta = 1`. Parametrized by `s = mu / kappa`, the second
/// equation fixes `lambda(s)` and the first becomes one scalar root in `s`.
fn critical_point(prior: &SignalPrior, delta: f64, m: &LinkMoments) -> Result<(f64, f64)> {
    let mu = m.mu.abs();
    let phi = |s: f64| {
        let lam = matching_threshold(prior, s, delta);
        delta - shrinkage_risk(prior, s, lam) - m.sigma2 * s * s / (mu * mu)
    };
    let (lo, hi) = (1e-6, 1e6);
    if phi(lo) <= 0.0 || phi(hi) >= 0.0 {
        return Err(Error::FixedPointDiverged(format!(
            "critical point not bracketed in s = mu/kappa over [{lo:e}, {hi:e}] (delta = {delta})"
        )));
    }
    let s = bisect_log(phi, lo, hi);
    Ok((matching_threshold(prior, s, delta), mu / s))
}

/// Critical regularization: zero for `delta >= 1`.
pub fn lambda_crit(prior: &SignalPrior, delta: f64, moments: &LinkMoments) -> Result<f64> {
    require_scalar_prior(prior)?;
    if delta >= 1.0 {
        return Ok(0.0);
    }
    Ok(critical_point(prior, delta, moments)?.0)
}

/// Error prediction for the L1-regularized LASSO with a scalar sparse prior.
///
/// For `delta >= 1` or `lambda > lambda_crit` the prediction uses the
/// `beta = 1` fixed point in `kappa`. For `delta < 1` and
/// `lambda <= lambda_crit` the error stays at its value at `lambda_crit`.
pub fn sparse_fixed_point(
    prior: &SignalPrior,
    delta: f64,
    lambda: f64,
    moments: &LinkMoments,
) -> Result<SparsePrediction> {
    check_common(delta, lambda, moments)?;
    require_scalar_prior(prior)?;
    let (lambda_crit, kappa_crit) = if delta >= 1.0 {
        (0.0, None)
    } else {
        let (l, k) = critical_point(prior, delta, moments)?;
        (l, Some(k))
    };
    let (kappa, regime) = match kappa_crit {
        Some(k) if lambda <= lambda_crit => (k, Regime::BelowCritical),
        _ => (
            solve_kappa(prior, delta, lambda, moments)?,
            Regime::AboveCritical,
        ),
    };
    Ok(SparsePrediction {
        kappa_star: kappa,
        lambda_crit,
        kappa_crit,
        error_sq: (delta * kappa * kappa - moments.sigma2).max(0.0),
        regime,
    })
}

/// Predicted squared error for any supported (regularizer, prior) pair: the
/// fixed point for L1 with scalar priors, the max-min program otherwise.
/// Returns the prediction and `lambda_crit` (NaN when not defined).
pub fn predicted_error_sq(
    reg: &RegularizerSpec,
    prior: &SignalPrior,
    delta: f64,
    lambda: f64,
    moments: &LinkMoments,
) -> Result<(f64, f64)> {
    match (reg, prior) {
        (RegularizerSpec::L1, SignalPrior::GroupSparseGauss { .. }) => {
            Err(Error::IncompatiblePrior(format!("{reg} with {prior}")))
        }
        (RegularizerSpec::L1, _) => {
            let p = sparse_fixed_point(prior, delta, lambda, moments)?;
            Ok((p.error_sq, p.lambda_crit))
        }
        _ => {
            let s = solve_maxmin(reg, prior, delta, lambda, moments, &MaxMinConfig::default())?;
            Ok((s.alpha_star * s.alpha_star, f64::NAN))
        }
    }
}

/// `2 [(1 + x^2) Q(x) - x phi(x)]`, the risk of soft thresholding pure noise.
fn noise_risk(x: f64) -> f64 {
    2.0 * ((1.0 + x * x) * gaussian::tail(x) - x * gaussian::pdf(x))
}

/// Unique nonnegative root of `(1 + x^2) Q(x) - x phi(x) = delta / 2`;
/// zero when `delta >= 1`.
pub fn lambda_min(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while noise_risk(hi) > delta {
        hi *= 2.0;
    }
    Ok(bisect(|x| noise_risk(x) - delta, 0.0, hi, 1e-14))
}

/// Squared least-squares asymptote `sigma^2 / (delta - 1)`.
pub fn ls_error(delta: f64, sigma2: f64) -> Result<f64> {
    if !(delta > 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok(sigma2 / (delta - 1.0))
}

/// Squared cone-constrained bound `sigma^2 rho / (delta - rho)`.
pub fn cone_bound(rho: f64, delta: f64, sigma2: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRatio(format!(
            "rho must lie in (0, 1], got {rho}"
        )));
    }
    if !(delta - rho >= 1e-9) {
        return Err(Error::InvalidRatio(format!(
            "need delta > rho, got delta = {delta}, rho = {rho}"
        )));
    }
    Ok(sigma2 * rho / (delta - rho))
}
