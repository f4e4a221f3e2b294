//! Problem generation and solvers: the square-root LASSO
//! `min_x ||y - Ax||_2 + lambda f(x)` by a primal-dual hybrid gradient method,
//! and ordinary least squares.

use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::regularizer::RegularizerSpec;
use crate::signal::{SignalInstance, SignalPrior};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// One sampled LASSO instance with its ground truth.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    /// `m x n`, i.i.d. standard normal entries.
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Noiseless linear measurements `A x0`.
    pub u: DVector<f64>,
    pub lambda: f64,
    pub reg: RegularizerSpec,
    pub signal: SignalInstance,
    pub delta: f64,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Same design and signal, different measurements.
    pub fn with_measurements(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} measurements, got {}",
                self.m(),
                y.len()
            )));
        }
        Ok(Self { y, ..self.clone() })
    }
}

/// `round(delta n)`.
pub fn num_measurements(n: usize, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let m = (delta * n as f64).round();
    if m < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} with n = {n} gives no measurements"
        )));
    }
    Ok(m as usize)
}

/// Draws `x0` from the prior, a Gaussian design `A`, and `y = g(A x0)`.
pub fn generate_problem<R: Rng + ?Sized>(
    prior: &SignalPrior,
    link: &LinkModel,
    reg: RegularizerSpec,
    n: usize,
    delta: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let m = num_measurements(n, delta)?;
    reg.check_dim(n)?;
    let signal = prior.sample(n, rng)?;
    let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = &a * DVector::from_column_slice(&signal.x0);
    let y = DVector::from_vec(link.apply(u.as_slice(), rng));
    Ok(ProblemInstance {
        a,
        y,
        u,
        lambda,
        reg,
        signal,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative change of the 10-iteration mean objective that stops the run.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    /// `(||y - A x_hat|| + lambda f(x_hat)) / sqrt(n)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized gap between the primal objective and the value of a
    /// feasible dual point built from the final dual iterate.
    pub primal_dual_gap: f64,
    /// Mean normalized objective of each completed 10-iteration window.
    pub window_means: Vec<f64>,
}

const WINDOW: usize = 10;

/// Iterations between checks of the restart rule.
const RESTART_CHECK: usize = 64;

/// Relative duality gap required, together with a stalled objective, to stop.
const GAP_TOL: f64 = 1e-6;

/// Gap between `primal` and the dual value at `u = -w`, scaled into the
/// dual feasible set `{||u|| <= 1, ||A^T u||_* <= lambda}`.
fn duality_gap(
    reg: &RegularizerSpec,
    lambda: f64,
    w: &DVector<f64>,
    atw: &DVector<f64>,
    y: &DVector<f64>,
    primal: f64,
) -> Result<f64> {
    let dual_norm = reg.dual_norm(atw.as_slice())?;
    let shrink = if dual_norm > lambda {
        lambda / dual_norm
    } else {
        1.0
    };
    Ok((primal + shrink * w.dot(y)).max(0.0))
}

/// Largest singular value of `a` by power iteration on `A^T A`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut av = DVector::zeros(a.nrows());
    let mut est = 0.0;
    for _ in 0..500 {
        av.gemv(1.0, a, &v, 0.0);
        v.gemv_tr(1.0, a, &av, 0.0);
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v /= norm;
        if (next - est).abs() <= 1e-10 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Primal-dual hybrid gradient on
/// `min_x max_{||w|| <= 1} w^T (A x - y) + lambda f(x)`.
///
/// The dual step projects onto the unit ball, the primal step applies the
/// prox of `t lambda f`, and the primal point is over-relaxed. Step sizes
/// satisfy `s t ||A||^2 <= 1`. Only `A x` and `A^T w` are computed each
/// iteration; `A x_bar` comes from the stored products.
pub fn solve_lasso(p: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    if cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    if !(p.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {}",
            p.lambda
        )));
    }
    let (m, n) = (p.m(), p.n());
    if p.y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "A has {m} rows but y has {}",
            p.y.len()
        )));
    }
    p.reg.check_dim(n)?;
    let a = &p.a;
    let y = &p.y;
    let lambda = p.lambda;
    let scale = (n as f64).sqrt().recip();
    let y_norm = y.norm();

    let op = operator_norm(a) * 1.001;
    if op == 0.0 {
        let x_hat = vec![0.0; n];
        return Ok(SolveResult {
            x_hat,
            objective: y_norm * scale,
            iterations: 0,
            converged: true,
            primal_dual_gap: 0.0,
            window_means: Vec::new(),
        });
    }
    let step = op.recip();
    let (s, t) = (step, step);

    let mut x = DVector::<f64>::zeros(n);
    let mut ax = DVector::<f64>::zeros(m);
    let mut ax_bar = DVector::<f64>::zeros(m);
    let mut w = DVector::<f64>::zeros(m);
    let mut atw = DVector::<f64>::zeros(n);
    let mut ax_new = DVector::<f64>::zeros(m);

    let objective_of = |x: &DVector<f64>, ax: &DVector<f64>| -> f64 {
        let r = (ax - y).norm();
        r + lambda * p.reg.eval(x.as_slice()).expect("dimension checked")
    };
    // length of one step from (x, w) in the step-weighted norm; zero exactly
    // at saddle points
    let fixed_point_residual = |x: &DVector<f64>, ax: &DVector<f64>, w: &DVector<f64>| -> f64 {
        let mut w1 = w + (ax - y) * s;
        let wn = w1.norm();
        if wn > 1.0 {
            w1 /= wn;
        }
        let mut x1 = x - a.tr_mul(&w1) * t;
        p.reg
            .prox_in_place(x1.as_mut_slice(), t * lambda)
            .expect("dimension checked");
        ((x - x1).norm_squared() / t + (w - w1).norm_squared() / s).sqrt()
    };

    // running averages since the last restart
    let mut x_sum = DVector::<f64>::zeros(n);
    let mut ax_sum = DVector::<f64>::zeros(m);
    let mut w_sum = DVector::<f64>::zeros(m);
    let mut since_restart = 0usize;
    let mut anchor_residual = fixed_point_residual(&x, &ax, &w);
    let mut last_candidate = f64::INFINITY;

    let mut window_sum = 0.0;
    let mut window_len = 0usize;
    let mut window_means = Vec::new();
    let mut prev_mean: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iters {
        // dual ascent and projection onto the unit ball
        w.axpy(s, &ax_bar, 1.0);
        w.axpy(-s, y, 1.0);
        let wn = w.norm();
        if wn > 1.0 {
            w /= wn;
        }
        // primal descent and prox
        atw.gemv_tr(1.0, a, &w, 0.0);
        x.axpy(-t, &atw, 1.0);
        p.reg.prox_in_place(x.as_mut_slice(), t * lambda)?;
        ax_new.gemv(1.0, a, &x, 0.0);
        // A x_bar = 2 A x_new - A x_old
        ax_bar.copy_from(&ax_new);
        ax_bar *= 2.0;
        ax_bar -= &ax;
        std::mem::swap(&mut ax, &mut ax_new);
        iterations = k;

        x_sum += &x;
        ax_sum += &ax;
        w_sum += &w;
        since_restart += 1;
        if since_restart.is_multiple_of(RESTART_CHECK) {
            let c = since_restart as f64;
            let (x_avg, ax_avg, w_avg) = (&x_sum / c, &ax_sum / c, &w_sum / c);
            let r_avg = fixed_point_residual(&x_avg, &ax_avg, &w_avg);
            let r_cur = fixed_point_residual(&x, &ax, &w);
            let r_cand = r_avg.min(r_cur);
            let restart = r_cand <= 0.2 * anchor_residual
                || (r_cand <= 0.8 * anchor_residual && r_cand > last_candidate)
                || c >= 0.36 * k as f64;
            if restart {
                if r_avg < r_cur {
                    x = x_avg;
                    ax = ax_avg;
                    w = w_avg;
                }
                ax_bar.copy_from(&ax);
                x_sum.fill(0.0);
                ax_sum.fill(0.0);
                w_sum.fill(0.0);
                since_restart = 0;
                anchor_residual = r_cand;
                last_candidate = f64::INFINITY;
                window_sum = 0.0;
                window_len = 0;
                prev_mean = None;
                continue;
            }
            last_candidate = r_cand;
        }

        window_sum += objective_of(&x, &ax);
        window_len += 1;
        if window_len == WINDOW {
            let mean = window_sum / WINDOW as f64;
            window_means.push(mean * scale);
            window_sum = 0.0;
            window_len = 0;
            if let Some(prev) = prev_mean {
                let floor = mean.abs().max(f64::MIN_POSITIVE);
                if (mean - prev).abs() <= cfg.tol * floor
                    && duality_gap(&p.reg, lambda, &w, &atw, y, objective_of(&x, &ax))?
                        <= GAP_TOL * floor
                {
                    converged = true;
                    break;
                }
            }
            prev_mean = Some(mean);
        }
    }

    let mut objective = objective_of(&x, &ax);
    if objective > y_norm {
        // never report worse than the trivial point
        x.fill(0.0);
        ax.fill(0.0);
        objective = y_norm;
    }

    atw.gemv_tr(1.0, a, &w, 0.0);
    let gap = duality_gap(&p.reg, lambda, &w, &atw, y, objective)?;

    Ok(SolveResult {
        x_hat: x.as_slice().to_vec(),
        objective: objective * scale,
        iterations,
        converged,
        primal_dual_gap: gap * scale,
        window_means,
    })
}

/// `argmin ||y - A x||_2` via a thin QR factorization.
pub fn solve_least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "A has {m} rows but y has {}",
            y.len()
        )));
    }
    if m < n || n == 0 {
        return Err(Error::SingularMatrix);
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = diag_max * f64::EPSILON * m as f64;
    if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() <= cutoff) {
        return Err(Error::SingularMatrix);
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty).ok_or(Error::SingularMatrix)
}

/// `||x_hat - mu x0||^2`.
pub fn error_metric(x_hat: &[f64], mu: f64, x0: &[f64]) -> f64 {
    assert_eq!(x_hat.len(), x0.len(), "error_metric: dimension mismatch");
    x_hat
        .iter()
        .zip(x0)
        .map(|(a, b)| (a - mu * b) * (a - mu * b))
        .sum()
}

/// Smallest `lambda` for which `x = 0` solves the LASSO: `||A^T y||_* / ||y||`.
pub fn lambda_max(a: &DMatrix<f64>, y: &DVector<f64>, reg: &RegularizerSpec) -> Result<f64> {
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(0.0);
    }
    let aty = a.tr_mul(y);
    Ok(reg.dual_norm(aty.as_slice())? / y_norm)
}
