#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nlasso::{ProblemInstance, RegularizerSpec, SignalInstance};
use rand::Rng;
use rand_distr::StandardNormal;

/// Exact cyclic coordinate descent for `||y - A x||_2 + lambda ||x||_1`.
///
/// With `r` the residual excluding coordinate `j`, `a = ||a_j||^2`,
/// `b = <a_j, r>`, `c = ||r||^2`, the scalar problem
/// `min_z sqrt(c - 2 b z + a z^2) + lambda |z|` is solved in closed form:
/// zero when `|b| / sqrt(c) <= lambda`, otherwise
/// `z = sign(b) (|b| - lambda sqrt((a c - b^2) / (a - lambda^2))) / a`.
pub fn sqrt_lasso_cd(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = a.ncols();
    let col_sq: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let mut x = DVector::<f64>::zeros(n);
    let mut r = y.clone();
    for _ in 0..200_000 {
        let mut max_change = 0.0f64;
        for j in 0..n {
            let aj = a.column(j);
            let old = x[j];
            if old != 0.0 {
                r.axpy(old, &aj, 1.0);
            }
            let (sa, b, c) = (col_sq[j], aj.dot(&r), r.norm_squared());
            let z = if c <= 0.0 || b.abs() <= lambda * c.sqrt() {
                0.0
            } else {
                let d = (sa * c - b * b).max(0.0);
                b.signum() * (b.abs() - lambda * (d / (sa - lambda * lambda)).sqrt()) / sa
            };
            if z != 0.0 {
                r.axpy(-z, &aj, 1.0);
            }
            x[j] = z;
            max_change = max_change.max((z - old).abs());
        }
        if max_change < 1e-14 {
            break;
        }
    }
    x
}

pub fn sqrt_lasso_objective(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    x: &DVector<f64>,
) -> f64 {
    (y - a * x).norm() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn gaussian_matrix<R: Rng>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Wraps a fixed design and measurements as a solver instance.
pub fn instance(
    a: DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
    reg: RegularizerSpec,
) -> ProblemInstance {
    let n = a.ncols();
    let mut x0 = vec![0.0; n];
    x0[0] = 1.0;
    ProblemInstance {
        u: y.clone(),
        delta: a.nrows() as f64 / n as f64,
        a,
        y,
        lambda,
        reg,
        signal: SignalInstance {
            x_bar: x0.clone(),
            x0,
        },
    }
}

/// A random small instance with a sparse planted signal and noise, and
/// `lambda` a random fraction of the level at which zero becomes optimal.
pub fn random_small_instance<R: Rng>(rng: &mut R) -> ProblemInstance {
    let n = rng.random_range(5..=30);
    let m = rng.random_range(5..=30);
    let a = gaussian_matrix(m, n, rng);
    let x: DVector<f64> = DVector::from_fn(n, |_, _| {
        if rng.random::<f64>() < 0.3 {
            rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    let noise = DVector::from_fn(m, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let y = &a * x + noise;
    let lmax = nlasso::solver::lambda_max(&a, &y, &RegularizerSpec::L1).unwrap();
    let lambda = rng.random_range(0.3..0.9) * lmax;
    instance(a, y, lambda, RegularizerSpec::L1)
}
