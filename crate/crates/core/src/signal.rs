//! Structured signal priors with unit per-coordinate second moment.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalPrior {
    /// `(1 - rho) delta_0 + rho N(0, 1/rho)`
    SparseGauss { rho: f64 },
    /// `(1 - rho) delta_0 + rho/2 delta_{+a} + rho/2 delta_{-a}`, `a = 1/sqrt(rho)`
    SparseSymmetric { rho: f64 },
    /// Blocks of length `block` that are zero w.p. `1 - rho` and otherwise
    /// `N(0, I / rho)`.
    GroupSparseGauss { rho: f64, block: usize },
}

/// A sampled signal: the raw draw and its unit-norm direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalInstance {
    pub x_bar: Vec<f64>,
    pub x0: Vec<f64>,
}

impl SignalInstance {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    /// `n^-1 ||x_bar||^2`
    pub fn empirical_second_moment(&self) -> f64 {
        self.x_bar.iter().map(|v| v * v).sum::<f64>() / self.x_bar.len() as f64
    }

    pub fn support_size(&self) -> usize {
        self.x_bar.iter().filter(|v| **v != 0.0).count()
    }
}

impl SignalPrior {
    pub fn rho(&self) -> f64 {
        match *self {
            SignalPrior::SparseGauss { rho }
            | SignalPrior::SparseSymmetric { rho }
            | SignalPrior::GroupSparseGauss { rho, .. } => rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.rho();
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must lie in (0, 1], got {rho}"
            )));
        }
        if let SignalPrior::GroupSparseGauss { block, .. } = self {
            if *block == 0 {
                return Err(Error::InvalidArgument("block size must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Parses `sparse_gauss:0.15`, `sparse_sym:0.10` or `group_gauss:0.05:3`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').map(str::trim).collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{s}` in prior `{spec}`")))
        };
        let prior = match parts.as_slice() {
            ["sparse_gauss", r] => SignalPrior::SparseGauss { rho: num(r)? },
            ["sparse_sym", r] => SignalPrior::SparseSymmetric { rho: num(r)? },
            ["group_gauss", r, b] => SignalPrior::GroupSparseGauss {
                rho: num(r)?,
                block: b.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad block size `{b}` in prior `{spec}`"))
                })?,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown prior `{spec}`"))),
        };
        prior.validate()?;
        Ok(prior)
    }

    /// Draws `x_bar` and normalizes it; an all-zero draw is redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SignalInstance> {
        self.validate()?;
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "signal dimension must be >= 1".into(),
            ));
        }
        if let SignalPrior::GroupSparseGauss { block, .. } = self {
            if !n.is_multiple_of(*block) {
                return Err(Error::DimensionMismatch(format!(
                    "block size {block} does not divide n = {n}"
                )));
            }
        }
        loop {
            let x_bar = self.draw(n, rng);
            let norm = x_bar.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let x0 = x_bar.iter().map(|v| v / norm).collect();
                return Ok(SignalInstance { x_bar, x0 });
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            SignalPrior::SparseGauss { rho } => {
                let sd = rho.sqrt().recip();
                (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < rho {
                            sd * rng.sample::<f64, _>(StandardNormal)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            SignalPrior::SparseSymmetric { rho } => {
                let a = rho.sqrt().recip();
                (0..n)
                    .map(|_| {
                        let u = rng.random::<f64>();
                        if u < 0.5 * rho {
                            a
                        } else if u < rho {
                            -a
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            SignalPrior::GroupSparseGauss { rho, block } => {
                let sd = rho.sqrt().recip();
                let mut x = Vec::with_capacity(n);
                for _ in 0..n / block {
                    if rng.random::<f64>() < rho {
                        x.extend((0..block).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
                    } else {
                        x.extend(std::iter::repeat_n(0.0, block));
                    }
                }
                x
            }
        }
    }
}

impl fmt::Display for SignalPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalPrior::SparseGauss { rho } => write!(f, "sparse_gauss:{rho}"),
            SignalPrior::SparseSymmetric { rho } => write!(f, "sparse_sym:{rho}"),
            SignalPrior::GroupSparseGauss { rho, block } => write!(f, "group_gauss:{rho}:{block}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_norm_and_deterministic() {
        let prior = SignalPrior::SparseGauss { rho: 0.15 };
        let a = prior
            .sample(768, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let b = prior
            .sample(768, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sparse_gauss_support_rate() {
        let prior = SignalPrior::SparseGauss { rho: 0.15 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let total: usize = (0..200)
            .map(|_| prior.sample(768, &mut rng).unwrap().support_size())
            .sum();
        let mean = total as f64 / 200.0;
        // binomial(768, 0.15): sd 9.9 per draw, 0.70 for the mean
        assert!((mean - 115.2).abs() < 3.0, "mean support {mean}");
    }

    #[test]
    fn sparse_symmetric_values() {
        let prior = SignalPrior::SparseSymmetric { rho: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = 0.1f64.sqrt().recip();
        let mut total = 0;
        for _ in 0..200 {
            let s = prior.sample(512, &mut rng).unwrap();
            assert!(s
                .x_bar
                .iter()
                .all(|&v| v == 0.0 || (v.abs() - a).abs() < 1e-12));
            total += s.support_size();
        }
        let mean = total as f64 / 200.0;
        assert!((mean - 51.2).abs() < 2.0, "mean support {mean}");
    }

    #[test]
    fn group_blocks_all_or_nothing() {
        let prior = SignalPrior::GroupSparseGauss {
            rho: 0.05,
            block: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut active = 0;
        for _ in 0..100 {
            let s = prior.sample(1536, &mut rng).unwrap();
            for chunk in s.x_bar.chunks(3) {
                let nz = chunk.iter().filter(|v| **v != 0.0).count();
                assert!(nz == 0 || nz == 3);
                active += usize::from(nz == 3);
            }
        }
        let mean = active as f64 / 100.0;
        assert!((mean - 25.6).abs() < 1.5, "mean active blocks {mean}");
    }

    #[test]
    fn group_requires_divisible_dimension() {
        let prior = SignalPrior::GroupSparseGauss {
            rho: 0.05,
            block: 3,
        };
        let err = prior.sample(10, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn second_moment_examples() {
        let s = SignalInstance {
            x_bar: vec![1.0; 4],
            x0: vec![0.5; 4],
        };
        assert_eq!(s.empirical_second_moment(), 1.0);

        // tiny rho forces the all-zero redraw path; result is never zero
        let prior = SignalPrior::SparseGauss { rho: 1e-3 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            assert!(prior.sample(8, &mut rng).unwrap().empirical_second_moment() > 0.0);
        }

        // n = 1e5: sd of the moment is sqrt((3/rho - 1)/n) ~ 0.014
        let s = SignalPrior::SparseGauss { rho: 0.15 }
            .sample(100_000, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert!((s.empirical_second_moment() - 1.0).abs() < 0.02 * 3.0);
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            SignalPrior::parse("sparse_gauss:0.15").unwrap(),
            SignalPrior::SparseGauss { rho: 0.15 }
        );
        assert_eq!(
            SignalPrior::parse("group_gauss:0.05:3").unwrap(),
            SignalPrior::GroupSparseGauss {
                rho: 0.05,
                block: 3
            }
        );
        assert!(SignalPrior::parse("sparse_sym:1.5").is_err());
        assert!(SignalPrior::parse("group_gauss:0.1:0").is_err());
        assert!(SignalPrior::parse("laplace:1").is_err());
    }
}
