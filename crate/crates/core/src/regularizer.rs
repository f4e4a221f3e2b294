//! Norm regularizers: evaluation, proximal maps and the limiting
//! conjugate-prox functional `F(c1, c2, c3)` that summarizes a (regularizer,
//! prior) pair inside the max-min error program.

use crate::error::{Error, Result};
use crate::gaussian::ThresholdStats;
use crate::signal::SignalPrior;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerSpec {
    L1,
    /// Sum of Euclidean norms of consecutive blocks of this length.
    GroupL12 {
        block: usize,
    },
}

/// Soft thresholding `sign(x) (|x| - t)_+`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        if let RegularizerSpec::GroupL12 { block: 0 } = self {
            return Err(Error::InvalidArgument("block size must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses `l1` or `group_l12:<b>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let reg = match spec.split_once(':') {
            None if spec == "l1" => RegularizerSpec::L1,
            Some(("group_l12", b)) => RegularizerSpec::GroupL12 {
                block: b.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad block size in regularizer `{spec}`"))
                })?,
            },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown regularizer `{spec}`"
                )))
            }
        };
        reg.validate()?;
        Ok(reg)
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            RegularizerSpec::GroupL12 { block } if *block == 0 || !n.is_multiple_of(*block) => Err(
                Error::DimensionMismatch(format!("block size {block} does not divide {n}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match self {
            RegularizerSpec::L1 => x.iter().map(|v| v.abs()).sum(),
            RegularizerSpec::GroupL12 { block } => x
                .chunks(*block)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum(),
        })
    }

    /// Dual norm of `v`: `max |v_i|` for L1, the largest block norm for L1,2.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(match self {
            RegularizerSpec::L1 => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            RegularizerSpec::GroupL12 { block } => v
                .chunks(*block)
                .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        })
    }

    /// `argmin_x 1/2 ||v - x||^2 + t f(x)`.
    pub fn prox(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, t)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, v: &mut [f64], t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prox step must be >= 0, got {t}"
            )));
        }
        self.check_dim(v.len())?;
        match self {
            RegularizerSpec::L1 => v.iter_mut().for_each(|x| *x = soft_threshold(*x, t)),
            RegularizerSpec::GroupL12 { block } => {
                for c in v.chunks_mut(*block) {
                    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                    c.iter_mut().for_each(|x| *x *= scale);
                }
            }
        }
        Ok(())
    }

    fn check_prior(&self, prior: &SignalPrior) -> Result<()> {
        prior.validate()?;
        match (self, prior) {
            (RegularizerSpec::L1, SignalPrior::SparseGauss { .. })
            | (RegularizerSpec::L1, SignalPrior::SparseSymmetric { .. }) => Ok(()),
            (
                RegularizerSpec::GroupL12 { block },
                SignalPrior::GroupSparseGauss { block: b, .. },
            ) if block == b => Ok(()),
            _ => Err(Error::IncompatiblePrior(format!("{self} with {prior}"))),
        }
    }

    /// Per-coordinate threshold statistics of `c1 h + c2 X0` at threshold 1
    /// (for L1) or of the block radius `||c1 h + c2 X0|| / 1` (for L1,2),
    /// averaged over the prior mixture.
    fn argument_stats(&self, prior: &SignalPrior, c1: f64, c2: f64) -> Result<ThresholdStats> {
        self.check_prior(prior)?;
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "F arguments must be nonnegative, got ({c1}, {c2})"
            )));
        }
        Ok(match prior {
            SignalPrior::GroupSparseGauss { rho, block } => {
                let mut s = ThresholdStats::default();
                s.add_weighted(1.0 - rho, &ThresholdStats::radial(*block, c1, 1.0));
                let sd = (c1 * c1 + c2 * c2 / rho).sqrt();
                s.add_weighted(*rho, &ThresholdStats::radial(*block, sd, 1.0));
                s
            }
            _ => scalar_mixture_stats(prior, c1, c2, 1.0),
        })
    }

    /// `F(c1, c2, c3) = 1/2 E[eta^2(c1 h + c2 X0; 1)]` for L1 and
    /// `1/(2b) E[||eta(c1 h + c2 X0; 1)||^2]` for L1,2.
    ///
    /// Both conjugates are indicators of dual-norm balls, so the value does
    /// not depend on `c3`.
    pub fn f_function(&self, prior: &SignalPrior, c1: f64, c2: f64, _c3: f64) -> Result<f64> {
        let s = self.argument_stats(prior, c1, c2)?;
        Ok(0.5 * s.soft_sq() / self.block_len() as f64)
    }

    /// `1/2 (c1^2 + c2^2) - F(c1, c2, c3)`, evaluated directly from the
    /// clipped part so that it stays accurate when `c2` is large.
    pub fn f_complement(&self, prior: &SignalPrior, c1: f64, c2: f64) -> Result<f64> {
        let s = self.argument_stats(prior, c1, c2)?;
        Ok(0.5 * s.clipped_energy(1.0) / self.block_len() as f64)
    }

    fn block_len(&self) -> usize {
        match self {
            RegularizerSpec::L1 => 1,
            RegularizerSpec::GroupL12 { block } => *block,
        }
    }
}

/// Threshold statistics of `W = c1 h + c2 X0` (scalar prior) at threshold
/// `theta`, as an exact Gaussian mixture over the prior's components.
pub(crate) fn scalar_mixture_stats(
    prior: &SignalPrior,
    c1: f64,
    c2: f64,
    theta: f64,
) -> ThresholdStats {
    let mut s = ThresholdStats::default();
    match *prior {
        SignalPrior::SparseGauss { rho } => {
            s.add_weighted(1.0 - rho, &ThresholdStats::normal(0.0, c1, theta));
            let sd = (c1 * c1 + c2 * c2 / rho).sqrt();
            s.add_weighted(rho, &ThresholdStats::normal(0.0, sd, theta));
        }
        SignalPrior::SparseSymmetric { rho } => {
            let a = c2 / rho.sqrt();
            s.add_weighted(1.0 - rho, &ThresholdStats::normal(0.0, c1, theta));
            s.add_weighted(0.5 * rho, &ThresholdStats::normal(a, c1, theta));
            s.add_weighted(0.5 * rho, &ThresholdStats::normal(-a, c1, theta));
        }
        SignalPrior::GroupSparseGauss { .. } => {
            unreachable!("block priors use radial statistics")
        }
    }
    s
}

impl fmt::Display for RegularizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularizerSpec::L1 => write!(f, "l1"),
            RegularizerSpec::GroupL12 { block } => write!(f, "group_l12:{block}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn eval_examples() {
        assert_eq!(RegularizerSpec::L1.eval(&[1.0, -2.0, 0.0]).unwrap(), 3.0);
        assert_eq!(
            RegularizerSpec::GroupL12 { block: 2 }
                .eval(&[3.0, 4.0, 0.0, 0.0])
                .unwrap(),
            5.0
        );
        assert_eq!(RegularizerSpec::L1.eval(&[0.0; 5]).unwrap(), 0.0);
        assert!(RegularizerSpec::GroupL12 { block: 2 }
            .eval(&[1.0; 3])
            .is_err());
    }

    #[test]
    fn prox_examples() {
        let p = RegularizerSpec::L1.prox(&[3.0, -0.5, 1.0], 1.0).unwrap();
        assert_eq!(p, vec![2.0, 0.0, 0.0]);
        let v = [0.3, -1.2, 4.0, 0.0];
        assert_eq!(RegularizerSpec::L1.prox(&v, 0.0).unwrap(), v.to_vec());
        let g = RegularizerSpec::GroupL12 { block: 2 };
        assert_eq!(g.prox(&v, 0.0).unwrap(), v.to_vec());
        let p = g.prox(&[3.0, 4.0], 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 3.2, epsilon = 1e-15);
        assert!(RegularizerSpec::L1.prox(&v, -1.0).is_err());
    }

    #[test]
    fn group_prox_matches_line_search() {
        // the minimizer lies on the ray through v; minimize 1/2 (5 - r)^2 + r
        // over r by golden section and compare
        let obj = |r: f64| 0.5 * (5.0 - r) * (5.0 - r) + r.abs();
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if obj(a) < obj(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let r = 0.5 * (lo + hi);
        let p = RegularizerSpec::GroupL12 { block: 2 }
            .prox(&[3.0, 4.0], 1.0)
            .unwrap();
        // golden section resolves the minimizer to ~sqrt(machine eps)
        assert_abs_diff_eq!(p[0], 0.6 * r, epsilon = 1e-7);
        assert_abs_diff_eq!(p[1], 0.8 * r, epsilon = 1e-7);
    }

    fn prox_objective(reg: &RegularizerSpec, v: &[f64], x: &[f64], t: f64) -> f64 {
        let d: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * d + t * reg.eval(x).unwrap()
    }

    proptest! {
        #[test]
        fn prox_is_optimal(
            v in prop::collection::vec(-5.0f64..5.0, 6),
            t in 0.0f64..3.0,
            seed in 0u64..1000,
            grouped in any::<bool>(),
        ) {
            let reg = if grouped { RegularizerSpec::GroupL12 { block: 3 } } else { RegularizerSpec::L1 };
            let p = reg.prox(&v, t).unwrap();
            let best = prox_objective(&reg, &v, &p, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let x: Vec<f64> = p.iter().map(|a| a + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
                prop_assert!(best <= prox_objective(&reg, &v, &x, t) + 1e-12);
            }
        }

        #[test]
        fn prox_is_nonexpansive(
            v1 in prop::collection::vec(-5.0f64..5.0, 6),
            v2 in prop::collection::vec(-5.0f64..5.0, 6),
            t in 0.0f64..3.0,
            grouped in any::<bool>(),
        ) {
            let reg = if grouped { RegularizerSpec::GroupL12 { block: 2 } } else { RegularizerSpec::L1 };
            let p1 = reg.prox(&v1, t).unwrap();
            let p2 = reg.prox(&v2, t).unwrap();
            let dp: f64 = p1.iter().zip(&p2).map(|(a, b)| (a - b) * (a - b)).sum();
            let dv: f64 = v1.iter().zip(&v2).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(dp <= dv + 1e-12);
        }
    }

    #[test]
    fn f_function_zero_at_origin() {
        let p = SignalPrior::SparseGauss { rho: 0.15 };
        assert_eq!(
            RegularizerSpec::L1.f_function(&p, 0.0, 0.0, 0.7).unwrap(),
            0.0
        );
        let g = SignalPrior::GroupSparseGauss { rho: 0.1, block: 3 };
        let reg = RegularizerSpec::GroupL12 { block: 3 };
        assert_eq!(reg.f_function(&g, 0.0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn f_function_dense_large_c2() {
        // rho -> 1, c1 = 0: F ~ c2^2 / 2
        let p = SignalPrior::SparseGauss { rho: 0.999999 };
        for c2 in [1e2, 1e3, 1e4] {
            let f = RegularizerSpec::L1.f_function(&p, 0.0, c2, 0.0).unwrap();
            let rel = f / (0.5 * c2 * c2);
            assert!((rel - 1.0).abs() < 2.0 / c2, "c2={c2}: ratio {rel}");
        }
    }

    #[test]
    fn f_function_sparse_gauss_matches_monte_carlo() {
        let prior = SignalPrior::SparseGauss { rho: 0.15 };
        let f = RegularizerSpec::L1
            .f_function(&prior, 1.0, 1.0, 0.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000_000;
        let sd = 0.15f64.sqrt().recip();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let h: f64 = rng.sample(StandardNormal);
            let x = if rng.random::<f64>() < 0.15 {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let e = 0.5 * soft_threshold(h + x, 1.0).powi(2);
            s1 += e;
            s2 += e * e;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((f - mean).abs() < 3.0 * se, "F={f} mc={mean} se={se}");
    }

    #[test]
    fn f_function_sparse_symmetric_matches_monte_carlo() {
        let prior = SignalPrior::SparseSymmetric { rho: 0.1 };
        let f = RegularizerSpec::L1
            .f_function(&prior, 0.7, 0.4, 0.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let n = 4_000_000;
        let a = 0.1f64.sqrt().recip();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let h: f64 = rng.sample(StandardNormal);
            let u = rng.random::<f64>();
            let x = if u < 0.05 {
                a
            } else if u < 0.1 {
                -a
            } else {
                0.0
            };
            let e = 0.5 * soft_threshold(0.7 * h + 0.4 * x, 1.0).powi(2);
            s1 += e;
            s2 += e * e;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((f - mean).abs() < 3.0 * se, "F={f} mc={mean} se={se}");
    }

    #[test]
    fn f_function_group_matches_monte_carlo() {
        let prior = SignalPrior::GroupSparseGauss {
            rho: 0.05,
            block: 3,
        };
        let reg = RegularizerSpec::GroupL12 { block: 3 };
        let f = reg.f_function(&prior, 0.8, 0.3, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let n = 1_000_000;
        let sd = 0.05f64.sqrt().recip();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let active = rng.random::<f64>() < 0.05;
            let mut r2 = 0.0;
            for _ in 0..3 {
                let h: f64 = rng.sample(StandardNormal);
                let x = if active {
                    sd * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let w = 0.8 * h + 0.3 * x;
                r2 += w * w;
            }
            let e = (r2.sqrt() - 1.0).max(0.0).powi(2) / 6.0;
            s1 += e;
            s2 += e * e;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((f - mean).abs() < 3.0 * se, "F={f} mc={mean} se={se}");
        assert!(se / mean < 1e-2);
    }

    #[test]
    fn group_of_one_equals_l1() {
        let scalar = SignalPrior::SparseGauss { rho: 0.2 };
        let block = SignalPrior::GroupSparseGauss { rho: 0.2, block: 1 };
        let g = RegularizerSpec::GroupL12 { block: 1 };
        for (c1, c2) in [(0.3, 0.2), (1.0, 1.0), (2.5, 0.1), (0.05, 3.0)] {
            let a = RegularizerSpec::L1
                .f_function(&scalar, c1, c2, 0.0)
                .unwrap();
            let b = g.f_function(&block, c1, c2, 0.0).unwrap();
            // incomplete-gamma path vs erfc path
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            let a = RegularizerSpec::L1.f_complement(&scalar, c1, c2).unwrap();
            let b = g.f_complement(&block, c1, c2).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn complement_adds_up() {
        let cases = [
            (RegularizerSpec::L1, SignalPrior::SparseGauss { rho: 0.15 }),
            (
                RegularizerSpec::L1,
                SignalPrior::SparseSymmetric { rho: 0.1 },
            ),
            (
                RegularizerSpec::GroupL12 { block: 3 },
                SignalPrior::GroupSparseGauss {
                    rho: 0.05,
                    block: 3,
                },
            ),
        ];
        for (reg, prior) in cases {
            for (c1, c2) in [(0.2, 0.3), (1.0, 1.0), (3.0, 0.5), (0.5, 4.0)] {
                let f = reg.f_function(&prior, c1, c2, 0.0).unwrap();
                let g = reg.f_complement(&prior, c1, c2).unwrap();
                assert_abs_diff_eq!(f + g, 0.5 * (c1 * c1 + c2 * c2), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn f_function_monotone_and_c3_free() {
        let cases = [
            (RegularizerSpec::L1, SignalPrior::SparseGauss { rho: 0.15 }),
            (
                RegularizerSpec::L1,
                SignalPrior::SparseSymmetric { rho: 0.1 },
            ),
            (
                RegularizerSpec::GroupL12 { block: 3 },
                SignalPrior::GroupSparseGauss {
                    rho: 0.05,
                    block: 3,
                },
            ),
        ];
        for (reg, prior) in cases {
            let grid: Vec<f64> = (0..25).map(|i| 0.2 * i as f64).collect();
            for &c2 in &grid {
                let mut prev = -1.0;
                for &c1 in &grid {
                    let f = reg.f_function(&prior, c1, c2, 0.0).unwrap();
                    assert!(f >= prev - 1e-15);
                    prev = f;
                    assert_eq!(f, reg.f_function(&prior, c1, c2, 3.7).unwrap());
                }
            }
            for &c1 in &grid {
                let mut prev = -1.0;
                for &c2 in &grid {
                    let f = reg.f_function(&prior, c1, c2, 1.0).unwrap();
                    assert!(f >= prev - 1e-15);
                    prev = f;
                }
            }
        }
    }

    #[test]
    fn incompatible_priors_rejected() {
        let g = SignalPrior::GroupSparseGauss {
            rho: 0.05,
            block: 3,
        };
        assert!(matches!(
            RegularizerSpec::L1.f_function(&g, 1.0, 1.0, 0.0),
            Err(Error::IncompatiblePrior(_))
        ));
        let reg = RegularizerSpec::GroupL12 { block: 2 };
        assert!(reg.f_function(&g, 1.0, 1.0, 0.0).is_err());
        assert!(reg
            .f_function(&SignalPrior::SparseGauss { rho: 0.1 }, 1.0, 1.0, 0.0)
            .is_err());
    }
}
