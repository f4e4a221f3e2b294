//! Symmetric q-bit scalar quantizers of a standard normal input: closed-form
//! link moments, the `sigma^2 / mu^2` design objective, Lloyd-Max iteration
//! and a finite-difference stationarity diagnostic.

use crate::error::{Error, Result};
use crate::gaussian::{cdf, pdf, quantile, tail};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;
use std::path::Path;

/// Quantizer with levels `+-l_i` on the bands `t_{i-1} <= |x| <= t_i`.
///
/// `thresholds` has `L + 1` entries, starts at 0 and ends at `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerDesign {
    pub bits: u32,
    pub levels: Vec<f64>,
    #[serde(
        serialize_with = "serialize_thresholds",
        deserialize_with = "deserialize_thresholds"
    )]
    pub thresholds: Vec<f64>,
}

// JSON has no infinity; the last threshold is written as null.
fn serialize_thresholds<S: Serializer>(t: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Option<f64>> = t.iter().map(|&x| x.is_finite().then_some(x)).collect();
    v.serialize(s)
}

fn deserialize_thresholds<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
}

impl QuantizerDesign {
    pub fn new(bits: u32, levels: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        let d = Self {
            bits,
            levels,
            thresholds,
        };
        d.validate()?;
        Ok(d)
    }

    /// 1-bit quantizer `x -> level * sign(x)`.
    pub fn one_bit(level: f64) -> Result<Self> {
        Self::new(1, vec![level], vec![0.0, f64::INFINITY])
    }

    /// Number of positive levels, `2^(q-1)`.
    pub fn num_levels(&self) -> usize {
        1usize << (self.bits - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits < 1 || self.bits > 16 {
            return Err(Error::InvalidDesign(format!(
                "bits = {} outside 1..=16",
                self.bits
            )));
        }
        let l = self.num_levels();
        if self.levels.len() != l {
            return Err(Error::InvalidDesign(format!(
                "expected {l} levels, found {}",
                self.levels.len()
            )));
        }
        if self.thresholds.len() != l + 1 {
            return Err(Error::InvalidDesign(format!(
                "expected {} thresholds, found {}",
                l + 1,
                self.thresholds.len()
            )));
        }
        if self.thresholds[0] != 0.0 || self.thresholds[l] != f64::INFINITY {
            return Err(Error::InvalidDesign(
                "thresholds must start at 0 and end at +inf".into(),
            ));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidDesign(
                "thresholds must be strictly increasing".into(),
            ));
        }
        if !(self.levels[0] > 0.0 && self.levels.windows(2).all(|w| w[0] < w[1])) {
            return Err(Error::InvalidDesign(
                "levels must be positive and strictly increasing".into(),
            ));
        }
        if self
            .levels
            .iter()
            .chain(&self.thresholds[..l])
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidDesign(
                "levels and interior thresholds must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Quantizes one value.
    pub fn apply(&self, x: f64) -> f64 {
        let mag = x.abs();
        // band i holds t_{i-1} <= |x| < t_i
        let band = self.thresholds[1..].partition_point(|&t| t <= mag);
        let band = band.min(self.levels.len() - 1);
        let level = self.levels[band];
        if x > 0.0 {
            level
        } else if x < 0.0 {
            -level
        } else {
            // sign(0) = 0
            0.0
        }
    }

    /// Same thresholds, levels multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            bits: self.bits,
            levels: self.levels.iter().map(|l| l * c).collect(),
            thresholds: self.thresholds.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let d: Self = serde_json::from_str(&text)?;
        d.validate()?;
        Ok(d)
    }
}

/// Closed-form `(mu, tau^2, sigma^2)` of the quantizer applied to a standard
/// normal input.
pub fn quantizer_moments(d: &QuantizerDesign) -> (f64, f64, f64) {
    let c = (2.0 / PI).sqrt();
    let t = &d.thresholds;
    let mut mu = 0.0;
    let mut tau2 = 0.0;
    for (i, &l) in d.levels.iter().enumerate() {
        mu += l * (gauss_exp(t[i]) - gauss_exp(t[i + 1]));
        tau2 += l * l * (tail(t[i]) - tail(t[i + 1]));
    }
    let mu = c * mu;
    let tau2 = 2.0 * tau2;
    (mu, tau2, tau2 - mu * mu)
}

fn gauss_exp(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        (-0.5 * t * t).exp()
    }
}

/// `E[(Q(g) - mu g)^2 g^2]` in closed form.
pub(crate) fn quantizer_zeta(d: &QuantizerDesign, mu: f64) -> f64 {
    // E[Q^2 g^2] - 2 mu E[Q g^3] + 3 mu^2, each over symmetric bands
    let t = &d.thresholds;
    let mut q2g2 = 0.0;
    let mut qg3 = 0.0;
    for (i, &l) in d.levels.iter().enumerate() {
        let (a, b) = (t[i], t[i + 1]);
        // E[g^2 ; a < g < b] and E[g^3 ; a < g < b] for a >= 0
        let second = tail(a) - tail(b) + x_pdf(a) - x_pdf(b);
        let third = (a * a + 2.0) * pdf(a) - cube_pdf(b);
        q2g2 += 2.0 * l * l * second;
        qg3 += 2.0 * l * third;
    }
    q2g2 - 2.0 * mu * qg3 + 3.0 * mu * mu
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * pdf(x)
    }
}

fn cube_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (x * x + 2.0) * pdf(x)
    }
}

/// The design objective `sigma^2 / mu^2`.
pub fn design_objective(d: &QuantizerDesign) -> Result<f64> {
    let (mu, _, sigma2) = quantizer_moments(d);
    if mu.abs() < 1e-12 {
        return Err(Error::DegenerateDesign { mu });
    }
    Ok(sigma2 / (mu * mu))
}

/// Outcome of a Lloyd-Max run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub design: QuantizerDesign,
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: f64,
    pub ratio: f64,
    pub iterations: usize,
    pub stationarity_residual: f64,
}

/// Equiprobable initial design: thresholds at the quantiles `i / L` of `|g|`,
/// levels at the band conditional means.
pub fn default_design(bits: u32) -> Result<QuantizerDesign> {
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "bits = {bits} outside 1..=16"
        )));
    }
    let l = 1usize << (bits - 1);
    let mut thresholds: Vec<f64> = (0..l)
        .map(|i| quantile(0.5 + 0.5 * i as f64 / l as f64))
        .collect();
    thresholds[0] = 0.0;
    thresholds.push(f64::INFINITY);
    let levels = conditional_means(&thresholds);
    QuantizerDesign::new(bits, levels, thresholds)
}

/// `E[g | t_{i-1} <= g <= t_i]` for each band.
fn conditional_means(thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .windows(2)
        .map(|w| {
            let mass = if w[0] > 0.0 {
                tail(w[0]) - tail(w[1])
            } else {
                cdf(w[1]) - cdf(w[0])
            };
            (pdf(w[0]) - pdf(w[1])) / mass
        })
        .collect()
}

/// One Lloyd-Max sweep: thresholds to level midpoints, then levels to
/// conditional means.
pub fn lloyd_max_step(d: &QuantizerDesign) -> QuantizerDesign {
    let l = d.levels.len();
    let mut thresholds = d.thresholds.clone();
    for (t, w) in thresholds[1..l].iter_mut().zip(d.levels.windows(2)) {
        *t = 0.5 * (w[0] + w[1]);
    }
    let levels = conditional_means(&thresholds);
    QuantizerDesign {
        bits: d.bits,
        levels,
        thresholds,
    }
}

/// Mean squared quantization error `E[(Q(g) - g)^2] = tau^2 - 2 mu + 1`.
pub fn quantization_mse(d: &QuantizerDesign) -> f64 {
    let (mu, tau2, _) = quantizer_moments(d);
    tau2 - 2.0 * mu + 1.0
}

/// Runs Lloyd-Max until the largest parameter change drops below `tol`.
pub fn lloyd_max(
    bits: u32,
    init: Option<QuantizerDesign>,
    tol: f64,
    max_iters: usize,
) -> Result<DesignResult> {
    let mut design = match init {
        Some(d) => {
            d.validate()?;
            if d.bits != bits {
                return Err(Error::InvalidArgument(format!(
                    "initial design has {} bits, requested {bits}",
                    d.bits
                )));
            }
            d
        }
        None => default_design(bits)?,
    };
    let mut iterations = 0;
    loop {
        let next = lloyd_max_step(&design);
        iterations += 1;
        let change = max_change(&design, &next);
        design = next;
        if change < tol {
            break;
        }
        if iterations >= max_iters {
            return Err(Error::NotConverged { iterations });
        }
    }
    let (mu, tau2, sigma2) = quantizer_moments(&design);
    let ratio = design_objective(&design)?;
    let stationarity_residual = stationarity_check(&design, 1e-4);
    Ok(DesignResult {
        design,
        mu,
        tau2,
        sigma2,
        ratio,
        iterations,
        stationarity_residual,
    })
}

fn max_change(a: &QuantizerDesign, b: &QuantizerDesign) -> f64 {
    let l = a.levels.len();
    let levels = a.levels.iter().zip(&b.levels).map(|(x, y)| (x - y).abs());
    let thresholds = a.thresholds[1..l]
        .iter()
        .zip(&b.thresholds[1..l])
        .map(|(x, y)| (x - y).abs());
    levels.chain(thresholds).fold(0.0, f64::max)
}

/// Largest absolute central-difference partial derivative of `sigma^2 / mu^2`
/// over all levels and interior thresholds, step `h`.
pub fn stationarity_check(d: &QuantizerDesign, h: f64) -> f64 {
    let ratio = |levels: &[f64], thresholds: &[f64]| {
        let probe = QuantizerDesign {
            bits: d.bits,
            levels: levels.to_vec(),
            thresholds: thresholds.to_vec(),
        };
        let (mu, _, sigma2) = quantizer_moments(&probe);
        sigma2 / (mu * mu)
    };
    let l = d.levels.len();
    let mut worst: f64 = 0.0;
    for i in 0..l {
        let mut up = d.levels.clone();
        let mut down = d.levels.clone();
        up[i] += h;
        down[i] -= h;
        let g = (ratio(&up, &d.thresholds) - ratio(&down, &d.thresholds)) / (2.0 * h);
        worst = worst.max(g.abs());
    }
    for i in 1..l {
        let mut up = d.thresholds.clone();
        let mut down = d.thresholds.clone();
        up[i] += h;
        down[i] -= h;
        let g = (ratio(&d.levels, &up) - ratio(&d.levels, &down)) / (2.0 * h);
        worst = worst.max(g.abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_bit_moments() {
        let d = QuantizerDesign::one_bit(1.0).unwrap();
        let (mu, tau2, sigma2) = quantizer_moments(&d);
        assert_abs_diff_eq!(mu, (2.0 / PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(tau2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma2, 1.0 - 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn one_bit_ratio_is_scale_free() {
        for c in [0.3, 1.0, 7.5] {
            let d = QuantizerDesign::one_bit(c).unwrap();
            let (mu, tau2, _) = quantizer_moments(&d);
            assert_abs_diff_eq!(mu, c * (2.0 / PI).sqrt(), epsilon = 1e-14);
            assert_abs_diff_eq!(tau2, c * c, epsilon = 1e-13);
            assert_abs_diff_eq!(
                design_objective(&d).unwrap(),
                PI / 2.0 - 1.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn apply_uses_bands_and_sign() {
        let d = QuantizerDesign::one_bit(0.5).unwrap();
        assert_eq!(d.apply(2.0), 0.5);
        assert_eq!(d.apply(-2.0), -0.5);
        let d2 = QuantizerDesign::new(2, vec![0.5, 1.5], vec![0.0, 1.0, f64::INFINITY]).unwrap();
        assert_eq!(d2.apply(0.3), 0.5);
        assert_eq!(d2.apply(-0.99), -0.5);
        assert_eq!(d2.apply(1.0), 1.5);
        assert_eq!(d2.apply(-40.0), -1.5);
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(QuantizerDesign::new(2, vec![1.0, 0.5], vec![0.0, 1.0, f64::INFINITY]).is_err());
        assert!(QuantizerDesign::new(2, vec![0.5, 1.5], vec![0.0, 1.0, 2.0]).is_err());
        assert!(QuantizerDesign::new(2, vec![0.5], vec![0.0, f64::INFINITY]).is_err());
        assert!(QuantizerDesign::new(1, vec![-1.0], vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn lloyd_max_one_bit_level_is_half_normal_mean() {
        let r = lloyd_max(1, None, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(r.design.levels[0], (2.0 / PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn lloyd_max_two_bit_matches_grid_search() {
        let r = lloyd_max(2, None, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(r.design.thresholds[1], 0.9816, epsilon = 1e-4);
        assert_abs_diff_eq!(r.design.levels[0], 0.4528, epsilon = 1e-4);
        assert_abs_diff_eq!(r.design.levels[1], 1.5104, epsilon = 1e-4);

        // grid over (l1, l2) with midpoint threshold; MSE minimum should land on
        // the Lloyd-Max point
        let mse = |l1: f64, l2: f64| {
            let d = QuantizerDesign {
                bits: 2,
                levels: vec![l1, l2],
                thresholds: vec![0.0, 0.5 * (l1 + l2), f64::INFINITY],
            };
            quantization_mse(&d)
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let step = 1e-3;
        for i in 0..=400 {
            for j in 0..=400 {
                let l1 = 0.3 + step * i as f64;
                let l2 = 1.3 + step * j as f64;
                let v = mse(l1, l2);
                if v < best.0 {
                    best = (v, l1, l2);
                }
            }
        }
        assert!((best.1 - r.design.levels[0]).abs() <= step);
        assert!((best.2 - r.design.levels[1]).abs() <= step);
    }

    #[test]
    fn mse_decreases_every_sweep() {
        for bits in 2..=4 {
            let mut d = default_design(bits).unwrap();
            let mut prev = quantization_mse(&d);
            for _ in 0..200 {
                d = lloyd_max_step(&d);
                let cur = quantization_mse(&d);
                assert!(cur <= prev + 1e-15, "bits={bits}: {cur} > {prev}");
                prev = cur;
            }
        }
    }

    #[test]
    fn perturbed_design_is_not_stationary() {
        let mut d = lloyd_max(2, None, 1e-12, 10_000).unwrap().design;
        assert!(stationarity_check(&d, 1e-4) < 1e-6);
        d.levels[0] += 0.1;
        assert!(stationarity_check(&d, 1e-4) > 1e-3);
    }

    #[test]
    fn design_json_round_trip_keeps_infinity() {
        let d = lloyd_max(3, None, 1e-12, 10_000).unwrap().design;
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("null"));
        let back: QuantizerDesign = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn zeta_of_sign_link() {
        let d = QuantizerDesign::one_bit(1.0).unwrap();
        let (mu, _, _) = quantizer_moments(&d);
        // E[(sign g - mu g)^2 g^2] = 1 - 4 mu sqrt(2/pi) + 3 mu^2 = 1 - 2/pi
        assert_abs_diff_eq!(quantizer_zeta(&d, mu), 1.0 - 2.0 / PI, epsilon = 1e-14);
    }
}
