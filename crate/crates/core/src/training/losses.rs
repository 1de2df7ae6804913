//! The three loss components on plain sequences.
//!
//! Training evaluates the same formulas inside the autodiff graph; these
//! versions are the reference the graph is tested against.

use serde::{Deserialize, Serialize};

use crate::agent::tape::huber;
use crate::agent::GaussianParams;
use crate::{Error, Result};

fn check_lengths(what: &str, a: usize, b: usize, mask: usize) -> Result<()> {
    if a == b && b == mask {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what}: sequence lengths {a}, {b} and mask {mask} differ")))
    }
}

fn masked_mean<'a>(
    what: &str,
    xs: &'a [Vec<f64>],
    ys: &'a [Vec<f64>],
    mask: &[bool],
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    check_lengths(what, xs.len(), ys.len(), mask.len())?;
    let (mut sum, mut n) = (0.0, 0usize);
    for ((x, y), _) in xs.iter().zip(ys).zip(mask).filter(|(_, m)| **m) {
        if x.len() != y.len() {
            return Err(Error::Contract(format!("{what}: step widths {} and {} differ", x.len(), y.len())));
        }
        sum += x.iter().zip(y).map(|(a, b)| f(*a, *b)).sum::<f64>();
        n += x.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean squared error between decoded and measured descriptions.
pub fn loss_l1(decoded: &[Vec<f64>], d_real: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
    masked_mean("loss_l1", decoded, d_real, mask, |a, b| (a - b) * (a - b))
}

/// `KL(q || p)` for diagonal Gaussians, summed over dimensions.
pub fn kl_diag(q_mean: &[f64], q_std: &[f64], p_mean: &[f64], p_std: &[f64]) -> f64 {
    (0..q_mean.len())
        .map(|i| {
            let (sq, sp) = (q_std[i], p_std[i]);
            let d = q_mean[i] - p_mean[i];
            (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

/// Mean over valid steps of `KL(posterior || prior)`.
pub fn loss_l2(posterior: &[GaussianParams], prior: &[GaussianParams], mask: &[bool], min_stddev: f64) -> Result<f64> {
    check_lengths("loss_l2", posterior.len(), prior.len(), mask.len())?;
    let (mut sum, mut n) = (0.0, 0usize);
    for ((q, p), _) in posterior.iter().zip(prior).zip(mask).filter(|(_, m)| **m) {
        let width = q.mean.len();
        if [q.stddev.len(), p.mean.len(), p.stddev.len()].iter().any(|w| *w != width) {
            return Err(Error::Contract("loss_l2: Gaussian widths differ".into()));
        }
        if q.stddev.iter().chain(&p.stddev).any(|s| !(*s >= min_stddev)) {
            return Err(Error::Contract(format!("loss_l2: stddev below floor {min_stddev}")));
        }
        sum += kl_diag(&q.mean, &q.stddev, &p.mean, &p.stddev);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean elementwise Huber penalty between generated and clip unit actions.
pub fn loss_l3(generated: &[Vec<f64>], m: &[Vec<f64>], delta: f64, mask: &[bool]) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Contract(format!("huber delta must be positive, got {delta}")));
    }
    masked_mean("loss_l3", generated, m, mask, |a, b| huber(a - b, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { l1: 1.0, l2: 1.0, l3: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.l1, self.l2, self.l3].iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and non-negative, got {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

/// `w1 L1 + w2 L2 + w3 L3`; a zero weight ignores its component entirely.
pub fn total_loss(parts: LossParts, weights: LossWeights) -> Result<f64> {
    let mut total = 0.0;
    for (name, value, w) in [("l1", parts.l1, weights.l1), ("l2", parts.l2, weights.l2), ("l3", parts.l3, weights.l3)] {
        if !value.is_finite() {
            return Err(Error::numeric(format!("loss component {name} is {value}")));
        }
        if w != 0.0 {
            total += w * value;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(mean: &[f64], std: &[f64]) -> GaussianParams {
        GaussianParams {
            mean: mean.to_vec(),
            stddev: std.to_vec(),
        }
    }

    #[test]
    fn l1_cases() {
        let a = vec![vec![0.5], vec![9.0]];
        let b = vec![vec![0.0], vec![0.0]];
        assert_eq!(loss_l1(&a, &b, &[true, false]).unwrap(), 0.25);
        assert_eq!(loss_l1(&a, &a, &[true, true]).unwrap(), 0.0);
        assert!(loss_l1(&a, &b[..1], &[true]).is_err());
    }

    #[test]
    fn l2_cases() {
        let p = g(&[0.0], &[1.0]);
        assert_eq!(loss_l2(std::slice::from_ref(&p), std::slice::from_ref(&p), &[true], 0.01).unwrap(), 0.0);
        let q = g(&[1.0], &[1.0]);
        assert!((loss_l2(&[q], std::slice::from_ref(&p), &[true], 0.01).unwrap() - 0.5).abs() < 1e-15);
        let tiny = g(&[0.0], &[0.001]);
        assert!(loss_l2(&[tiny], &[p], &[true], 0.01).is_err());
    }

    #[test]
    fn l3_cases() {
        let r = |x: f64| loss_l3(&[vec![x]], &[vec![0.0]], 1.0, &[true]).unwrap();
        assert_eq!(r(0.5), 0.125);
        assert_eq!(r(2.0), 1.5);
        assert_eq!(r(1.0), 0.5);
        assert!(loss_l3(&[vec![0.0]], &[vec![0.0]], 0.0, &[true]).is_err());
    }

    #[test]
    fn total_cases() {
        let w = LossWeights::default();
        assert_eq!(total_loss(LossParts::default(), w).unwrap(), 0.0);
        let parts = LossParts { l1: 1.0, l2: 2.0, l3: 3.0 };
        assert_eq!(total_loss(parts, w).unwrap(), 6.0);
        let w = LossWeights { l1: 1.0, l2: 0.0, l3: 1.0 };
        let a = total_loss(LossParts { l2: 5.0, ..parts }, w).unwrap();
        let b = total_loss(LossParts { l2: 500.0, ..parts }, w).unwrap();
        assert_eq!(a, b);
        let err = total_loss(LossParts { l2: f64::NAN, ..parts }, w).unwrap_err();
        assert!(err.to_string().contains("l2"));
    }
}
