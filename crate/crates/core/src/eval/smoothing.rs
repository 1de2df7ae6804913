//! Savitzky–Golay smoothing and the relative smoothness score.

use nalgebra::DMatrix;

use crate::kinematics::{fk_unchecked, Skeleton};
use crate::motion::MotionClip;
use crate::{Error, Result};

const EPS: f64 = 1e-8;

fn check_filter(window: usize, order: usize) -> Result<()> {
    if window.is_multiple_of(2) || window < 3 {
        return Err(Error::Config(format!("filter window must be odd and at least 3, got {window}")));
    }
    if order >= window {
        return Err(Error::Config(format!("filter order {order} must be below window {window}")));
    }
    Ok(())
}

/// Centre-point convolution weights of a least-squares polynomial fit of
/// degree `order` over `window` samples.
pub fn sg_coefficients(window: usize, order: usize) -> Result<Vec<f64>> {
    check_filter(window, order)?;
    let half = (window / 2) as f64;
    let a = DMatrix::from_fn(window, order + 1, |i, j| (i as f64 - half).powi(j as i32));
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Config(format!("singular fit for window {window}, order {order}")))?;
    // The fitted value at the centre is the constant term: row 0 of (A^T A)^-1 A^T.
    let row = inv.row(0) * a.transpose();
    Ok(row.iter().copied().collect())
}

/// Mirror index: reflects about the end samples without repeating them.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period.max(1));
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Smooths each channel of `sequence` (frames x channels).
pub fn savitzky_golay(sequence: &[Vec<f64>], window: usize, order: usize) -> Result<Vec<Vec<f64>>> {
    let coeffs = sg_coefficients(window, order)?;
    let n = sequence.len();
    if n < window {
        return Err(Error::Config(format!("sequence of {n} frames is shorter than filter window {window}")));
    }
    let width = sequence[0].len();
    if sequence.iter().any(|f| f.len() != width) {
        return Err(Error::Contract("frames have differing channel counts".into()));
    }
    let half = (window / 2) as isize;
    Ok((0..n)
        .map(|t| {
            (0..width)
                .map(|c| {
                    let centre = sequence[t][c];
                    // Written relative to the centre sample so constants pass through exactly.
                    let delta: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * (sequence[mirror(t as isize + k as isize - half, n)][c] - centre))
                        .sum();
                    centre + delta
                })
                .collect()
        })
        .collect())
}

/// `sum |c - SG(c)|` over every frame and channel.
pub fn roughness(sequence: &[Vec<f64>], window: usize, order: usize) -> Result<f64> {
    let smooth = savitzky_golay(sequence, window, order)?;
    Ok(sequence
        .iter()
        .zip(&smooth)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .sum())
}

/// Root-relative positions of `joints`, one row of `3 * joints.len()` per frame.
pub fn position_channels(clip: &MotionClip, skeleton: &Skeleton, joints: &[usize]) -> Vec<Vec<f64>> {
    clip.frames
        .iter()
        .map(|p| {
            let g = fk_unchecked(skeleton, p.rotations());
            let root = g.joint_positions[0];
            joints.iter().flat_map(|&j| (g.joint_positions[j] - root).iter().copied().collect::<Vec<_>>()).collect()
        })
        .collect()
}

/// `100 * min(1, (D(ref) + eps) / (D(agent) + eps))` with `D` the roughness of
/// the joint-position channels.
pub fn smoothness_from_roughness(d_agent: f64, d_ref: f64) -> f64 {
    100.0 * ((d_ref + EPS) / (d_agent + EPS)).min(1.0)
}

pub fn smoothness(
    agent: &MotionClip,
    reference: &MotionClip,
    skeleton: &Skeleton,
    joints: &[usize],
    window: usize,
    order: usize,
) -> Result<f64> {
    if agent.frames.is_empty() || reference.frames.is_empty() {
        return Err(Error::Contract("cannot measure smoothness of an empty clip".into()));
    }
    let d_agent = roughness(&position_channels(agent, skeleton, joints), window, order)?;
    let d_ref = roughness(&position_channels(reference, skeleton, joints), window, order)?;
    Ok(smoothness_from_roughness(d_agent, d_ref))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_five_point_quadratic() {
        let c = sg_coefficients(5, 2).unwrap();
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-12, "{c:?}");
        }
    }

    #[test]
    fn coefficients_sum_to_one() {
        for (w, o) in [(5, 2), (9, 3), (11, 4), (7, 0)] {
            let s: f64 = sg_coefficients(w, o).unwrap().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn reproduces_low_degree_polynomials_in_the_interior() {
        let seq: Vec<Vec<f64>> = (0..30)
            .map(|t| {
                let x = t as f64 * 0.1;
                vec![1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x, 4.0]
            })
            .collect();
        let s = savitzky_golay(&seq, 9, 3).unwrap();
        for t in 4..26 {
            assert!((s[t][0] - seq[t][0]).abs() <= 1e-9);
        }
        assert!(s.iter().all(|f| f[1] == 4.0));
    }

    #[test]
    fn mirror_padding() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(-2, 5), 2);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(6, 5), 2);
        assert_eq!(mirror(2, 5), 2);
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(sg_coefficients(4, 2), Err(Error::Config(_))));
        assert!(matches!(sg_coefficients(5, 5), Err(Error::Config(_))));
        assert!(matches!(savitzky_golay(&vec![vec![0.0]; 3], 5, 2), Err(Error::Config(_))));
    }

    #[test]
    fn ratio_definition() {
        assert_eq!(smoothness_from_roughness(3.0, 3.0), 100.0);
        assert!((smoothness_from_roughness(2.0, 1.0) - 50.0).abs() < 1e-6);
        assert_eq!(smoothness_from_roughness(0.5, 1.0), 100.0);
    }
}
