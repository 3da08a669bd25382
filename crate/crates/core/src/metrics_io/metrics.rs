//! Positional trajectory errors. Only translations enter these metrics.

use nalgebra::Vector3;

use super::Trajectory;
use crate::error::{Error, Result};

fn check_aligned(est: &Trajectory, gt: &Trajectory) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    for (i, (a, b)) in est.records().iter().zip(gt.records()).enumerate() {
        if a.frame != b.frame {
            return Err(Error::IndexMismatch {
                position: i,
                est: a.frame,
                gt: b.frame,
            });
        }
    }
    Ok(())
}

/// Signed per-frame position differences `p_est - p_gt`.
pub fn position_errors(est: &Trajectory, gt: &Trajectory) -> Result<Vec<Vector3<f64>>> {
    check_aligned(est, gt)?;
    Ok(est
        .records()
        .iter()
        .zip(gt.records())
        .map(|(a, b)| a.pose.translation - b.pose.translation)
        .collect())
}

/// Average displacement error: mean Euclidean position error over frames.
pub fn ade(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let e = position_errors(est, gt)?;
    Ok(e.iter().map(|d| d.norm()).sum::<f64>() / e.len() as f64)
}

/// Final displacement error: Euclidean position error at the last frame.
pub fn fde(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let e = position_errors(est, gt)?;
    Ok(e.last().expect("trajectories are non-empty").norm())
}

/// Signed mean and population standard deviation of the error per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStats {
    pub mean: Vector3<f64>,
    pub std: Vector3<f64>,
}

pub fn per_axis_error(est: &Trajectory, gt: &Trajectory) -> Result<AxisStats> {
    let e = position_errors(est, gt)?;
    let n = e.len() as f64;
    let mean = e.iter().fold(Vector3::zeros(), |acc, d| acc + d) / n;
    let var = e
        .iter()
        .fold(Vector3::zeros(), |acc, d| acc + (d - mean).component_mul(&(d - mean)))
        / n;
    Ok(AxisStats {
        mean,
        std: var.map(f64::sqrt),
    })
}
