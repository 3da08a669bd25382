use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{per_axis_error, position_errors, Trajectory};
use crate::error::{Error, Result};

/// Positional metrics of one trajectory against ground truth, meters, plus
/// rotation and joint diagnostics that are not part of the positional
/// metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ade: f64,
    pub fde: f64,
    pub mean_error_xyz: Vector3<f64>,
    /// Population standard deviation across frames.
    pub std_error_xyz: Vector3<f64>,
    pub per_frame_errors: Vec<f64>,
    /// Geodesic rotation error per frame, degrees.
    pub rotation_errors_deg: Vec<f64>,
    /// Absolute joint error per frame, radians.
    pub joint_abs_errors: Vec<Vector3<f64>>,
}

impl MetricsReport {
    pub fn compute(est: &Trajectory, gt: &Trajectory) -> Result<Self> {
        let errors = position_errors(est, gt)?;
        let per_frame_errors: Vec<f64> = errors.iter().map(|d| d.norm()).collect();
        let axis = per_axis_error(est, gt)?;
        let pairs = || est.records().iter().zip(gt.records());
        Ok(Self {
            ade: per_frame_errors.iter().sum::<f64>() / per_frame_errors.len() as f64,
            fde: *per_frame_errors.last().expect("non-empty"),
            mean_error_xyz: axis.mean,
            std_error_xyz: axis.std,
            rotation_errors_deg: pairs()
                .map(|(a, b)| a.pose.rotation.angle_to(&b.pose.rotation).to_degrees())
                .collect(),
            joint_abs_errors: pairs().map(|(a, b)| (a.q.0 - b.q.0).abs()).collect(),
            per_frame_errors,
        })
    }

    /// Human-readable summary in millimeters.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mm = 1e3;
        writeln!(s, "# positional metrics, millimeters; std is the population std across frames").unwrap();
        writeln!(s, "frames: {}", self.per_frame_errors.len()).unwrap();
        writeln!(s, "ADE: {:.2}", self.ade * mm).unwrap();
        writeln!(s, "FDE: {:.2}", self.fde * mm).unwrap();
        writeln!(s, "Mean Error (x, y, z): {}", format_vector_mm(&self.mean_error_xyz)).unwrap();
        writeln!(s, "Std Error (x, y, z): {}", format_vector_mm(&self.std_error_xyz)).unwrap();
        writeln!(s, "# diagnostics (not positional metrics)").unwrap();
        let n = self.rotation_errors_deg.len() as f64;
        let rot_mean = self.rotation_errors_deg.iter().sum::<f64>() / n;
        let rot_max = self.rotation_errors_deg.iter().copied().fold(0.0, f64::max);
        writeln!(s, "rotation error, degrees: mean {rot_mean:.3}, max {rot_max:.3}").unwrap();
        let jm = self.joint_abs_errors.iter().fold(Vector3::zeros(), |a, e| a + e) / n;
        writeln!(s, "joint abs error, rad (q1, q2, q3): [{:.4}, {:.4}, {:.4}]", jm.x, jm.y, jm.z).unwrap();
        s
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Cross-trajectory summary.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub count: usize,
    pub ade: MeanStd,
    pub fde: MeanStd,
    /// Per-axis mean error: mean and std across trajectories.
    pub mean_error_xyz: [MeanStd; 3],
    /// Per-axis across-frame std: mean and std across trajectories.
    pub std_error_xyz: [MeanStd; 3],
}

pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let col = |f: &dyn Fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        count: reports.len(),
        ade: col(&|r| r.ade),
        fde: col(&|r| r.fde),
        mean_error_xyz: [0, 1, 2].map(|i| col(&|r| r.mean_error_xyz[i])),
        std_error_xyz: [0, 1, 2].map(|i| col(&|r| r.std_error_xyz[i])),
    })
}

impl AggregateReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mm = |m: &MeanStd| format_mean_std(m.mean * 1e3, m.std * 1e3);
        let axes = |v: &[MeanStd; 3]| {
            format!("[{}, {}, {}]", mm(&v[0]), mm(&v[1]), mm(&v[2]))
        };
        writeln!(s, "# {} trajectories, millimeters, mean ± population std across trajectories", self.count).unwrap();
        writeln!(s, "Average ADE: {}", mm(&self.ade)).unwrap();
        writeln!(s, "Average FDE: {}", mm(&self.fde)).unwrap();
        writeln!(s, "Mean Error (x, y, z), across trajectories: {}", axes(&self.mean_error_xyz)).unwrap();
        writeln!(s, "Std Error (x, y, z), across frames: {}", axes(&self.std_error_xyz)).unwrap();
        s
    }
}

/// `mean ± std` with one decimal, e.g. `9.7 ± 2.8`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}")
}

/// Signed millimeter triple with two decimals from meters, e.g.
/// `[-4.64, 0.25, 6.64]`.
pub fn format_vector_mm(v: &Vector3<f64>) -> String {
    let f = |x: f64| {
        let s = format!("{:.2}", x * 1e3);
        if s == "-0.00" {
            "0.00".to_string()
        } else {
            s
        }
    };
    format!("[{}, {}, {}]", f(v.x), f(v.y), f(v.z))
}

/// Per-frame signed position errors as CSV, for external plotting.
pub fn save_error_curves(path: &Path, est: &Trajectory, gt: &Trajectory) -> Result<()> {
    let errors = position_errors(est, gt)?;
    let mut s = String::from("frame,ex,ey,ez,norm\n");
    for (r, e) in est.records().iter().zip(&errors) {
        writeln!(s, "{},{},{},{},{}", r.frame, e.x, e.y, e.z, e.norm()).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
