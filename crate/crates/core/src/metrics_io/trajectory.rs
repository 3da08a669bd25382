use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::FrameEstimate;
use crate::geometry::Pose;
use crate::scalar::Real;
use crate::tool_model::JointVector;

pub const TRAJECTORY_HEADER: &str = "frame,R00,R01,R02,R10,R11,R12,R20,R21,R22,tx,ty,tz,q1,q2,q3,loss";
const FIELDS: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub frame: u64,
    pub pose: Pose<f64>,
    pub q: JointVector<f64>,
    pub loss: Option<f64>,
}

/// Non-empty sequence of records with strictly increasing frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn new(records: Vec<TrajectoryRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(w) = records.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::InvalidFrame(format!(
                "frame indices must increase strictly, got {} then {}",
                w[0].frame, w[1].frame
            )));
        }
        Ok(Self { records })
    }

    /// One record per estimate, frames numbered from zero.
    pub fn from_estimates<T: Real>(estimates: &[FrameEstimate<T>]) -> Result<Self> {
        Self::new(
            estimates
                .iter()
                .enumerate()
                .map(|(i, e)| TrajectoryRecord {
                    frame: i as u64,
                    pose: e.pose.cast(),
                    q: e.q.cast(),
                    loss: Some(e.final_loss.as_f64()),
                })
                .collect(),
        )
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Applies `g` on the left of every pose (a change of reference frame).
    pub fn transformed(&self, g: &Pose<f64>) -> Self {
        Self {
            records: self
                .records
                .iter()
                .map(|r| TrajectoryRecord {
                    pose: g.compose(&r.pose),
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.records {
            let m = r.pose.rotation.matrix();
            let t = &r.pose.translation;
            write!(s, "{}", r.frame).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    write!(s, ",{}", m[(i, j)]).unwrap();
                }
            }
            write!(s, ",{},{},{},{},{},{},", t.x, t.y, t.z, r.q.q1(), r.q.q2(), r.q.q3()).unwrap();
            if let Some(l) = r.loss {
                write!(s, "{l}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Trajectory::to_csv`] output; `path` only labels errors.
    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(path, line, msg);
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
            Some((_, h)) => return Err(err(1, format!("expected header `{TRAJECTORY_HEADER}`, got `{h}`"))),
            None => return Err(err(1, "empty file, expected at least one record".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != FIELDS {
                return Err(err(n, format!("expected {FIELDS} fields, found {}", cols.len())));
            }
            let frame: u64 = cols[0]
                .parse()
                .map_err(|_| err(n, format!("invalid frame index `{}`", cols[0])))?;
            let mut v = [0.0; 15];
            for (k, c) in cols[1..16].iter().enumerate() {
                v[k] = c.parse().map_err(|_| err(n, format!("invalid number `{c}` in column {}", k + 2)))?;
            }
            let loss = match cols[16] {
                "" => None,
                c => Some(c.parse().map_err(|_| err(n, format!("invalid loss `{c}`")))?),
            };
            let rm = [v[0], v[1], v[2], v[9], v[3], v[4], v[5], v[10], v[6], v[7], v[8], v[11]];
            let pose = Pose::from_row_major(&rm).map_err(|e| err(n, e.to_string()))?;
            records.push(TrajectoryRecord {
                frame,
                pose,
                q: JointVector::new(v[12], v[13], v[14]),
                loss,
            });
        }
        if records.is_empty() {
            return Err(err(1, "no records after the header".into()));
        }
        Self::new(records).map_err(|e| err(1, e.to_string()))
    }
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, traj.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::from_csv(&text, path)
}
