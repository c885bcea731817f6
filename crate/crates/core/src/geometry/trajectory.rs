//! Camera trajectory text files.
//!
//! Line 1 is a free-form identifier. Every following non-blank line holds 19
//! whitespace-separated numbers:
//!
//! ```text
//! timestamp fx fy cx cy 0 0 r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2
//! ```

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, CameraPose, GeometryError, Trajectory, TrajectoryFrame};

const FIELDS_PER_LINE: usize = 19;

/// Frame size and intrinsics convention used when reading or writing a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryFormat {
    pub width: usize,
    pub height: usize,
    /// Intrinsics are stored divided by width (fx, cx) and height (fy, cy).
    pub normalized_intrinsics: bool,
}

impl TrajectoryFormat {
    pub fn pixels(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normalized_intrinsics: false,
        }
    }

    pub fn normalized(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normalized_intrinsics: true,
        }
    }
}

pub fn parse_trajectory(text: &str, format: TrajectoryFormat) -> Result<Trajectory, GeometryError> {
    let mut lines = text.lines().enumerate();
    let name = match lines.next() {
        Some((_, header)) => header.trim().to_string(),
        None => return Err(GeometryError::EmptyTrajectory),
    };
    let (sw, sh) = if format.normalized_intrinsics {
        (format.width as f64, format.height as f64)
    } else {
        (1.0, 1.0)
    };

    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| GeometryError::Parse {
                    line: line_no,
                    message: format!("not a number: {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != FIELDS_PER_LINE {
            return Err(GeometryError::Parse {
                line: line_no,
                message: format!("expected {FIELDS_PER_LINE} fields, found {}", values.len()),
            });
        }
        let at_line = |e: GeometryError| GeometryError::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let intrinsics = CameraIntrinsics::new(
            values[1] * sw,
            values[2] * sh,
            values[3] * sw,
            values[4] * sh,
            format.width,
            format.height,
        )
        .map_err(at_line)?;
        let m = &values[7..];
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        let pose = CameraPose::new(rotation, translation).map_err(at_line)?;
        frames.push(TrajectoryFrame {
            timestamp: values[0],
            intrinsics,
            pose,
        });
    }
    Trajectory::new(name, frames)
}

/// Writes a trajectory in the text format. `f64` values use the shortest
/// representation that parses back to the same bits.
pub fn serialize_trajectory(traj: &Trajectory, format: TrajectoryFormat) -> String {
    let (sw, sh) = if format.normalized_intrinsics {
        (format.width as f64, format.height as f64)
    } else {
        (1.0, 1.0)
    };
    let mut out = String::new();
    let name = if traj.name().is_empty() {
        "trajectory"
    } else {
        traj.name()
    };
    out.push_str(name.lines().next().unwrap_or("trajectory"));
    out.push('\n');
    for frame in traj.frames() {
        let k = &frame.intrinsics;
        let _ = write!(
            out,
            "{:?} {:?} {:?} {:?} {:?} 0 0",
            frame.timestamp,
            k.fx / sw,
            k.fy / sh,
            k.cx / sw,
            k.cy / sh
        );
        for v in frame.pose.to_row_major() {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}
