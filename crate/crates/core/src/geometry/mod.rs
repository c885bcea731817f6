//! Pinhole cameras, plücker ray embeddings and trajectory comparison metrics.
//!
//! Poses are world-to-camera: a world point `X` maps to camera coordinates
//! `R·X + T`, so the camera center in world coordinates is `o = −Rᵀ·T`.

mod metrics;
mod trajectory;

pub use metrics::{cam_mc, rot_err, trans_err};
pub use trajectory::{parse_trajectory, serialize_trajectory, TrajectoryFormat};

use nalgebra::{Matrix3, Vector3};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rays shorter than this cannot be normalized.
pub const MIN_RAY_NORM: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("degenerate ray at pixel (u={u}, v={v})")]
    DegenerateRay { u: usize, v: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error("trajectory frames disagree on frame size")]
    MixedFrameSize,
    #[error("trajectory lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Pinhole intrinsics in pixels, together with the frame size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics(
                "non-finite entry".to_string(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} frame",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// The 3×3 calibration matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form `K⁻¹` (no skew).
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a camera-frame point to pixel coordinates `(u, v)`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// World-to-camera extrinsics `[R|T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::InvalidPose("non-finite entry".to_string()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max deviation {ortho:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Maps a world point into the camera frame.
    pub fn transform(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    /// In-plane rotation about the optical axis, `atan2(R₁₀, R₀₀)`.
    pub fn roll(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// The 3×4 matrix `[R|T]` in row-major order.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }
}

/// Rotation about the camera z axis by `theta` radians.
pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

/// An ordered, non-empty list of camera frames sharing one frame size.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    name: String,
    frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    pub fn new(
        name: impl Into<String>,
        frames: Vec<TrajectoryFrame>,
    ) -> Result<Self, GeometryError> {
        let first = frames.first().ok_or(GeometryError::EmptyTrajectory)?;
        let (w, h) = (first.intrinsics.width, first.intrinsics.height);
        if frames
            .iter()
            .any(|f| f.intrinsics.width != w || f.intrinsics.height != h)
        {
            return Err(GeometryError::MixedFrameSize);
        }
        Ok(Self {
            name: name.into(),
            frames,
        })
    }

    /// Builds a trajectory with a shared intrinsics block and timestamps `0, 1, …`.
    pub fn from_poses(
        name: impl Into<String>,
        intrinsics: CameraIntrinsics,
        poses: impl IntoIterator<Item = CameraPose>,
    ) -> Result<Self, GeometryError> {
        let frames = poses
            .into_iter()
            .enumerate()
            .map(|(i, pose)| TrajectoryFrame {
                timestamp: i as f64,
                intrinsics,
                pose,
            })
            .collect();
        Self::new(name, frames)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn frames(&self) -> &[TrajectoryFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.frames[0].intrinsics.height
    }
}

/// Per-pixel plücker coordinates, stored as `H × W × 6` with the moment
/// `o × d` in channels 0..3 and the unit direction `d` in channels 3..6.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerFrame {
    pub grid: Array3<f64>,
}

impl PluckerFrame {
    pub fn height(&self) -> usize {
        self.grid.dim().0
    }

    pub fn width(&self) -> usize {
        self.grid.dim().1
    }

    pub fn moment(&self, v: usize, u: usize) -> Vector3<f64> {
        Vector3::new(
            self.grid[[v, u, 0]],
            self.grid[[v, u, 1]],
            self.grid[[v, u, 2]],
        )
    }

    pub fn direction(&self, v: usize, u: usize) -> Vector3<f64> {
        Vector3::new(
            self.grid[[v, u, 3]],
            self.grid[[v, u, 4]],
            self.grid[[v, u, 5]],
        )
    }
}

/// Camera center in world coordinates, `o = −Rᵀ·T`.
pub fn camera_center(pose: &CameraPose) -> Vector3<f64> {
    -(pose.rotation.transpose() * pose.translation)
}

/// Plücker embedding of every pixel of the frame.
///
/// The raw ray for pixel `(u, v)` (column, row; integer coordinates) is
/// `R·K⁻¹·[u, v, 1]ᵀ + T`. It is normalized to unit length and paired with its
/// moment about the camera center.
pub fn plucker_embedding(
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<PluckerFrame, GeometryError> {
    let (h, w) = (intr.height, intr.width);
    let o = camera_center(pose);
    let m = pose.rotation * intr.inverse_matrix();
    let col_u: Vector3<f64> = m.column(0).into();
    let col_v: Vector3<f64> = m.column(1).into();
    let base: Vector3<f64> = Vector3::from(m.column(2)) + pose.translation;

    let mut grid = Array3::<f64>::zeros((h, w, 6));
    for v in 0..h {
        let row_base = base + col_v * v as f64;
        for u in 0..w {
            let raw = row_base + col_u * u as f64;
            let norm = raw.norm();
            if norm < MIN_RAY_NORM {
                return Err(GeometryError::DegenerateRay { u, v });
            }
            let d = raw / norm;
            let moment = o.cross(&d);
            let mut cell = grid.slice_mut(ndarray::s![v, u, ..]);
            cell[0] = moment.x;
            cell[1] = moment.y;
            cell[2] = moment.z;
            cell[3] = d.x;
            cell[4] = d.y;
            cell[5] = d.z;
        }
    }
    Ok(PluckerFrame { grid })
}
