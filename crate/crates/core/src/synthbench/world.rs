//! The toy world: a colored square with a bright corner marker hovering in
//! front of a planar background, filmed by a camera whose pose moves the
//! square on screen. Every pixel is an analytic function of the labels.

use nalgebra::Vector3;
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::{rot_z, CameraIntrinsics, CameraPose, Trajectory};
use crate::tokenizer::VideoTensor;

/// Depth value of the square in the depth video (the nearest possible depth).
pub const SQUARE_DEPTH: f32 = 1.0;
/// Gray level of the neutral identity-reference background.
pub const NEUTRAL_GRAY: f32 = 0.5;

/// Length of every toy prompt.
pub const TEXT_WORDS: usize = 2;

/// Square colors; the marker corner is each color brightened by `marker_boost`
/// on every channel, which keeps its chroma equal to the body's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Palette {
    pub colors: Vec<[f32; 3]>,
    pub marker_boost: f32,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: vec![
                [0.8, 0.2, 0.2],
                [0.2, 0.8, 0.2],
                [0.2, 0.2, 0.8],
                [0.8, 0.8, 0.2],
                [0.2, 0.8, 0.8],
                [0.8, 0.2, 0.8],
            ],
            marker_boost: 0.2,
        }
    }
}

impl Palette {
    pub fn body(&self, k: usize) -> [f32; 3] {
        self.colors[k]
    }

    pub fn marker(&self, k: usize) -> [f32; 3] {
        self.colors[k].map(|c| c + self.marker_boost)
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.colors.is_empty() {
            return Err(SynthError::Config("palette is empty".into()));
        }
        if !(self.marker_boost > 0.0) {
            return Err(SynthError::Config("marker_boost must be positive".into()));
        }
        for (k, c) in self.colors.iter().enumerate() {
            let (lo, hi) = (
                c.iter().cloned().fold(f32::MAX, f32::min),
                c.iter().cloned().fold(f32::MIN, f32::max),
            );
            if lo < 0.0 || hi + self.marker_boost > 1.0 {
                return Err(SynthError::Config(format!(
                    "palette color {k} or its marker leaves [0, 1]"
                )));
            }
            if hi - lo < 0.1 {
                return Err(SynthError::Config(format!(
                    "palette color {k} is too close to gray"
                )));
            }
        }
        Ok(())
    }
}

/// Camera motion word; the square moves on screen in the named direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Static,
    Left,
    Right,
    Up,
    Down,
}

impl Motion {
    pub const ALL: [Motion; 5] = [
        Motion::Static,
        Motion::Left,
        Motion::Right,
        Motion::Up,
        Motion::Down,
    ];

    /// Unit screen direction `(du, dv)` (v grows downward).
    pub fn direction(self) -> [f64; 2] {
        match self {
            Motion::Static => [0.0, 0.0],
            Motion::Left => [-1.0, 0.0],
            Motion::Right => [1.0, 0.0],
            Motion::Up => [0.0, -1.0],
            Motion::Down => [0.0, 1.0],
        }
    }

    fn index(self) -> usize {
        Motion::ALL.iter().position(|&m| m == self).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityStyle {
    /// Square on a neutral gray background.
    Segmented,
    /// Square on a gray checkerboard texture.
    Raw,
}

/// Ranges from which label draws are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelRanges {
    /// Screen speed of moving trajectories, pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Initial roll is drawn from `±max_roll` radians.
    pub max_roll: f64,
    /// Roll change per frame is drawn from `±max_roll_rate` radians.
    pub max_roll_rate: f64,
    /// Background plane values stay within `[plane_min, plane_max]`.
    pub plane_min: f64,
    pub plane_max: f64,
    /// Largest difference between plane values across the canvas.
    pub plane_max_variation: f64,
}

impl Default for LabelRanges {
    fn default() -> Self {
        Self {
            min_speed: 0.5,
            max_speed: 2.0,
            max_roll: 0.5,
            max_roll_rate: 0.1,
            plane_min: 0.05,
            plane_max: 0.8,
            plane_max_variation: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyWorldSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Side of the square in pixels.
    pub square_side: f64,
    /// World point whose projection is the square center.
    pub anchor: [f64; 3],
    /// Focal length in pixels (both axes); the principal point is the frame center.
    pub focal: f64,
    /// Side of the square identity reference images.
    pub identity_size: usize,
    pub palette: Palette,
    pub ranges: LabelRanges,
    /// Supersampling factor per pixel axis for anti-aliased coverage.
    pub supersample: usize,
}

impl Default for ToyWorldSpec {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            frames: 3,
            square_side: 4.0,
            anchor: [0.0, 0.0, 4.0],
            focal: 16.0,
            identity_size: 8,
            palette: Palette::default(),
            ranges: LabelRanges::default(),
            supersample: 8,
        }
    }
}

impl ToyWorldSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        if self.height == 0 || self.width == 0 || self.frames == 0 || self.identity_size == 0 {
            return err("frame, identity and frame-count sizes must be positive".into());
        }
        if !(self.square_side > 0.0)
            || self.square_side * std::f64::consts::SQRT_2 + 2.0
                > self.height.min(self.width) as f64
        {
            return err(format!(
                "square side {} does not fit a {}x{} frame under rotation",
                self.square_side, self.height, self.width
            ));
        }
        if self.square_side > self.identity_size as f64 {
            return err(format!(
                "square side {} exceeds identity size {}",
                self.square_side, self.identity_size
            ));
        }
        if !(self.focal > 0.0) {
            return err("focal length must be positive".into());
        }
        if !(self.anchor[2] > 0.0) {
            return err("anchor must lie in front of the camera (z > 0)".into());
        }
        if self.supersample == 0 {
            return err("supersample must be positive".into());
        }
        let r = &self.ranges;
        if !(0.0 <= r.min_speed && r.min_speed <= r.max_speed)
            || r.max_roll < 0.0
            || r.max_roll_rate < 0.0
        {
            return err("label ranges must be ordered and nonnegative".into());
        }
        if !(0.0 <= r.plane_min && r.plane_min <= r.plane_max && r.plane_max < SQUARE_DEPTH as f64)
        {
            return err(format!(
                "plane range must satisfy 0 ≤ min ≤ max < {SQUARE_DEPTH}"
            ));
        }
        if r.plane_max_variation < 0.0 || r.plane_max_variation > r.plane_max - r.plane_min {
            return err("plane variation exceeds the plane range".into());
        }
        self.palette.validate()
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
        .expect("validated spec gives valid intrinsics")
    }

    /// Text vocabulary size: null, one word per color, one per motion.
    pub fn text_vocab(&self) -> usize {
        1 + self.palette.len() + Motion::ALL.len()
    }

    pub fn color_word(&self, color: usize) -> u32 {
        1 + color as u32
    }

    pub fn motion_word(&self, motion: Motion) -> u32 {
        (1 + self.palette.len() + motion.index()) as u32
    }

    /// Keeps the square's circumscribed circle at least half a pixel inside.
    fn margin(&self) -> f64 {
        self.square_side / std::f64::consts::SQRT_2 + 0.5
    }
}

/// Everything that determines one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLabels {
    pub color: usize,
    pub motion: Motion,
    /// Square center in frame 0, pixels.
    pub start: [f64; 2],
    /// Screen speed in pixels per frame (0 for static).
    pub speed: f64,
    pub roll0: f64,
    pub roll_rate: f64,
    /// Background `clamp(a·x + b·y + c)` in pixel coordinates.
    pub plane: [f64; 3],
    pub identity_style: IdentityStyle,
}

impl ToyLabels {
    /// Screen-space center of frame `i`.
    pub fn center(&self, i: usize) -> [f64; 2] {
        let [du, dv] = self.motion.direction();
        let s = self.speed * i as f64;
        [self.start[0] + s * du, self.start[1] + s * dv]
    }

    pub fn roll(&self, i: usize) -> f64 {
        self.roll0 + self.roll_rate * i as f64
    }

    /// World-to-camera poses `R_i = R_z(roll_i)`, `T_i` solved so that the
    /// anchor projects to [`Self::center`] with `T_z = 0`.
    pub fn trajectory(&self, spec: &ToyWorldSpec) -> Result<Trajectory, SynthError> {
        let k = spec.intrinsics();
        let anchor = Vector3::from(spec.anchor);
        let poses = (0..spec.frames)
            .map(|i| {
                let r = rot_z(self.roll(i));
                let p = r * anchor;
                let [u, v] = self.center(i);
                let t = Vector3::new(
                    (u - k.cx) / k.fx * p.z - p.x,
                    (v - k.cy) / k.fy * p.z - p.y,
                    0.0,
                );
                CameraPose::new(r, t).map_err(SynthError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory::from_poses("toy", k, poses)?)
    }

    /// `[color word, motion word]`; always [`TEXT_WORDS`] long.
    pub fn text(&self, spec: &ToyWorldSpec) -> Vec<u32> {
        vec![spec.color_word(self.color), spec.motion_word(self.motion)]
    }
}

/// A rendered sample with all annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub labels: ToyLabels,
    pub video: VideoTensor,
    pub trajectory: Trajectory,
    pub identities: Vec<Array3<f32>>,
    pub depth: VideoTensor,
    pub text: Vec<u32>,
    /// Ground-truth square center per frame, pixels `(u, v)`.
    pub centers: Vec<[f64; 2]>,
    /// Ground-truth in-plane orientation per frame, radians.
    pub orientations: Vec<f64>,
}

/// Square center and roll per frame of a trajectory (anchor projection).
pub fn project_anchor(
    spec: &ToyWorldSpec,
    traj: &Trajectory,
) -> Result<Vec<([f64; 2], f64)>, SynthError> {
    let anchor = Vector3::from(spec.anchor);
    traj.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (u, v) = f
                .intrinsics
                .project(&f.pose.transform(&anchor))
                .ok_or(SynthError::OutOfFrame { frame: i })?;
            if !(-0.5..=spec.width as f64 - 0.5).contains(&u)
                || !(-0.5..=spec.height as f64 - 0.5).contains(&v)
            {
                return Err(SynthError::OutOfFrame { frame: i });
            }
            Ok(([u, v], f.pose.roll()))
        })
        .collect()
}

/// Per-pixel `(body, marker)` coverage of a square centered at `center`,
/// rotated by `roll`, estimated with `ss × ss` subsamples per pixel.
fn coverage(
    h: usize,
    w: usize,
    side: f64,
    center: [f64; 2],
    roll: f64,
    ss: usize,
) -> Vec<(f32, f32)> {
    let mut cov = vec![(0.0f32, 0.0f32); h * w];
    let half = side / 2.0;
    let reach = half * std::f64::consts::SQRT_2 + 1.0;
    let (s, c) = roll.sin_cos();
    let x0 = ((center[0] - reach).floor().max(0.0)) as usize;
    let x1 = ((center[0] + reach).ceil().max(0.0) as usize).min(w.saturating_sub(1));
    let y0 = ((center[1] - reach).floor().max(0.0)) as usize;
    let y1 = ((center[1] + reach).ceil().max(0.0) as usize).min(h.saturating_sub(1));
    let inv = 1.0 / (ss * ss) as f32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (mut body, mut marker) = (0u32, 0u32);
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5 - center[0];
                    let py = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5 - center[1];
                    // Undo the roll to get square-local coordinates.
                    let lx = c * px + s * py;
                    let ly = -s * px + c * py;
                    if lx.abs() <= half && ly.abs() <= half {
                        if lx >= 0.0 && ly <= 0.0 {
                            marker += 1;
                        } else {
                            body += 1;
                        }
                    }
                }
            }
            cov[y * w + x] = (body as f32 * inv, marker as f32 * inv);
        }
    }
    cov
}

fn plane_value(plane: &[f64; 3], x: usize, y: usize) -> f32 {
    (plane[0] * x as f64 + plane[1] * y as f64 + plane[2]).clamp(0.0, 1.0) as f32
}

/// Renders RGB and depth videos for arbitrary per-frame square placements.
pub fn render_frames(
    spec: &ToyWorldSpec,
    color: usize,
    plane: &[f64; 3],
    placements: &[([f64; 2], f64)],
) -> Result<(VideoTensor, VideoTensor), SynthError> {
    if color >= spec.palette.len() {
        return Err(SynthError::Config(format!(
            "color index {color} outside the palette"
        )));
    }
    let (h, w) = (spec.height, spec.width);
    let body = spec.palette.body(color);
    let marker = spec.palette.marker(color);
    let mut video = Array4::<f32>::zeros((placements.len(), h, w, 3));
    let mut depth = Array4::<f32>::zeros((placements.len(), h, w, 3));
    for (i, &(center, roll)) in placements.iter().enumerate() {
        let cov = coverage(h, w, spec.square_side, center, roll, spec.supersample);
        for y in 0..h {
            for x in 0..w {
                let g = plane_value(plane, x, y);
                let (cb, cm) = cov[y * w + x];
                let bg = 1.0 - cb - cm;
                for ch in 0..3 {
                    video[[i, y, x, ch]] =
                        (bg * g + cb * body[ch] + cm * marker[ch]).clamp(0.0, 1.0);
                    depth[[i, y, x, ch]] = if cb + cm > 0.0 { SQUARE_DEPTH } else { g };
                }
            }
        }
    }
    Ok((video, depth))
}

/// The square alone, upright and centered, on a neutral or textured background.
pub fn render_identity(spec: &ToyWorldSpec, color: usize, style: IdentityStyle) -> Array3<f32> {
    let n = spec.identity_size;
    let c = (n as f64 - 1.0) / 2.0;
    let cov = coverage(n, n, spec.square_side, [c, c], 0.0, spec.supersample);
    let body = spec.palette.body(color);
    let marker = spec.palette.marker(color);
    Array3::from_shape_fn((n, n, 3), |(y, x, ch)| {
        let g = match style {
            IdentityStyle::Segmented => NEUTRAL_GRAY,
            IdentityStyle::Raw => {
                if (x / 2 + y / 2) % 2 == 0 {
                    0.35
                } else {
                    0.65
                }
            }
        };
        let (cb, cm) = cov[y * n + x];
        (1.0 - cb - cm) * g + cb * body[ch] + cm * marker[ch]
    })
}

/// Renders a sample; a deterministic function of `(spec, labels)`.
pub fn render_sample(spec: &ToyWorldSpec, labels: &ToyLabels) -> Result<ToySample, SynthError> {
    spec.validate()?;
    let trajectory = labels.trajectory(spec)?;
    render_with_trajectory(spec, labels, trajectory)
}

/// Renders the labels' color, background and identity under a given trajectory.
pub fn render_with_trajectory(
    spec: &ToyWorldSpec,
    labels: &ToyLabels,
    trajectory: Trajectory,
) -> Result<ToySample, SynthError> {
    if trajectory.len() != spec.frames
        || trajectory.width() != spec.width
        || trajectory.height() != spec.height
    {
        return Err(SynthError::Shape(format!(
            "trajectory of {} frames at {}x{} does not match the world",
            trajectory.len(),
            trajectory.width(),
            trajectory.height()
        )));
    }
    let placements = project_anchor(spec, &trajectory)?;
    let (video, depth) = render_frames(spec, labels.color, &labels.plane, &placements)?;
    Ok(ToySample {
        labels: labels.clone(),
        video,
        trajectory,
        identities: vec![render_identity(spec, labels.color, labels.identity_style)],
        depth,
        text: labels.text(spec),
        centers: placements.iter().map(|p| p.0).collect(),
        orientations: placements.iter().map(|p| p.1).collect(),
    })
}

/// Labels drawn from a ChaCha8 stream seeded with `seed`, rendered.
pub fn sample_seeded(spec: &ToyWorldSpec, seed: u64) -> Result<ToySample, SynthError> {
    let labels = sample_labels(spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    render_sample(spec, &labels)
}

/// Draws labels whose square stays fully inside the frame for every frame.
pub fn sample_labels(spec: &ToyWorldSpec, rng: &mut impl Rng) -> Result<ToyLabels, SynthError> {
    spec.validate()?;
    let r = &spec.ranges;
    let color = rng.random_range(0..spec.palette.len());
    let motion = Motion::ALL[rng.random_range(0..Motion::ALL.len())];
    let m = spec.margin();
    let (lo_u, hi_u) = (m - 0.5, spec.width as f64 - 0.5 - m);
    let (lo_v, hi_v) = (m - 0.5, spec.height as f64 - 0.5 - m);
    let span = |lo: f64, hi: f64| hi - lo;
    let travel_room = match motion {
        Motion::Static => f64::INFINITY,
        Motion::Left | Motion::Right => span(lo_u, hi_u),
        Motion::Up | Motion::Down => span(lo_v, hi_v),
    };
    let steps = spec.frames.saturating_sub(1).max(1) as f64;
    let speed = match motion {
        Motion::Static => 0.0,
        _ => {
            let cap = (travel_room / steps).min(r.max_speed);
            let lo = r.min_speed.min(cap);
            if cap > lo {
                rng.random_range(lo..=cap)
            } else {
                lo
            }
        }
    };
    let travel = speed * (spec.frames.saturating_sub(1)) as f64;
    let [du, dv] = motion.direction();
    // Start range so that start + travel·dir stays inside.
    let pick = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64, d: f64| {
        let (a, b) = if d > 0.0 {
            (lo, hi - travel)
        } else if d < 0.0 {
            (lo + travel, hi)
        } else {
            (lo, hi)
        };
        if b > a {
            rng.random_range(a..=b)
        } else {
            (a + b) / 2.0
        }
    };
    let start = [pick(rng, lo_u, hi_u, du), pick(rng, lo_v, hi_v, dv)];
    let roll0 = if r.max_roll > 0.0 {
        rng.random_range(-r.max_roll..=r.max_roll)
    } else {
        0.0
    };
    let roll_rate = if r.max_roll_rate > 0.0 {
        rng.random_range(-r.max_roll_rate..=r.max_roll_rate)
    } else {
        0.0
    };

    // Plane with total variation ≤ plane_max_variation across the canvas.
    let (wx, hy) = (
        (spec.width - 1).max(1) as f64,
        (spec.height - 1).max(1) as f64,
    );
    let var = r.plane_max_variation;
    let a = rng.random_range(-1.0..=1.0) * var / (2.0 * wx);
    let b = rng.random_range(-1.0..=1.0) * var / (2.0 * hy);
    let corners = [0.0, a * wx, b * hy, a * wx + b * hy];
    let (cmin, cmax) = corners
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let (c_lo, c_hi) = (r.plane_min - cmin, r.plane_max - cmax);
    let c = if c_hi > c_lo {
        rng.random_range(c_lo..=c_hi)
    } else {
        (c_lo + c_hi) / 2.0
    };
    let identity_style = if rng.random_bool(0.5) {
        IdentityStyle::Segmented
    } else {
        IdentityStyle::Raw
    };
    Ok(ToyLabels {
        color,
        motion,
        start,
        speed,
        roll0,
        roll_rate,
        plane: [a, b, c],
        identity_style,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 32×32, 9-frame world: large enough for tight estimator bounds.
    fn large_spec() -> ToyWorldSpec {
        ToyWorldSpec {
            height: 32,
            width: 32,
            frames: 9,
            square_side: 8.0,
            focal: 32.0,
            identity_size: 16,
            ..ToyWorldSpec::default()
        }
    }
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(start: [f64; 2], motion: Motion, speed: f64, roll: f64) -> ToyLabels {
        ToyLabels {
            color: 0,
            motion,
            start,
            speed,
            roll0: roll,
            roll_rate: 0.0,
            plane: [0.0, 0.0, 0.5],
            identity_style: IdentityStyle::Segmented,
        }
    }

    #[test]
    fn identity_pose_centers_the_square() {
        let spec = large_spec();
        let traj = Trajectory::from_poses(
            "id",
            spec.intrinsics(),
            vec![CameraPose::identity(); spec.frames],
        )
        .unwrap();
        let s = render_with_trajectory(&spec, &labels([0.0, 0.0], Motion::Static, 0.0, 0.0), traj)
            .unwrap();
        for c in &s.centers {
            assert_eq!(*c, [15.5, 15.5]);
        }
        let est = crate::synthbench::estimate_square(&s.video, &spec.palette).unwrap();
        for c in est.centers {
            assert!(
                (c[0] - 15.5).abs() < 1e-4 && (c[1] - 15.5).abs() < 1e-4,
                "{c:?}"
            );
        }
    }

    #[test]
    fn trajectory_reproduces_label_centers() {
        let spec = large_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let l = sample_labels(&spec, &mut rng).unwrap();
            let s = render_sample(&spec, &l).unwrap();
            for (i, c) in s.centers.iter().enumerate() {
                let want = l.center(i);
                assert!((c[0] - want[0]).abs() < 1e-9 && (c[1] - want[1]).abs() < 1e-9);
                assert!((s.orientations[i] - l.roll(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn x_translation_moves_the_center_in_u_only() {
        let spec = large_spec();
        let k = spec.intrinsics();
        let poses: Vec<CameraPose> = (0..spec.frames)
            .map(|i| {
                CameraPose::new(
                    nalgebra::Matrix3::identity(),
                    Vector3::new(-0.5 + 0.1 * i as f64, 0.0, 0.0),
                )
                .unwrap()
            })
            .collect();
        let traj = Trajectory::from_poses("pan", k, poses).unwrap();
        let s = render_with_trajectory(&spec, &labels([0.0, 0.0], Motion::Static, 0.0, 0.0), traj)
            .unwrap();
        for w in s.centers.windows(2) {
            assert!(w[1][0] > w[0][0]);
            assert_eq!(w[1][1], w[0][1]);
        }
    }

    #[test]
    fn constant_plane_background() {
        let spec = large_spec();
        let s = render_sample(&spec, &labels([15.5, 15.5], Motion::Static, 0.0, 0.0)).unwrap();
        for ((_, y, x, _), &v) in s.depth.indexed_iter() {
            let off_square = (x as f64 - 15.5).abs() > 5.0 || (y as f64 - 15.5).abs() > 5.0;
            if off_square {
                assert_eq!(v, 0.5);
                assert_eq!(s.video[[0, y, x, 0]], 0.5);
            }
        }
    }

    #[test]
    fn center_outside_canvas_is_rejected() {
        let spec = large_spec();
        let l = labels([40.0, 15.5], Motion::Static, 0.0, 0.0);
        assert!(matches!(
            render_sample(&spec, &l),
            Err(SynthError::OutOfFrame { frame: 0 })
        ));
    }

    #[test]
    fn rendering_is_deterministic_and_in_range() {
        let spec = large_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = sample_labels(&spec, &mut rng).unwrap();
        let a = render_sample(&spec, &l).unwrap();
        let b = render_sample(&spec, &l).unwrap();
        assert_eq!(a, b);
        assert!(a.video.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.depth.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.identities[0].dim(), (16, 16, 3));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = large_spec();
        spec.square_side = 30.0;
        assert!(spec.validate().is_err());
        let mut spec = large_spec();
        spec.palette.colors.push([0.5, 0.5, 0.5]);
        assert!(spec.validate().is_err());
    }
}
