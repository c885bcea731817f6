//! Trajectory-vs-trajectory pose errors: RotErr, TransErr and CamMC.
//!
//! All three are means over frames. Translations are compared after scaling
//! each trajectory so its translation path length is 1.

use nalgebra::{Matrix3x4, Vector3};

use super::{GeometryError, Trajectory};

const MIN_PATH_LENGTH: f64 = 1e-9;

fn check_lengths(gen: &Trajectory, gt: &Trajectory) -> Result<(), GeometryError> {
    if gen.len() != gt.len() {
        return Err(GeometryError::LengthMismatch {
            left: gen.len(),
            right: gt.len(),
        });
    }
    Ok(())
}

/// Translations rescaled to unit path length; left as-is for (near) static paths.
fn normalized_translations(traj: &Trajectory) -> Vec<Vector3<f64>> {
    let ts: Vec<Vector3<f64>> = traj
        .frames()
        .iter()
        .map(|f| *f.pose.translation())
        .collect();
    let path: f64 = ts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if path < MIN_PATH_LENGTH {
        ts
    } else {
        ts.into_iter().map(|t| t / path).collect()
    }
}

/// Mean geodesic angle between per-frame rotations, in radians.
pub fn rot_err(gen: &Trajectory, gt: &Trajectory) -> Result<f64, GeometryError> {
    check_lengths(gen, gt)?;
    let total: f64 = gen
        .frames()
        .iter()
        .zip(gt.frames())
        .map(|(a, b)| {
            let rel = a.pose.rotation() * b.pose.rotation().transpose();
            // Same angle as acos((tr − 1)/2), without the loss of precision near 0 and π.
            let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            let axis = Vector3::new(
                rel[(2, 1)] - rel[(1, 2)],
                rel[(0, 2)] - rel[(2, 0)],
                rel[(1, 0)] - rel[(0, 1)],
            );
            (axis.norm() / 2.0).atan2(cos)
        })
        .sum();
    Ok(total / gen.len() as f64)
}

pub fn trans_err(gen: &Trajectory, gt: &Trajectory) -> Result<f64, GeometryError> {
    check_lengths(gen, gt)?;
    let a = normalized_translations(gen);
    let b = normalized_translations(gt);
    let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).sum();
    Ok(total / gen.len() as f64)
}

/// Mean Frobenius distance between `[R|T]` matrices, translations normalized
/// as in [`trans_err`].
pub fn cam_mc(gen: &Trajectory, gt: &Trajectory) -> Result<f64, GeometryError> {
    check_lengths(gen, gt)?;
    let a = normalized_translations(gen);
    let b = normalized_translations(gt);
    let total: f64 = gen
        .frames()
        .iter()
        .zip(gt.frames())
        .zip(a.iter().zip(&b))
        .map(|((fa, fb), (ta, tb))| {
            let ma = Matrix3x4::from_columns(&[
                fa.pose.rotation().column(0).into(),
                fa.pose.rotation().column(1).into(),
                fa.pose.rotation().column(2).into(),
                *ta,
            ]);
            let mb = Matrix3x4::from_columns(&[
                fb.pose.rotation().column(0).into(),
                fb.pose.rotation().column(1).into(),
                fb.pose.rotation().column(2).into(),
                *tb,
            ]);
            (ma - mb).norm()
        })
        .sum();
    Ok(total / gen.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_x, rot_y, rot_z, CameraIntrinsics, CameraPose};
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(16.0, 16.0, 8.0, 8.0, 16, 16).unwrap()
    }

    fn traj(poses: Vec<(Matrix3<f64>, Vector3<f64>)>) -> Trajectory {
        Trajectory::from_poses(
            "t",
            intr(),
            poses
                .into_iter()
                .map(|(r, t)| CameraPose::new(r, t).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let t = traj(vec![
            (rot_z(0.2), Vector3::new(0.0, 1.0, 0.0)),
            (rot_x(0.4), Vector3::new(1.0, 1.0, 0.5)),
        ]);
        assert!(rot_err(&t, &t).unwrap() < 1e-15);
        assert_eq!(trans_err(&t, &t).unwrap(), 0.0);
        assert_eq!(cam_mc(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn rotation_error_recovers_angle() {
        let theta = 0.7;
        let gt = traj(vec![(Matrix3::identity(), Vector3::zeros()); 3]);
        let gen = traj(vec![(rot_z(theta), Vector3::zeros()); 3]);
        assert!((rot_err(&gen, &gt).unwrap() - theta).abs() < 1e-12);

        let flip = traj(vec![(rot_x(PI), Vector3::zeros())]);
        let id = traj(vec![(Matrix3::identity(), Vector3::zeros())]);
        assert!((rot_err(&flip, &id).unwrap() - PI).abs() < 1e-7);
    }

    #[test]
    fn static_offset_is_not_normalized() {
        let delta = Vector3::new(0.3, -0.4, 1.2);
        let gt = traj(vec![(Matrix3::identity(), Vector3::zeros()); 4]);
        let gen = traj(vec![(Matrix3::identity(), delta); 4]);
        assert!((trans_err(&gen, &gt).unwrap() - delta.norm()).abs() < 1e-12);
        assert!((cam_mc(&gen, &gt).unwrap() - delta.norm()).abs() < 1e-12);
    }

    #[test]
    fn uniform_scale_is_invisible() {
        let poses: Vec<_> = (0..5)
            .map(|i| {
                (
                    Matrix3::identity(),
                    Vector3::new(i as f64 * 0.3, 0.1 * (i * i) as f64, 0.0),
                )
            })
            .collect();
        let scaled: Vec<_> = poses.iter().map(|(r, t)| (*r, t * 2.0)).collect();
        assert!(trans_err(&traj(scaled), &traj(poses)).unwrap() < 1e-12);
    }

    #[test]
    fn cam_mc_rotation_only_case() {
        let gt = traj(vec![(Matrix3::identity(), Vector3::zeros())]);
        let gen = traj(vec![(rot_z(FRAC_PI_2), Vector3::zeros())]);
        assert!((cam_mc(&gen, &gt).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let a = traj(vec![(Matrix3::identity(), Vector3::zeros())]);
        let b = traj(vec![(Matrix3::identity(), Vector3::zeros()); 2]);
        assert_eq!(
            rot_err(&a, &b).unwrap_err(),
            GeometryError::LengthMismatch { left: 1, right: 2 }
        );
        assert!(trans_err(&a, &b).is_err());
        assert!(cam_mc(&a, &b).is_err());
    }

    fn arb_traj(n: usize) -> impl Strategy<Value = Trajectory> {
        prop::collection::vec(
            (
                -3.0f64..3.0,
                -1.5f64..1.5,
                -3.0f64..3.0,
                -2.0f64..2.0,
                -2.0f64..2.0,
                -2.0f64..2.0,
            ),
            n,
        )
        .prop_map(|v| {
            traj(
                v.into_iter()
                    .map(|(a, b, c, x, y, z)| {
                        (rot_z(a) * rot_y(b) * rot_x(c), Vector3::new(x, y, z))
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric_and_nonnegative((a, b) in (arb_traj(4), arb_traj(4))) {
            for f in [rot_err, trans_err, cam_mc] {
                let ab = f(&a, &b).unwrap();
                let ba = f(&b, &a).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() < 1e-9);
                prop_assert!(f(&a, &a).unwrap().abs() < 1e-12);
            }
        }

        #[test]
        fn trans_err_is_scale_invariant((a, b) in (arb_traj(4), arb_traj(4)), s in 0.1f64..20.0) {
            let scale = |t: &Trajectory| traj(
                t.frames().iter().map(|f| (*f.pose.rotation(), f.pose.translation() * s)).collect()
            );
            let base = trans_err(&a, &b).unwrap();
            let scaled = trans_err(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((base - scaled).abs() < 1e-9);
        }
    }
}
