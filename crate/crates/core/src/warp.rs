//! Dense rigid-flow computation and image warping.
//!
//! `rigid_flow` turns depth + relative pose into the pixel displacement
//! field induced by camera motion on a static scene; `flow_warp` samples
//! an image along any flow field; `inverse_warp` chains the two, which is
//! what the temporal-consistency loss and the pose solver consume.
//!
//! Direction: warping always *samples the other frame at the projected
//! location*. `inverse_warp(frame_t1, depth_t, pose, k)` therefore
//! produces an image aligned with frame t, built by looking up frame t+1
//! wherever each frame-t pixel lands under `pose` (the frame-t to
//! frame-(t+1) transform).

use crate::error::{ensure_dims, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagery::{FlowField, Image, ScalarMap, Units};
use nalgebra::Vector2;

/// Pixel displacement field induced by camera ego-motion on a static
/// scene: `flow(px) = project(pose * backproject(px, depth(px))) - px`.
///
/// The returned validity map is 1 where the depth pixel is valid and the
/// transformed point projects in front of the camera, 0 elsewhere
/// (invalid pixels carry zero flow).
pub fn rigid_flow(
    depth: &ScalarMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<(FlowField, ScalarMap)> {
    depth.expect_units("rigid_flow depth", Units::Meters)?;
    let (w, h) = (depth.width(), depth.height());
    let mut du = vec![0.0; w * h];
    let mut dv = vec![0.0; w * h];
    let mut valid = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let d = match depth.get(u, v) {
                Some(d) if d > 0.0 => d,
                _ => continue,
            };
            let px = Vector2::new(u as f64, v as f64);
            // Depth is positive by the check above, so backproject cannot
            // fail here.
            let point = k.backproject(px, d).expect("positive depth");
            if let Some(projected) = k.project(&pose.transform(&point)) {
                du[i] = projected.x - px.x;
                dv[i] = projected.y - px.y;
                valid[i] = 1.0;
            }
        }
    }
    Ok((
        FlowField::new(w, h, du, dv)?,
        ScalarMap::new(w, h, Units::Probability, valid, vec![true; w * h])?,
    ))
}

/// Samples `img` at `px + flow(px)` for every pixel.
///
/// Out-of-bounds samples yield value 0 and validity 0; they are excluded
/// from losses through the validity map rather than zero-filled into them.
pub fn flow_warp(img: &Image, flow: &FlowField) -> Result<(Image, ScalarMap)> {
    ensure_dims(
        "flow_warp flow",
        (img.width(), img.height()),
        (flow.width(), flow.height()),
    )?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut data = vec![0.0; w * h * c];
    let mut valid = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let (fu, fv) = flow.get(u, v);
            let (su, sv) = (u as f64 + fu, v as f64 + fv);
            if let Some(fp) = img.footprint(su, sv) {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for corner in 0..4 {
                        acc += fp.weights[corner] * img.data()[fp.indices[corner] * c + ch];
                    }
                    data[i * c + ch] = acc;
                }
                valid[i] = 1.0;
            }
        }
    }
    Ok((
        Image::new(w, h, c, data)?,
        ScalarMap::new(w, h, Units::Probability, valid, vec![true; w * h])?,
    ))
}

/// Warps `target` (frame t+1) into the frame-t view given frame-t depth
/// and the frame-t to frame-(t+1) pose.
///
/// The image equals `flow_warp(target, rigid_flow(depth_src, pose, k))`
/// bit for bit; validity additionally requires the rigid flow itself to
/// be valid.
pub fn inverse_warp(
    target: &Image,
    depth_src: &ScalarMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<(Image, ScalarMap)> {
    ensure_dims(
        "inverse_warp depth",
        (target.width(), target.height()),
        (depth_src.width(), depth_src.height()),
    )?;
    let (flow, flow_valid) = rigid_flow(depth_src, pose, k)?;
    let (warped, sample_valid) = flow_warp(target, &flow)?;
    let combined: Vec<f64> = flow_valid
        .data()
        .iter()
        .zip(sample_valid.data())
        .map(|(&a, &b)| a * b)
        .collect();
    let n = combined.len();
    Ok((
        warped,
        ScalarMap::new(
            target.width(),
            target.height(),
            Units::Probability,
            combined,
            vec![true; n],
        )?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;
    use nalgebra::{Matrix3, Vector3};

    fn k100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap()
    }

    fn const_depth(w: usize, h: usize, d: f64) -> ScalarMap {
        ScalarMap::filled(w, h, Units::Meters, d)
    }

    fn translation_pose(t: Vector3<f64>) -> Pose {
        Pose::new(Matrix3::identity(), t).unwrap()
    }

    fn smooth_image(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |u, v| {
            let (x, y) = (u as f64, v as f64);
            (0.5 + 0.2 * (x * 0.11).sin() + 0.2 * (y * 0.13).cos() + 0.08 * (x * 0.05 + y * 0.07).sin())
                .clamp(0.0, 1.0)
        })
        .unwrap()
    }

    #[test]
    fn identity_pose_gives_zero_flow() {
        // Zero up to the rounding of project(backproject(.)), ~1e-16 px.
        let depth = const_depth(16, 12, 7.5);
        let (flow, valid) = rigid_flow(&depth, &Pose::identity(), &k100()).unwrap();
        assert!(flow.du().iter().all(|&x| x.abs() < 1e-12));
        assert!(flow.dv().iter().all(|&x| x.abs() < 1e-12));
        assert!(valid.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn lateral_camera_motion_shifts_flow_against_it() {
        // A camera moving +1 m along x means frame-(t+1) coordinates of a
        // static point are x' = x - 1, i.e. a pose with translation
        // (-1, 0, 0); at 10 m depth with fx = 100 the scene slides 10 px
        // to the left.
        let depth = const_depth(16, 12, 10.0);
        let pose = translation_pose(Vector3::new(-1.0, 0.0, 0.0));
        let (flow, valid) = rigid_flow(&depth, &pose, &k100()).unwrap();
        for i in 0..flow.du().len() {
            assert!((flow.du()[i] - (-10.0)).abs() < 1e-12);
            assert!(flow.dv()[i].abs() < 1e-12);
            assert_eq!(valid.data()[i], 1.0);
        }
        // The transform applies as x' = R x + t: a positive-x pose
        // translation moves projections the other way.
        let pose_pos = translation_pose(Vector3::new(1.0, 0.0, 0.0));
        let (flow_pos, _) = rigid_flow(&depth, &pose_pos, &k100()).unwrap();
        assert!((flow_pos.du()[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forward_motion_radiates_from_principal_point() {
        // Camera moving toward the scene: z' = z - 1 under t = (0,0,-1).
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let depth = const_depth(151, 101, 10.0);
        let pose = translation_pose(Vector3::new(0.0, 0.0, -1.0));
        let (flow, valid) = rigid_flow(&depth, &pose, &k).unwrap();

        // Independent per-pixel projection oracle.
        for v in (0..101).step_by(10) {
            for u in (0..151).step_by(10) {
                let i = v * 151 + u;
                assert_eq!(valid.data()[i], 1.0);
                let x = (u as f64 - 50.0) / 100.0 * 10.0;
                let y = (v as f64 - 50.0) / 100.0 * 10.0;
                let exp_u = 100.0 * x / 9.0 + 50.0 - u as f64;
                let exp_v = 100.0 * y / 9.0 + 50.0 - v as f64;
                let (du, dv) = flow.get(u, v);
                assert!((du - exp_u).abs() < 1e-10);
                assert!((dv - exp_v).abs() < 1e-10);
                // Outward: flow points away from the principal point.
                assert!(du * (u as f64 - 50.0) >= 0.0);
                assert!(dv * (v as f64 - 50.0) >= 0.0);
            }
        }
        // Magnitude at (cx + fx, cy): fx * 10 * (1/9 - 1/10).
        let (du, dv) = flow.get(150, 50);
        assert!((du - 100.0 * 10.0 * (1.0 / 9.0 - 1.0 / 10.0)).abs() < 1e-10);
        assert!(dv.abs() < 1e-12);
    }

    #[test]
    fn invalid_depth_pixels_yield_invalid_flow() {
        let depth = ScalarMap::from_fn(8, 8, Units::Meters, |u, _| {
            if u < 4 {
                Some(5.0)
            } else {
                None
            }
        });
        let pose = translation_pose(Vector3::new(0.2, 0.0, 0.0));
        let (flow, valid) = rigid_flow(&depth, &pose, &k100()).unwrap();
        for v in 0..8 {
            for u in 0..8 {
                let i = v * 8 + u;
                if u < 4 {
                    assert_eq!(valid.data()[i], 1.0);
                } else {
                    assert_eq!(valid.data()[i], 0.0);
                    assert_eq!(flow.get(u, v), (0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn behind_camera_projection_is_invalid() {
        // Push the scene behind the camera.
        let depth = const_depth(8, 8, 1.0);
        let pose = translation_pose(Vector3::new(0.0, 0.0, -2.0));
        let (_, valid) = rigid_flow(&depth, &pose, &k100()).unwrap();
        assert!(valid.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let img = smooth_image(16, 12);
        let (out, valid) = flow_warp(&img, &FlowField::zeros(16, 12)).unwrap();
        assert_eq!(out, img);
        assert!(valid.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn uniform_integer_flow_shifts_ramp() {
        let w = 10;
        let img = Image::from_fn(w, 4, |u, _| u as f64 / w as f64).unwrap();
        let flow = FlowField::new(w, 4, vec![1.0; 40], vec![0.0; 40]).unwrap();
        let (out, valid) = flow_warp(&img, &flow).unwrap();
        for v in 0..4 {
            for u in 0..w {
                let i = v * w + u;
                if u + 1 < w {
                    assert_eq!(valid.data()[i], 1.0);
                    assert!((out.get(u, v, 0) - (u + 1) as f64 / w as f64).abs() < 1e-15);
                } else {
                    assert_eq!(valid.data()[i], 0.0);
                    assert_eq!(out.get(u, v, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn flow_warp_of_rigid_flow_equals_inverse_warp_bitwise() {
        let img = smooth_image(20, 16);
        let depth = const_depth(20, 16, 8.0);
        let pose = Twist::new(
            Vector3::new(0.01, -0.02, 0.03),
            Vector3::new(0.1, 0.05, -0.08),
        )
        .exp();
        let k = k100();
        let (flow, flow_valid) = rigid_flow(&depth, &pose, &k).unwrap();
        let (warp_a, valid_a) = flow_warp(&img, &flow).unwrap();
        let (warp_b, valid_b) = inverse_warp(&img, &depth, &pose, &k).unwrap();
        assert_eq!(warp_a.data(), warp_b.data());
        for i in 0..valid_a.data().len() {
            let expect = valid_a.data()[i] * flow_valid.data()[i];
            assert_eq!(valid_b.data()[i], expect);
        }
    }

    #[test]
    fn identity_pose_inverse_warp_reproduces_target() {
        let img = smooth_image(16, 12);
        let depth = const_depth(16, 12, 5.0);
        let (out, valid) = inverse_warp(&img, &depth, &Pose::identity(), &k100()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(valid.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn all_invalid_depth_gives_fully_invalid_output() {
        let img = smooth_image(8, 8);
        let depth = ScalarMap::from_fn(8, 8, Units::Meters, |_, _| None);
        let (_, valid) = inverse_warp(&img, &depth, &Pose::identity(), &k100()).unwrap();
        assert!(valid.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let img = smooth_image(8, 8);
        let depth = const_depth(9, 8, 5.0);
        assert!(inverse_warp(&img, &depth, &Pose::identity(), &k100()).is_err());
        let flow = FlowField::zeros(8, 9);
        assert!(flow_warp(&img, &flow).is_err());
    }

    #[test]
    fn round_trip_within_twice_interpolation_error() {
        // In-plane motion (rotation about z plus x/y translation) keeps a
        // constant-depth scene at constant depth, so warping with p and
        // then inverse(p) is the identity in the continuous domain.
        let img = smooth_image(64, 48);
        let k = Intrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        let depth = const_depth(64, 48, 10.0);
        let pose = Twist::new(
            Vector3::new(0.0, 0.0, 0.02),
            Vector3::new(0.15, -0.1, 0.0),
        )
        .exp();
        let (once, _) = inverse_warp(&img, &depth, &pose, &k).unwrap();
        let (back, valid) = inverse_warp(&once, &depth, &pose.inverse(), &k).unwrap();
        let mut diff = 0.0;
        let mut n = 0;
        for v in 0..48 {
            for u in 0..64 {
                if valid.data()[v * 64 + u] == 1.0 {
                    diff += (back.get(u, v, 0) - img.get(u, v, 0)).abs();
                    n += 1;
                }
            }
        }
        assert!(n > 1000);
        let mean = diff / n as f64;
        assert!(mean < 0.02, "round-trip error {mean}");
    }
}
