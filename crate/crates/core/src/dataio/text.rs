//! Text records: KITTI-style calibration files and 3x4 pose records.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a KITTI calibration file and extracts the pinhole intrinsics
/// from the named 3x4 projection matrix (row-major: `P(0,0) = fx`,
/// `P(1,1) = fy`, `P(0,2) = cx`, `P(1,2) = cy`).
///
/// Lines look like `P2: 7.215377e+02 0.0 ...`; keys are everything before
/// the first colon.
pub fn read_calib(path: &Path, key: &str) -> Result<Intrinsics> {
    let text = read_text(path)?;
    for (line_no, line) in text.lines().enumerate() {
        let Some((k, rest)) = line.split_once(':') else {
            continue;
        };
        if k.trim() != key {
            continue;
        }
        let mut values = Vec::new();
        for token in rest.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                detail: format!("line {}: '{token}' is not a number", line_no + 1),
            })?;
            values.push(value);
        }
        if values.len() < 12 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!(
                    "key {key} has {} values, expected 12 (3x4 projection)",
                    values.len()
                ),
            });
        }
        return Intrinsics::new(values[0], values[5], values[2], values[6]);
    }
    Err(Error::Format {
        path: path.to_path_buf(),
        detail: format!("key {key} not found"),
    })
}

/// Reads a pose record: 12 whitespace-separated floats of a row-major
/// 3x4 `[R|t]`. The rotation must be orthonormal within 1e-3 and is
/// re-orthonormalized on load.
pub fn read_pose_record(path: &Path) -> Result<Pose> {
    let text = read_text(path)?;
    let mut values = Vec::with_capacity(12);
    for (index, token) in text.split_whitespace().enumerate() {
        let value: f64 = token.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            detail: format!("token {} '{token}' is not a number", index + 1),
        })?;
        values.push(value);
    }
    if values.len() != 12 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected 12 values of a 3x4 [R|t], found {}", values.len()),
        });
    }
    let rotation = Matrix3::new(
        values[0], values[1], values[2], //
        values[4], values[5], values[6], //
        values[8], values[9], values[10],
    );
    let translation = Vector3::new(values[3], values[7], values[11]);
    Pose::from_parts_orthonormalized(rotation, translation, 1e-3).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Writes a pose as a single-line 12-float row-major `[R|t]` record.
/// Floats print in shortest round-trippable form.
pub fn write_pose_record(path: &Path, pose: &Pose) -> Result<()> {
    let r = pose.rotation();
    let t = pose.translation();
    let record = format!(
        "{} {} {} {} {} {} {} {} {} {} {} {}\n",
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
        t.z
    );
    fs::write(path, record).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;
    use tempfile::tempdir;

    const SAMPLE_CALIB: &str = "\
P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
";

    #[test]
    fn sample_calib_line_parses_to_exact_floats() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        std::fs::write(&path, SAMPLE_CALIB).unwrap();
        let k = read_calib(&path, "P2").unwrap();
        assert_eq!(k.fx(), 721.5377);
        assert_eq!(k.fy(), 721.5377);
        assert_eq!(k.cx(), 609.5593);
        assert_eq!(k.cy(), 172.854);
    }

    #[test]
    fn missing_key_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        std::fs::write(&path, SAMPLE_CALIB).unwrap();
        match read_calib(&path, "P3") {
            Err(Error::Format { detail, .. }) => assert!(detail.contains("P3"), "{detail}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_float_names_the_token() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        std::fs::write(&path, "P2: 1.0 abc 2.0\n").unwrap();
        match read_calib(&path, "P2") {
            Err(Error::Format { detail, .. }) => assert!(detail.contains("'abc'"), "{detail}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn identity_pose_record() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        std::fs::write(&path, "1 0 0 0  0 1 0 0  0 0 1 0\n").unwrap();
        let pose = read_pose_record(&path).unwrap();
        assert!((pose.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-12);
        assert!(pose.translation().norm() < 1e-12);
    }

    #[test]
    fn pose_record_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        let pose = Twist::new(
            nalgebra::Vector3::new(0.2, -0.1, 0.45),
            nalgebra::Vector3::new(1.5, -0.25, 3.0),
        )
        .exp();
        write_pose_record(&path, &pose).unwrap();
        let back = read_pose_record(&path).unwrap();
        assert!((back.rotation() - pose.rotation()).norm() < 1e-12);
        assert!((back.translation() - pose.translation()).norm() < 1e-12);
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        std::fs::write(&path, "1 0.1 0 0  0 1 0 0  0 0 1 0\n").unwrap();
        assert!(matches!(
            read_pose_record(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn slightly_noisy_rotation_is_reorthonormalized() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        std::fs::write(&path, "1.0001 0 0 1  0 0.9999 0 2  0 0 1 3\n").unwrap();
        let pose = read_pose_record(&path).unwrap();
        let defect = (pose.rotation().transpose() * pose.rotation()
            - nalgebra::Matrix3::identity())
        .norm();
        assert!(defect < 1e-12);
        assert_eq!(pose.translation(), &nalgebra::Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn malformed_pose_token_reports_location() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        std::fs::write(&path, "1 0 0 0  0 oops 0 0  0 0 1 0\n").unwrap();
        match read_pose_record(&path) {
            Err(Error::Format { detail, .. }) => {
                assert!(detail.contains("token 6"), "{detail}");
                assert!(detail.contains("'oops'"), "{detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_count_pose_record() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pose.txt");
        std::fs::write(&path, "1 0 0 0 0 1\n").unwrap();
        assert!(matches!(
            read_pose_record(&path),
            Err(Error::Format { .. })
        ));
    }
}
