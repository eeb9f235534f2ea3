//! Pinhole camera model and SE(3) pose algebra.
//!
//! Conventions, fixed once for the whole crate:
//! - pixel coordinates are `(column u, row v)` with the origin at the
//!   center of the top-left pixel;
//! - camera frames are right-handed with `z` pointing into the scene;
//! - a [`Pose`] maps points expressed in frame-t camera coordinates to
//!   frame-(t+1) camera coordinates: `x' = R x + t`.

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};

/// Points with `z <= Z_MIN` (meters) project as invalid instead of
/// dividing by a vanishing depth.
pub const Z_MIN: f64 = 1e-3;

/// Below this rotation angle (radians) the Rodrigues coefficients switch
/// to their second-order Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// `log` rejects rotations with angle >= pi - LOG_ANGLE_MARGIN, where the
/// axis extraction is ill-conditioned.
pub const LOG_ANGLE_MARGIN: f64 = 1e-6;

/// Pinhole intrinsic parameters, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::Domain(format!(
                "focal lengths must be positive and finite, got fx={fx}, fy={fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Domain(format!(
                "principal point must be finite, got cx={cx}, cy={cy}"
            )));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }

    /// Lifts a pixel at a given depth (meters) to a 3D point in the
    /// camera frame.
    pub fn backproject(&self, px: Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if depth <= 0.0 || !depth.is_finite() {
            return Err(Error::InvalidDepth(depth));
        }
        Ok(Vector3::new(
            (px.x - self.cx) / self.fx * depth,
            (px.y - self.cy) / self.fy * depth,
            depth,
        ))
    }

    /// Projects a camera-frame point to pixel coordinates.
    ///
    /// Returns `None` for points at or behind `z = Z_MIN`; dense maps stay
    /// total by carrying the validity alongside.
    pub fn project(&self, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        if point.z <= Z_MIN {
            return None;
        }
        Some(Vector2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// Rescales the intrinsics for a resized image: `fx`, `cx` follow the
    /// width ratio, `fy`, `cy` the height ratio.
    pub fn rescaled(&self, scale_x: f64, scale_y: f64) -> Result<Self> {
        Intrinsics::new(
            self.fx * scale_x,
            self.fy * scale_y,
            self.cx * scale_x,
            self.cy * scale_y,
        )
    }
}

/// Rigid SE(3) transform between two camera frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

fn orthonormality_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

impl Pose {
    /// Builds a pose, rejecting rotation matrices that are not orthonormal
    /// with positive determinant (tolerance 1e-6 on `R^T R - I`).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("pose entries must be finite".into()));
        }
        let defect = orthonormality_defect(&rotation);
        if defect > 1e-6 {
            return Err(Error::Domain(format!(
                "rotation is not orthonormal (defect {defect:.3e})"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::Domain("rotation has negative determinant".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    /// Builds a pose from a possibly noisy rotation by projecting it onto
    /// SO(3) first (polar decomposition). `tol` bounds the accepted defect
    /// of the raw matrix.
    pub fn from_parts_orthonormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tol: f64,
    ) -> Result<Self> {
        let defect = orthonormality_defect(&rotation);
        if defect > tol {
            return Err(Error::Domain(format!(
                "rotation defect {defect:.3e} exceeds tolerance {tol:.3e}"
            )));
        }
        let projected = polar_rotation(&rotation)?;
        Pose::new(projected, translation)
    }

    pub fn identity() -> Self {
        Pose {
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

    /// Applies the transform to a point: `R x + t`.
    pub fn transform(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Function composition: `(self.compose(other))(x) = self(other(x))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Re-projects the rotation onto SO(3) via polar decomposition.
    ///
    /// Long composition chains (the solver caps them at 100) call this to
    /// keep drift below the orthonormality invariant.
    pub fn orthonormalized(&self) -> Pose {
        let rotation = polar_rotation(&self.rotation).expect("polar projection of a near-rotation");
        Pose {
            rotation,
            translation: self.translation,
        }
    }

    /// Logarithmic map to the minimal twist parameterization.
    ///
    /// Fails with [`Error::NearSingularRotation`] for angles within
    /// [`LOG_ANGLE_MARGIN`] of pi.
    pub fn log(&self) -> Result<Twist> {
        let omega = so3_log(&self.rotation)?;
        let v_inv = se3_v_inverse(&omega);
        Ok(Twist {
            rotation: omega,
            translation: v_inv * self.translation,
        })
    }
}

/// Minimal 6-parameter increment: axis-angle rotation plus the translation
/// component of the SE(3) exponential chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Twist {
            rotation,
            translation,
        }
    }

    /// Packs as `[wx, wy, wz, tx, ty, tz]`, the layout used by the solver
    /// and the photometric Jacobian.
    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            rotation: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// Exponential map to SE(3).
    pub fn exp(&self) -> Pose {
        let rotation = so3_exp(&self.rotation);
        let v = se3_v(&self.rotation);
        Pose {
            rotation,
            translation: v * self.translation,
        }
    }
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues formula with a second-order Taylor branch below [`SMALL_ANGLE`].
fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(omega);
    Matrix3::identity() + a * k + b * (k * k)
}

fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    // vee(R - R^T) / 2 has magnitude sin(theta) along the rotation axis.
    let s = Vector3::new(
        (r[(2, 1)] - r[(1, 2)]) * 0.5,
        (r[(0, 2)] - r[(2, 0)]) * 0.5,
        (r[(1, 0)] - r[(0, 1)]) * 0.5,
    );
    let sin_theta = s.norm();
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta >= std::f64::consts::PI - LOG_ANGLE_MARGIN {
        return Err(Error::NearSingularRotation { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // theta/sin(theta) ~ 1 + theta^2/6
        return Ok(s * (1.0 + theta * theta / 6.0));
    }
    Ok(s * (theta / sin_theta))
}

/// The V matrix of the SE(3) exponential: `t = V(omega) * rho`.
fn se3_v(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let k = skew(omega);
    Matrix3::identity() + b * k + c * (k * k)
}

fn se3_v_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    let k = skew(omega);
    Matrix3::identity() - 0.5 * k + d * (k * k)
}

/// Nearest rotation matrix in the Frobenius sense (polar factor of the SVD).
fn polar_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Domain("SVD of rotation matrix failed".into())),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the weakest singular direction to land on SO(3), not O(3).
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(r)
}
