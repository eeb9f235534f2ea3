//! Shared test oracles, independent of the library's warping and loss
//! paths.
//!
//! The scene oracle renders two-frame sequences of a textured slanted
//! plane by direct ray/plane intersection: analytic depth, exact pose,
//! exact flow, and intensities evaluated from a closed-form texture (no
//! resampling anywhere). The naive loss references are straightforward
//! per-pixel loops written from the definitions.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::Rng;

use tempeo_core::geometry::{Intrinsics, Pose, Twist};
use tempeo_core::imagery::{FlowField, Image, ScalarMap, Units};

/// Smooth world-anchored texture: a small sum of sinusoids of the
/// frame-t coordinates of the viewed point.
#[derive(Debug, Clone, Copy)]
pub struct Texture {
    pub phase: f64,
}

impl Texture {
    // Amplitudes sum below 0.5 so the texture never clips, and
    // frequencies stay low relative to the pixel pitch (~0.1 m at 10 m
    // with fx = 100) so bilinear interpolation bias stays well below the
    // pose-recovery tolerance.
    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        let (x, y) = (p.x, p.y);
        let v = 0.5
            + 0.15 * (1.1 * x + 0.7 + self.phase).sin()
            + 0.13 * (0.95 * y - 0.3 - self.phase).cos()
            + 0.11 * (0.7 * x + 0.85 * y + 0.5 * self.phase).sin()
            + 0.08 * (1.4 * x - 1.15 * y + 0.9).cos();
        v.clamp(0.0, 1.0)
    }
}

/// A textured plane `z = a + b x + c y` in frame-t camera coordinates,
/// viewed by two cameras related by `pose` (frame-t to frame-t+1).
/// `tex_frame` maps frame-t coordinates into the texture's own frame
/// (identity unless the scene is a rigidly conjugated copy of another).
pub struct PlaneScene {
    pub width: usize,
    pub height: usize,
    pub k: Intrinsics,
    pub plane: (f64, f64, f64),
    pub pose: Pose,
    pub texture: Texture,
    pub tex_frame: Pose,
}

impl PlaneScene {
    pub fn standard(width: usize, height: usize, pose: Pose, phase: f64) -> Self {
        let k = Intrinsics::new(
            100.0,
            100.0,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
        .unwrap();
        // A wide field of view and a clearly slanted plane keep the
        // photometric Hessian well conditioned (depth variation separates
        // translation from rotation).
        PlaneScene {
            width,
            height,
            k,
            plane: (10.0, 0.20, -0.15),
            pose,
            texture: Texture { phase },
            tex_frame: Pose::identity(),
        }
    }

    /// The same physical scene observed from cameras displaced by `q`:
    /// frame-t points of the new scene map into the old one via
    /// `x_old = q * x_new`, so the relative pose conjugates to
    /// `q^-1 * pose * q` and the plane/texture move along.
    pub fn conjugated(&self, q: &Pose) -> Self {
        let (a, b, c) = self.plane;
        let normal = Vector3::new(-b, -c, 1.0);
        // n . (R x + t) = a  =>  (R^T n) . x = a - n . t
        let n_new = q.rotation().transpose() * normal;
        let delta = a - normal.dot(q.translation());
        assert!(
            n_new.z.abs() > 0.5,
            "conjugation tilts the plane out of z-form"
        );
        let plane = (
            delta / n_new.z,
            -n_new.x / n_new.z,
            -n_new.y / n_new.z,
        );
        PlaneScene {
            width: self.width,
            height: self.height,
            k: self.k,
            plane,
            pose: q.inverse().compose(&self.pose).compose(q),
            texture: self.texture,
            tex_frame: self.tex_frame.compose(q),
        }
    }

    fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.k.cx()) / self.k.fx(),
            (v - self.k.cy()) / self.k.fy(),
            1.0,
        )
    }

    /// Analytic frame-t depth of the pixel ray/plane intersection.
    pub fn depth_at(&self, u: f64, v: f64) -> f64 {
        let (a, b, c) = self.plane;
        let d = self.ray(u, v);
        a / (1.0 - b * d.x - c * d.y)
    }

    pub fn depth_t(&self) -> ScalarMap {
        ScalarMap::from_fn(self.width, self.height, Units::Meters, |u, v| {
            Some(self.depth_at(u as f64, v as f64))
        })
    }

    /// Frame-t point seen at a frame-t pixel.
    pub fn point_t(&self, u: f64, v: f64) -> Vector3<f64> {
        self.ray(u, v) * self.depth_at(u, v)
    }

    fn tex_at(&self, point_t: &Vector3<f64>) -> f64 {
        self.texture.eval(&self.tex_frame.transform(point_t))
    }

    /// Continuous frame-t intensity.
    pub fn render_t_at(&self, u: f64, v: f64) -> f64 {
        self.tex_at(&(self.ray(u, v) * self.depth_at(u, v)))
    }

    pub fn render_t(&self) -> Image {
        Image::from_fn(self.width, self.height, |u, v| {
            self.render_t_at(u as f64, v as f64)
        })
        .unwrap()
    }

    /// Continuous frame-(t+1) intensity, by intersecting the pixel ray
    /// with the transformed plane and evaluating the texture at the
    /// corresponding frame-t point.
    pub fn render_t1_at(&self, u: f64, v: f64) -> f64 {
        let (a, b, c) = self.plane;
        let normal = Vector3::new(-b, -c, 1.0);
        // n . x = a in frame t becomes (R n) . x' = a + (R n) . t in
        // frame t+1 for x' = R x + t.
        let n1 = self.pose.rotation() * normal;
        let d1 = a + n1.dot(self.pose.translation());
        let dir = self.ray(u, v);
        let s = d1 / n1.dot(&dir);
        let point_t1 = dir * s;
        self.tex_at(&self.pose.inverse().transform(&point_t1))
    }

    pub fn render_t1(&self) -> Image {
        Image::from_fn(self.width, self.height, |u, v| {
            self.render_t1_at(u as f64, v as f64)
        })
        .unwrap()
    }

    /// Exact frame-t to frame-t+1 pixel displacement field.
    pub fn gt_flow(&self) -> FlowField {
        let mut du = vec![0.0; self.width * self.height];
        let mut dv = vec![0.0; self.width * self.height];
        for v in 0..self.height {
            for u in 0..self.width {
                let point = self.point_t(u as f64, v as f64);
                let moved = self.pose.transform(&point);
                let px = self
                    .k
                    .project(&moved)
                    .expect("oracle scenes keep the plane in front of both cameras");
                du[v * self.width + u] = px.x - u as f64;
                dv[v * self.width + u] = px.y - v as f64;
            }
        }
        FlowField::new(self.width, self.height, du, dv).unwrap()
    }
}

/// Random pose within the magnitudes used by the recovery criteria:
/// rotation angle at most `max_angle` radians, translation at most
/// `max_translation` meters.
pub fn random_small_pose(rng: &mut impl Rng, max_angle: f64, max_translation: f64) -> Pose {
    let axis = Vector3::new(
        rng.gen_range(-1.0f64..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
    .normalize();
    let angle = rng.gen_range(0.2..1.0) * max_angle;
    let translation = Vector3::new(
        rng.gen_range(-1.0f64..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-0.5..0.5),
    );
    let t_norm = translation.norm().max(1e-9);
    let t_scale = rng.gen_range(0.3..1.0) * max_translation / t_norm;
    Twist::new(axis * angle, translation * t_scale).exp()
}

/// Twist norm of the relative error between two poses.
pub fn pose_error(a: &Pose, b: &Pose) -> f64 {
    a.compose(&b.inverse()).log().expect("small error").norm()
}

// ---------------------------------------------------------------------
// Naive per-pixel reference implementations (sequential sums).
// ---------------------------------------------------------------------

/// Bilinear sample written from the definition: the support square must
/// lie inside the image (far border reads the border pixel).
pub fn naive_bilinear(data: &[f64], w: usize, h: usize, u: f64, v: f64) -> Option<f64> {
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let u0 = (u.floor() as usize).min(w.saturating_sub(2));
    let v0 = (v.floor() as usize).min(h.saturating_sub(2));
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    Some(
        (1.0 - fu) * (1.0 - fv) * data[v0 * w + u0]
            + fu * (1.0 - fv) * data[v0 * w + u1]
            + (1.0 - fu) * fv * data[v1 * w + u0]
            + fu * fv * data[v1 * w + u1],
    )
}

pub fn naive_depth_l1(pred: &ScalarMap, gt: &ScalarMap) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for v in 0..pred.height() {
        for u in 0..pred.width() {
            if let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) {
                sum += (p - g).abs();
                n += 1;
            }
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

pub fn naive_seg_loss(pred: &ScalarMap, gt: &ScalarMap, literal: bool) -> (f64, usize) {
    let eps = 1e-7;
    let mut sum = 0.0;
    let mut n = 0;
    for v in 0..pred.height() {
        for u in 0..pred.width() {
            if let (Some(p), Some(m)) = (pred.get(u, v), gt.get(u, v)) {
                let p = p.clamp(eps, 1.0 - eps);
                sum += if literal {
                    -(m * p.ln())
                } else {
                    -(m * p.ln() + (1.0 - m) * (1.0 - p).ln())
                };
                n += 1;
            }
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

pub fn naive_stc(t: &Image, t1: &Image, flow: &FlowField) -> (f64, usize) {
    let (w, h, c) = (t.width(), t.height(), t.channels());
    let mut sum = 0.0;
    let mut n = 0;
    for v in 0..h {
        for u in 0..w {
            let (du, dv) = flow.get(u, v);
            let (su, sv) = (u as f64 + du, v as f64 + dv);
            let mut ok = true;
            let mut abs = 0.0;
            for ch in 0..c {
                let plane: Vec<f64> = (0..w * h).map(|i| t.data()[i * c + ch]).collect();
                match naive_bilinear(&plane, w, h, su, sv) {
                    Some(s) => abs += (s - t1.get(u, v, ch)).abs(),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                sum += abs / c as f64;
                n += 1;
            }
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

/// Naive robust temporal loss: recomputes the rigid flow by plain
/// projection math, samples frame t+1 and the frame-(t+1) mask with
/// [`naive_bilinear`], and averages sequentially.
#[allow(clippy::too_many_arguments)]
pub fn naive_rtc(
    frame_t: &Image,
    frame_t1: &Image,
    depth_t: &ScalarMap,
    pose: &Pose,
    mask_t: &ScalarMap,
    mask_t1: &ScalarMap,
    k: &Intrinsics,
) -> (f64, usize) {
    let (w, h, c) = (frame_t.width(), frame_t.height(), frame_t.channels());
    let mask1: Vec<f64> = (0..w * h)
        .map(|i| {
            mask_t1
                .get(i % w, i / w)
                .map_or(0.0, |m| m.clamp(0.0, 1.0))
        })
        .collect();
    let mut sum = 0.0;
    let mut n = 0;
    for v in 0..h {
        for u in 0..w {
            let Some(d) = depth_t.get(u, v).filter(|&d| d > 0.0) else {
                continue;
            };
            let point = Vector3::new(
                (u as f64 - k.cx()) / k.fx() * d,
                (v as f64 - k.cy()) / k.fy() * d,
                d,
            );
            let moved = pose.rotation() * point + pose.translation();
            if moved.z <= 1e-3 {
                continue;
            }
            let su = k.fx() * moved.x / moved.z + k.cx();
            let sv = k.fy() * moved.y / moved.z + k.cy();
            let Some(m1) = naive_bilinear(&mask1, w, h, su, sv) else {
                continue;
            };
            let Some(m0) = mask_t.get(u, v).map(|m| m.clamp(0.0, 1.0)) else {
                continue;
            };
            let weight = m0 * m1;
            if weight <= 0.0 {
                continue;
            }
            let mut sq = 0.0;
            let mut ok = true;
            for ch in 0..c {
                let plane: Vec<f64> = (0..w * h).map(|i| frame_t1.data()[i * c + ch]).collect();
                match naive_bilinear(&plane, w, h, su, sv) {
                    Some(s) => {
                        let r = s - frame_t.get(u, v, ch);
                        sq += r * r;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                sum += weight * sq / c as f64;
                n += 1;
            }
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

/// Naive windowed SSIM loss (7x7 uniform window, population statistics),
/// averaged over channels then over valid centers.
pub fn naive_ssim_loss(a: &Image, b: &Image) -> (f64, usize) {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let half = 3usize;
    let win = 49.0;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut n = 0;
    for cv in half..h - half {
        for cu in half..w - half {
            let mut acc = 0.0;
            for ch in 0..c {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for v in cv - half..=cv + half {
                    for u in cu - half..=cu + half {
                        let x = a.get(u, v, ch);
                        let y = b.get(u, v, ch);
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                }
                let mx = sx / win;
                let my = sy / win;
                let vx = sxx / win - mx * mx;
                let vy = syy / win - my * my;
                let cov = sxy / win - mx * my;
                acc += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
            sum += (1.0 - acc / c as f64) * 0.5;
            n += 1;
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n)
}

/// Naive seven-metric computation over jointly valid pixels with
/// `gt <= cap`, prediction clamped to `[1e-3, cap]`.
pub fn naive_metrics(pred: &ScalarMap, gt: &ScalarMap, cap: f64) -> (f64, f64, f64, f64, f64, f64, f64, usize) {
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) else {
                continue;
            };
            if g <= 0.0 || g > cap {
                continue;
            }
            let p = p.clamp(1e-3, cap);
            n += 1;
            abs_rel += (p - g).abs() / g;
            sq_rel += (p - g) * (p - g) / g;
            sq += (p - g) * (p - g);
            sq_log += (p.ln() - g.ln()).powi(2);
            let ratio = (p / g).max(g / p);
            if ratio < 1.25 {
                d1 += 1;
            }
            if ratio < 1.25f64.powi(2) {
                d2 += 1;
            }
            if ratio < 1.25f64.powi(3) {
                d3 += 1;
            }
        }
    }
    let nf = n as f64;
    (
        abs_rel / nf,
        sq_rel / nf,
        (sq / nf).sqrt(),
        (sq_log / nf).sqrt(),
        d1 as f64 / nf,
        d2 as f64 / nf,
        d3 as f64 / nf,
        n,
    )
}
