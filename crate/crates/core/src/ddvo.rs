//! Direct visual odometry: refine a relative camera pose by minimizing
//! masked photometric error over an image pyramid with Levenberg-
//! Marquardt.
//!
//! The residual at pixel p is `r(p) = I_t(p) - I_{t+1}(warp(p))`, where
//! the warp projects p through the frame-t depth and the current pose
//! estimate (grayscale intensities). Steps are left-multiplicative twist
//! increments: `T <- exp(delta) * T`. The per-pixel weight is the static
//! mask times the Huber IRLS weight.

use nalgebra::{Matrix2x3, Matrix3, Matrix6, RowVector2, RowVector3, Vector2, Vector3, Vector6};

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{Intrinsics, Pose, Twist, Z_MIN};
use crate::imagery::{Image, ScalarMap, Units};
use crate::reduce::pairwise_sum;

/// Accepted steps between rotation re-orthonormalizations.
const REORTHO_INTERVAL: usize = 100;

/// Gradient norm below which a level is treated as converged (the
/// perfect-reconstruction case).
const GRAD_EPS: f64 = 1e-15;

/// Mean cost at the floating-point noise floor; no step can meaningfully
/// improve on it.
const COST_EPS: f64 = 1e-24;

/// Solver parameters. `Default` gives the values used throughout the
/// crate's own tests: 4 pyramid levels, 50 iterations per level,
/// convergence on a 1e-9 twist-update norm, Levenberg-Marquardt damping
/// starting at 1e-4 (x10 on reject, /10 on accept) and a 0.1-intensity
/// Huber threshold.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub levels: usize,
    pub max_iterations: usize,
    /// Twist-update norm below which a level stops.
    pub tolerance: f64,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Damping beyond this value means the level cannot make progress.
    pub lambda_max: f64,
    pub huber_delta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            levels: 4,
            max_iterations: 50,
            tolerance: 1e-9,
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e8,
            huber_delta: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tolerance", self.tolerance),
            ("initial_lambda", self.initial_lambda),
            ("lambda_up", self.lambda_up),
            ("lambda_down", self.lambda_down),
            ("lambda_max", self.lambda_max),
            ("huber_delta", self.huber_delta),
        ];
        for (name, value) in positive {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::Domain(format!(
                    "solver {name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.levels < 1 {
            return Err(Error::Domain("solver needs at least one pyramid level".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Domain("solver needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Why the finest level stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Twist update dropped below the tolerance (or the gradient
    /// vanished).
    Converged,
    /// Iteration budget exhausted while still improving.
    MaxIterations,
    /// Damping exceeded its ceiling without finding a cost-decreasing
    /// step; the best pose so far is returned.
    Stalled,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Stalled => "stalled",
        }
    }
}

/// One accepted Levenberg-Marquardt step.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub level: usize,
    pub iteration: usize,
    /// Cost after the step (mean Huber-weighted squared residual).
    pub cost: f64,
    pub step_norm: f64,
    pub lambda: f64,
}

/// Diagnostics of one solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

/// Per-pixel 6-vector map: the derivative of the photometric residual
/// with respect to the twist `[wx, wy, wz, tx, ty, tz]` at the current
/// pose. Invalid pixels carry zero rows.
#[derive(Debug, Clone)]
pub struct JacobianMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 6]>,
    valid: Vec<bool>,
}

impl JacobianMap {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&[f64; 6]> {
        let i = v * self.width + u;
        self.valid[i].then(|| &self.data[i])
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
}

struct PixelChain {
    warped: f64,
    jacobian: [f64; 6],
}

/// The full chain at one pixel: backproject, transform, project, sample
/// with the in-cell derivative of the bilinear interpolant, then the
/// residual derivative with respect to a left-multiplicative twist.
fn chain_at(
    target: &Image,
    u: usize,
    v: usize,
    depth: f64,
    pose: &Pose,
    k: &Intrinsics,
) -> Option<PixelChain> {
    let dir = Vector3::new(
        (u as f64 - k.cx()) / k.fx(),
        (v as f64 - k.cy()) / k.fy(),
        1.0,
    );
    let point = pose.transform(&(dir * depth));
    if point.z <= Z_MIN {
        return None;
    }
    let px = Vector2::new(
        k.fx() * point.x / point.z + k.cx(),
        k.fy() * point.y / point.z + k.cy(),
    );
    let (warped, gu, gv) = target.sample_bilinear_with_grad(px.x, px.y, 0)?;

    let z = point.z;
    let proj = Matrix2x3::new(
        k.fx() / z,
        0.0,
        -k.fx() * point.x / (z * z),
        0.0,
        k.fy() / z,
        -k.fy() * point.y / (z * z),
    );
    // Row vector: gradient of the warped intensity w.r.t. the transformed
    // point.
    let g_point: RowVector3<f64> = RowVector2::new(gu, gv) * proj;
    // d(exp(delta) point)/d delta at 0: [-point^ | I].
    let skew = Matrix3::new(
        0.0, -point.z, point.y, //
        point.z, 0.0, -point.x, //
        -point.y, point.x, 0.0,
    );
    // residual = I_t - warped, so the chain enters with a minus sign.
    let j_rot = g_point * skew; // -g_point * (-skew)
    let j_trans = -g_point;
    Some(PixelChain {
        warped,
        jacobian: [
            j_rot[0], j_rot[1], j_rot[2], j_trans[0], j_trans[1], j_trans[2],
        ],
    })
}

/// Derivative of the photometric residual with respect to the twist at
/// every pixel, given the frame-t depth and the current pose. Multi-
/// channel targets are converted to grayscale.
pub fn photometric_jacobian(
    frame_t1: &Image,
    depth_t: &ScalarMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<JacobianMap> {
    ensure_dims(
        "photometric_jacobian depth",
        (frame_t1.width(), frame_t1.height()),
        (depth_t.width(), depth_t.height()),
    )?;
    depth_t.expect_units("photometric_jacobian depth", Units::Meters)?;
    let gray = frame_t1.to_grayscale();
    let (w, h) = (gray.width(), gray.height());
    let mut data = vec![[0.0; 6]; w * h];
    let mut valid = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(d) = depth_t.get(u, v).filter(|&d| d > 0.0) else {
                continue;
            };
            if let Some(chain) = chain_at(&gray, u, v, d, pose, k) {
                data[v * w + u] = chain.jacobian;
                valid[v * w + u] = true;
            }
        }
    }
    Ok(JacobianMap {
        width: w,
        height: h,
        data,
        valid,
    })
}

fn huber_cost(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_weight(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

struct Level {
    frame_t: Image,
    frame_t1: Image,
    depth: ScalarMap,
    weight: ScalarMap,
    k: Intrinsics,
    index: usize,
}

/// Mean Huber-weighted squared residual over the supported pixels;
/// `None` when nothing supports the cost.
fn level_cost(level: &Level, pose: &Pose, huber_delta: f64) -> Option<(f64, usize)> {
    let (w, h) = (level.frame_t.width(), level.frame_t.height());
    let mut terms = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let Some(w0) = level.weight.get(u, v).filter(|&x| x > 0.0) else {
                continue;
            };
            let Some(d) = level.depth.get(u, v).filter(|&d| d > 0.0) else {
                continue;
            };
            let Some(chain) = chain_at(&level.frame_t1, u, v, d, pose, &level.k) else {
                continue;
            };
            let r = level.frame_t.get(u, v, 0) - chain.warped;
            terms.push(w0 * huber_cost(r, huber_delta));
        }
    }
    if terms.is_empty() {
        None
    } else {
        Some((pairwise_sum(&terms) / terms.len() as f64, terms.len()))
    }
}

/// Accumulates the damped normal equations in deterministic row-major
/// order. Returns `None` when no pixel supports them.
fn normal_equations(
    level: &Level,
    pose: &Pose,
    huber_delta: f64,
) -> Option<(Matrix6<f64>, Vector6<f64>)> {
    let (w, h) = (level.frame_t.width(), level.frame_t.height());
    let mut hess = Matrix6::<f64>::zeros();
    let mut grad = Vector6::<f64>::zeros();
    let mut any = false;
    for v in 0..h {
        for u in 0..w {
            let Some(w0) = level.weight.get(u, v).filter(|&x| x > 0.0) else {
                continue;
            };
            let Some(d) = level.depth.get(u, v).filter(|&d| d > 0.0) else {
                continue;
            };
            let Some(chain) = chain_at(&level.frame_t1, u, v, d, pose, &level.k) else {
                continue;
            };
            let r = level.frame_t.get(u, v, 0) - chain.warped;
            let wt = w0 * huber_weight(r, huber_delta);
            let j = Vector6::from_column_slice(&chain.jacobian);
            hess += (j * j.transpose()) * wt;
            grad += wt * r * j;
            any = true;
        }
    }
    if !any {
        return None;
    }
    Some((hess, grad))
}

fn solve_damped(
    hess: &Matrix6<f64>,
    grad: &Vector6<f64>,
    lambda: f64,
) -> Option<Vector6<f64>> {
    let mut damped = *hess;
    for i in 0..6 {
        damped[(i, i)] += lambda * hess[(i, i)].max(1e-12);
    }
    damped.cholesky().map(|ch| ch.solve(&(-grad)))
}

/// Refines a relative pose by photometric alignment.
///
/// `static_weight` downweights pixels (0 removes them): pass all-ones to
/// run unmasked. Frames are converted to grayscale. The returned trace
/// records every accepted step; accepted costs at a fixed level are
/// non-increasing by construction.
pub fn refine_pose(
    frame_t: &Image,
    frame_t1: &Image,
    depth_t: &ScalarMap,
    init: &Pose,
    static_weight: &ScalarMap,
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> Result<(Pose, SolveTrace)> {
    cfg.validate()?;
    let dims = (frame_t.width(), frame_t.height());
    ensure_dims("refine_pose frame t+1", dims, (frame_t1.width(), frame_t1.height()))?;
    ensure_dims("refine_pose depth", dims, (depth_t.width(), depth_t.height()))?;
    ensure_dims(
        "refine_pose static weight",
        dims,
        (static_weight.width(), static_weight.height()),
    )?;
    depth_t.expect_units("refine_pose depth", Units::Meters)?;
    static_weight.expect_units("refine_pose static weight", Units::Probability)?;

    let gray_t = frame_t.to_grayscale();
    let gray_t1 = frame_t1.to_grayscale();
    let pyr_t = gray_t.pyramid(cfg.levels)?;
    let pyr_t1 = gray_t1.pyramid(cfg.levels)?;
    let mut levels = Vec::with_capacity(cfg.levels);
    let mut depth = depth_t.clone();
    let mut weight = static_weight.clone();
    for index in 0..cfg.levels {
        if index > 0 {
            depth = depth.downsample_half_valid();
            weight = weight.downsample_half_valid();
        }
        let scale = 0.5f64.powi(index as i32);
        levels.push(Level {
            frame_t: pyr_t[index].clone(),
            frame_t1: pyr_t1[index].clone(),
            depth: depth.clone(),
            weight: weight.clone(),
            k: k.rescaled(scale, scale)?,
            index,
        });
    }

    let mut pose = *init;
    let mut trace = Vec::new();
    let mut termination = Termination::Converged;
    let mut accepted_total = 0usize;

    // Coarse to fine.
    for level in levels.iter().rev() {
        let Some((mut current_cost, _)) = level_cost(level, &pose, cfg.huber_delta) else {
            return Err(Error::EmptySupport("no valid pixels support the residual"));
        };
        let mut lambda = cfg.initial_lambda;
        termination = Termination::MaxIterations;
        if current_cost <= COST_EPS {
            termination = Termination::Converged;
            continue;
        }

        'iterations: for iteration in 0..cfg.max_iterations {
            let Some((hess, grad)) = normal_equations(level, &pose, cfg.huber_delta) else {
                return Err(Error::EmptySupport("no valid pixels support the residual"));
            };
            if grad.norm() < GRAD_EPS {
                termination = Termination::Converged;
                break 'iterations;
            }
            // Retry with stronger damping until a step reduces the cost.
            loop {
                let step = solve_damped(&hess, &grad, lambda);
                let candidate = match step {
                    Some(delta) => {
                        let update = Twist::from_vector(&delta).exp();
                        Some((update.compose(&pose), delta.norm()))
                    }
                    None => None,
                };
                if let Some((cand_pose, step_norm)) = candidate {
                    if let Some((cand_cost, _)) = level_cost(level, &cand_pose, cfg.huber_delta) {
                        if cand_cost < current_cost {
                            pose = cand_pose;
                            accepted_total += 1;
                            if accepted_total.is_multiple_of(REORTHO_INTERVAL) {
                                pose = pose.orthonormalized();
                            }
                            current_cost = cand_cost;
                            lambda = (lambda / cfg.lambda_down).max(1e-12);
                            trace.push(IterationRecord {
                                level: level.index,
                                iteration,
                                cost: cand_cost,
                                step_norm,
                                lambda,
                            });
                            if step_norm < cfg.tolerance {
                                termination = Termination::Converged;
                                break 'iterations;
                            }
                            break;
                        }
                    }
                }
                lambda *= cfg.lambda_up;
                if lambda > cfg.lambda_max {
                    termination = Termination::Stalled;
                    break 'iterations;
                }
            }
        }
    }

    Ok((
        pose,
        SolveTrace {
            iterations: trace,
            termination,
        },
    ))
}
