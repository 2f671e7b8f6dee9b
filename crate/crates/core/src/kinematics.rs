//! Denavit-Hartenberg chains: forward kinematics, finite-difference position
//! Jacobians and a damped-least-squares position IK solver.
//!
//! Each row contributes `TransX(a) * TransZ(d) * RotX(alpha) * RotZ(theta)`,
//! composed in row order from the chain's mount frame. The tip is the origin
//! of the last frame.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix3xX, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::JointLimit;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KinematicsError {
    #[error("expected {expected} joint angles, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}

/// One DH row. `joint_index` is `None` for a fixed row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub trans_x: f64,
    pub trans_z: f64,
    pub rot_x: f64,
    pub rot_z_offset: f64,
    #[serde(default)]
    pub joint_index: Option<usize>,
}

impl DhRow {
    pub const fn fixed(trans_x: f64, trans_z: f64, rot_x: f64, rot_z: f64) -> Self {
        Self { trans_x, trans_z, rot_x, rot_z_offset: rot_z, joint_index: None }
    }

    pub const fn actuated(trans_x: f64, trans_z: f64, rot_x: f64, rot_z_offset: f64, joint: usize) -> Self {
        Self { trans_x, trans_z, rot_x, rot_z_offset, joint_index: Some(joint) }
    }

    pub fn is_finite(&self) -> bool {
        [self.trans_x, self.trans_z, self.rot_x, self.rot_z_offset].iter().all(|v| v.is_finite())
    }

    fn rot_z(&self, theta: &[f64]) -> f64 {
        match self.joint_index {
            Some(j) => theta[j] + self.rot_z_offset,
            None => self.rot_z_offset,
        }
    }
}

/// Rigid frame as rotation matrix plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl Frame {
    fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self { rotation: *iso.rotation.to_rotation_matrix().matrix(), origin: iso.translation.vector }
    }

    fn then_row(&self, row: &DhRow, rot_z: f64) -> Frame {
        let local = Rotation3::from_axis_angle(&Vector3::x_axis(), row.rot_x)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), rot_z);
        Frame {
            origin: self.origin + self.rotation * Vector3::new(row.trans_x, 0.0, row.trans_z),
            rotation: self.rotation * local.matrix(),
        }
    }
}

/// A serial chain of DH rows mounted at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct DhChain {
    pub rows: Vec<DhRow>,
    pub base: Isometry3<f64>,
    /// One limit per actuated joint, indexed by `joint_index`.
    pub limits: Vec<JointLimit>,
}

struct ChainEval {
    tip: Vector3<f64>,
    jacobian: Matrix3xX<f64>,
    axes: Matrix3xX<f64>,
}

/// Forward-kinematics result with a soft limit flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TipEval {
    pub position: Vector3<f64>,
    pub within_limits: bool,
}

impl DhChain {
    pub fn new(rows: Vec<DhRow>, base: Isometry3<f64>, limits: Vec<JointLimit>) -> Self {
        Self { rows, base, limits }
    }

    /// Chain with identity mount and the given symmetric limit on every joint.
    pub fn unmounted(rows: Vec<DhRow>, bound: f64) -> Self {
        let n = rows.iter().filter(|r| r.joint_index.is_some()).count();
        Self::new(rows, Isometry3::identity(), vec![JointLimit::symmetric(bound); n])
    }

    pub fn dof(&self) -> usize {
        self.rows.iter().filter(|r| r.joint_index.is_some()).count()
    }

    fn check_len(&self, theta: &[f64]) -> Result<(), KinematicsError> {
        let expected = self.dof();
        if theta.len() != expected {
            return Err(KinematicsError::LengthMismatch { expected, found: theta.len() });
        }
        Ok(())
    }

    /// All frames along the chain; element 0 is the mount, the last is the tip frame.
    pub fn frames(&self, theta: &[f64]) -> Result<Vec<Frame>, KinematicsError> {
        self.check_len(theta)?;
        let mut frames = Vec::with_capacity(self.rows.len() + 1);
        let mut current = Frame::from_isometry(&self.base);
        frames.push(current);
        for row in &self.rows {
            current = current.then_row(row, row.rot_z(theta));
            frames.push(current);
        }
        Ok(frames)
    }

    /// Tip position in the mount's parent frame.
    pub fn fk(&self, theta: &[f64]) -> Result<Vector3<f64>, KinematicsError> {
        self.check_len(theta)?;
        Ok(self.tip_unchecked(theta))
    }

    /// Like [`fk`](Self::fk) but also reports whether `theta` respects the limits.
    pub fn fk_flagged(&self, theta: &[f64]) -> Result<TipEval, KinematicsError> {
        let position = self.fk(theta)?;
        Ok(TipEval { position, within_limits: self.within_limits(theta) })
    }

    fn tip_unchecked(&self, theta: &[f64]) -> Vector3<f64> {
        let mut current = Frame::from_isometry(&self.base);
        for row in &self.rows {
            current = current.then_row(row, row.rot_z(theta));
        }
        current.origin
    }

    /// Tip position with the exact geometric position Jacobian.
    ///
    /// Column `j` is `z_j x (tip - o_j)`, where `z_j` and `o_j` are the joint
    /// axis and origin. Also returns the joint axes, which the second
    /// derivatives need.
    pub fn tip_and_jacobian(&self, theta: &[f64]) -> Result<(Vector3<f64>, Matrix3xX<f64>), KinematicsError> {
        self.check_len(theta)?;
        let eval = self.evaluate(theta);
        Ok((eval.tip, eval.jacobian))
    }

    fn evaluate(&self, theta: &[f64]) -> ChainEval {
        let n = theta.len();
        let mut rotation = *self.base.rotation.to_rotation_matrix().matrix();
        let mut origin = self.base.translation.vector;
        let mut axes = Matrix3xX::zeros(n);
        let mut joint_origins = Matrix3xX::zeros(n);
        for row in &self.rows {
            origin += rotation * Vector3::new(row.trans_x, 0.0, row.trans_z);
            rotation *= Rotation3::from_axis_angle(&Vector3::x_axis(), row.rot_x).matrix();
            if let Some(j) = row.joint_index {
                axes.set_column(j, &rotation.column(2));
                joint_origins.set_column(j, &origin);
            }
            rotation *= Rotation3::from_axis_angle(&Vector3::z_axis(), row.rot_z(theta)).matrix();
        }
        let mut jacobian = Matrix3xX::zeros(n);
        for j in 0..n {
            let lever = origin - joint_origins.column(j);
            jacobian.set_column(j, &axes.column(j).cross(&lever));
        }
        ChainEval { tip: origin, jacobian, axes }
    }

    pub fn within_limits(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.limits).all(|(v, l)| l.contains(*v))
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (v, l) in theta.iter_mut().zip(&self.limits) {
            *v = l.clamp(*v);
        }
    }

    /// Mid-range configuration.
    pub fn mid_range(&self) -> Vec<f64> {
        self.limits.iter().map(JointLimit::mid).collect()
    }

    /// Position Jacobian by central differences with the default step.
    pub fn jacobian(&self, theta: &[f64]) -> Result<Matrix3xX<f64>, KinematicsError> {
        self.jacobian_with_step(theta, DEFAULT_FD_STEP)
    }

    pub fn jacobian_with_step(&self, theta: &[f64], step: f64) -> Result<Matrix3xX<f64>, KinematicsError> {
        self.check_len(theta)?;
        let n = theta.len();
        let mut jac = Matrix3xX::zeros(n);
        let mut probe = theta.to_vec();
        for j in 0..n {
            probe[j] = theta[j] + step;
            let plus = self.tip_unchecked(&probe);
            probe[j] = theta[j] - step;
            let minus = self.tip_unchecked(&probe);
            probe[j] = theta[j];
            jac.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// Sum of the `trans_x` link lengths.
    pub fn link_length_sum(&self) -> f64 {
        self.link_lengths().iter().sum()
    }

    /// Non-zero `trans_x` entries in row order.
    pub fn link_lengths(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.trans_x.abs()).filter(|a| *a > 0.0).collect()
    }

    /// Origin of the frame from which the first `trans_x` link extends,
    /// evaluated at zero joint angles.
    ///
    /// For both default tables this point does not move with the joints.
    pub fn link_root(&self) -> Vector3<f64> {
        let theta = vec![0.0; self.dof()];
        let mut current = Frame::from_isometry(&self.base);
        for row in &self.rows {
            if row.trans_x != 0.0 {
                break;
            }
            current = current.then_row(row, row.rot_z(&theta));
        }
        current.origin
    }

    /// Per joint, whether it cannot move the tip: every row after its own
    /// carries no translation, so the joint only spins the tip frame.
    pub fn inert_joints(&self) -> Vec<bool> {
        let mut inert = vec![false; self.dof()];
        let mut translated_after = false;
        for row in self.rows.iter().rev() {
            if let Some(j) = row.joint_index {
                inert[j] = !translated_after;
            }
            translated_after |= row.trans_x != 0.0 || row.trans_z != 0.0;
        }
        inert
    }

    /// Upper bound on the distance from the mount to any reachable tip.
    pub fn reach_bound(&self) -> f64 {
        self.rows.iter().map(|r| r.trans_x.abs() + r.trans_z.abs()).sum()
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Damped-least-squares solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkParams {
    /// Initial damping, meters. Adapted per iteration between
    /// `min_damping` and `max_damping`.
    pub damping: f64,
    pub min_damping: f64,
    pub max_damping: f64,
    /// Per-iteration clamp on each joint update, radians.
    pub max_joint_step: f64,
    /// Iteration budget of a single attempt.
    pub max_iterations: usize,
    /// Convergence threshold on tip distance, meters.
    pub tolerance: f64,
    /// Retry from a fixed grid of seeds when the first attempt fails.
    pub restarts: bool,
    /// Newton iterations refining an unconverged result to the nearest
    /// stationary point.
    pub polish_iterations: usize,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.05,
            min_damping: 1e-6,
            max_damping: 1.0,
            max_joint_step: 0.2,
            max_iterations: 50,
            tolerance: 1e-4,
            restarts: true,
            polish_iterations: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub theta: Vec<f64>,
    /// Tip distance to the target at `theta`, meters.
    pub residual: f64,
    /// Iterations spent across all attempts.
    pub iterations: usize,
    pub converged: bool,
}

const DAMPING_SHRINK: f64 = 0.3;
const DAMPING_GROW: f64 = 4.0;
/// Fractions of each joint range used for restart seeds.
const RESTART_FRACTIONS: [f64; 3] = [0.15, 0.5, 0.85];
/// An attempt whose accepted update moves no joint further than this has
/// reached a stationary point.
const STALL_STEP: f64 = 1e-10;
/// A later attempt replaces the current best only if it is closer by more
/// than this, so near-equal minima resolve to the earliest attempt.
const IMPROVEMENT_MARGIN: f64 = 1e-10;

/// Solves for joint angles placing the tip of `chain` at `target`.
///
/// Damped least squares, `dtheta = J^T (J J^T + lambda^2 I)^-1 e`, with the
/// damping adapted Levenberg-Marquardt style: an update that lowers the
/// residual is accepted and relaxes the damping, otherwise it is rejected
/// and the damping grows. Updates are clamped per joint and every iterate is
/// clamped into the joint limits.
///
/// The first attempt starts at `theta0`. If it does not converge and
/// `params.restarts` is set, attempts follow from a grid of seeds at 15%, 50%
/// and 85% of each joint range; inert joints keep their `theta0` value.
/// Non-convergence is not an error: the best iterate is returned with
/// `converged == false`.
pub fn solve_ik(
    chain: &DhChain,
    target: &Vector3<f64>,
    theta0: &[f64],
    params: &IkParams,
) -> Result<IkResult, KinematicsError> {
    solve_ik_observed(chain, target, theta0, params, |_| {})
}

/// [`solve_ik`] that reports every accepted iterate to `observe`.
pub fn solve_ik_observed(
    chain: &DhChain,
    target: &Vector3<f64>,
    theta0: &[f64],
    params: &IkParams,
    mut observe: impl FnMut(&[f64]),
) -> Result<IkResult, KinematicsError> {
    chain.check_len(theta0)?;
    let mut seed = theta0.to_vec();
    chain.clamp(&mut seed);

    let (mut best, mut iterations) = dls_attempt(chain, target, seed, params, &mut observe);
    if best.1 <= params.tolerance {
        return Ok(finish(best, iterations, params));
    }
    if !params.restarts {
        iterations += polish(chain, target, &mut best, params, &mut observe);
        return Ok(finish(best, iterations, params));
    }

    let inert = chain.inert_joints();
    let active: Vec<usize> = (0..chain.dof()).filter(|&j| !inert[j]).collect();
    let levels = RESTART_FRACTIONS.len();
    for mask in 0..levels.pow(active.len() as u32) {
        let mut seed_grid = theta0.to_vec();
        chain.clamp(&mut seed_grid);
        for (k, &j) in active.iter().enumerate() {
            let l = &chain.limits[j];
            seed_grid[j] = l.lower + (l.upper - l.lower) * RESTART_FRACTIONS[(mask / levels.pow(k as u32)) % levels];
        }
        let (candidate, spent) = dls_attempt(chain, target, seed_grid, params, &mut observe);
        iterations += spent;
        if candidate.1 < best.1 - IMPROVEMENT_MARGIN {
            best = candidate;
        }
        if best.1 <= params.tolerance {
            return Ok(finish(best, iterations, params));
        }
    }
    iterations += polish(chain, target, &mut best, params, &mut observe);
    Ok(finish(best, iterations, params))
}

fn finish((theta, residual): (Vec<f64>, f64), iterations: usize, params: &IkParams) -> IkResult {
    IkResult { theta, residual, iterations, converged: residual <= params.tolerance }
}

/// One damped-least-squares descent; returns the best iterate and the
/// number of iterations used.
fn dls_attempt(
    chain: &DhChain,
    target: &Vector3<f64>,
    mut theta: Vec<f64>,
    params: &IkParams,
    observe: &mut impl FnMut(&[f64]),
) -> ((Vec<f64>, f64), usize) {
    observe(&theta);
    let mut error = target - chain.tip_unchecked(&theta);
    let mut residual = error.norm();
    let mut damping = params.damping;
    let mut trial = theta.clone();
    let mut iterations = 0;

    while residual > params.tolerance && iterations < params.max_iterations {
        iterations += 1;
        let jac = chain.evaluate(&theta).jacobian;
        let jjt = &jac * jac.transpose() + Matrix3::identity() * (damping * damping);
        let Some(weights) = jjt.cholesky().map(|c| c.solve(&error)) else {
            break;
        };
        let delta = jac.transpose() * weights;
        for ((t, v), d) in trial.iter_mut().zip(&theta).zip(delta.iter()) {
            *t = v + d.clamp(-params.max_joint_step, params.max_joint_step);
        }
        chain.clamp(&mut trial);

        let trial_error = target - chain.tip_unchecked(&trial);
        let trial_residual = trial_error.norm();
        if trial_residual < residual {
            let moved = trial.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            theta.copy_from_slice(&trial);
            observe(&theta);
            error = trial_error;
            residual = trial_residual;
            damping = (damping * DAMPING_SHRINK).max(params.min_damping);
            if moved < STALL_STEP {
                break;
            }
        } else if damping >= params.max_damping {
            break;
        } else {
            damping = (damping * DAMPING_GROW).min(params.max_damping);
        }
    }
    ((theta, residual), iterations)
}

/// Newton refinement of an unreachable-target result.
///
/// Minimizes `0.5 |target - tip|^2` over the joints that can move the tip
/// and are not pinned at a limit by the gradient, using the exact Hessian
/// `J^T J - sum_k e_k d2 tip_k`. Stops when the Hessian is not positive
/// definite, a step would raise the residual, or the step vanishes. Returns
/// the iterations spent.
fn polish(
    chain: &DhChain,
    target: &Vector3<f64>,
    best: &mut (Vec<f64>, f64),
    params: &IkParams,
    observe: &mut impl FnMut(&[f64]),
) -> usize {
    let inert = chain.inert_joints();
    let mut trial = best.0.clone();
    for iteration in 0..params.polish_iterations {
        let eval = chain.evaluate(&best.0);
        let error = target - eval.tip;
        let gradient = eval.jacobian.transpose() * error;
        let free: Vec<usize> = (0..chain.dof())
            .filter(|&j| {
                let l = &chain.limits[j];
                let theta = best.0[j];
                !inert[j] && !(theta >= l.upper && gradient[j] > 0.0) && !(theta <= l.lower && gradient[j] < 0.0)
            })
            .collect();
        if free.is_empty() {
            return iteration;
        }
        let m = free.len();
        let hessian = DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (free[a], free[b]);
            let first = eval.jacobian.column(i).dot(&eval.jacobian.column(j));
            // d2 tip / d theta_i d theta_j = z_min(i,j) x J_max(i,j)
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            let second = eval.axes.column(lo).cross(&eval.jacobian.column(hi));
            first - error.dot(&second)
        });
        let rhs = DVector::from_fn(m, |a, _| gradient[free[a]]);
        let Some(step) = hessian.cholesky().map(|c| c.solve(&rhs)) else {
            return iteration;
        };
        trial.copy_from_slice(&best.0);
        for (a, &j) in free.iter().enumerate() {
            trial[j] += step[a].clamp(-params.max_joint_step, params.max_joint_step);
        }
        chain.clamp(&mut trial);
        let residual = (target - chain.tip_unchecked(&trial)).norm();
        if residual > best.1 + POLISH_SLACK {
            return iteration;
        }
        let moved = trial.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        best.0.copy_from_slice(&trial);
        best.1 = residual;
        observe(&best.0);
        if moved < POLISH_STEP {
            return iteration + 1;
        }
    }
    params.polish_iterations
}

/// Residual increase tolerated from rounding while polishing, meters.
const POLISH_SLACK: f64 = 1e-12;
const POLISH_STEP: f64 = 1e-14;
