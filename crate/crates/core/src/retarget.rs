//! Human-to-robot hand retargeting.
//!
//! A frame is processed in four stages: the human palm plane (index knuckle,
//! ring knuckle, wrist) is rotated onto the robot's and the middle-finger
//! roots are made coincident; each fingertip offset from its own root is
//! rescaled by the human/robot length ratio; the thumb and finger targets are
//! nudged by the rig offsets; finally each finger is solved independently by
//! IK. The three non-thumb root joints are always commanded to zero.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{solve_ik, DhChain, IkParams, IkResult, KinematicsError};
use crate::model::{
    skeleton, validate_hand_frame, Finger, FrameError, HandFrame, JointCommand, JointVector, RigConfig, JOINT_COUNT,
};

/// Anchor triangles with smaller area are treated as collinear.
const MIN_ANCHOR_AREA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetargetError {
    #[error("invalid hand frame: {0}")]
    InvalidFrame(#[from] FrameError),
    #[error("hand anchors are collinear (triangle area {area:.3e} m^2)")]
    DegenerateHand { area: f64 },
    #[error("robot {0:?} finger has zero total link length")]
    ZeroRobotLength(Finger),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Orthonormal palm basis with columns `(x, y, n)`.
///
/// `x` runs from the ring knuckle to the index knuckle and `n` is the normal
/// of the (index, ring, wrist) triangle.
pub fn palm_basis(
    index_root: &Vector3<f64>,
    ring_root: &Vector3<f64>,
    wrist: &Vector3<f64>,
) -> Result<Matrix3<f64>, RetargetError> {
    let normal = (index_root - wrist).cross(&(ring_root - wrist));
    let area = 0.5 * normal.norm();
    let across = index_root - ring_root;
    if !(area > MIN_ANCHOR_AREA) || across.norm() == 0.0 {
        return Err(RetargetError::DegenerateHand { area });
    }
    let x = across.normalize();
    let n = normal.normalize();
    let y = n.cross(&x);
    // x is not exactly orthogonal to n when the wrist is off the knuckle
    // bisector; re-derive it from y and n.
    let x = y.cross(&n);
    Ok(Matrix3::from_columns(&[x, y, n]))
}

/// Rigid map from the human hand into the robot base frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFrame {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub human_index_root: Vector3<f64>,
    pub human_ring_root: Vector3<f64>,
    pub human_wrist: Vector3<f64>,
    pub human_middle_root: Vector3<f64>,
}

impl AlignmentFrame {
    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }
}

/// Robot palm basis from the rig anchors.
pub fn robot_palm_basis(rig: &RigConfig) -> Result<Matrix3<f64>, RetargetError> {
    let a = &rig.anchors;
    palm_basis(&Vector3::from(a.index_root), &Vector3::from(a.ring_root), &Vector3::from(a.wrist))
}

pub fn compute_alignment(frame: &HandFrame, rig: &RigConfig) -> Result<AlignmentFrame, RetargetError> {
    validate_hand_frame(frame)?;
    let index_root = frame.vertex(skeleton::INDEX_PROXIMAL);
    let ring_root = frame.vertex(skeleton::RING_PROXIMAL);
    let wrist = frame.vertex(skeleton::WRIST);
    let middle_root = frame.vertex(skeleton::MIDDLE_PROXIMAL);

    let human = palm_basis(&index_root, &ring_root, &wrist)?;
    let robot = robot_palm_basis(rig)?;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(robot * human.transpose()));
    let translation = Vector3::from(rig.anchors.middle_root) - rotation * middle_root;
    Ok(AlignmentFrame {
        rotation,
        translation,
        human_index_root: index_root,
        human_ring_root: ring_root,
        human_wrist: wrist,
        human_middle_root: middle_root,
    })
}

/// Human vertices entering the length ratio: as many segments as the robot
/// finger has links, ending at the tip.
fn human_scale_chain(rig: &RigConfig, finger: Finger) -> &'static [usize] {
    let links = rig.chain(finger).link_lengths().len();
    let all = finger.human_vertices();
    &all[all.len().saturating_sub(links + 1)..]
}

/// Length ratio `k = sum(human segment lengths) / sum(robot link lengths)`.
pub fn compute_scale(frame: &HandFrame, rig: &RigConfig, finger: Finger) -> Result<f64, RetargetError> {
    let robot = rig.chain(finger).link_length_sum();
    if robot == 0.0 {
        return Err(RetargetError::ZeroRobotLength(finger));
    }
    let human: f64 =
        human_scale_chain(rig, finger).windows(2).map(|w| (frame.vertex(w[1]) - frame.vertex(w[0])).norm()).sum();
    Ok(human / robot)
}

/// Robot point where the scaled finger offset is attached.
pub fn robot_finger_root(rig: &RigConfig, finger: Finger) -> Vector3<f64> {
    rig.chain(finger).link_root()
}

/// Fingertip target before offsets: the human tip offset from its own root,
/// rotated into the robot frame and divided by `k`.
pub fn scale_target(
    frame: &HandFrame,
    alignment: &AlignmentFrame,
    k: f64,
    finger: Finger,
    rig: &RigConfig,
) -> Vector3<f64> {
    let root = human_scale_chain(rig, finger)[0];
    let offset = frame.vertex(finger.tip_vertex()) - frame.vertex(root);
    robot_finger_root(rig, finger) + alignment.rotation * offset / k
}

/// Per-finger IK targets in `Finger::ALL` order.
pub type FingerTargets = [Vector3<f64>; 4];

/// Moves the thumb target toward the robot wrist anchor and the other
/// targets along the signed robot palm normal.
pub fn apply_tip_offsets(raw: &FingerTargets, rig: &RigConfig) -> Result<FingerTargets, RetargetError> {
    let normal = robot_palm_basis(rig)?.column(2).into_owned();
    let wrist = Vector3::from(rig.anchors.wrist);
    let mut out = *raw;
    for (finger, target) in Finger::ALL.iter().zip(out.iter_mut()) {
        if finger.is_thumb() {
            let toward = wrist - *target;
            if toward.norm() > 0.0 {
                *target += toward.normalize() * rig.thumb_tip_offset;
            }
        } else {
            *target += normal * (rig.plane_offset_sign * rig.finger_tip_offset);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetargetResult {
    pub q_target: JointVector,
    /// In `Finger::ALL` order.
    pub ik: Vec<IkResult>,
    pub ik_targets: [[f64; 3]; 4],
    pub scales: [f64; 4],
}

impl RetargetResult {
    pub fn all_converged(&self) -> bool {
        self.ik.iter().all(|r| r.converged)
    }
}

/// Fingertip IK targets and per-finger scales for one frame.
pub fn frame_targets(frame: &HandFrame, rig: &RigConfig) -> Result<(FingerTargets, [f64; 4]), RetargetError> {
    let alignment = compute_alignment(frame, rig)?;
    let mut raw = [Vector3::zeros(); 4];
    let mut scales = [0.0; 4];
    for (i, finger) in Finger::ALL.into_iter().enumerate() {
        scales[i] = compute_scale(frame, rig, finger)?;
        raw[i] = scale_target(frame, &alignment, scales[i], finger, rig);
    }
    Ok((apply_tip_offsets(&raw, rig)?, scales))
}

fn assemble(
    frame: &HandFrame,
    q_current: &JointVector,
    rig: &RigConfig,
    targets: &FingerTargets,
    scales: [f64; 4],
    ik: Vec<IkResult>,
) -> (RetargetResult, JointCommand) {
    let mut q_target = [0.0; JOINT_COUNT];
    for (finger, result) in Finger::ALL.into_iter().zip(&ik) {
        q_target[RigConfig::actuated_joints(finger)].copy_from_slice(&result.theta);
    }
    for root in RigConfig::ROOT_JOINTS {
        q_target[root] = 0.0;
    }
    let mut dq = [0.0; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        dq[i] = (q_target[i] - q_current[i]).clamp(-rig.max_step, rig.max_step);
    }
    let result = RetargetResult { q_target, ik, ik_targets: targets.map(|v| [v.x, v.y, v.z]), scales };
    (result, JointCommand { t: frame.t, dq })
}

fn seed_for(chain: &DhChain, finger: Finger, warm_start: Option<&JointVector>) -> Vec<f64> {
    match warm_start {
        Some(q) => q[RigConfig::actuated_joints(finger)].to_vec(),
        None => chain.mid_range(),
    }
}

/// Full pipeline for one frame.
///
/// IK for each finger is seeded from `warm_start` (the previous solution)
/// when given, otherwise from mid-range. The command is the per-joint
/// difference to `q_current` clamped to `rig.max_step`.
pub fn retarget_frame(
    frame: &HandFrame,
    q_current: &JointVector,
    rig: &RigConfig,
    warm_start: Option<&JointVector>,
) -> Result<(RetargetResult, JointCommand), RetargetError> {
    let (targets, scales) = frame_targets(frame, rig)?;
    let mut ik = Vec::with_capacity(4);
    for (finger, target) in Finger::ALL.into_iter().zip(&targets) {
        let chain = rig.chain(finger);
        ik.push(solve_ik(&chain, target, &seed_for(&chain, finger, warm_start), &rig.ik)?);
    }
    Ok(assemble(frame, q_current, rig, &targets, scales, ik))
}

/// Residual growth, meters, beyond which a tracking step falls back to the
/// full restart search.
pub const TRACKING_SLACK: f64 = 5e-3;

/// Retargeting state for one operator stream.
///
/// The first frame after a reset runs the full search. Later frames run a
/// single attempt seeded from the previous solution and keep it unless it
/// fails to converge with a residual more than [`TRACKING_SLACK`] above the
/// previous frame's, in which case the full search runs.
#[derive(Clone, Debug)]
pub struct RetargetSession {
    rig: RigConfig,
    warm_start: Option<JointVector>,
    residuals: [f64; 4],
}

impl RetargetSession {
    pub fn new(rig: RigConfig) -> Self {
        Self { rig, warm_start: None, residuals: [0.0; 4] }
    }

    pub fn rig(&self) -> &RigConfig {
        &self.rig
    }

    pub fn reset(&mut self) {
        self.warm_start = None;
    }

    pub fn step(
        &mut self,
        frame: &HandFrame,
        q_current: &JointVector,
    ) -> Result<(RetargetResult, JointCommand), RetargetError> {
        let out = match self.warm_start {
            None => retarget_frame(frame, q_current, &self.rig, None)?,
            Some(warm) => {
                let (targets, scales) = frame_targets(frame, &self.rig)?;
                let tracking = IkParams { restarts: false, ..self.rig.ik };
                let mut ik = Vec::with_capacity(4);
                for (i, (finger, target)) in Finger::ALL.into_iter().zip(&targets).enumerate() {
                    let chain = self.rig.chain(finger);
                    let seed = seed_for(&chain, finger, Some(&warm));
                    let mut result = solve_ik(&chain, target, &seed, &tracking)?;
                    if !result.converged && result.residual > self.residuals[i] + TRACKING_SLACK {
                        let spent = result.iterations;
                        result = solve_ik(&chain, target, &seed, &self.rig.ik)?;
                        result.iterations += spent;
                    }
                    ik.push(result);
                }
                assemble(frame, q_current, &self.rig, &targets, scales, ik)
            }
        };
        self.warm_start = Some(out.0.q_target);
        self.residuals = std::array::from_fn(|i| out.0.ik[i].residual);
        Ok(out)
    }
}
