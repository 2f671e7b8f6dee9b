//! Shared domain types: tracked hand frames, the 26-point skeleton layout,
//! robot joint state and the rig configuration.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kinematics::{DhChain, DhRow, IkParams};

/// Number of tracked vertices in one hand frame.
pub const VERTEX_COUNT: usize = 26;
/// Number of actuated robot joints.
pub const JOINT_COUNT: usize = 16;

const UNIT_QUATERNION_TOLERANCE: f64 = 1e-6;

pub type JointVector = [f64; JOINT_COUNT];

/// Fixed 26-vertex skeleton layout of the hand-tracking wire contract.
///
/// Wrist and palm come first, then the thumb (four points) and the four
/// remaining digits (five points each), always ordered root to tip.
pub mod skeleton {
    pub const WRIST: usize = 0;
    pub const PALM: usize = 1;

    pub const THUMB_METACARPAL: usize = 2;
    pub const THUMB_PROXIMAL: usize = 3;
    pub const THUMB_DISTAL: usize = 4;
    pub const THUMB_TIP: usize = 5;

    pub const INDEX_METACARPAL: usize = 6;
    pub const INDEX_PROXIMAL: usize = 7;
    pub const INDEX_INTERMEDIATE: usize = 8;
    pub const INDEX_DISTAL: usize = 9;
    pub const INDEX_TIP: usize = 10;

    pub const MIDDLE_METACARPAL: usize = 11;
    pub const MIDDLE_PROXIMAL: usize = 12;
    pub const MIDDLE_INTERMEDIATE: usize = 13;
    pub const MIDDLE_DISTAL: usize = 14;
    pub const MIDDLE_TIP: usize = 15;

    pub const RING_METACARPAL: usize = 16;
    pub const RING_PROXIMAL: usize = 17;
    pub const RING_INTERMEDIATE: usize = 18;
    pub const RING_DISTAL: usize = 19;
    pub const RING_TIP: usize = 20;

    pub const LITTLE_METACARPAL: usize = 21;
    pub const LITTLE_PROXIMAL: usize = 22;
    pub const LITTLE_INTERMEDIATE: usize = 23;
    pub const LITTLE_DISTAL: usize = 24;
    pub const LITTLE_TIP: usize = 25;

    /// Tips of the four non-thumb digits, little finger included.
    pub const NON_THUMB_TIPS: [usize; 4] = [INDEX_TIP, MIDDLE_TIP, RING_TIP, LITTLE_TIP];
}

/// The four robot fingers, in joint-vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finger {
    Index,
    Middle,
    Ring,
    Thumb,
}

impl Finger {
    pub const ALL: [Finger; 4] = [Finger::Index, Finger::Middle, Finger::Ring, Finger::Thumb];

    /// Position of this finger's first joint in the 16-joint vector.
    pub fn joint_offset(self) -> usize {
        match self {
            Finger::Index => 0,
            Finger::Middle => 4,
            Finger::Ring => 8,
            Finger::Thumb => 12,
        }
    }

    pub fn is_thumb(self) -> bool {
        self == Finger::Thumb
    }

    /// Human skeleton vertices of this digit, root to tip.
    pub fn human_vertices(self) -> &'static [usize] {
        use skeleton::*;
        match self {
            Finger::Index => &[INDEX_METACARPAL, INDEX_PROXIMAL, INDEX_INTERMEDIATE, INDEX_DISTAL, INDEX_TIP],
            Finger::Middle => &[MIDDLE_METACARPAL, MIDDLE_PROXIMAL, MIDDLE_INTERMEDIATE, MIDDLE_DISTAL, MIDDLE_TIP],
            Finger::Ring => &[RING_METACARPAL, RING_PROXIMAL, RING_INTERMEDIATE, RING_DISTAL, RING_TIP],
            Finger::Thumb => &[THUMB_METACARPAL, THUMB_PROXIMAL, THUMB_DISTAL, THUMB_TIP],
        }
    }

    pub fn tip_vertex(self) -> usize {
        *self.human_vertices().last().expect("non-empty digit")
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Thumb => "thumb",
        }
    }
}

/// One tracked vertex: position in meters and unit orientation quaternion.
///
/// Serialized as `[x, y, z, qx, qy, qz, qw]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 7]", into = "[f64; 7]")]
pub struct VertexPose {
    pub position: [f64; 3],
    /// `(qx, qy, qz, qw)`
    pub orientation: [f64; 4],
}

impl VertexPose {
    pub const IDENTITY: VertexPose = VertexPose { position: [0.0; 3], orientation: [0.0, 0.0, 0.0, 1.0] };

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        let q = orientation.quaternion();
        Self { position: [position.x, position.y, position.z], orientation: [q.i, q.j, q.k, q.w] }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Orientation as a unit quaternion (renormalized).
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [x, y, z, w] = self.orientation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    /// Applies a rigid motion to this pose.
    pub fn transformed(&self, motion: &Isometry3<f64>) -> Self {
        let p = motion.transform_point(&self.position().into());
        Self::new(p.coords, motion.rotation * self.rotation())
    }
}

impl From<[f64; 7]> for VertexPose {
    fn from(v: [f64; 7]) -> Self {
        Self { position: [v[0], v[1], v[2]], orientation: [v[3], v[4], v[5], v[6]] }
    }
}

impl From<VertexPose> for [f64; 7] {
    fn from(p: VertexPose) -> Self {
        let [x, y, z] = p.position;
        let [qx, qy, qz, qw] = p.orientation;
        [x, y, z, qx, qy, qz, qw]
    }
}

/// One tracked human-hand sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    pub t: f64,
    pub vertices: Vec<VertexPose>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("hand frame has {0} vertices, expected 26")]
    WrongVertexCount(usize),
    #[error("vertex {index} orientation has norm {norm}")]
    NonUnitQuaternion { index: usize, norm: f64 },
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
}

impl HandFrame {
    pub fn vertex(&self, index: usize) -> Vector3<f64> {
        self.vertices[index].position()
    }

    /// Applies a rigid motion to every vertex.
    pub fn transformed(&self, motion: &Isometry3<f64>) -> Self {
        Self { t: self.t, vertices: self.vertices.iter().map(|v| v.transformed(motion)).collect() }
    }

    /// Scales all vertex positions by `factor` about `center`; orientations are kept.
    pub fn scaled_about(&self, center: &Vector3<f64>, factor: f64) -> Self {
        Self {
            t: self.t,
            vertices: self
                .vertices
                .iter()
                .map(|v| {
                    let p = center + (v.position() - center) * factor;
                    VertexPose { position: [p.x, p.y, p.z], orientation: v.orientation }
                })
                .collect(),
        }
    }
}

/// Checks the structural invariants of a single frame.
///
/// Timestamp ordering is a property of a stream and is checked by consumers.
pub fn validate_hand_frame(frame: &HandFrame) -> Result<(), FrameError> {
    if !frame.t.is_finite() {
        return Err(FrameError::NonFiniteValue("t".into()));
    }
    if frame.t < 0.0 {
        return Err(FrameError::NonFiniteValue("t (negative)".into()));
    }
    if frame.vertices.len() != VERTEX_COUNT {
        return Err(FrameError::WrongVertexCount(frame.vertices.len()));
    }
    for (index, v) in frame.vertices.iter().enumerate() {
        if v.position.iter().chain(v.orientation.iter()).any(|x| !x.is_finite()) {
            return Err(FrameError::NonFiniteValue(format!("vertex {index}")));
        }
        let norm = v.orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_QUATERNION_TOLERANCE {
            return Err(FrameError::NonUnitQuaternion { index, norm });
        }
    }
    Ok(())
}

/// Inclusive joint range in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub const fn symmetric(bound: f64) -> Self {
        Self { lower: -bound, upper: bound }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Per-joint clamp of `q + dq` into `limits`.
pub fn integrate_clamped(q: &JointVector, dq: &JointVector, limits: &[JointLimit]) -> JointVector {
    let mut out = [0.0; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        out[i] = limits[i].clamp(q[i] + dq[i]);
    }
    out
}

/// Robot hand state: joint positions, efforts and time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllegroState {
    pub t: f64,
    pub q: JointVector,
    pub tau: JointVector,
}

/// Relative joint targets sent to the hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCommand {
    pub t: f64,
    pub dq: JointVector,
}

/// One recorded demonstration step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFrame {
    pub t: f64,
    pub q: JointVector,
    pub tau: JointVector,
    pub dq: JointVector,
    pub image_top: String,
    pub image_wrist: String,
}

/// Rigid transform in serializable form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub translation: [f64; 3],
    /// `(qx, qy, qz, qw)`
    pub rotation: [f64; 4],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform { translation: [0.0; 3], rotation: [0.0, 0.0, 0.0, 1.0] };

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let q = iso.rotation.quaternion();
        let t = iso.translation.vector;
        Self { translation: [t.x, t.y, t.z], rotation: [q.i, q.j, q.k, q.w] }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z, w] = self.rotation;
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.translation)),
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }
}

/// Robot hand-plane anchors in the robot base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneAnchors {
    pub index_root: [f64; 3],
    pub ring_root: [f64; 3],
    pub wrist: [f64; 3],
    pub middle_root: [f64; 3],
}

/// Where each finger chain is mounted in the robot base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerMounts {
    pub index: RigidTransform,
    pub middle: RigidTransform,
    pub ring: RigidTransform,
    pub thumb: RigidTransform,
}

impl FingerMounts {
    pub fn get(&self, finger: Finger) -> &RigidTransform {
        match finger {
            Finger::Index => &self.index,
            Finger::Middle => &self.middle,
            Finger::Ring => &self.ring,
            Finger::Thumb => &self.thumb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigError {
    #[error("DH table `{0}` contains a non-finite entry")]
    NonFiniteDh(&'static str),
    #[error("DH table `{table}` has {found} actuated rows, expected {expected}")]
    ActuatedRowCount { table: &'static str, found: usize, expected: usize },
    #[error("expected 16 joint limits, found {0}")]
    LimitCount(usize),
    #[error("joint {0} has lower limit >= upper limit")]
    EmptyLimit(usize),
    #[error("{0} must be finite and non-negative")]
    NegativeConstant(&'static str),
    #[error("invalid rig file: {0}")]
    Parse(String),
}

/// Kinematic description of the robot hand and the retargeting constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub dh_finger: Vec<DhRow>,
    pub dh_thumb: Vec<DhRow>,
    pub mounts: FingerMounts,
    pub joint_limits: Vec<JointLimit>,
    /// Thumb tip shift toward the wrist, meters.
    pub thumb_tip_offset: f64,
    /// Index/middle/ring tip shift toward the hand plane, meters.
    pub finger_tip_offset: f64,
    /// Sign applied to the plane normal for the finger shift; -1 moves toward the palm side.
    pub plane_offset_sign: f64,
    pub anchors: PlaneAnchors,
    /// Posture of the operator's unused little finger in synthetic streams.
    pub pinky_hold_pose: [f64; 4],
    /// Largest per-joint command magnitude per tick, radians.
    pub max_step: f64,
    pub ik: IkParams,
}

/// Table for the index, middle and ring fingers. The first row is the fixed
/// root; the remaining rows carry the three flexion joints.
pub fn default_finger_dh() -> Vec<DhRow> {
    vec![
        DhRow::fixed(0.0, 0.0166, -FRAC_PI_2, 0.0),
        DhRow::actuated(0.054, 0.0, 0.0, -FRAC_PI_2, 0),
        DhRow::actuated(0.0384, 0.0, 0.0, 0.0, 1),
        DhRow::actuated(0.0437, 0.0, 0.0, 0.0, 2),
    ]
}

pub fn default_thumb_dh() -> Vec<DhRow> {
    vec![
        DhRow::actuated(0.0, 0.0, FRAC_PI_2, 0.0, 0),
        DhRow::actuated(0.0, 0.0554, -FRAC_PI_2, -FRAC_PI_2, 1),
        DhRow::actuated(0.0514, 0.0, 0.0, -FRAC_PI_2, 2),
        DhRow::actuated(0.0593, 0.0, 0.0, 0.0, 3),
    ]
}

/// Finger spacing across the palm.
const FINGER_PITCH: f64 = 0.0435;
/// Distance from the wrist anchor to the finger mounts along the palm.
const PALM_LENGTH: f64 = 0.095;

impl Default for RigConfig {
    fn default() -> Self {
        // Finger chains hang from mounts flipped about x so the first DH row
        // drops onto the palm plane and flexion curls toward -z.
        let flip = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let finger_mount = |y: f64| {
            RigidTransform::from_isometry(&Isometry3::from_parts(Translation3::new(PALM_LENGTH, y, 0.0166), flip))
        };
        let thumb_rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let thumb_mount =
            RigidTransform::from_isometry(&Isometry3::from_parts(Translation3::new(0.035, 0.03, 0.0), thumb_rotation));
        Self {
            dh_finger: default_finger_dh(),
            dh_thumb: default_thumb_dh(),
            mounts: FingerMounts {
                index: finger_mount(FINGER_PITCH),
                middle: finger_mount(0.0),
                ring: finger_mount(-FINGER_PITCH),
                thumb: thumb_mount,
            },
            joint_limits: vec![JointLimit::symmetric(FRAC_PI_2); JOINT_COUNT],
            thumb_tip_offset: 0.023,
            finger_tip_offset: 0.034,
            plane_offset_sign: -1.0,
            anchors: PlaneAnchors {
                index_root: [PALM_LENGTH, FINGER_PITCH, 0.0],
                ring_root: [PALM_LENGTH, -FINGER_PITCH, 0.0],
                wrist: [0.0, 0.0, 0.0],
                middle_root: [PALM_LENGTH, 0.0, 0.0],
            },
            pinky_hold_pose: [0.0, 0.3, 0.3, 0.2],
            max_step: 0.2,
            ik: IkParams::default(),
        }
    }
}

impl RigConfig {
    pub fn from_json(text: &str) -> Result<Self, RigError> {
        let rig: RigConfig = serde_json::from_str(text).map_err(|e| RigError::Parse(e.to_string()))?;
        rig.validate()?;
        Ok(rig)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig config serializes")
    }

    pub fn validate(&self) -> Result<(), RigError> {
        for (name, table, expected) in [("dh_finger", &self.dh_finger, 3), ("dh_thumb", &self.dh_thumb, 4)] {
            if table.iter().any(|r| !r.is_finite()) {
                return Err(RigError::NonFiniteDh(name));
            }
            let found = table.iter().filter(|r| r.joint_index.is_some()).count();
            if found != expected {
                return Err(RigError::ActuatedRowCount { table: name, found, expected });
            }
        }
        if self.joint_limits.len() != JOINT_COUNT {
            return Err(RigError::LimitCount(self.joint_limits.len()));
        }
        for (i, l) in self.joint_limits.iter().enumerate() {
            if !(l.lower < l.upper) {
                return Err(RigError::EmptyLimit(i));
            }
        }
        for (name, value) in [
            ("thumb_tip_offset", self.thumb_tip_offset),
            ("finger_tip_offset", self.finger_tip_offset),
            ("max_step", self.max_step),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(RigError::NegativeConstant(name));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("rig config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Kinematic chain of `finger`, mounted in the robot base frame.
    pub fn chain(&self, finger: Finger) -> DhChain {
        let rows = if finger.is_thumb() { &self.dh_thumb } else { &self.dh_finger };
        let limits = self.actuated_limits(finger);
        DhChain::new(rows.clone(), self.mounts.get(finger).to_isometry(), limits)
    }

    /// Limits of the joints driven by IK for `finger`.
    pub fn actuated_limits(&self, finger: Finger) -> Vec<JointLimit> {
        let start = finger.joint_offset();
        let first = if finger.is_thumb() { start } else { start + 1 };
        self.joint_limits[first..start + 4].to_vec()
    }

    /// Indices in the joint vector that IK drives for `finger`.
    pub fn actuated_joints(finger: Finger) -> std::ops::Range<usize> {
        let start = finger.joint_offset();
        if finger.is_thumb() {
            start..start + 4
        } else {
            start + 1..start + 4
        }
    }

    /// Root (abduction) joints of the three non-thumb fingers.
    pub const ROOT_JOINTS: [usize; 3] = [0, 4, 8];

    /// Clamps `q` into the configured limits.
    pub fn clamp(&self, q: &JointVector) -> JointVector {
        let mut out = *q;
        for (v, l) in out.iter_mut().zip(&self.joint_limits) {
            *v = l.clamp(*v);
        }
        out
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.iter().zip(&self.joint_limits).all(|(v, l)| l.contains(*v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_frame() -> HandFrame {
        HandFrame { t: 0.0, vertices: vec![VertexPose::IDENTITY; VERTEX_COUNT] }
    }

    #[test]
    fn identity_frame_is_valid() {
        assert_eq!(validate_hand_frame(&identity_frame()), Ok(()));
    }

    #[test]
    fn short_frame_is_rejected() {
        let mut frame = identity_frame();
        frame.vertices.pop();
        assert_eq!(validate_hand_frame(&frame), Err(FrameError::WrongVertexCount(25)));
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let mut frame = identity_frame();
        frame.vertices[3].orientation = [1.0, 1.0, 0.0, 0.0];
        match validate_hand_frame(&frame) {
            Err(FrameError::NonUnitQuaternion { index: 3, norm }) => {
                assert!((norm - 2f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_is_rejected() {
        let mut frame = identity_frame();
        frame.vertices[0].position[1] = f64::NAN;
        assert!(matches!(validate_hand_frame(&frame), Err(FrameError::NonFiniteValue(_))));
    }

    #[test]
    fn skeleton_indices_are_a_bijection() {
        use skeleton::*;
        let mut all = vec![WRIST, PALM];
        for f in Finger::ALL {
            all.extend_from_slice(f.human_vertices());
        }
        all.extend_from_slice(&[LITTLE_METACARPAL, LITTLE_PROXIMAL, LITTLE_INTERMEDIATE, LITTLE_DISTAL, LITTLE_TIP]);
        all.sort_unstable();
        assert_eq!(all, (0..VERTEX_COUNT).collect::<Vec<_>>());
    }

    #[test]
    fn default_rig_validates_and_round_trips() {
        let rig = RigConfig::default();
        rig.validate().unwrap();
        let back = RigConfig::from_json(&rig.to_json()).unwrap();
        assert_eq!(back, rig);
        assert_eq!(back.hash(), rig.hash());
    }

    #[test]
    fn rig_with_inverted_limit_is_rejected() {
        let mut rig = RigConfig::default();
        rig.joint_limits[5] = JointLimit { lower: 1.0, upper: 0.5 };
        assert_eq!(rig.validate(), Err(RigError::EmptyLimit(5)));
    }

    fn arb_pose() -> impl Strategy<Value = VertexPose> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform4(-1.0f64..1.0))
            .prop_map(|(p, q)| VertexPose { position: p, orientation: q })
    }

    proptest! {
        #[test]
        fn hand_frame_json_round_trip_is_byte_exact(
            t in 0.0f64..1e4,
            vertices in prop::collection::vec(arb_pose(), VERTEX_COUNT),
        ) {
            let frame = HandFrame { t, vertices };
            let text = serde_json::to_string(&frame).unwrap();
            let back: HandFrame = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &frame);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }

        #[test]
        fn clamped_integration_stays_in_limits(
            q in prop::array::uniform16(-FRAC_PI_2..FRAC_PI_2),
            dq in prop::array::uniform16(-10.0f64..10.0),
        ) {
            let rig = RigConfig::default();
            let next = integrate_clamped(&q, &dq, &rig.joint_limits);
            prop_assert!(rig.within_limits(&next));
        }
    }
}
