//! Parametric human hand used by the synthetic tracking source.
//!
//! The hand is laid out in its own frame: wrist at the origin, digits
//! pointing along +x, index toward +y, palm facing -z. Curling a digit
//! rotates each of its segments toward the palm.

use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{skeleton, HandFrame, VertexPose, VERTEX_COUNT};

/// Slider-style pose parameters, each nominally in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    /// Thumb, index, middle, ring, little.
    pub curls: [f64; 5],
    pub spread: f64,
    pub thumb_opposition: f64,
}

impl HandPose {
    pub const OPEN: HandPose = HandPose { curls: [0.0; 5], spread: 0.0, thumb_opposition: 0.0 };
    pub const FIST: HandPose = HandPose { curls: [1.0; 5], spread: 0.0, thumb_opposition: 0.0 };
}

/// Explicit digit angles: abduction in the palm plane and three flexions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitAngles {
    pub abduction: f64,
    pub flexion: [f64; 3],
}

struct DigitGeometry {
    metacarpal_base: [f64; 3],
    knuckle: [f64; 3],
    segments: [f64; 3],
    max_flexion: [f64; 3],
    max_abduction: f64,
}

const INDEX: DigitGeometry = DigitGeometry {
    metacarpal_base: [0.02, 0.012, 0.0],
    knuckle: [0.088, 0.025, 0.0],
    segments: [0.040, 0.024, 0.020],
    max_flexion: [1.4, 1.6, 1.2],
    max_abduction: 0.12,
};
const MIDDLE: DigitGeometry = DigitGeometry {
    metacarpal_base: [0.02, 0.004, 0.0],
    knuckle: [0.092, 0.008, 0.0],
    segments: [0.044, 0.027, 0.021],
    max_flexion: [1.4, 1.6, 1.2],
    max_abduction: 0.0,
};
const RING: DigitGeometry = DigitGeometry {
    metacarpal_base: [0.02, -0.004, 0.0],
    knuckle: [0.088, -0.010, 0.0],
    segments: [0.041, 0.026, 0.021],
    max_flexion: [1.4, 1.6, 1.2],
    max_abduction: -0.10,
};
const LITTLE: DigitGeometry = DigitGeometry {
    metacarpal_base: [0.02, -0.012, 0.0],
    knuckle: [0.080, -0.027, 0.0],
    segments: [0.032, 0.019, 0.018],
    max_flexion: [1.4, 1.6, 1.2],
    max_abduction: -0.20,
};

const THUMB_BASE: [f64; 3] = [0.022, 0.022, -0.008];
const THUMB_SEGMENTS: [f64; 3] = [0.045, 0.032, 0.028];
const THUMB_MAX_FLEXION: [f64; 3] = [0.5, 0.9, 0.9];
/// Thumb heading in the palm plane when relaxed, and its swing under opposition.
const THUMB_HEADING: f64 = 0.9;
const THUMB_OPPOSITION_SWING: f64 = 0.9;
const THUMB_OPPOSITION_DIP: f64 = 0.6;

const PALM: [f64; 3] = [0.045, 0.0, 0.0];

impl DigitAngles {
    fn from_curl(geometry: &DigitGeometry, curl: f64, spread: f64) -> Self {
        Self { abduction: geometry.max_abduction * spread, flexion: geometry.max_flexion.map(|m| m * curl) }
    }
}

/// Builds a hand frame at time `t` for `pose`, placed in the world by `placement`.
pub fn hand_frame(t: f64, pose: &HandPose, placement: &Isometry3<f64>) -> HandFrame {
    hand_frame_with_little(t, pose, None, placement)
}

/// Like [`hand_frame`], optionally holding the little finger at fixed angles
/// `[abduction, flex1, flex2, flex3]`.
pub fn hand_frame_with_little(
    t: f64,
    pose: &HandPose,
    little: Option<[f64; 4]>,
    placement: &Isometry3<f64>,
) -> HandFrame {
    let mut vertices = vec![VertexPose::IDENTITY; VERTEX_COUNT];
    vertices[skeleton::WRIST] = VertexPose::new(Vector3::zeros(), UnitQuaternion::identity());
    vertices[skeleton::PALM] = VertexPose::new(Vector3::from(PALM), UnitQuaternion::identity());

    let digits = [
        (&INDEX, pose.curls[1], skeleton::INDEX_METACARPAL),
        (&MIDDLE, pose.curls[2], skeleton::MIDDLE_METACARPAL),
        (&RING, pose.curls[3], skeleton::RING_METACARPAL),
        (&LITTLE, pose.curls[4], skeleton::LITTLE_METACARPAL),
    ];
    for (geometry, curl, first) in digits {
        let angles = match little {
            Some([abduction, f1, f2, f3]) if first == skeleton::LITTLE_METACARPAL => {
                DigitAngles { abduction, flexion: [f1, f2, f3] }
            }
            _ => DigitAngles::from_curl(geometry, curl, pose.spread),
        };
        let heading = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angles.abduction);
        let base = Vector3::from(geometry.metacarpal_base);
        let knuckle = Vector3::from(geometry.knuckle);
        let metacarpal_dir =
            UnitQuaternion::rotation_between(&Vector3::x(), &(knuckle - base)).unwrap_or_else(UnitQuaternion::identity);
        vertices[first] = VertexPose::new(base, metacarpal_dir);
        write_chain(&mut vertices[first + 1..first + 5], knuckle, heading, &geometry.segments, &angles.flexion);
    }

    let curl = pose.curls[0];
    let opposition = pose.thumb_opposition;
    let heading =
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), THUMB_HEADING - THUMB_OPPOSITION_SWING * opposition)
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), THUMB_OPPOSITION_DIP * opposition);
    let flexion = THUMB_MAX_FLEXION.map(|m| m * curl);
    write_chain(
        &mut vertices[skeleton::THUMB_METACARPAL..=skeleton::THUMB_TIP],
        Vector3::from(THUMB_BASE),
        heading,
        &THUMB_SEGMENTS,
        &flexion,
    );

    HandFrame { t, vertices }.transformed(placement)
}

/// Writes `segments.len() + 1` vertices starting at `start`; each segment
/// bends toward the palm by the cumulative flexion.
fn write_chain(
    out: &mut [VertexPose],
    start: Vector3<f64>,
    heading: UnitQuaternion<f64>,
    segments: &[f64; 3],
    flexion: &[f64; 3],
) {
    let mut point = start;
    let mut bend = 0.0;
    for (k, (length, flex)) in segments.iter().zip(flexion).enumerate() {
        bend += flex;
        let orientation = heading * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), bend);
        out[k] = VertexPose::new(point, orientation);
        point += orientation * Vector3::x() * *length;
    }
    let tip_orientation = heading * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), bend);
    out[segments.len()] = VertexPose::new(point, tip_orientation);
}
