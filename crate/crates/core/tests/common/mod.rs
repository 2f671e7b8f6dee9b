#![allow(dead_code)]
pub mod dh;
pub mod oracle;

use dexkit::hand_model::{hand_frame, HandPose};
use dexkit::model::HandFrame;
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_pose(rng: &mut ChaCha8Rng) -> HandPose {
    HandPose {
        curls: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        spread: rng.random_range(0.0..1.0),
        thumb_opposition: rng.random_range(0.0..1.0),
    }
}

pub fn random_motion(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let rotation = UnitQuaternion::from_scaled_axis(axis.normalize() * rng.random_range(-3.1..3.1));
    let translation =
        Translation3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Isometry3::from_parts(translation, rotation)
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> HandFrame {
    let pose = random_pose(rng);
    let placement = random_motion(rng);
    hand_frame(0.0, &pose, &placement)
}
