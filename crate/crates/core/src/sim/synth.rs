//! Seeded synthetic operator streams.

use std::f64::consts::TAU;
use std::str::FromStr;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hand_model::{hand_frame, HandPose};
use crate::model::HandFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Cyclic thumb opposition with phase-shifted finger curls.
    Unscrew,
    /// Whole-hand open and close.
    OpenClose,
    /// One constant pose.
    Hold,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unscrew" => Ok(Profile::Unscrew),
            "open-close" => Ok(Profile::OpenClose),
            "hold" => Ok(Profile::Hold),
            _ => Err(format!("unknown profile {s:?} (expected unscrew, open-close or hold)")),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Unscrew => "unscrew",
            Profile::OpenClose => "open-close",
            Profile::Hold => "hold",
        }
    }
}

/// Number of samples of a stream of `duration` seconds at `tick_hz`.
pub fn frame_count(duration: f64, tick_hz: f64) -> usize {
    (duration * tick_hz).round().max(1.0) as usize
}

/// Per-stream constants drawn from the seed.
#[derive(Clone, Debug)]
pub struct SynthParams {
    pub profile: Profile,
    pub period: f64,
    pub phase: f64,
    pub finger_lag: [f64; 4],
    pub base_pose: HandPose,
    pub placement: Isometry3<f64>,
    pub jitter: f64,
    seed: u64,
}

impl SynthParams {
    pub fn new(seed: u64, profile: Profile) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = match profile {
            Profile::Unscrew => 2.4,
            Profile::OpenClose => 3.0,
            Profile::Hold => 1.0,
        } * rng.random_range(0.9..1.1);
        let phase = rng.random_range(0.0..TAU);
        let finger_lag = std::array::from_fn(|i| 0.35 * i as f64 + rng.random_range(-0.1..0.1));
        let base_pose = HandPose {
            curls: std::array::from_fn(|_| rng.random_range(0.1..0.6)),
            spread: rng.random_range(0.0..0.5),
            thumb_opposition: rng.random_range(0.2..0.8),
        };
        let placement = Isometry3::from_parts(
            Translation3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.2..0.3)),
            UnitQuaternion::from_euler_angles(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.5..0.5),
            ),
        );
        let jitter = if profile == Profile::Hold { 0.0 } else { 0.01 };
        Self { profile, period, phase, finger_lag, base_pose, placement, jitter, seed }
    }

    fn pose_at(&self, t: f64, noise: &mut ChaCha8Rng) -> (HandPose, Isometry3<f64>) {
        let phi = TAU * t / self.period + self.phase;
        let mut pose = self.base_pose;
        let mut placement = self.placement;
        match self.profile {
            Profile::Hold => return (pose, placement),
            Profile::Unscrew => {
                pose.thumb_opposition = 0.5 + 0.4 * phi.sin();
                pose.curls[0] = 0.4 + 0.3 * (phi + 0.5 * TAU / 2.0).sin();
                for (k, lag) in self.finger_lag.iter().enumerate() {
                    pose.curls[k + 1] = 0.45 + 0.35 * (phi - lag).sin();
                }
                // Forearm twist that accompanies the turning motion.
                let twist = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.25 * phi.sin());
                placement.rotation *= twist;
            }
            Profile::OpenClose => {
                let closure = 0.5 - 0.5 * phi.cos();
                pose.curls = std::array::from_fn(|k| closure * if k == 0 { 0.7 } else { 1.0 });
            }
        }
        for c in pose.curls.iter_mut() {
            *c = (*c + noise.random_range(-self.jitter..=self.jitter)).clamp(0.0, 1.0);
        }
        (pose, placement)
    }
}

/// Deterministic right-hand stream: `frame_count(duration, tick_hz)` frames
/// at `t = t0 + i / tick_hz`.
pub fn synth_trajectory(seed: u64, duration: f64, profile: Profile, tick_hz: f64) -> Vec<HandFrame> {
    synth_stream(&SynthParams::new(seed, profile), 0.0, frame_count(duration, tick_hz), tick_hz)
}

pub fn synth_stream(params: &SynthParams, t0: f64, frames: usize, tick_hz: f64) -> Vec<HandFrame> {
    SynthStream::new(params.clone(), t0, tick_hz).take(frames).collect()
}

/// Unbounded form of [`synth_stream`]; yields identical frames.
#[derive(Clone, Debug)]
pub struct SynthStream {
    params: SynthParams,
    noise: ChaCha8Rng,
    t0: f64,
    tick_hz: f64,
    index: u64,
}

impl SynthStream {
    pub fn new(params: SynthParams, t0: f64, tick_hz: f64) -> Self {
        let noise = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
        Self { params, noise, t0, tick_hz, index: 0 }
    }
}

impl Iterator for SynthStream {
    type Item = HandFrame;

    fn next(&mut self) -> Option<HandFrame> {
        let t = self.t0 + self.index as f64 / self.tick_hz;
        self.index += 1;
        let (pose, placement) = self.params.pose_at(t, &mut self.noise);
        Some(hand_frame(t, &pose, &placement))
    }
}

/// Left-hand gesture channel: fist for `hold`, open for `open`, fist for
/// `hold`, open again for `tail`.
pub fn gesture_stream(t0: f64, hold: f64, open: f64, tail: f64, tick_hz: f64) -> Vec<HandFrame> {
    let total = frame_count(2.0 * hold + open + tail, tick_hz);
    let placement = Isometry3::translation(0.0, 0.25, 0.25);
    (0..total)
        .map(|i| {
            let local = i as f64 / tick_hz;
            let fist = local < hold || (local >= hold + open && local < 2.0 * hold + open);
            let pose = if fist { HandPose::FIST } else { HandPose::OPEN };
            hand_frame(t0 + local, &pose, &placement)
        })
        .collect()
}
