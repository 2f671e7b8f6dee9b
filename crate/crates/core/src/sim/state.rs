use serde::{Deserialize, Serialize};

use crate::model::{AllegroState, JointCommand, JointLimit, JointVector, RigConfig, JOINT_COUNT};

/// Simulated hand: clamped integration of commands and a spring effort
/// `tau = -k_spring * (q - q_rest)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub q: JointVector,
    pub tau: JointVector,
    /// Seconds per step.
    pub tick: f64,
    pub k_spring: f64,
    pub q_rest: JointVector,
    pub limits: Vec<JointLimit>,
}

pub const DEFAULT_TICK_HZ: f64 = 30.0;
pub const DEFAULT_K_SPRING: f64 = 0.8;

impl SimState {
    /// At rest at `t = 0`, with `q_rest` the clamped zero pose.
    pub fn new(rig: &RigConfig, tick_hz: f64, k_spring: f64) -> Self {
        let q_rest = rig.clamp(&[0.0; JOINT_COUNT]);
        Self {
            t: 0.0,
            q: q_rest,
            tau: [0.0; JOINT_COUNT],
            tick: 1.0 / tick_hz,
            k_spring,
            q_rest,
            limits: rig.joint_limits.clone(),
        }
    }

    pub fn spring_effort(&self, q: &JointVector) -> JointVector {
        std::array::from_fn(|i| -self.k_spring * (q[i] - self.q_rest[i]))
    }

    pub fn allegro(&self) -> AllegroState {
        AllegroState { t: self.t, q: self.q, tau: self.tau }
    }
}

/// `q' = clamp(q + dq)`, effort from the spring, time advanced one tick.
pub fn step_sim(state: &SimState, cmd: &JointCommand) -> SimState {
    let mut next = state.clone();
    for i in 0..JOINT_COUNT {
        next.q[i] = state.limits[i].clamp(state.q[i] + cmd.dq[i]);
    }
    next.tau = next.spring_effort(&next.q);
    next.t = state.t + state.tick;
    next
}
