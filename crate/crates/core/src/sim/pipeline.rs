use crate::model::{AllegroState, HandFrame, JointCommand, RigConfig, JOINT_COUNT};
use crate::recorder::{detect_fist, step_gesture, GestureConfig, GestureEvent, GestureState};
use crate::retarget::{RetargetError, RetargetSession};

use super::state::{step_sim, SimState};

/// One operator stream: retargeting session, simulated hand and gesture
/// machine.
#[derive(Clone, Debug)]
pub struct StreamPipeline {
    pub session: RetargetSession,
    pub sim: SimState,
    pub gesture: GestureState,
    pub gesture_config: GestureConfig,
}

#[derive(Debug)]
pub struct ControlStep {
    /// State the command was computed against.
    pub observed: AllegroState,
    pub command: JointCommand,
    /// Set when the frame could not be retargeted; the command is then zero.
    pub error: Option<RetargetError>,
}

impl StreamPipeline {
    pub fn new(rig: RigConfig, tick_hz: f64, k_spring: f64, gesture_config: GestureConfig) -> Self {
        Self {
            sim: SimState::new(&rig, tick_hz, k_spring),
            session: RetargetSession::new(rig),
            gesture: GestureState::new(gesture_config.hold_time),
            gesture_config,
        }
    }

    /// Retargets `frame` (or holds still without one) and advances the
    /// simulation one tick.
    pub fn control(&mut self, frame: Option<&HandFrame>) -> ControlStep {
        let observed = self.sim.allegro();
        let hold = |t| JointCommand { t, dq: [0.0; JOINT_COUNT] };
        let (command, error) = match frame {
            None => (hold(observed.t), None),
            Some(frame) => match self.session.step(frame, &observed.q) {
                Ok((_, command)) => (command, None),
                Err(e) => (hold(frame.t), Some(e)),
            },
        };
        self.sim = step_sim(&self.sim, &command);
        ControlStep { observed, command, error }
    }

    /// Feeds one gesture-hand frame to the recording toggle.
    pub fn gesture(&mut self, frame: &HandFrame) -> GestureEvent {
        let fist = detect_fist(frame, self.gesture_config.fist_threshold);
        let (next, event) = step_gesture(self.gesture, fist, frame.t);
        self.gesture = next;
        event
    }
}
