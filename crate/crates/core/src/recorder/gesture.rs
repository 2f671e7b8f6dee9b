use serde::{Deserialize, Serialize};

use crate::model::{skeleton, HandFrame};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureConfig {
    /// Fingertip-to-palm distance below which a finger counts as closed, meters.
    pub fist_threshold: f64,
    /// Continuous fist duration that triggers an event, seconds.
    pub hold_time: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self { fist_threshold: 0.06, hold_time: 0.5 }
    }
}

/// True iff every non-thumb fingertip is closer than `threshold` to the palm.
pub fn detect_fist(frame: &HandFrame, threshold: f64) -> bool {
    let palm = frame.vertex(skeleton::PALM);
    skeleton::NON_THUMB_TIPS.iter().all(|&tip| (frame.vertex(tip) - palm).norm() < threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureEvent {
    None,
    Start,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureState {
    pub recording: bool,
    pub fist_held_since: Option<f64>,
    /// Debounce window: the hold time a fist needs before it toggles.
    pub hold_time: f64,
    /// Cleared by an event, set again by a release.
    pub armed: bool,
    pub last_t: Option<f64>,
}

impl GestureState {
    pub fn new(hold_time: f64) -> Self {
        Self { recording: false, fist_held_since: None, hold_time, armed: true, last_t: None }
    }
}

impl Default for GestureState {
    fn default() -> Self {
        Self::new(GestureConfig::default().hold_time)
    }
}

/// Advances the gesture machine by one sample.
///
/// A sample older than the previous one is ignored.
pub fn step_gesture(state: GestureState, fist: bool, t: f64) -> (GestureState, GestureEvent) {
    if state.last_t.is_some_and(|last| t < last) {
        return (state, GestureEvent::None);
    }
    let mut next = GestureState { last_t: Some(t), ..state };
    if !fist {
        next.fist_held_since = None;
        next.armed = true;
        return (next, GestureEvent::None);
    }
    let since = *next.fist_held_since.get_or_insert(t);
    if next.armed && t - since >= next.hold_time {
        next.armed = false;
        next.recording = !next.recording;
        let event = if next.recording { GestureEvent::Start } else { GestureEvent::Stop };
        return (next, event);
    }
    (next, GestureEvent::None)
}
