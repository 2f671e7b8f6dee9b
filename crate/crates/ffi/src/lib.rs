//! C ABI over `dexkit`.
//!
//! Every function returns a [`DexStatus`]. On failure the message is kept
//! per thread and read with [`dex_last_error`]. Objects are opaque handles
//! created by `*_new` functions and released by the matching `*_free`.
//!
//! Hand frames cross the boundary as 26 vertices of 7 doubles
//! `[x, y, z, qx, qy, qz, qw]`; joint vectors as 16 doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dexkit::curation::{
    filter_percentile, hdbscan, ClusterError, ClusterParams, CurationReport, DemoScore, Percentiles,
};
use dexkit::kinematics::{solve_ik, KinematicsError};
use dexkit::model::{Finger, HandFrame, JointVector, RigConfig, VertexPose, JOINT_COUNT, VERTEX_COUNT};
use dexkit::recorder::{detect_fist, step_gesture, GestureEvent, GestureState};
use dexkit::retarget::{retarget_frame, RetargetError, RetargetSession};
use nalgebra::Vector3;

/// Doubles per vertex in a packed hand frame.
pub const DEX_VERTEX_STRIDE: usize = 7;
pub const DEX_VERTEX_COUNT: usize = 26;
pub const DEX_JOINT_COUNT: usize = 16;

const _: () = assert!(DEX_VERTEX_COUNT == VERTEX_COUNT && DEX_JOINT_COUNT == JOINT_COUNT);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DexStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidFrame = 3,
    DegenerateHand = 4,
    Kinematics = 5,
    Curation = 6,
    Parse = 7,
    Panic = 8,
}

/// Gesture machine output. Values are stable.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DexGestureEvent {
    None = 0,
    Start = 1,
    Stop = 2,
}

/// Finger indices accepted by the kinematics functions.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DexFinger {
    Index = 0,
    Middle = 1,
    Ring = 2,
    Thumb = 3,
}

/// Robot rig: kinematic tables, mounts, limits and retargeting constants.
pub struct DexRig(RigConfig);

/// Stateful retargeter for one operator stream.
pub struct DexRetargeter(RetargetSession);

/// Fist-gesture state machine.
pub struct DexGesture(GestureState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(DexStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(DexStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure(DexStatus::InvalidArgument, message.into())
    }
}

impl From<RetargetError> for Failure {
    fn from(e: RetargetError) -> Self {
        let status = match &e {
            RetargetError::InvalidFrame(_) => DexStatus::InvalidFrame,
            RetargetError::DegenerateHand { .. } | RetargetError::ZeroRobotLength(_) => DexStatus::DegenerateHand,
            RetargetError::Kinematics(_) => DexStatus::Kinematics,
        };
        Failure(status, e.to_string())
    }
}

impl From<KinematicsError> for Failure {
    fn from(e: KinematicsError) -> Self {
        Failure(DexStatus::Kinematics, e.to_string())
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure(DexStatus::Curation, e.to_string())
    }
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DexStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DexStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DexStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    ptr.write(value);
    Ok(())
}

unsafe fn read_frame(t: f64, vertices: *const f64) -> Result<HandFrame, Failure> {
    let packed = slice(vertices, VERTEX_COUNT * DEX_VERTEX_STRIDE, "vertices")?;
    let vertices = packed
        .chunks_exact(DEX_VERTEX_STRIDE)
        .map(|v| VertexPose { position: [v[0], v[1], v[2]], orientation: [v[3], v[4], v[5], v[6]] })
        .collect();
    Ok(HandFrame { t, vertices })
}

unsafe fn read_joints(ptr: *const f64, what: &str) -> Result<JointVector, Failure> {
    let q = slice(ptr, JOINT_COUNT, what)?;
    Ok(std::array::from_fn(|i| q[i]))
}

fn finger(value: u32) -> Result<Finger, Failure> {
    Finger::ALL
        .get(value as usize)
        .copied()
        .ok_or_else(|| Failure::invalid(format!("finger index {value} out of range 0..4")))
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn dex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Creates the default Allegro rig.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dex_rig_new_default(out: *mut *mut DexRig) -> DexStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(DexRig(RigConfig::default()))), "out"))
}

/// Parses and validates a rig from a NUL-terminated JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dex_rig_from_json(json: *const c_char, out: *mut *mut DexRig) -> DexStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| Failure(DexStatus::Parse, e.to_string()))?;
        let rig = RigConfig::from_json(text).map_err(|e| Failure(DexStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(DexRig(rig))), "out")
    })
}

/// Releases a rig. Null is ignored.
///
/// # Safety
/// `rig` must come from a `dex_rig_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dex_rig_free(rig: *mut DexRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// Number of joints in the chain of `finger`.
///
/// # Safety
/// `rig` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dex_chain_dof(rig: *const DexRig, finger_index: u32, out: *mut usize) -> DexStatus {
    guard(|| {
        let rig = handle(rig, "rig")?;
        write_out(out, rig.0.chain(finger(finger_index)?).dof(), "out")
    })
}

/// Fingertip position in the hand base frame for joint angles `theta`.
///
/// # Safety
/// `theta` must hold `len` doubles and `out_tip` 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn dex_fk(
    rig: *const DexRig,
    finger_index: u32,
    theta: *const f64,
    len: usize,
    out_tip: *mut f64,
) -> DexStatus {
    guard(|| {
        let chain = handle(rig, "rig")?.0.chain(finger(finger_index)?);
        let tip = chain.fk(slice(theta, len, "theta")?)?;
        slice_mut(out_tip, 3, "out_tip")?.copy_from_slice(tip.as_slice());
        Ok(())
    })
}

/// Solves IK for one finger from `seed`. Non-convergence is not an error:
/// the best angles are written with `*out_converged == false`.
///
/// # Safety
/// `target` must hold 3 doubles; `seed` and `out_theta` `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dex_ik(
    rig: *const DexRig,
    finger_index: u32,
    target: *const f64,
    seed: *const f64,
    len: usize,
    out_theta: *mut f64,
    out_residual: *mut f64,
    out_converged: *mut bool,
) -> DexStatus {
    guard(|| {
        let rig = &handle(rig, "rig")?.0;
        let chain = rig.chain(finger(finger_index)?);
        let target = Vector3::from_column_slice(slice(target, 3, "target")?);
        let result = solve_ik(&chain, &target, slice(seed, len, "seed")?, &rig.ik)?;
        slice_mut(out_theta, len, "out_theta")?.copy_from_slice(&result.theta);
        write_out(out_residual, result.residual, "out_residual")?;
        write_out(out_converged, result.converged, "out_converged")
    })
}

/// Retargets one frame without tracking state: 16 target angles and the
/// command `q_target - q_current`.
///
/// # Safety
/// `vertices` must hold 26×7 doubles; `q_current`, `out_q_target` and
/// `out_dq` 16 doubles each.
#[no_mangle]
pub unsafe extern "C" fn dex_retarget_frame(
    rig: *const DexRig,
    t: f64,
    vertices: *const f64,
    q_current: *const f64,
    out_q_target: *mut f64,
    out_dq: *mut f64,
) -> DexStatus {
    guard(|| {
        let rig = &handle(rig, "rig")?.0;
        let frame = read_frame(t, vertices)?;
        let q = read_joints(q_current, "q_current")?;
        let (result, command) = retarget_frame(&frame, &q, rig, None)?;
        slice_mut(out_q_target, JOINT_COUNT, "out_q_target")?.copy_from_slice(&result.q_target);
        slice_mut(out_dq, JOINT_COUNT, "out_dq")?.copy_from_slice(&command.dq);
        Ok(())
    })
}

/// Creates a tracking retargeter. The rig is copied.
///
/// # Safety
/// `rig` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dex_retargeter_new(rig: *const DexRig, out: *mut *mut DexRetargeter) -> DexStatus {
    guard(|| {
        let rig = handle(rig, "rig")?.0.clone();
        write_out(out, Box::into_raw(Box::new(DexRetargeter(RetargetSession::new(rig)))), "out")
    })
}

/// Retargets the next frame of a stream, warm-started from the previous one.
///
/// # Safety
/// As [`dex_retarget_frame`], with a live `retargeter`.
#[no_mangle]
pub unsafe extern "C" fn dex_retargeter_step(
    retargeter: *mut DexRetargeter,
    t: f64,
    vertices: *const f64,
    q_current: *const f64,
    out_q_target: *mut f64,
    out_dq: *mut f64,
) -> DexStatus {
    guard(|| {
        let session = handle_mut(retargeter, "retargeter")?;
        let frame = read_frame(t, vertices)?;
        let q = read_joints(q_current, "q_current")?;
        let (result, command) = session.0.step(&frame, &q)?;
        slice_mut(out_q_target, JOINT_COUNT, "out_q_target")?.copy_from_slice(&result.q_target);
        slice_mut(out_dq, JOINT_COUNT, "out_dq")?.copy_from_slice(&command.dq);
        Ok(())
    })
}

/// Forgets the warm start; the next step runs the full search.
///
/// # Safety
/// `retargeter` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dex_retargeter_reset(retargeter: *mut DexRetargeter) -> DexStatus {
    guard(|| {
        handle_mut(retargeter, "retargeter")?.0.reset();
        Ok(())
    })
}

/// Releases a retargeter. Null is ignored.
///
/// # Safety
/// `retargeter` must come from [`dex_retargeter_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dex_retargeter_free(retargeter: *mut DexRetargeter) {
    if !retargeter.is_null() {
        drop(Box::from_raw(retargeter));
    }
}

/// True when every non-thumb fingertip lies within `threshold` meters of the palm.
///
/// # Safety
/// `vertices` must hold 26×7 doubles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dex_detect_fist(vertices: *const f64, threshold: f64, out: *mut bool) -> DexStatus {
    guard(|| {
        let frame = read_frame(0.0, vertices)?;
        write_out(out, detect_fist(&frame, threshold), "out")
    })
}

/// Creates a gesture machine requiring `hold_time` seconds of fist per toggle.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dex_gesture_new(hold_time: f64, out: *mut *mut DexGesture) -> DexStatus {
    guard(|| {
        if !(hold_time.is_finite() && hold_time >= 0.0) {
            return Err(Failure::invalid(format!("hold_time must be finite and non-negative, got {hold_time}")));
        }
        write_out(out, Box::into_raw(Box::new(DexGesture(GestureState::new(hold_time)))), "out")
    })
}

/// Feeds one fist sample at time `t`.
///
/// # Safety
/// `gesture` must be a live handle; `out_event` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dex_gesture_step(
    gesture: *mut DexGesture,
    fist: bool,
    t: f64,
    out_event: *mut DexGestureEvent,
) -> DexStatus {
    guard(|| {
        let state = handle_mut(gesture, "gesture")?;
        let (next, event) = step_gesture(state.0, fist, t);
        state.0 = next;
        let event = match event {
            GestureEvent::None => DexGestureEvent::None,
            GestureEvent::Start => DexGestureEvent::Start,
            GestureEvent::Stop => DexGestureEvent::Stop,
        };
        write_out(out_event, event, "out_event")
    })
}

/// Whether the machine is currently recording.
///
/// # Safety
/// `gesture` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dex_gesture_recording(gesture: *const DexGesture, out: *mut bool) -> DexStatus {
    guard(|| write_out(out, handle(gesture, "gesture")?.0.recording, "out"))
}

/// Releases a gesture machine. Null is ignored.
///
/// # Safety
/// `gesture` must come from [`dex_gesture_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dex_gesture_free(gesture: *mut DexGesture) {
    if !gesture.is_null() {
        drop(Box::from_raw(gesture));
    }
}

/// HDBSCAN over `n` row-major points of dimension `dim`: GLOSH outlier
/// scores in [0, 1] and cluster labels (-1 for noise).
///
/// # Safety
/// `points` must hold `n * dim` doubles; `out_scores` and `out_labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn dex_glosh(
    points: *const f64,
    n: usize,
    dim: usize,
    min_samples: usize,
    min_cluster_size: usize,
    out_scores: *mut f64,
    out_labels: *mut i64,
) -> DexStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure::invalid("dim must be positive"));
        }
        let flat = slice(points, n * dim, "points")?;
        let points: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let h = hdbscan(&points, ClusterParams { min_samples, min_cluster_size })?;
        slice_mut(out_scores, n, "out_scores")?.copy_from_slice(&h.glosh);
        slice_mut(out_labels, n, "out_labels")?.copy_from_slice(&h.labels);
        Ok(())
    })
}

/// Percentile filter over fused outlier scores: `out_keep[i]` is true when
/// demo `i` scores at or below the nearest-rank `p`-th percentile.
///
/// # Safety
/// `scores` and `out_keep` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dex_filter_percentile(scores: *const f64, n: usize, p: f64, out_keep: *mut bool) -> DexStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let keep = slice_mut(out_keep, n, "out_keep")?;
        let width = n.to_string().len();
        let demos = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| DemoScore {
                id: format!("{i:0width$}"),
                score_top: s,
                score_wrist: s,
                outlier_score: s,
                label_top: -1,
                label_wrist: -1,
            })
            .collect();
        let report = CurationReport { demos, percentiles: Percentiles { p90: vec![], p70: vec![], p50: vec![] } };
        let (retained, _) = filter_percentile(&report, p).map_err(|e| Failure(DexStatus::Curation, e.to_string()))?;
        keep.fill(false);
        for id in retained {
            keep[id.parse::<usize>().expect("ids are indices")] = true;
        }
        Ok(())
    })
}
