//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! test harness so every line is printed; exits nonzero if any criterion
//! fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{dh, oracle};
use dexkit::curation::{
    build_mst, core_distances, filter_percentile, fuse_scores, hdbscan, mutual_reachability, score_embeddings, Camera,
    ClusterParams, CurationReport, DemoEmbedding, DemoScore, Percentiles,
};
use dexkit::hand_model::{hand_frame, HandPose};
use dexkit::model::{skeleton, EpisodeFrame, Finger, HandFrame, RigConfig, JOINT_COUNT};
use dexkit::recorder::{
    image_name, step_gesture, Episode, EpisodeMeta, GestureEvent, GestureState, PlacementPrompt, TOP_DIR, WRIST_DIR,
};
use dexkit::retarget::{apply_tip_offsets, compute_scale, retarget_frame, robot_palm_basis};
use dexkit::sampler::{build_samples, SampleSpec};
use nalgebra::{Isometry3, Matrix3xX, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration) -> String {
    format!("{:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs())
}

fn report_of(scores: &[(String, f64)]) -> CurationReport {
    let mut demos: Vec<DemoScore> = scores
        .iter()
        .map(|(id, s)| DemoScore {
            id: id.clone(),
            score_top: *s,
            score_wrist: *s,
            outlier_score: *s,
            label_top: -1,
            label_wrist: -1,
        })
        .collect();
    demos.sort_by(|a, b| b.outlier_score.total_cmp(&a.outlier_score).then_with(|| a.id.cmp(&b.id)));
    CurationReport { demos, percentiles: Percentiles { p90: vec![], p70: vec![], p50: vec![] } }
}

fn percentile_arithmetic() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut values: Vec<u32> = (0..300).collect();
    values.shuffle(&mut rng);
    let scores: Vec<(String, f64)> =
        values.iter().enumerate().map(|(i, v)| (format!("demo{i:03}"), *v as f64 / 300.0 + 1e-3)).collect();
    let report = report_of(&scores);
    let mut counts = Vec::new();
    let mut ok = true;
    for (p, expected) in [(90.0, 270), (70.0, 210), (50.0, 150)] {
        let (retained, removed) = filter_percentile(&report, p).unwrap();
        // Oracle: the `expected` lowest scores.
        let mut by_score = scores.clone();
        by_score.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut want: Vec<String> = by_score[..expected].iter().map(|s| s.0.clone()).collect();
        want.sort();
        ok &= retained.len() == expected && retained == want && removed.len() == 300 - expected;
        counts.push(retained.len());
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    outcome(
        ok,
        format!(
            "p90/p70/p50 retain {:?} of 300 (expected [270, 210, 150]) in {}",
            counts,
            within(elapsed, Duration::from_secs(1))
        ),
    )
}

fn score_fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    let mut ok = true;
    for _ in 0..20 {
        let n = rng.random_range(4..12);
        let embed = |camera, rng: &mut ChaCha8Rng| -> Vec<DemoEmbedding> {
            (0..n)
                .map(|i| DemoEmbedding {
                    id: format!("d{i:02}"),
                    camera,
                    features: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                })
                .collect()
        };
        let top = embed(Camera::Top, &mut rng);
        let wrist = embed(Camera::Wrist, &mut rng);
        let report = score_embeddings(&top, &wrist, ClusterParams::default()).unwrap();
        for d in &report.demos {
            ok &= d.outlier_score.to_bits() == ((d.score_top + d.score_wrist) / 2.0).to_bits();
            checked += 1;
        }
    }
    for (a, b, want) in [(0.2, 0.4, 0.30000000000000004f64), (0.0, 1.0, 0.5), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0)] {
        ok &= fuse_scores(a, b).to_bits() == want.to_bits();
        checked += 1;
    }
    outcome(ok, format!("outlier_score == (top + wrist) / 2 bit-exact on {checked} fixtures"))
}

fn random_points(rng: &mut ChaCha8Rng, grid: bool) -> Vec<Vec<f64>> {
    let n = rng.random_range(2..=8);
    let d = rng.random_range(1..=3);
    (0..n)
        .map(|_| {
            (0..d).map(|_| if grid { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..1.0) }).collect()
        })
        .collect()
}

fn hdbscan_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_mst, mut worst_glosh) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let points = random_points(&mut rng, i % 4 == 3);
        let reference = oracle::mutual_reachability(&points, 1);
        let mst = build_mst(&mutual_reachability(&points, &core_distances(&points, 1).unwrap())).unwrap();
        let weight: f64 = mst.iter().map(|e| e.weight).sum();
        worst_mst = worst_mst.max((weight - oracle::brute_force_mst_weight(&reference)).abs());
        let h = hdbscan(&points, ClusterParams::default()).unwrap();
        for (a, b) in h.glosh.iter().zip(oracle::reference_glosh(&reference, 2)) {
            worst_glosh = worst_glosh.max((a - b).abs());
        }
    }
    let elapsed = started.elapsed();
    let ok = worst_mst <= 1e-12 && worst_glosh <= 1e-9 && elapsed < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "1000 datasets: max |MST - exhaustive| {worst_mst:.1e}, max |GLOSH - reference| {worst_glosh:.1e} (tol 1e-9) in {}",
            within(elapsed, Duration::from_secs(60))
        ),
    )
}

fn ik_suite() -> Outcome {
    let started = Instant::now();
    let rig = RigConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut rates = Vec::new();
    let mut ok = true;
    for finger in Finger::ALL {
        let chain = rig.chain(finger);
        let mut converged = 0;
        for _ in 0..1000 {
            let theta: Vec<f64> = chain.limits.iter().map(|l| rng.random_range(l.lower..=l.upper)).collect();
            let target = chain.fk(&theta).unwrap();
            let result = dexkit::kinematics::solve_ik(&chain, &target, &chain.mid_range(), &rig.ik).unwrap();
            if result.converged && (chain.fk(&result.theta).unwrap() - target).norm() <= 1e-4 {
                converged += 1;
            }
        }
        ok &= converged >= 990;
        rates.push(format!("{} {:.1}%", finger.name(), converged as f64 / 10.0));
    }

    // Two independent routes: library finite differences against the matrix
    // oracle's geometric Jacobian, and the library's analytic Jacobian
    // against finite differences of the matrix oracle.
    let (mut worst_fd, mut worst_analytic) = (0.0f64, 0.0f64);
    for finger in [Finger::Index, Finger::Thumb] {
        let chain = rig.chain(finger);
        let rotation = chain.base.rotation.to_rotation_matrix();
        for _ in 0..100 {
            let theta: Vec<f64> = chain.limits.iter().map(|l| rng.random_range(l.lower..=l.upper)).collect();
            let (_, columns) = dh::oracle(&chain.rows, &theta);
            let oracle_jac = Matrix3xX::from_fn(columns.len(), |r, c| (rotation * Vector3::from(columns[c]))[r]);
            let fd = chain.jacobian(&theta).unwrap();
            worst_fd = worst_fd.max((fd - &oracle_jac).abs().max());

            let h = 1e-6;
            let oracle_fd = Matrix3xX::from_fn(theta.len(), |r, c| {
                let shifted = |d: f64| {
                    let mut t = theta.clone();
                    t[c] += d;
                    rotation * Vector3::from(dh::oracle(&chain.rows, &t).0)
                };
                (shifted(h)[r] - shifted(-h)[r]) / (2.0 * h)
            });
            let (_, analytic) = chain.tip_and_jacobian(&theta).unwrap();
            worst_analytic = worst_analytic.max((analytic - oracle_fd).abs().max());
        }
    }
    let elapsed = started.elapsed();
    ok &= worst_fd <= 1e-6 && worst_analytic <= 1e-6 && elapsed < Duration::from_secs(30);
    outcome(
        ok,
        format!(
            "convergence to 1e-4 m: {} (need >= 99%); Jacobian vs FD max {:.1e} / {:.1e} m/rad on 2x100 configs (tol 1e-6) in {}",
            rates.join(", "),
            worst_fd,
            worst_analytic,
            within(elapsed, Duration::from_secs(30))
        ),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn index_with_segments(lengths: [f64; 3]) -> HandFrame {
    let mut frame = hand_frame(0.0, &HandPose::OPEN, &Isometry3::identity());
    let mut p = frame.vertex(skeleton::INDEX_PROXIMAL);
    for (v, l) in [skeleton::INDEX_INTERMEDIATE, skeleton::INDEX_DISTAL, skeleton::INDEX_TIP].into_iter().zip(lengths) {
        p.x += l;
        frame.vertices[v].position = [p.x, p.y, p.z];
    }
    frame
}

fn retarget_invariances() -> Outcome {
    let rig = RigConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let (mut worst_rigid, mut worst_scale) = (0.0f64, 0.0f64);
    let mut roots_zero = true;
    for _ in 0..500 {
        let frame = common::random_frame(&mut rng);
        let q_current: [f64; JOINT_COUNT] = std::array::from_fn(|_| rng.random_range(-0.2..0.2));
        let (base, cmd) = retarget_frame(&frame, &q_current, &rig, None).unwrap();
        let moved = frame.transformed(&common::random_motion(&mut rng));
        let (res_moved, cmd_moved) = retarget_frame(&moved, &q_current, &rig, None).unwrap();
        let center =
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let scaled = frame.scaled_about(&center, rng.random_range(0.5..2.0));
        let (res_scaled, cmd_scaled) = retarget_frame(&scaled, &q_current, &rig, None).unwrap();
        worst_rigid = worst_rigid.max(max_abs_diff(&cmd.dq, &cmd_moved.dq));
        worst_scale = worst_scale.max(max_abs_diff(&cmd.dq, &cmd_scaled.dq));
        for r in [&base, &res_moved, &res_scaled] {
            roots_zero &= RigConfig::ROOT_JOINTS.iter().all(|&j| r.q_target[j] == 0.0);
        }
    }
    let k = compute_scale(&index_with_segments([0.05, 0.03, 0.02]), &rig, Finger::Index).unwrap();
    let k_err = (k - 0.10 / 0.1361).abs();
    let ok = worst_rigid <= 1e-9 && worst_scale <= 1e-9 && roots_zero && k_err <= 1e-12;
    outcome(
        ok,
        format!(
            "500 frames: max rigid dq change {worst_rigid:.1e}, max scale dq change {worst_scale:.1e} (tol 1e-9); roots exactly 0: {roots_zero}; k = {k:.15} (|k - 0.10/0.1361| = {k_err:.1e}, tol 1e-12)"
        ),
    )
}

fn offset_constants() -> Outcome {
    let rig = RigConfig::default();
    let normal = robot_palm_basis(&rig).unwrap().column(2).into_owned();
    let wrist = Vector3::from(rig.anchors.wrist);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (mut worst_thumb, mut worst_finger) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let raw: [Vector3<f64>; 4] = std::array::from_fn(|_| {
            wrist
                + Vector3::new(
                    rng.random_range(0.05..0.15),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.05..0.05),
                )
        });
        let out = apply_tip_offsets(&raw, &rig).unwrap();
        // Thumb: 2.3 cm closer to the wrist, along the line to it.
        let toward = (raw[3] - out[3]).norm() - 0.023;
        let closer = (raw[3] - wrist).norm() - (out[3] - wrist).norm() - 0.023;
        worst_thumb = worst_thumb.max(toward.abs()).max(closer.abs());
        // Fingers: 3.4 cm along the palm normal, nothing tangential.
        for k in 0..3 {
            let shift = out[k] - raw[k];
            worst_finger = worst_finger.max((shift.norm() - 0.034).abs()).max((normal.dot(&shift).abs() - 0.034).abs());
        }
    }
    let ok = worst_thumb <= 1e-9 && worst_finger <= 1e-9;
    outcome(
        ok,
        format!(
            "100 fixtures: thumb 2.3 cm error {worst_thumb:.1e}, finger 3.4 cm error {worst_finger:.1e} (tol 1e-9 m)"
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn end_to_end_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let args = ["dexkit", "simulate", "--seed", "7", "--out", dir.path().to_str().unwrap()];
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = dexkit::cli::run(args, &mut out, &mut err);
        if code != 0 {
            return outcome(false, format!("simulate exited {code}: {}", String::from_utf8_lossy(&err)));
        }
    }
    let (a, b) = (tree(dirs[0].path()), tree(dirs[1].path()));
    let has = ["curation_report.json", "samples.jsonl", "manifest.json"].iter().all(|f| a.contains_key(*f));
    let bytes: usize = a.values().map(Vec::len).sum();
    outcome(
        has && a == b,
        format!(
            "simulate --seed 7 twice: {} files, {bytes} bytes, identical: {}, report and samples present: {has}",
            a.len(),
            a == b
        ),
    )
}

fn sampler_windows() -> Outcome {
    let len = 100;
    let episode = Episode {
        dir: "ep".into(),
        meta: EpisodeMeta {
            episode_id: "ep".into(),
            start_time: 0.0,
            rig_hash: String::new(),
            prompt: PlacementPrompt { center: [0.0; 2], rot: 0.0 },
        },
        frames: (0..len)
            .map(|i| EpisodeFrame {
                t: i as f64 / 30.0,
                q: std::array::from_fn(|j| (i * 100 + j) as f64),
                tau: std::array::from_fn(|j| -((i * 100 + j) as f64)),
                dq: std::array::from_fn(|j| (i * 100 + j) as f64 * 1e-4),
                image_top: image_name(TOP_DIR, i),
                image_wrist: image_name(WRIST_DIR, i),
            })
            .collect(),
    };
    let spec = SampleSpec::default();
    let samples = build_samples("ep", &episode, "", &spec).unwrap();
    let mut ok = samples.len() == len && (spec.obs_steps, spec.action_horizon, spec.prediction_horizon) == (3, 8, 16);
    let (mut padded_obs, mut padded_act) = (0, 0);
    for (t, s) in samples.iter().enumerate() {
        for k in 0..spec.obs_steps {
            let want = t as i64 - (spec.obs_steps as i64 - 1) + k as i64;
            let pad = want < 0;
            padded_obs += pad as usize;
            ok &= s.pad_obs[k] == pad && s.obs[k].q == Some(episode.frames[want.max(0) as usize].q);
        }
        for k in 0..spec.prediction_horizon {
            let pad = t + k >= len;
            padded_act += pad as usize;
            let want = if pad { [0.0; JOINT_COUNT] } else { episode.frames[t + k].dq };
            ok &= s.pad_act[k] == pad && s.actions[k] == want;
        }
    }
    // Index oracle totals: 2 + 1 padded observation slots, 1 + 2 + ... + 15 padded actions.
    ok &= padded_obs == 3 && padded_act == 120;
    outcome(ok, format!("L=100 with (3, 8, 16): {} samples, {padded_obs} padded observation slots, {padded_act} padded action slots (oracle 100/3/120)", samples.len()))
}

fn gesture_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100_000);
    let hold = 0.5;
    let mut state = GestureState::new(hold);
    let (mut t, mut fist) = (0.0, false);
    let mut held_since: Option<f64> = None;
    let mut released = true;
    let mut last: Option<GestureEvent> = None;
    let (mut events, mut violations) = (0, 0);
    for _ in 0..100_000 {
        t += rng.random_range(0.0..0.05);
        if rng.random_bool(0.04) {
            fist = !fist;
        }
        let (next, event) = step_gesture(state, fist, t);
        if fist {
            held_since.get_or_insert(t);
        } else {
            held_since = None;
            released = true;
        }
        if event != GestureEvent::None {
            events += 1;
            let held = held_since.map(|s| t - s).unwrap_or(-1.0);
            let alternates = match last {
                None => event == GestureEvent::Start,
                Some(previous) => previous != event,
            };
            if held < hold || !released || !alternates {
                violations += 1;
            }
            released = false;
            last = Some(event);
        }
        state = next;
    }
    outcome(violations == 0 && events > 100, format!("100000 random steps: {events} events, {violations} violations of alternation, hold time or release debounce"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("percentile arithmetic", percentile_arithmetic),
        ("score fusion", score_fusion),
        ("hdbscan oracle equivalence", hdbscan_oracle),
        ("ik suite", ik_suite),
        ("retargeting invariances", retarget_invariances),
        ("offset constants", offset_constants),
        ("end-to-end determinism", end_to_end_determinism),
        ("sampler windows", sampler_windows),
        ("gesture protocol", gesture_protocol),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = check();
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        failed += !result.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
