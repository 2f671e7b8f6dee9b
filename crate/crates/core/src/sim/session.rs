//! Headless seeded session: scripted gesture hand, synthetic control hand,
//! recording, curation and sampling into one dataset tree.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::curation::{score_dataset, BaselineFeaturizer, ClusterParams, CurationError, ImageEmbeddings, REPORT_FILE};
use crate::dataset::{Manifest, ManifestEntry, MANIFEST_FILE};
use crate::model::{EpisodeFrame, RigConfig};
use crate::recorder::{
    image_name, EpisodeMeta, EpisodeWriter, GestureConfig, GestureEvent, PlacementPrompt, PromptGenerator,
    RecorderError, Workspace, TOP_DIR, WRIST_DIR,
};
use crate::sampler::{sample_dataset, write_samples, SampleSpec, SamplerError, SAMPLES_FILE};

use super::pipeline::StreamPipeline;
use super::render::{render_top, render_wrist, write_png};
use super::state::{DEFAULT_K_SPRING, DEFAULT_TICK_HZ};
use super::synth::{gesture_stream, synth_stream, Profile, SynthParams};

pub const EPISODES_DIR: &str = "episodes";

/// Fist duration of the scripted gesture hand; exceeds the default hold time.
const GESTURE_HOLD: f64 = 0.7;
/// Open-hand pause after each demonstration.
const GESTURE_TAIL: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SimulateConfig {
    pub seed: u64,
    pub episodes: usize,
    pub tick_hz: f64,
    pub profile: Profile,
    /// Open-hand interval between the start and stop gestures, seconds.
    pub demo_duration: f64,
    pub k_spring: f64,
    pub rig: RigConfig,
    pub workspace: Workspace,
    pub gesture: GestureConfig,
    pub sample_spec: SampleSpec,
    pub cluster: ClusterParams,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 8,
            tick_hz: DEFAULT_TICK_HZ,
            profile: Profile::Unscrew,
            demo_duration: 4.0,
            k_spring: DEFAULT_K_SPRING,
            rig: RigConfig::default(),
            workspace: Workspace::default(),
            gesture: GestureConfig::default(),
            sample_spec: SampleSpec::default(),
            cluster: ClusterParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("cannot write image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSummary {
    pub episode_ids: Vec<String>,
    pub frames: usize,
    /// False when there are too few demonstrations to cluster.
    pub report_written: bool,
    pub samples: usize,
}

pub fn episode_id(index: usize) -> String {
    format!("ep_{index:04}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimulateError + '_ {
    move |source| SimulateError::Io { path: path.to_path_buf(), source }
}

fn write_images(
    writer: &EpisodeWriter,
    index: usize,
    prompt: &PlacementPrompt,
    workspace: &Workspace,
    q: &crate::model::JointVector,
) -> Result<(String, String), SimulateError> {
    let top = image_name(TOP_DIR, index);
    let wrist = image_name(WRIST_DIR, index);
    for (reference, img) in [(&top, render_top(prompt, workspace, q)), (&wrist, render_wrist(prompt, q))] {
        let path = writer.image_path(reference);
        write_png(&img, &path).map_err(|e| SimulateError::Image { path: path.clone(), message: e.to_string() })?;
    }
    Ok((top, wrist))
}

/// Runs the session into `out`: `episodes/ep_NNNN/`, `manifest.json`,
/// `curation_report.json` (three or more episodes) and `samples.jsonl`.
/// Output bytes depend only on the configuration.
pub fn simulate(config: &SimulateConfig, out: &Path) -> Result<SimulateSummary, SimulateError> {
    if !(config.tick_hz > 0.0 && config.tick_hz.is_finite()) {
        return Err(SimulateError::Config(format!("tick rate must be positive, got {}", config.tick_hz)));
    }
    if !(config.demo_duration > 0.0 && config.demo_duration.is_finite()) {
        return Err(SimulateError::Config(format!("demo duration must be positive, got {}", config.demo_duration)));
    }
    config.sample_spec.validate()?;
    config.rig.validate().map_err(|e| SimulateError::Config(e.to_string()))?;

    let episodes_root = out.join(EPISODES_DIR);
    if episodes_root.exists() {
        fs::remove_dir_all(&episodes_root).map_err(io_err(&episodes_root))?;
    }
    fs::create_dir_all(&episodes_root).map_err(io_err(&episodes_root))?;

    let rig_hash = config.rig.hash();
    let mut pipeline = StreamPipeline::new(config.rig.clone(), config.tick_hz, config.k_spring, config.gesture);
    let mut prompts = PromptGenerator::new(config.seed, config.workspace);
    let mut manifest = Manifest::default();
    let mut frames_written = 0;
    let mut tick: u64 = 0;

    for e in 0..config.episodes {
        let id = episode_id(e);
        let prompt = prompts.next_prompt();
        let t0 = tick as f64 / config.tick_hz;
        let left = gesture_stream(t0, GESTURE_HOLD, config.demo_duration, GESTURE_TAIL, config.tick_hz);
        let params =
            SynthParams::new(config.seed.wrapping_mul(0x0100_0000_01b3).wrapping_add(e as u64 + 1), config.profile);
        let right = synth_stream(&params, t0, left.len(), config.tick_hz);

        let mut writer: Option<EpisodeWriter> = None;
        for (l, r) in left.iter().zip(&right) {
            match pipeline.gesture(l) {
                GestureEvent::Start if writer.is_none() => {
                    let meta =
                        EpisodeMeta { episode_id: id.clone(), start_time: l.t, rig_hash: rig_hash.clone(), prompt };
                    writer = Some(EpisodeWriter::create(&episodes_root.join(&id), &meta)?);
                }
                GestureEvent::Stop => {
                    if let Some(mut w) = writer.take() {
                        w.close()?;
                    }
                }
                _ => {}
            }
            let step = pipeline.control(Some(r));
            if let Some(w) = writer.as_mut() {
                let (image_top, image_wrist) = write_images(w, w.len(), &prompt, &config.workspace, &step.observed.q)?;
                w.append_frame(&EpisodeFrame {
                    t: l.t,
                    q: step.observed.q,
                    tau: step.observed.tau,
                    dq: step.command.dq,
                    image_top,
                    image_wrist,
                })?;
                frames_written += 1;
            }
            tick += 1;
        }
        if let Some(mut w) = writer.take() {
            w.close()?;
        }
        if episodes_root.join(&id).exists() {
            manifest.episodes.push(ManifestEntry { id, path: format!("{EPISODES_DIR}/{}", episode_id(e)) });
        }
    }

    let manifest_path = out.join(MANIFEST_FILE);
    manifest.save(&manifest_path).map_err(io_err(&manifest_path))?;

    let report_path = out.join(REPORT_FILE);
    let report_written = manifest.episodes.len() >= 3;
    if report_written {
        let report = score_dataset(&manifest, out, &ImageEmbeddings(&BaselineFeaturizer), config.cluster)?;
        fs::write(&report_path, report.to_json()).map_err(io_err(&report_path))?;
    } else if report_path.exists() {
        fs::remove_file(&report_path).map_err(io_err(&report_path))?;
    }

    let samples = sample_dataset(&manifest, out, &config.sample_spec)?;
    write_samples(&out.join(SAMPLES_FILE), &samples)?;

    Ok(SimulateSummary {
        episode_ids: manifest.episodes.iter().map(|e| e.id.clone()).collect(),
        frames: frames_written,
        report_written,
        samples: samples.len(),
    })
}
