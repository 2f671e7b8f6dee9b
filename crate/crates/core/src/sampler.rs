//! Policy-training windows over recorded episodes.
//!
//! Sample `t` observes frames `t - obs_steps + 1 ..= t`, with indices before
//! the start replaced by frame 0, and predicts the commands `dq[t ..
//! t + prediction_horizon]`, zero past the end.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Manifest};
use crate::model::{JointLimit, JointVector, JOINT_COUNT};
use crate::recorder::Episode;

pub const SAMPLES_FILE: &str = "samples.jsonl";

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("episode {0:?} has no frames")]
    EmptyEpisode(String),
    #[error("invalid sample spec: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modalities {
    pub top: bool,
    pub wrist: bool,
    pub effort: bool,
    pub position: bool,
}

impl Modalities {
    pub const ALL: Modalities = Modalities { top: true, wrist: true, effort: true, position: true };

    /// Ablation variants: `all`, `nt` (no top camera), `nw` (no wrist
    /// camera), `ne` (no effort).
    pub fn variant(name: &str) -> Option<Modalities> {
        let all = Self::ALL;
        match name {
            "all" => Some(all),
            "nt" => Some(Modalities { top: false, ..all }),
            "nw" => Some(Modalities { wrist: false, ..all }),
            "ne" => Some(Modalities { effort: false, ..all }),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.top || self.wrist || self.effort || self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub obs_steps: usize,
    pub action_horizon: usize,
    pub prediction_horizon: usize,
    pub mask: Modalities,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { obs_steps: 3, action_horizon: 8, prediction_horizon: 16, mask: Modalities::ALL }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.obs_steps == 0 {
            return Err(SamplerError::InvalidSpec("obs_steps must be at least 1"));
        }
        if self.action_horizon > self.prediction_horizon {
            return Err(SamplerError::InvalidSpec("action_horizon exceeds prediction_horizon"));
        }
        if self.mask.is_empty() {
            return Err(SamplerError::InvalidSpec("modality mask is empty"));
        }
        Ok(())
    }
}

/// One observation step; excluded modalities are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<JointVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<JointVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_top: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_wrist: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub obs: Vec<Observation>,
    pub actions: Vec<JointVector>,
    pub pad_obs: Vec<bool>,
    pub pad_act: Vec<bool>,
    pub episode: String,
    pub t: usize,
}

/// `prefix` is prepended to image references, typically the episode's
/// directory relative to the sample file.
pub fn build_samples(
    id: &str,
    episode: &Episode,
    prefix: &str,
    spec: &SampleSpec,
) -> Result<Vec<TrainingSample>, SamplerError> {
    spec.validate()?;
    let frames = &episode.frames;
    if frames.is_empty() {
        return Err(SamplerError::EmptyEpisode(id.to_string()));
    }
    let image =
        |reference: &str| if prefix.is_empty() { reference.to_string() } else { format!("{prefix}/{reference}") };
    let len = frames.len();
    let samples = (0..len)
        .map(|t| {
            let mut obs = Vec::with_capacity(spec.obs_steps);
            let mut pad_obs = Vec::with_capacity(spec.obs_steps);
            for k in 0..spec.obs_steps {
                let back = spec.obs_steps - 1 - k;
                let index = t.saturating_sub(back);
                let f = &frames[index];
                pad_obs.push(back > t);
                obs.push(Observation {
                    q: spec.mask.position.then_some(f.q),
                    tau: spec.mask.effort.then_some(f.tau),
                    image_top: spec.mask.top.then(|| image(&f.image_top)),
                    image_wrist: spec.mask.wrist.then(|| image(&f.image_wrist)),
                });
            }
            let mut actions = Vec::with_capacity(spec.prediction_horizon);
            let mut pad_act = Vec::with_capacity(spec.prediction_horizon);
            for k in 0..spec.prediction_horizon {
                match frames.get(t + k) {
                    Some(f) => {
                        actions.push(f.dq);
                        pad_act.push(false);
                    }
                    None => {
                        actions.push([0.0; JOINT_COUNT]);
                        pad_act.push(true);
                    }
                }
            }
            TrainingSample { obs, actions, pad_obs, pad_act, episode: id.to_string(), t }
        })
        .collect();
    Ok(samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionViolation {
    StepTooLarge { index: usize, joint: usize, dq: f64 },
    OutOfLimits { index: usize, joint: usize, q: f64 },
}

/// Integration slack for rounding in recorded commands, radians.
const LIMIT_SLACK: f64 = 1e-9;

/// Checks `|dq| <= max_step` and that integrating the actions from `start`
/// without clamping stays within `limits`. Returns the first violation.
pub fn validate_actions(
    sample: &TrainingSample,
    start: &JointVector,
    limits: &[JointLimit],
    max_step: f64,
) -> Result<(), ActionViolation> {
    let mut q = *start;
    for (index, dq) in sample.actions.iter().enumerate() {
        if let Some((joint, &step)) = dq.iter().enumerate().find(|(_, d)| d.abs() > max_step || !d.is_finite()) {
            return Err(ActionViolation::StepTooLarge { index, joint, dq: step });
        }
        for joint in 0..JOINT_COUNT {
            q[joint] += dq[joint];
            let l = &limits[joint];
            if q[joint] < l.lower - LIMIT_SLACK || q[joint] > l.upper + LIMIT_SLACK {
                return Err(ActionViolation::OutOfLimits { index, joint, q: q[joint] });
            }
        }
    }
    Ok(())
}

/// Builds samples for every manifest episode, ordered by (episode id, t).
pub fn sample_dataset(
    manifest: &Manifest,
    root: &Path,
    spec: &SampleSpec,
) -> Result<Vec<TrainingSample>, SamplerError> {
    spec.validate()?;
    let mut entries = manifest.episodes.clone();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let episodes = Manifest { episodes: entries.clone() }.load_episodes(root)?;
    let per_episode: Vec<Vec<TrainingSample>> = episodes
        .par_iter()
        .zip(&entries)
        .map(|((id, ep), entry)| build_samples(id, ep, entry.path.trim_end_matches('/'), spec))
        .collect::<Result<_, _>>()?;
    Ok(per_episode.into_iter().flatten().collect())
}

pub fn write_samples(path: &Path, samples: &[TrainingSample]) -> Result<(), SamplerError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for sample in samples {
        serde_json::to_writer(&mut out, sample).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
