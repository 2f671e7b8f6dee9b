//! Episode directory: `meta.json`, `frames.jsonl`, and `top/`, `wrist/`
//! image folders with files named `%06d.png`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::PlacementPrompt;
use crate::model::EpisodeFrame;

pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const TOP_DIR: &str = "top";
pub const WRIST_DIR: &str = "wrist";

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("frame time {got} does not follow {previous}")]
    NonMonotonicTime { previous: f64, got: f64 },
    #[error("episode writer is closed")]
    ClosedWriter,
    #[error("missing {0}")]
    MissingMeta(PathBuf),
    #[error("invalid meta.json: {0}")]
    CorruptMeta(String),
    #[error("frames.jsonl line {line}: {message}")]
    CorruptFrameLine { line: usize, message: String },
    #[error("frame {index}: image reference {reference:?} escapes the episode directory")]
    ImageOutsideEpisode { index: usize, reference: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecorderError + '_ {
    move |source| RecorderError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub start_time: f64,
    pub rig_hash: String,
    pub prompt: PlacementPrompt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub dir: PathBuf,
    pub meta: EpisodeMeta,
    pub frames: Vec<EpisodeFrame>,
}

impl Episode {
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn resolve(&self, reference: &str) -> PathBuf {
        self.dir.join(reference)
    }
}

/// Relative image reference for frame `index` of `camera_dir`.
pub fn image_name(camera_dir: &str, index: usize) -> String {
    format!("{camera_dir}/{index:06}.png")
}

/// Append-only writer; each frame is one flushed line.
#[derive(Debug)]
pub struct EpisodeWriter {
    dir: PathBuf,
    file: Option<File>,
    last_t: Option<f64>,
    count: usize,
}

impl EpisodeWriter {
    /// Creates the directory layout and writes `meta.json`.
    pub fn create(dir: &Path, meta: &EpisodeMeta) -> Result<Self, RecorderError> {
        for sub in [TOP_DIR, WRIST_DIR] {
            let path = dir.join(sub);
            fs::create_dir_all(&path).map_err(io_err(&path))?;
        }
        let meta_path = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(meta).expect("meta serializes");
        fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
        let frames_path = dir.join(FRAMES_FILE);
        let file = File::create(&frames_path).map_err(io_err(&frames_path))?;
        Ok(Self { dir: dir.to_path_buf(), file: Some(file), last_t: None, count: 0 })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Absolute path of an image reference, for the caller to write to.
    pub fn image_path(&self, reference: &str) -> PathBuf {
        self.dir.join(reference)
    }

    pub fn append_frame(&mut self, frame: &EpisodeFrame) -> Result<(), RecorderError> {
        let file = self.file.as_mut().ok_or(RecorderError::ClosedWriter)?;
        if let Some(previous) = self.last_t {
            if !(frame.t > previous) {
                return Err(RecorderError::NonMonotonicTime { previous, got: frame.t });
            }
        }
        let mut line = serde_json::to_string(frame).expect("frame serializes");
        line.push('\n');
        let path = self.dir.join(FRAMES_FILE);
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.last_t = Some(frame.t);
        self.count += 1;
        Ok(())
    }

    pub fn close(&mut self) -> Result<(), RecorderError> {
        if let Some(file) = self.file.take() {
            file.sync_all().map_err(io_err(&self.dir.join(FRAMES_FILE)))?;
        }
        Ok(())
    }
}

fn check_reference(index: usize, reference: &str) -> Result<(), RecorderError> {
    let inside = Path::new(reference).components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if reference.is_empty() || !inside {
        return Err(RecorderError::ImageOutsideEpisode { index, reference: reference.to_string() });
    }
    Ok(())
}

/// Parses frames; a blank final line is allowed.
pub fn read_frames(text: &str) -> Result<Vec<EpisodeFrame>, RecorderError> {
    let mut frames: Vec<EpisodeFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame: EpisodeFrame = serde_json::from_str(line)
            .map_err(|e| RecorderError::CorruptFrameLine { line: i + 1, message: e.to_string() })?;
        let finite = frame.t.is_finite() && frame.q.iter().chain(&frame.tau).chain(&frame.dq).all(|v| v.is_finite());
        if !finite {
            return Err(RecorderError::CorruptFrameLine { line: i + 1, message: "non-finite value".into() });
        }
        if let Some(previous) = frames.last() {
            if !(frame.t > previous.t) {
                return Err(RecorderError::CorruptFrameLine {
                    line: i + 1,
                    message: format!("time {} does not follow {}", frame.t, previous.t),
                });
            }
        }
        check_reference(frames.len(), &frame.image_top)?;
        check_reference(frames.len(), &frame.image_wrist)?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_episode(dir: &Path) -> Result<Episode, RecorderError> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(RecorderError::MissingMeta(meta_path));
    }
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta = serde_json::from_str(&meta_text).map_err(|e| RecorderError::CorruptMeta(e.to_string()))?;
    let frames_path = dir.join(FRAMES_FILE);
    let text = fs::read_to_string(&frames_path).map_err(io_err(&frames_path))?;
    Ok(Episode { dir: dir.to_path_buf(), meta, frames: read_frames(&text)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> EpisodeMeta {
        EpisodeMeta {
            episode_id: "ep_000".into(),
            start_time: 0.0,
            rig_hash: "abc".into(),
            prompt: PlacementPrompt { center: [0.01, -0.02], rot: 0.3 },
        }
    }

    fn frame(i: usize, t: f64) -> EpisodeFrame {
        EpisodeFrame {
            t,
            q: [0.01 * i as f64; 16],
            tau: [-0.5; 16],
            dq: [0.001; 16],
            image_top: image_name(TOP_DIR, i),
            image_wrist: image_name(WRIST_DIR, i),
        }
    }

    #[test]
    fn layout_is_created() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = EpisodeWriter::create(dir.path(), &meta()).unwrap();
        w.append_frame(&frame(0, 0.0)).unwrap();
        w.close().unwrap();
        for name in [META_FILE, FRAMES_FILE, TOP_DIR, WRIST_DIR] {
            assert!(dir.path().join(name).exists());
        }
        assert_eq!(image_name(TOP_DIR, 12), "top/000012.png");
    }

    #[test]
    fn two_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = EpisodeWriter::create(dir.path(), &meta()).unwrap();
        let frames = [frame(0, 0.0), frame(1, 0.033)];
        for f in &frames {
            w.append_frame(f).unwrap();
        }
        w.close().unwrap();
        let text = fs::read_to_string(dir.path().join(FRAMES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
        let ep = load_episode(dir.path()).unwrap();
        assert_eq!(ep.frames, frames);
        assert_eq!(ep.meta, meta());
    }

    #[test]
    fn repeated_time_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = EpisodeWriter::create(dir.path(), &meta()).unwrap();
        w.append_frame(&frame(0, 0.5)).unwrap();
        assert!(matches!(w.append_frame(&frame(1, 0.5)), Err(RecorderError::NonMonotonicTime { .. })));
        w.close().unwrap();
        assert!(matches!(w.append_frame(&frame(1, 0.6)), Err(RecorderError::ClosedWriter)));
    }

    #[test]
    fn truncated_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = EpisodeWriter::create(dir.path(), &meta()).unwrap();
        for i in 0..3 {
            w.append_frame(&frame(i, i as f64)).unwrap();
        }
        w.close().unwrap();
        let path = dir.path().join(FRAMES_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() - 20]).unwrap();
        match load_episode(dir.path()) {
            Err(RecorderError::CorruptFrameLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_meta_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_episode(dir.path()), Err(RecorderError::MissingMeta(_))));
    }

    #[test]
    fn escaping_references_are_rejected() {
        let mut f = frame(0, 0.0);
        f.image_top = "../other/000000.png".into();
        let line = serde_json::to_string(&f).unwrap();
        assert!(matches!(read_frames(&line), Err(RecorderError::ImageOutsideEpisode { .. })));
    }

    #[test]
    fn frame_field_names_are_the_contract() {
        let value: serde_json::Value = serde_json::to_value(frame(0, 0.0)).unwrap();
        let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["dq", "image_top", "image_wrist", "q", "t", "tau"]);
    }
}
