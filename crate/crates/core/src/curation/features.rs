//! Per-demonstration embeddings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CurationError;
use crate::recorder::Episode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    Top,
    Wrist,
}

impl Camera {
    pub const BOTH: [Camera; 2] = [Camera::Top, Camera::Wrist];

    pub fn name(self) -> &'static str {
        match self {
            Camera::Top => "top",
            Camera::Wrist => "wrist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoEmbedding {
    pub id: String,
    pub camera: Camera,
    pub features: Vec<f64>,
}

/// Maps one image file to a fixed-length vector.
pub trait Featurizer: Sync {
    fn dim(&self) -> usize;
    fn featurize(&self, path: &Path) -> Result<Vec<f64>, CurationError>;
}

pub const GRID: usize = 4;
pub const BASELINE_DIM: usize = GRID * GRID * 3 * 2;

/// 4x4 grid of RGB means and standard deviations, scaled to `[0, 1]`.
///
/// Element `((row * 4 + col) * 3 + channel) * 2` is the mean and the next
/// one the standard deviation.
#[derive(Clone, Copy, Debug, Default)]
pub struct BaselineFeaturizer;

fn cell_bounds(extent: u32, k: usize) -> (u32, u32) {
    let lo = (k as u64 * extent as u64 / GRID as u64) as u32;
    let hi = ((k as u64 + 1) * extent as u64 / GRID as u64) as u32;
    let lo = lo.min(extent.saturating_sub(1));
    (lo, hi.max(lo + 1))
}

pub fn baseline_featurize(path: &Path) -> Result<Vec<f64>, CurationError> {
    let image = image::open(path)
        .map_err(|e| CurationError::UndecodableImage { path: path.to_path_buf(), message: e.to_string() })?
        .to_rgb8();
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(CurationError::UndecodableImage { path: path.to_path_buf(), message: "empty image".into() });
    }
    let mut out = vec![0.0; BASELINE_DIM];
    for row in 0..GRID {
        let (y0, y1) = cell_bounds(h, row);
        for col in 0..GRID {
            let (x0, x1) = cell_bounds(w, col);
            let mut sum = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.get_pixel(x, y).0;
                    for c in 0..3 {
                        let v = p[c] as f64 / 255.0;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            for c in 0..3 {
                let mean = sum[c] / count;
                let var = (sq[c] / count - mean * mean).max(0.0);
                let base = ((row * GRID + col) * 3 + c) * 2;
                out[base] = mean;
                out[base + 1] = var.sqrt();
            }
        }
    }
    Ok(out)
}

impl Featurizer for BaselineFeaturizer {
    fn dim(&self) -> usize {
        BASELINE_DIM
    }

    fn featurize(&self, path: &Path) -> Result<Vec<f64>, CurationError> {
        baseline_featurize(path)
    }
}

fn camera_reference(frame: &crate::model::EpisodeFrame, camera: Camera) -> &str {
    match camera {
        Camera::Top => &frame.image_top,
        Camera::Wrist => &frame.image_wrist,
    }
}

/// Mean of the per-frame features over every frame's image for `camera`.
pub fn embed_demo(
    id: &str,
    episode: &Episode,
    camera: Camera,
    featurizer: &dyn Featurizer,
) -> Result<DemoEmbedding, CurationError> {
    let paths: Vec<PathBuf> = episode.frames.iter().map(|f| episode.resolve(camera_reference(f, camera))).collect();
    if paths.is_empty() || !paths.iter().any(|p| p.is_file()) {
        return Err(CurationError::NoImages { id: id.to_string(), camera });
    }
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(CurationError::MissingImage { id: id.to_string(), path: missing.clone() });
    }
    let vectors: Vec<Vec<f64>> = paths.par_iter().map(|p| featurizer.featurize(p)).collect::<Result<_, _>>()?;
    let mut mean = vec![0.0; featurizer.dim()];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let count = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    Ok(DemoEmbedding { id: id.to_string(), camera, features: mean })
}

/// Embeddings computed elsewhere, read from `features_<camera>.csv` with one
/// row `id,f1,...,fd` per demonstration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedEmbeddings {
    pub by_camera: BTreeMap<Camera, BTreeMap<String, Vec<f64>>>,
}

pub fn features_file_name(camera: Camera) -> String {
    format!("features_{}.csv", camera.name())
}

pub fn parse_features_csv(text: &str) -> Result<BTreeMap<String, Vec<f64>>, CurationError> {
    let mut rows = BTreeMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| CurationError::FeatureFile { line: i + 1, message };
        let mut fields = line.split(',').map(str::trim);
        let id = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| bad("missing id".into()))?;
        let values =
            fields.map(|f| f.parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}")))).collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(bad("expected finite feature values".into()));
        }
        if *dim.get_or_insert(values.len()) != values.len() {
            return Err(bad(format!("expected {} values, found {}", dim.unwrap(), values.len())));
        }
        if rows.insert(id.to_string(), values).is_some() {
            return Err(bad(format!("duplicate id {id:?}")));
        }
    }
    Ok(rows)
}

impl PrecomputedEmbeddings {
    /// Reads both camera files from `dir`.
    pub fn load(dir: &Path) -> Result<Self, CurationError> {
        let mut by_camera = BTreeMap::new();
        for camera in Camera::BOTH {
            let path = dir.join(features_file_name(camera));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CurationError::FeatureFile { line: 0, message: format!("{}: {e}", path.display()) })?;
            by_camera.insert(camera, parse_features_csv(&text)?);
        }
        Ok(Self { by_camera })
    }

    pub fn get(&self, id: &str, camera: Camera) -> Result<DemoEmbedding, CurationError> {
        self.by_camera
            .get(&camera)
            .and_then(|rows| rows.get(id))
            .map(|features| DemoEmbedding { id: id.to_string(), camera, features: features.clone() })
            .ok_or_else(|| CurationError::NoImages { id: id.to_string(), camera })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn save(image: &RgbImage) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        image.save(&path).unwrap();
        (dir, path)
    }

    #[test]
    fn uniform_gray() {
        let (_d, path) = save(&RgbImage::from_pixel(17, 9, Rgb([128, 128, 128])));
        let f = baseline_featurize(&path).unwrap();
        assert_eq!(f.len(), 96);
        for pair in f.chunks(2) {
            assert!((pair[0] - 128.0 / 255.0).abs() < 1e-15);
            assert!(pair[1].abs() < 1e-12);
        }
    }

    #[test]
    fn half_black_half_white() {
        let image = RgbImage::from_fn(16, 8, |x, _| if x < 8 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let (_d, path) = save(&image);
        let f = baseline_featurize(&path).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                for c in 0..3 {
                    let mean = f[((row * 4 + col) * 3 + c) * 2];
                    assert_eq!(mean, if col < 2 { 0.0 } else { 1.0 });
                }
            }
        }
    }

    #[test]
    fn copies_featurize_identically() {
        let image = RgbImage::from_fn(20, 12, |x, y| Rgb([(x * 12) as u8, (y * 20) as u8, ((x + y) * 3) as u8]));
        let (_d, a) = save(&image);
        let (_e, b) = save(&image);
        let (fa, fb) = (baseline_featurize(&a).unwrap(), baseline_featurize(&b).unwrap());
        assert_eq!(fa, fb);
        assert!(fa.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn tiny_images_still_fill_every_cell() {
        let (_d, path) = save(&RgbImage::from_pixel(1, 2, Rgb([255, 0, 0])));
        let f = baseline_featurize(&path).unwrap();
        assert!(f.chunks(6).all(|cell| cell[0] == 1.0 && cell[2] == 0.0));
    }

    #[test]
    fn garbage_is_undecodable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(baseline_featurize(&path), Err(CurationError::UndecodableImage { .. })));
    }

    #[test]
    fn features_csv_parses_and_rejects_ragged_rows() {
        let rows = parse_features_csv("a,1,2\nb,3,4\n").unwrap();
        assert_eq!(rows["b"], [3.0, 4.0]);
        assert!(matches!(parse_features_csv("a,1,2\nb,3\n"), Err(CurationError::FeatureFile { line: 2, .. })));
    }
}
