use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{embed_demo, Camera, DemoEmbedding, Featurizer, PrecomputedEmbeddings};
use super::hdbscan::{hdbscan, ClusterParams};
use super::CurationError;
use crate::dataset::Manifest;
use crate::recorder::Episode;

pub const REPORT_FILE: &str = "curation_report.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoScore {
    pub id: String,
    pub score_top: f64,
    pub score_wrist: f64,
    pub outlier_score: f64,
    pub label_top: i64,
    pub label_wrist: i64,
}

/// Retained ids per percentile, sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p90: Vec<String>,
    pub p70: Vec<String>,
    pub p50: Vec<String>,
}

/// Demos in descending `outlier_score` order, ties by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub demos: Vec<DemoScore>,
    pub percentiles: Percentiles,
}

impl CurationReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn fuse_scores(score_top: f64, score_wrist: f64) -> f64 {
    (score_top + score_wrist) / 2.0
}

/// 1-based nearest rank `ceil(n * p / 100)`, at least 1.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    let exact = n as f64 * p / 100.0;
    // Absorbs representation error for fractional p, e.g. 250 * 64.4 / 100.
    let rank = (exact - 1e-9).ceil().max(1.0) as usize;
    rank.min(n)
}

/// Splits ids into retained and removed: removed demos score strictly above
/// the nearest-rank `p`-th percentile. Both lists are sorted by id.
pub fn filter_percentile(report: &CurationReport, p: f64) -> Result<(Vec<String>, Vec<String>), CurationError> {
    if !(p > 0.0 && p < 100.0) {
        return Err(CurationError::InvalidPercentile(p));
    }
    if report.demos.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut scores: Vec<f64> = report.demos.iter().map(|d| d.outlier_score).collect();
    scores.sort_by(f64::total_cmp);
    let threshold = scores[nearest_rank(scores.len(), p) - 1];
    let (mut retained, mut removed): (Vec<_>, Vec<_>) = report.demos.iter().partition(|d| d.outlier_score <= threshold);
    retained.sort_by(|a, b| a.id.cmp(&b.id));
    removed.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((retained.into_iter().map(|d| d.id.clone()).collect(), removed.into_iter().map(|d| d.id.clone()).collect()))
}

/// Supplies one embedding per demo and camera.
pub trait EmbeddingSource: Sync {
    fn embed(&self, id: &str, episode: &Episode, camera: Camera) -> Result<DemoEmbedding, CurationError>;
}

/// Frame-mean image features.
pub struct ImageEmbeddings<'a>(pub &'a dyn Featurizer);

impl EmbeddingSource for ImageEmbeddings<'_> {
    fn embed(&self, id: &str, episode: &Episode, camera: Camera) -> Result<DemoEmbedding, CurationError> {
        embed_demo(id, episode, camera, self.0)
    }
}

impl EmbeddingSource for PrecomputedEmbeddings {
    fn embed(&self, id: &str, _episode: &Episode, camera: Camera) -> Result<DemoEmbedding, CurationError> {
        self.get(id, camera)
    }
}

/// Scores aligned embedding sets (same ids, same order) for both cameras.
pub fn score_embeddings(
    top: &[DemoEmbedding],
    wrist: &[DemoEmbedding],
    params: ClusterParams,
) -> Result<CurationReport, CurationError> {
    let n = top.len();
    if n < 3 {
        return Err(CurationError::TooFewDemos(n));
    }
    let cluster = |set: &[DemoEmbedding]| {
        let dim = set[0].features.len();
        if let Some(bad) = set.iter().find(|e| e.features.len() != dim) {
            return Err(CurationError::DimensionMismatch(dim, bad.features.len()));
        }
        let points: Vec<Vec<f64>> = set.iter().map(|e| e.features.clone()).collect();
        Ok(hdbscan(&points, params)?)
    };
    let (ht, hw) = (cluster(top)?, cluster(wrist)?);
    let mut demos: Vec<DemoScore> = (0..n)
        .map(|i| DemoScore {
            id: top[i].id.clone(),
            score_top: ht.glosh[i],
            score_wrist: hw.glosh[i],
            outlier_score: fuse_scores(ht.glosh[i], hw.glosh[i]),
            label_top: ht.labels[i],
            label_wrist: hw.labels[i],
        })
        .collect();
    demos.sort_by(|a, b| b.outlier_score.total_cmp(&a.outlier_score).then_with(|| a.id.cmp(&b.id)));
    let mut report = CurationReport { demos, percentiles: Percentiles { p90: vec![], p70: vec![], p50: vec![] } };
    report.percentiles = Percentiles {
        p90: filter_percentile(&report, 90.0)?.0,
        p70: filter_percentile(&report, 70.0)?.0,
        p50: filter_percentile(&report, 50.0)?.0,
    };
    Ok(report)
}

/// Embeds every demo of the manifest for both cameras and scores them.
/// Demos are processed in id order, so manifest order does not matter.
pub fn score_dataset(
    manifest: &Manifest,
    root: &Path,
    source: &dyn EmbeddingSource,
    params: ClusterParams,
) -> Result<CurationReport, CurationError> {
    let mut episodes = manifest.load_episodes(root)?;
    if episodes.len() < 3 {
        return Err(CurationError::TooFewDemos(episodes.len()));
    }
    episodes.sort_by(|a, b| a.0.cmp(&b.0));
    let embed = |camera: Camera| -> Result<Vec<DemoEmbedding>, CurationError> {
        episodes.par_iter().map(|(id, ep)| source.embed(id, ep, camera)).collect()
    };
    score_embeddings(&embed(Camera::Top)?, &embed(Camera::Wrist)?, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(scores: &[f64]) -> CurationReport {
        CurationReport {
            demos: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| DemoScore {
                    id: format!("d{i:03}"),
                    score_top: s,
                    score_wrist: s,
                    outlier_score: s,
                    label_top: 0,
                    label_wrist: 0,
                })
                .collect(),
            percentiles: Percentiles { p90: vec![], p70: vec![], p50: vec![] },
        }
    }

    #[test]
    fn fusion_is_the_mean() {
        assert_eq!(fuse_scores(0.4, 0.6), 0.5);
    }

    #[test]
    fn nearest_rank_absorbs_rounding() {
        assert_eq!(nearest_rank(300, 70.0), 210);
        assert_eq!(nearest_rank(300, 90.0), 270);
        assert_eq!(nearest_rank(10, 15.0), 2);
        assert_eq!(nearest_rank(3, 1.0), 1);
        assert_eq!(nearest_rank(250, 64.4), 161);
    }

    #[test]
    fn ties_retain_everything() {
        let report = report_with(&[0.3; 20]);
        for p in [10.0, 50.0, 99.0] {
            assert_eq!(filter_percentile(&report, p).unwrap().0.len(), 20);
        }
    }

    #[test]
    fn percentile_bounds_are_enforced() {
        let report = report_with(&[0.1, 0.2]);
        assert!(filter_percentile(&report, 0.0).is_err());
        assert!(filter_percentile(&report, 100.0).is_err());
    }
}
