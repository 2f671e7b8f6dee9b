//! Demonstration curation: embeddings per camera, HDBSCAN with GLOSH
//! outlier scores, score fusion and percentile filtering.

pub mod features;
pub mod hdbscan;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use features::{
    baseline_featurize, embed_demo, BaselineFeaturizer, Camera, DemoEmbedding, Featurizer, PrecomputedEmbeddings,
};
pub use hdbscan::{
    build_mst, condense_and_score, core_distances, hdbscan, mutual_reachability, ClusterError, ClusterParams,
    CondensedNode, DistanceMatrix, Hierarchy, MstEdge,
};
pub use report::{
    filter_percentile, fuse_scores, nearest_rank, score_dataset, score_embeddings, CurationReport, DemoScore,
    EmbeddingSource, ImageEmbeddings, Percentiles, REPORT_FILE,
};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("cannot decode image {path}: {message}")]
    UndecodableImage { path: PathBuf, message: String },
    #[error("NoImages: demo {id:?} has no {} images", camera.name())]
    NoImages { id: String, camera: Camera },
    #[error("demo {id:?} references missing image {path}")]
    MissingImage { id: String, path: PathBuf },
    #[error("features file line {line}: {message}")]
    FeatureFile { line: usize, message: String },
    #[error("embeddings have differing dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("need at least 3 demonstrations, got {0}")]
    TooFewDemos(usize),
    #[error("percentile must lie strictly between 0 and 100, got {0}")]
    InvalidPercentile(f64),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}
