//! Spectral clustering of pooled enhanced and noisy embeddings, and the
//! accuracy / macro-recall / macro-F1 metrics used to score it.

mod affinity;
mod eigen;
mod metrics;
mod spectral;

pub use affinity::{build_affinity, median_pairwise_distance, pairwise_sq_distances};
pub use eigen::{top_eigenpairs, top_eigenpairs_dense, top_eigenpairs_lanczos};
pub use metrics::{clustering_metrics, ClusteringMetrics, LabeledEmbeddings};
pub use spectral::{
    kmeans, normalized_cut, spectral_clustering, spectral_clustering_with, spectral_embedding,
    KMeansResult, SpectralOptions,
};
