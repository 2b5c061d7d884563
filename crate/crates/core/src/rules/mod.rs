//! From a factorization to per-category unions of rectangles.

mod extract;
mod kmeans;
mod rectangle;

pub use extract::{
    default_theta_grid, extract_category, kmeans_seed, rules_from_cluster, search_params,
    CategoryExplanation, ExtractionParams, RuleSource, SearchOutcome, SearchSpace,
};
pub use kmeans::{
    cluster_embeddings, cluster_embeddings_with_share, kmeans, ClusterStats, Clustering, KMeansFit,
};
pub use rectangle::{rectangle_from_base, Constraint, Interval, Op, Rectangle};
