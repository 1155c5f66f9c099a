//! Evaluation quantities: classification and regression scores, policy
//! accuracy, latent/maze distance correlations, k-means and a 2-D
//! principal-axis projection.

mod correlation;
mod kmeans;
mod projection;
mod scores;

pub use correlation::{
    distance_correlations, pairwise_distances, pairwise_euclidean, pearson, ranks, spearman, IsomorphismReport,
    MazeMetric,
};
pub use kmeans::{kmeans, KMeansResult};
pub use projection::{linear_projection_2d, Projection};
pub use scores::{
    bce_and_accuracy, policy_accuracy, regression_report, ClassificationReport, MetricReport, RegressionReport,
    CLASSIFICATION_THRESHOLD,
};
