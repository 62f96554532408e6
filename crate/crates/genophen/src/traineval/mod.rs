//! Evaluation protocol: split construction, k-means hybrid clustering,
//! 10-fold cross-validation with per-fold training, and metrics.

pub mod cv;
pub mod data;
pub mod kmeans;
pub mod metrics;
pub mod split;
pub mod train;

pub use cv::{cross_validate, CvOutcome, CvSettings, FoldArtifacts, PredRow};
pub use data::{prepare_fold, prepare_inference, FoldData, ObsRow};
pub use kmeans::{kmeans, KMeansResult};
pub use metrics::{evaluate, pearson, rmse, EpochStat, FoldMetrics, MetricReport, Metrics};
pub use split::{hybrid_vectors, make_split, RunSplit, SplitMode, SplitPlan};
pub use train::{train, TrainOutcome, TrainSchedule};
