//! Classifiers and their evaluation.

mod family;
mod flowstats;
mod gbdt;
mod importance;
mod metrics;

pub use family::{ClassifierFamily, EnsembleFamily, FamilyRegistry, FlowClassifier, FlowStatsFamily};
pub use flowstats::{
    fit_mixture, flow_stats_features, predict_flowstats, train_flowstats, DiagonalMixture, FlowStatsModel, STAT_DIMS,
    VARIANCE_FLOOR,
};
pub use gbdt::{train_ensemble, EnsembleModel, EnsembleParams, Node, Tree, MODEL_FORMAT_VERSION};
pub use importance::{permutation_importance, ImportanceReport};
pub use metrics::{majority_f1, weighted_f1};
