//! Evaluation: object discovery scores, slot matching, probes, DCI,
//! lighting robustness and attention centers.

mod centers;
mod dci;
mod evaluate;
mod hungarian;
mod mse;
mod probe;
mod robustness;
mod segmentation;

pub use centers::{attention_center, default_center_floor, summarize_centers, write_centers_csv, CenterRecord, CenterSummary};
pub use dci::{dci, dci_from_importance, DciReport, DecisionTree, TREE_DEPTH};
pub use evaluate::{
    evaluate, factor_classes, factor_labels, factor_names, infer, lighting_robustness, DciSummary, EvalOptions,
    Evaluation, MetricsReport, SceneOutput, HUE_BINS,
};
pub use hungarian::{max_weight_assignment, min_cost_assignment};
pub use mse::{mse_rgb, MSE_SCALE_255};
pub use probe::{average_precision, probe, split_indices, ProbeKind, ProbeScore, Samples, PROBE_HIDDEN};
pub use robustness::{cosine_distance, euclidean_distance, LightingCondition, RobustnessReport, Stat};
pub use segmentation::{
    adjusted_rand_index, argmax_labels, fg_ari, iou_matrix, match_slots, miou, miou_from_iou, SegmentationPrediction,
};
