//! Detection metrics, stage timing and the evaluation-time degradation.

mod annotations;
mod boxes;
mod degrade;
mod metrics;
mod timing;

pub use annotations::{
    format_annotations, format_predictions, parse_annotations, parse_predictions, read_annotations,
    read_predictions, BoxFormat,
};
pub use boxes::{iou, Annotation, BoundingBox, Detection};
pub use degrade::{degrade, DegradeKind, DEGRADE_KERNEL, VISUAL_GAIN};
pub use metrics::{
    ap_from_labels, average_precision, class_map, coco_thresholds, map_at, match_detections,
    precision_recall, EvalReport, ImageEval, MatchResult,
};
pub use timing::{benchmark, coefficient_of_variation, StagedPipeline, TimingReport};
