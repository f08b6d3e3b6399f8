//! Confusion matrices, IoU and mIoU, random-point validation, label-map
//! renders and the comparative report.

mod metrics;
mod points;
mod report;

pub use metrics::{confusion, iou_from_confusion, mean_iou, to_class_indices, ConfusionMatrix, IoUReport};
pub use points::{random_point_validation, Point, PointSample, DEFAULT_POINTS};
pub use report::{
    relative_gain, render_labelmap, render_ppm, report_json, write_report, ReportExtras,
};
