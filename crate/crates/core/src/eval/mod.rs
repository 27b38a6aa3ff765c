//! Segmentation metrics and the kernel-density domain-gap diagnostic.

mod kde;
mod metrics;
mod report;

pub use kde::{
    default_grid, density_overlap, kde, linspace, resolve_bandwidth, silverman_bandwidth, trapezoid, Bandwidth,
    KdeCurve,
};
pub use metrics::{
    binary_overlap, boundary, overlap_metrics, percentile, squared_distance_transform, surface_metrics, Overlap,
    SurfaceDistance,
};
pub use report::{
    domain_gap_report, evaluate_model, gap_from_values, image_statistics, predict_labels, ClassMetrics,
    DomainGapReport, GapStatistic, MetricsRecord,
};
