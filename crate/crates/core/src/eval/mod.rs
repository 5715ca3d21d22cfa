//! Sequence I/O, one-pass evaluation metrics, reports and synthetic scenes.

pub mod metrics;
pub mod report;
pub mod sequence;
pub mod synth;

pub use metrics::{
    center_distances, overlaps, precision_curve, precision_from_distances, success_curve, success_from_overlaps,
    MetricReport, PrecisionCurve, SuccessCurve,
};
pub use report::{render_svg, report_csv, summary_csv, write_report, SUMMARY_HEADER};
pub use sequence::{
    load_sequence, load_sequence_with, parse_gt_line, read_ground_truth, read_trajectory, save_sequence, subsample,
    write_boxes,
    write_trajectory, FrameSource, Sequence,
};
pub use synth::{mixed_corpus, synth_sequence, Motion, SceneSpec};
