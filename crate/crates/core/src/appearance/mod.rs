//! Core object models: a budgeted structured SVM over spatial-pyramid
//! histograms, and a fixed normalized-cross-correlation template.

mod feature;
mod ncc;
mod ssvm;

pub use feature::{cell_bounds, intersection_kernel, pyramid_feature, FeatureKind, BINS, CANONICAL};
pub use ncc::{ncc_response_map, ncc_score, resample_patch, NccTemplate, FLAT_VARIANCE};
pub use ssvm::{Feature, SsvmModel, SupportVector, DEFAULT_BUDGET, DEFAULT_C, PATTERN_CANDIDATES};
