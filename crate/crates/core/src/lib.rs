//! Model-free visual object tracking on instance-specific edge-box proposals.
//!
//! Each frame is reduced to thin edges, grouped into contours and scored by
//! enclosed-contour objectness over a whole-frame sliding window. An online
//! re-ranker turns that pool into a small instance-specific candidate set,
//! which a core appearance model (a budgeted structured SVM or a fixed NCC
//! template) evaluates together with a motion-smoothness prior.

pub mod appearance;
pub mod edgebox;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod rerank;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, LocalSampleConfig};
pub use imaging::{EdgeMap, Frame};
