//! Shared fixtures for the criterion benches.

use edgetrack::eval::{synth_sequence, SceneSpec};
use edgetrack::{BoundingBox, Frame};

/// Two consecutive 640x360 frames of the default synthetic scene and the
/// target box in each.
pub fn frame_pair() -> ([Frame; 2], [BoundingBox; 2]) {
    let spec = SceneSpec {
        frames: 2,
        ..SceneSpec::default()
    };
    let seq = synth_sequence(&spec, 1).expect("default scene is valid");
    let load = |i: usize| (*seq.frames[i].load().expect("in-memory frame")).clone();
    ([load(0), load(1)], [seq.gt(0).unwrap(), seq.gt(1).unwrap()])
}
