//! Edge-box objectness: contour grouping, contour affinities, box scoring
//! and the scored sliding-window pool.

mod groups;
mod pool;
mod score;

pub use groups::{
    affinity_closed_form, compute_affinities, group_edges, pair_affinity, AffinityGraph, EdgeGroup,
    ADJACENCY_RADIUS, AFFINITY_GAMMA, MIN_AFFINITY,
};
pub use pool::{generate_pool, generate_pool_with, scale_factors, sliding_windows, Proposal, ProposalConfig};
pub use score::{
    box_objectness, box_objectness_with, inner_box, perimeter_norm, placement, EdgeStructures, Placement,
    ScoreScratch, KAPPA,
};

use std::io::Write;

/// Writes proposals as `frame,x,y,w,h,objectness` rows (no header).
pub fn write_pool_csv<W: Write>(out: &mut W, frame: usize, pool: &[Proposal]) -> std::io::Result<()> {
    for p in pool {
        writeln!(out, "{},{},{},{},{},{}", frame, p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h, p.objectness)?;
    }
    Ok(())
}
