use rayon::prelude::*;

use super::score::{box_objectness_with, EdgeStructures, ScoreScratch};
use crate::geometry::{nms_sorted, BoundingBox, MIN_BOX_SIDE};
use crate::imaging::EdgeMap;

/// Sliding-window proposal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    /// IoU between consecutive windows in position and scale.
    pub alpha: f64,
    /// NMS overlap above which the lower-scored box is dropped.
    pub beta: f64,
    /// Windows scoring at or below this are discarded before NMS.
    pub e_threshold: f64,
    /// Final proposal count; the pool keeps four times this many.
    pub max_proposals: usize,
    pub area_min_ratio: f64,
    pub area_max_ratio: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta: 0.8,
            e_threshold: 0.005,
            max_proposals: 200,
            area_min_ratio: 0.5,
            area_max_ratio: 2.0,
        }
    }
}

impl ProposalConfig {
    pub fn pool_limit(&self) -> usize {
        self.max_proposals.saturating_mul(4)
    }
}

/// A candidate box with its objectness and, once re-ranked, its re-rank score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub objectness: f64,
    pub rerank_score: Option<f64>,
}

impl Proposal {
    pub fn new(bbox: BoundingBox, objectness: f64) -> Self {
        Self {
            bbox,
            objectness,
            rerank_score: None,
        }
    }
}

/// Side-length multipliers from `sqrt(area_min_ratio)` to
/// `sqrt(area_max_ratio)`, geometrically spaced so concentric windows at
/// adjacent scales overlap with IoU of at least `alpha`.
pub fn scale_factors(cfg: &ProposalConfig) -> Vec<f64> {
    let lo = cfg.area_min_ratio.sqrt();
    let hi = cfg.area_max_ratio.sqrt();
    if hi <= lo {
        return vec![lo];
    }
    let max_ratio = 1.0 / cfg.alpha.sqrt();
    let steps = ((hi / lo).ln() / max_ratio.ln()).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| lo * (hi / lo).powf(k as f64 / steps as f64))
        .collect()
}

/// Translation step along an axis of length `len` giving IoU `alpha` between neighbors.
#[inline]
fn translation_step(len: f64, alpha: f64) -> f64 {
    len * (1.0 - alpha) / (1.0 + alpha)
}

/// All sliding windows for the given anchor: fixed aspect ratio, area
/// within the configured bounds, fully inside the frame. Ordered by scale,
/// then raster position.
pub fn sliding_windows(width: usize, height: usize, prev: &BoundingBox, cfg: &ProposalConfig) -> Vec<BoundingBox> {
    let (fw, fh) = (width as f64, height as f64);
    let mut out = Vec::new();
    for f in scale_factors(cfg) {
        let (w, h) = (prev.w * f, prev.h * f);
        if w > fw || h > fh || w < MIN_BOX_SIDE || h < MIN_BOX_SIDE {
            continue;
        }
        let sx = translation_step(w, cfg.alpha);
        let sy = translation_step(h, cfg.alpha);
        let nx = ((fw - w) / sx).floor() as usize + 1;
        let ny = ((fh - h) / sy).floor() as usize + 1;
        for j in 0..ny {
            for i in 0..nx {
                out.push(BoundingBox::new(i as f64 * sx, j as f64 * sy, w, h));
            }
        }
    }
    out
}

/// Scores every window, keeps those above `e_threshold`, sorts by
/// descending objectness (ties in raster order), applies greedy NMS at
/// `beta` and truncates to `4 * max_proposals`.
pub fn generate_pool_with(es: &EdgeStructures, prev: &BoundingBox, cfg: &ProposalConfig) -> Vec<Proposal> {
    let windows = sliding_windows(es.width, es.height, prev, cfg);
    let scored: Vec<Proposal> = windows
        .par_iter()
        .map_init(ScoreScratch::default, |scratch, b| {
            Proposal::new(*b, box_objectness_with(b, es, scratch))
        })
        .filter(|p| p.objectness > cfg.e_threshold)
        .collect();
    rank_and_suppress(scored, cfg)
}

pub(crate) fn rank_and_suppress(mut scored: Vec<Proposal>, cfg: &ProposalConfig) -> Vec<Proposal> {
    scored.sort_by(|a, b| {
        b.objectness
            .total_cmp(&a.objectness)
            .then_with(|| a.bbox.raster_cmp(&b.bbox))
    });
    nms_sorted(scored, cfg.beta, cfg.pool_limit(), |p| p.bbox)
}

/// Builds edge structures for `e` and generates the pool.
pub fn generate_pool(e: &EdgeMap, prev: &BoundingBox, cfg: &ProposalConfig) -> Vec<Proposal> {
    generate_pool_with(&EdgeStructures::build(e), prev, cfg)
}
