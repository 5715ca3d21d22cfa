//! The tracking loop: proposals, re-ranking, candidate scoring with the
//! motion-smoothness prior, and the model update stage.

mod config;

pub use config::{CandidateSet, CoreKind, TrackerConfig, CONFIG_KEYS};

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::appearance::{ncc_score, pyramid_feature, Feature, NccTemplate, SsvmModel};
use crate::edgebox::{generate_pool_with, EdgeStructures, Proposal};
use crate::error::{Error, Result};
use crate::eval::Sequence;
use crate::geometry::{clip_to_frame, iou, sample_exhaustive, sample_local, BoundingBox};
use crate::imaging::{frame_edges, to_grayscale, Frame, Plane};
use crate::rerank::{
    pool_features, rerank_feature, select_by_objectness, select_top, RerankFeature, RerankModel, NEGATIVE_IOU,
};

/// `w_s * exp(-d^2 / (2 sigma^2))` with `d` the center distance.
pub fn smoothness(b: &BoundingBox, prev: &BoundingBox, w_s: f64, sigma: f64) -> f64 {
    let (bx, by) = b.center();
    let (px, py) = prev.center();
    let d2 = (bx - px).powi(2) + (by - py).powi(2);
    w_s * (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Index of the best candidate by `core + smooth`; ties go to the larger
/// smoothness term, then to the first box in raster order.
pub fn select_candidate(candidates: &[BoundingBox], core: &[f64], smooth: &[f64]) -> usize {
    assert!(!candidates.is_empty(), "no candidates to select from");
    (0..candidates.len())
        .max_by(|&a, &b| {
            (core[a] + smooth[a])
                .total_cmp(&(core[b] + smooth[b]))
                .then_with(|| smooth[a].total_cmp(&smooth[b]))
                .then_with(|| candidates[b].raster_cmp(&candidates[a]))
        })
        .expect("non-empty")
}

/// Wall time per stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub edges: f64,
    pub pool: f64,
    pub rerank: f64,
    pub score: f64,
    pub update: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.edges + self.pool + self.rerank + self.score + self.update
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    pub frame: usize,
    pub bbox: BoundingBox,
    /// `core_score + smoothness`.
    pub score: f64,
    pub core_score: f64,
    pub smoothness: f64,
    pub pool_size: usize,
    /// Size of the re-ranked proposal set.
    pub proposals: usize,
    /// Number of candidates scored.
    pub tested: usize,
    pub fallback: bool,
    pub rerank_updated: bool,
    pub timings: StageTimings,
}

pub const LOG_HEADER: &str =
    "frame,x,y,w,h,score,core_score,smoothness,pool,proposals,tested,fallback,rerank_updated,edges_ms,pool_ms,rerank_ms,score_ms,update_ms";

impl FrameLog {
    pub fn csv_row(&self) -> String {
        let t = &self.timings;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            self.frame,
            self.bbox.x,
            self.bbox.y,
            self.bbox.w,
            self.bbox.h,
            self.score,
            self.core_score,
            self.smoothness,
            self.pool_size,
            self.proposals,
            self.tested,
            self.fallback as u8,
            self.rerank_updated as u8,
            t.edges,
            t.pool,
            t.rerank,
            t.score,
            t.update
        )
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub bbox: BoundingBox,
    pub score: f64,
    pub log: FrameLog,
    /// The re-ranked proposal set in frame coordinates.
    pub proposals: Vec<Proposal>,
    /// The whole pool in frame coordinates, best first.
    pub pool: Vec<Proposal>,
}

#[derive(Debug, Clone)]
enum CoreModel {
    Ssvm(Box<SsvmModel>),
    Ncc(NccTemplate),
}

/// Per-frame edge structures and the proposal pool in edge coordinates.
struct Proposals {
    es: EdgeStructures,
    /// Frame-to-edge-map coordinate factor.
    scale: f64,
    pool: Vec<Proposal>,
}

fn proposal_pool(frame: &Frame, anchor: &BoundingBox, cfg: &TrackerConfig, timings: &mut StageTimings) -> Proposals {
    let clock = Instant::now();
    let (edges, scale) = frame_edges(frame, cfg.edge_threshold, cfg.max_side);
    let es = EdgeStructures::build(&edges);
    timings.edges = ms(clock);
    let clock = Instant::now();
    let pool = generate_pool_with(&es, &anchor.scale(scale), &cfg.proposal);
    timings.pool = ms(clock);
    Proposals { es, scale, pool }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn inside(b: &BoundingBox, w: usize, h: usize) -> bool {
    b.x >= 0.0 && b.y >= 0.0 && b.right() <= w as f64 && b.bottom() <= h as f64
}

fn to_frame(p: &Proposal, scale: f64) -> Proposal {
    Proposal {
        bbox: p.bbox.scale(1.0 / scale),
        ..*p
    }
}

/// Trains a fresh re-ranker on the top-`h` objectness boxes with `target`
/// (edge coordinates) as the positive. False when there is nothing to train.
fn train_initial(
    model: &mut RerankModel,
    props: &Proposals,
    feats: &[RerankFeature],
    target: &BoundingBox,
    h: usize,
) -> bool {
    let pool = &props.pool;
    let Some(e) = clip_to_frame(target, props.es.width, props.es.height) else {
        return false;
    };
    if pool.is_empty() {
        return false;
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .objectness
            .total_cmp(&pool[a].objectness)
            .then_with(|| pool[a].bbox.raster_cmp(&pool[b].bbox))
    });
    order.truncate(h);
    let top: Vec<Proposal> = order.iter().map(|&i| pool[i]).collect();
    let top_feats: Vec<RerankFeature> = order.iter().map(|&i| feats[i]).collect();
    model.update(&rerank_feature(&e, &props.es), &e, &top, &top_feats, 0);
    true
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    sigma: f64,
    prev: BoundingBox,
    t: usize,
    width: usize,
    height: usize,
    rerank: RerankModel,
    core: CoreModel,
    rng: ChaCha8Rng,
}

impl Tracker {
    pub fn init(frame: &Frame, gt: &BoundingBox, cfg: &TrackerConfig) -> Result<(Self, FrameLog)> {
        let (width, height) = (frame.width(), frame.height());
        let start = clip_to_frame(gt, width, height).ok_or(Error::DegenerateBox)?;
        let sigma = cfg.sigma.unwrap_or_else(|| gt.diagonal());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut timings = StageTimings::default();

        let core = match cfg.core {
            CoreKind::Ncc => CoreModel::Ncc(NccTemplate::new(&to_grayscale(frame), &start)?),
            CoreKind::Ssvm => CoreModel::Ssvm(Box::new(SsvmModel::new(cfg.budget, cfg.c, cfg.seed))),
        };
        let mut tracker = Self {
            cfg: cfg.clone(),
            sigma,
            prev: start,
            t: 0,
            width,
            height,
            rerank: RerankModel::default(),
            core,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed),
        };

        let props = tracker.proposals(frame, &start, &mut timings);
        let clock = Instant::now();
        let feats = pool_features(&props.pool, &props.es);
        let rerank_updated = cfg.rerank
            && train_initial(&mut tracker.rerank, &props, &feats, &start.scale(props.scale), cfg.h);
        let (_, selected) = tracker.select(&props, &feats);
        timings.rerank = ms(clock);

        let clock = Instant::now();
        if let CoreModel::Ssvm(_) = tracker.core {
            let positive = tracker.feature(frame, &start);
            let mut negatives = tracker.negatives(&start, &selected, &mut rng);
            if negatives.is_empty() {
                negatives = tracker.local_negatives(&start, &mut rng);
            }
            let negatives = negatives.into_iter().map(|b| (b, tracker.feature(frame, &b))).collect();
            if let CoreModel::Ssvm(m) = &mut tracker.core {
                m.update(0, (start, positive), negatives);
            }
        }
        timings.update = ms(clock);
        tracker.rng = rng;

        let log = FrameLog {
            frame: 0,
            bbox: *gt,
            score: 0.0,
            core_score: 0.0,
            smoothness: 0.0,
            pool_size: props.pool.len(),
            proposals: selected.len(),
            tested: 0,
            fallback: false,
            rerank_updated,
            timings,
        };
        Ok((tracker, log))
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn previous(&self) -> BoundingBox {
        self.prev
    }

    pub fn frame_index(&self) -> usize {
        self.t
    }

    pub fn rerank_model(&self) -> &RerankModel {
        &self.rerank
    }

    pub fn ssvm(&self) -> Option<&SsvmModel> {
        match &self.core {
            CoreModel::Ssvm(m) => Some(m),
            CoreModel::Ncc(_) => None,
        }
    }

    fn proposals(&self, frame: &Frame, anchor: &BoundingBox, timings: &mut StageTimings) -> Proposals {
        proposal_pool(frame, anchor, &self.cfg, timings)
    }

    /// The whole pool in frame coordinates, ordered by re-rank score (or by
    /// objectness when re-ranking is off), and its first `h` members.
    fn select(&self, props: &Proposals, feats: &[RerankFeature]) -> (Vec<Proposal>, Vec<Proposal>) {
        let ordered = if self.cfg.rerank {
            select_top(&self.rerank, &props.pool, feats, usize::MAX)
        } else {
            select_by_objectness(&props.pool, usize::MAX)
        };
        let ordered: Vec<Proposal> = ordered.iter().map(|p| to_frame(p, props.scale)).collect();
        let selected = ordered[..ordered.len().min(self.cfg.h)].to_vec();
        (ordered, selected)
    }

    fn feature(&self, frame: &Frame, b: &BoundingBox) -> Feature {
        Arc::new(pyramid_feature(frame, b, self.cfg.feature))
    }

    fn local_negatives(&self, around: &BoundingBox, rng: &mut ChaCha8Rng) -> Vec<BoundingBox> {
        sample_local(around, &self.cfg.local, rng)
            .into_iter()
            .filter(|b| inside(b, self.width, self.height))
            .collect()
    }

    /// Appearance-model negatives for a chosen box, per the update set.
    fn negatives(&self, chosen: &BoundingBox, selected: &[Proposal], rng: &mut ChaCha8Rng) -> Vec<BoundingBox> {
        let mut out = Vec::new();
        if self.cfg.update_set.uses_proposals() {
            out.extend(
                selected
                    .iter()
                    .map(|p| p.bbox)
                    .filter(|b| iou(b, chosen) < NEGATIVE_IOU),
            );
        }
        if self.cfg.update_set.uses_local() {
            out.extend(self.local_negatives(chosen, rng));
        }
        out
    }

    pub fn step(&mut self, frame: &Frame) -> Result<StepOutput> {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(Error::FrameSizeChanged {
                expected_w: self.width,
                expected_h: self.height,
                actual_w: frame.width(),
                actual_h: frame.height(),
            });
        }
        self.t += 1;
        let mut timings = StageTimings::default();
        let prev = self.prev;
        let props = self.proposals(frame, &prev, &mut timings);

        let clock = Instant::now();
        let feats = pool_features(&props.pool, &props.es);
        let (ordered, selected) = self.select(&props, &feats);
        timings.rerank = ms(clock);

        // candidate set
        let clock = Instant::now();
        let mut rng = self.rng.clone();
        let fallback = props.pool.is_empty();
        let mut candidates: Vec<BoundingBox> = Vec::new();
        if fallback {
            candidates.extend(self.local_negatives(&prev, &mut rng));
        } else {
            if self.cfg.test_set.uses_proposals() {
                candidates.extend(selected.iter().map(|p| p.bbox));
            }
            if self.cfg.test_set.uses_local() {
                candidates.extend(
                    sample_exhaustive(&prev, self.cfg.local.radius, self.cfg.exhaustive_step)
                        .into_iter()
                        .filter(|b| inside(b, self.width, self.height)),
                );
            }
        }
        candidates.push(prev);

        let (core_scores, cand_feats): (Vec<f64>, Vec<Option<Feature>>) = match &self.core {
            CoreModel::Ssvm(m) => candidates
                .par_iter()
                .map(|b| {
                    let f = self.feature(frame, b);
                    (m.score(&f), Some(f))
                })
                .unzip(),
            CoreModel::Ncc(t) => {
                let gray: Plane = to_grayscale(frame);
                candidates.par_iter().map(|b| (ncc_score(&gray, b, t), None)).unzip()
            }
        };
        let smooth: Vec<f64> = candidates
            .iter()
            .map(|b| smoothness(b, &prev, self.cfg.w_s, self.sigma))
            .collect();
        let best = select_candidate(&candidates, &core_scores, &smooth);
        let chosen = candidates[best];
        let score = core_scores[best] + smooth[best];
        timings.score = ms(clock);

        // update stage
        let clock = Instant::now();
        let mut rerank_updated = false;
        if self.cfg.rerank && !props.pool.is_empty() {
            if let Some(e) = clip_to_frame(&chosen.scale(props.scale), props.es.width, props.es.height) {
                let pos = rerank_feature(&e, &props.es);
                rerank_updated = self.rerank.update(&pos, &e, &props.pool, &feats, self.t).is_some();
            }
        }
        if matches!(self.core, CoreModel::Ssvm(_)) {
            let negatives = self.negatives(&chosen, &selected, &mut rng);
            if !negatives.is_empty() {
                let positive = cand_feats[best].clone().unwrap_or_else(|| self.feature(frame, &chosen));
                // proposals were scored already when the test set included them
                let reuse = !fallback && self.cfg.test_set.uses_proposals();
                let n_sel = selected.len();
                let labeled: Vec<(BoundingBox, Feature)> = negatives
                    .par_iter()
                    .map(|b| {
                        let cached = reuse
                            .then(|| candidates[..n_sel].iter().position(|c| c == b))
                            .flatten()
                            .and_then(|i| cand_feats[i].clone());
                        (*b, cached.unwrap_or_else(|| self.feature(frame, b)))
                    })
                    .collect();
                if let CoreModel::Ssvm(m) = &mut self.core {
                    m.update(self.t, (chosen, positive), labeled);
                }
            }
        }
        self.rng = rng;
        self.prev = chosen;
        timings.update = ms(clock);

        let log = FrameLog {
            frame: self.t,
            bbox: chosen,
            score,
            core_score: core_scores[best],
            smoothness: smooth[best],
            pool_size: props.pool.len(),
            proposals: selected.len(),
            tested: candidates.len(),
            fallback,
            rerank_updated,
            timings,
        };
        Ok(StepOutput {
            bbox: chosen,
            score,
            log,
            proposals: selected,
            pool: ordered,
        })
    }
}

/// The proposal pool of one frame in frame coordinates, best first. With
/// re-ranking on, the re-ranker is first trained on this frame with `prev`
/// as the positive, exactly as at tracker initialization.
pub fn inspect_proposals(frame: &Frame, prev: &BoundingBox, cfg: &TrackerConfig) -> Result<Vec<Proposal>> {
    let prev = clip_to_frame(prev, frame.width(), frame.height()).ok_or(Error::DegenerateBox)?;
    let props = proposal_pool(frame, &prev, cfg, &mut StageTimings::default());
    let ordered = if cfg.rerank {
        let feats = pool_features(&props.pool, &props.es);
        let mut model = RerankModel::default();
        train_initial(&mut model, &props, &feats, &prev.scale(props.scale), cfg.h);
        select_top(&model, &props.pool, &feats, usize::MAX)
    } else {
        select_by_objectness(&props.pool, usize::MAX)
    };
    Ok(ordered.iter().map(|p| to_frame(p, props.scale)).collect())
}

/// Tracks through in-memory frames; the first output is `gt_first`.
pub fn run(frames: &[Frame], gt_first: &BoundingBox, cfg: &TrackerConfig) -> Result<Vec<BoundingBox>> {
    let first = frames.first().ok_or(Error::EmptySequence)?;
    let (mut tracker, _) = Tracker::init(first, gt_first, cfg)?;
    let mut out = vec![*gt_first];
    for f in &frames[1..] {
        out.push(tracker.step(f)?.bbox);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub boxes: Vec<BoundingBox>,
    pub logs: Vec<FrameLog>,
    /// Wall time of tracking, excluding frame loading.
    pub seconds: f64,
}

impl TrackResult {
    pub fn fps(&self) -> f64 {
        if self.seconds > 0.0 {
            self.boxes.len() as f64 / self.seconds
        } else {
            0.0
        }
    }
}

/// Tracks a sequence, loading frames one at a time. `on_step` sees every
/// step output after the first frame.
pub fn track_sequence(
    seq: &Sequence,
    gt_first: &BoundingBox,
    cfg: &TrackerConfig,
    mut on_step: impl FnMut(&StepOutput),
) -> Result<TrackResult> {
    let first = seq.frames.first().ok_or(Error::EmptySequence)?.load()?;
    let clock = Instant::now();
    let (mut tracker, log) = Tracker::init(&first, gt_first, cfg)?;
    let mut seconds = clock.elapsed().as_secs_f64();
    let mut boxes = vec![*gt_first];
    let mut logs = vec![log];
    for src in &seq.frames[1..] {
        let frame = src.load()?;
        let clock = Instant::now();
        let out = tracker.step(&frame)?;
        seconds += clock.elapsed().as_secs_f64();
        on_step(&out);
        boxes.push(out.bbox);
        logs.push(out.log);
    }
    Ok(TrackResult { boxes, logs, seconds })
}
