//! Instance-specific re-ranking of the objectness pool with a linear
//! classifier over ten sub-box objectness scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::edgebox::{box_objectness_with, EdgeStructures, Proposal, ScoreScratch};
use crate::geometry::{iou, BoundingBox};

pub const FEATURE_DIM: usize = 10;
pub const UPDATE_INTERVAL: usize = 5;
pub const LAMBDA: f64 = 1e-3;
pub const EPOCHS: usize = 3;
/// Pool members overlapping the estimate less than this are negatives.
pub const NEGATIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankFeature(pub [f64; FEATURE_DIM]);

/// The ten sub-boxes in feature order: full, left, right, top, bottom,
/// the four quadrants (row-major), and the centered half-size box.
pub fn partition(b: &BoundingBox) -> [BoundingBox; FEATURE_DIM] {
    let (x, y, w, h) = (b.x, b.y, b.w, b.h);
    let (hw, hh) = (w / 2.0, h / 2.0);
    [
        *b,
        BoundingBox::new(x, y, hw, h),
        BoundingBox::new(x + hw, y, hw, h),
        BoundingBox::new(x, y, w, hh),
        BoundingBox::new(x, y + hh, w, hh),
        BoundingBox::new(x, y, hw, hh),
        BoundingBox::new(x + hw, y, hw, hh),
        BoundingBox::new(x, y + hh, hw, hh),
        BoundingBox::new(x + hw, y + hh, hw, hh),
        BoundingBox::new(x + w / 4.0, y + h / 4.0, hw, hh),
    ]
}

pub fn rerank_feature_with(b: &BoundingBox, es: &EdgeStructures, scratch: &mut ScoreScratch) -> RerankFeature {
    let parts = partition(b);
    RerankFeature(std::array::from_fn(|i| box_objectness_with(&parts[i], es, scratch)))
}

pub fn rerank_feature(b: &BoundingBox, es: &EdgeStructures) -> RerankFeature {
    rerank_feature_with(b, es, &mut ScoreScratch::default())
}

pub fn pool_features(pool: &[Proposal], es: &EdgeStructures) -> Vec<RerankFeature> {
    pool.par_iter()
        .map_init(ScoreScratch::default, |s, p| rerank_feature_with(&p.bbox, es, s))
        .collect()
}

/// Linear classifier over standardized features. The bias is learned as
/// the weight of a constant unit input.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankModel {
    pub weights: [f64; FEATURE_DIM],
    pub bias: f64,
    pub mean: [f64; FEATURE_DIM],
    pub scale: [f64; FEATURE_DIM],
    pub frames_since_update: usize,
    /// Stochastic steps taken over the model's lifetime; drives the step size.
    pub steps: u64,
}

impl Default for RerankModel {
    fn default() -> Self {
        Self {
            weights: [0.0; FEATURE_DIM],
            bias: 0.0,
            mean: [0.0; FEATURE_DIM],
            scale: [1.0; FEATURE_DIM],
            frames_since_update: 0,
            steps: 0,
        }
    }
}

/// Outcome of one training pass, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub positives: usize,
    pub negatives: usize,
    /// Regularized hinge objective of the kept model after each epoch.
    pub objective: Vec<f64>,
}

impl RerankModel {
    pub fn is_initialized(&self) -> bool {
        self.steps > 0
    }

    fn normalize(&self, f: &RerankFeature) -> [f64; FEATURE_DIM + 1] {
        let mut z = [1.0; FEATURE_DIM + 1];
        for (i, zi) in z.iter_mut().take(FEATURE_DIM).enumerate() {
            *zi = (f.0[i] - self.mean[i]) / self.scale[i];
        }
        z
    }

    pub fn score(&self, f: &RerankFeature) -> f64 {
        let z = self.normalize(f);
        self.bias + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
    }

    fn objective(&self, samples: &[([f64; FEATURE_DIM + 1], f64)]) -> f64 {
        let w = self.augmented();
        let reg = LAMBDA / 2.0 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = samples
            .iter()
            .map(|(z, y)| (1.0 - y * dot(&w, z)).max(0.0))
            .sum::<f64>()
            / samples.len().max(1) as f64;
        reg + loss
    }

    fn augmented(&self) -> [f64; FEATURE_DIM + 1] {
        let mut w = [0.0; FEATURE_DIM + 1];
        w[..FEATURE_DIM].copy_from_slice(&self.weights);
        w[FEATURE_DIM] = self.bias;
        w
    }

    fn set_augmented(&mut self, w: &[f64; FEATURE_DIM + 1]) {
        self.weights.copy_from_slice(&w[..FEATURE_DIM]);
        self.bias = w[FEATURE_DIM];
    }

    /// Re-estimates per-dimension mean and standard deviation from `feats`.
    pub fn fit_normalization(&mut self, feats: &[RerankFeature]) {
        if feats.is_empty() {
            return;
        }
        let n = feats.len() as f64;
        for i in 0..FEATURE_DIM {
            let mean = feats.iter().map(|f| f.0[i]).sum::<f64>() / n;
            let var = feats.iter().map(|f| (f.0[i] - mean).powi(2)).sum::<f64>() / n;
            self.mean[i] = mean;
            self.scale[i] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    /// Scheduled update. Runs when `frame_index` is a multiple of the update
    /// interval or the model has never been trained; returns the training
    /// statistics when it ran.
    pub fn update(
        &mut self,
        estimated: &RerankFeature,
        estimated_box: &BoundingBox,
        pool: &[Proposal],
        feats: &[RerankFeature],
        frame_index: usize,
    ) -> Option<UpdateStats> {
        if self.is_initialized() && frame_index % UPDATE_INTERVAL != 0 {
            self.frames_since_update += 1;
            return None;
        }
        let negatives: Vec<RerankFeature> = pool
            .iter()
            .zip(feats)
            .filter(|(p, _)| iou(&p.bbox, estimated_box) < NEGATIVE_IOU)
            .map(|(_, f)| *f)
            .collect();
        let stats = self.train(estimated, &negatives, feats, frame_index as u64);
        self.frames_since_update = 0;
        Some(stats)
    }

    /// Hinge-loss stochastic training on one positive against `negatives`,
    /// with normalization refit on `norm_pool`. Each epoch visits every
    /// negative once and repeats the positive as often, shuffled.
    pub fn train(
        &mut self,
        positive: &RerankFeature,
        negatives: &[RerankFeature],
        norm_pool: &[RerankFeature],
        seed: u64,
    ) -> UpdateStats {
        // refitting moves the input space; carry the decision function over
        let old = self.clone();
        self.fit_normalization(norm_pool);
        if old.is_initialized() {
            let mut b = old.bias;
            for i in 0..FEATURE_DIM {
                let w = old.weights[i] * self.scale[i] / old.scale[i];
                b += old.weights[i] * (self.mean[i] - old.mean[i]) / old.scale[i];
                self.weights[i] = w;
            }
            self.bias = b;
        }

        let pos = self.normalize(positive);
        let mut samples: Vec<([f64; FEATURE_DIM + 1], f64)> = negatives.iter().map(|f| (self.normalize(f), -1.0)).collect();
        let reps = negatives.len().max(1);
        samples.extend(std::iter::repeat_n((pos, 1.0), reps));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let radius = 1.0 / LAMBDA.sqrt();
        let mut w = self.augmented();
        let mut best = if self.is_initialized() { self.objective(&samples) } else { f64::INFINITY };
        let mut objective = Vec::with_capacity(EPOCHS);
        for _ in 0..EPOCHS {
            order.shuffle(&mut rng);
            for &k in &order {
                self.steps += 1;
                let eta = 1.0 / (LAMBDA * self.steps as f64);
                let (z, y) = &samples[k];
                let margin = y * dot(&w, z);
                let shrink = 1.0 - eta * LAMBDA;
                for v in w.iter_mut() {
                    *v *= shrink;
                }
                if margin < 1.0 {
                    for (v, zi) in w.iter_mut().zip(z) {
                        *v += eta * y * zi;
                    }
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    for v in w.iter_mut() {
                        *v *= radius / norm;
                    }
                }
            }
            // the model keeps the best epoch-end iterate; descent continues from the latest
            let kept = self.augmented();
            self.set_augmented(&w);
            let value = self.objective(&samples);
            if value <= best {
                best = value;
            } else {
                self.set_augmented(&kept);
            }
            objective.push(best);
        }
        UpdateStats {
            positives: 1,
            negatives: negatives.len(),
            objective,
        }
    }
}

#[inline]
fn dot(a: &[f64; FEATURE_DIM + 1], b: &[f64; FEATURE_DIM + 1]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills every proposal's re-rank score and returns the best `h`, ordered
/// by descending score with ties broken by objectness, then raster order.
pub fn select_top(m: &RerankModel, pool: &[Proposal], feats: &[RerankFeature], h: usize) -> Vec<Proposal> {
    let mut scored: Vec<Proposal> = pool
        .iter()
        .zip(feats)
        .map(|(p, f)| Proposal {
            rerank_score: Some(m.score(f)),
            ..*p
        })
        .collect();
    sort_by_rerank(&mut scored);
    scored.truncate(h);
    scored
}

pub fn sort_by_rerank(v: &mut [Proposal]) {
    v.sort_by(|a, b| {
        let (sa, sb) = (a.rerank_score.unwrap_or(f64::NEG_INFINITY), b.rerank_score.unwrap_or(f64::NEG_INFINITY));
        sb.total_cmp(&sa)
            .then_with(|| b.objectness.total_cmp(&a.objectness))
            .then_with(|| a.bbox.raster_cmp(&b.bbox))
    });
}

/// The re-ranking-off variant: the first `h` proposals in objectness order.
pub fn select_by_objectness(pool: &[Proposal], h: usize) -> Vec<Proposal> {
    let mut v = pool.to_vec();
    v.sort_by(|a, b| b.objectness.total_cmp(&a.objectness).then_with(|| a.bbox.raster_cmp(&b.bbox)));
    v.truncate(h);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edgebox::box_objectness;
    use crate::imaging::{EdgeMap, EdgePixel};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn unit(i: usize) -> RerankFeature {
        let mut f = [0.0; FEATURE_DIM];
        f[i] = 1.0;
        RerankFeature(f)
    }

    fn segment(pixels: &mut Vec<EdgePixel>, x0: i32, y0: i32, dx: i32, dy: i32, len: i32, mag: f64) {
        let orientation = (dy as f64).atan2(dx as f64).rem_euclid(PI);
        for k in 0..len {
            pixels.push(EdgePixel {
                x: (x0 + k * dx) as u32,
                y: (y0 + k * dy) as u32,
                magnitude: mag,
                orientation,
            });
        }
    }

    /// Segments on the left of column 40 and their reflections about it.
    fn mirrored_scene(seed: u64) -> EdgeStructures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut left = Vec::new();
        for s in 0..6 {
            let (dx, dy) = [(1, 0), (0, 1), (1, 1), (1, -1)][rng.random_range(0..4)];
            let len = rng.random_range(4..10);
            let x0 = rng.random_range(2..(38 - len * dx.max(0)).max(3));
            let y0 = 6 + s * 12 + if dy < 0 { len } else { 0 };
            segment(&mut left, x0, y0, dx, dy, len, rng.random_range(0.2..1.0));
        }
        let mut pixels: Vec<EdgePixel> = left
            .iter()
            .filter(|p| p.x < 39)
            .flat_map(|p| {
                [
                    *p,
                    EdgePixel {
                        x: 79 - p.x,
                        orientation: (PI - p.orientation).rem_euclid(PI),
                        ..*p
                    },
                ]
            })
            .collect();
        pixels.sort_by_key(|p| (p.y, p.x));
        pixels.dedup_by_key(|p| (p.y, p.x));
        EdgeStructures::build(&EdgeMap {
            width: 80,
            height: 90,
            pixels,
        })
    }

    #[test]
    fn edge_free_region_gives_zero_feature() {
        let es = EdgeStructures::build(&EdgeMap {
            width: 40,
            height: 40,
            pixels: vec![],
        });
        assert_eq!(rerank_feature(&BoundingBox::new(5.0, 5.0, 20.0, 20.0), &es).0, [0.0; FEATURE_DIM]);
    }

    #[test]
    fn mirror_symmetric_scene_has_equal_halves() {
        for seed in 0..20 {
            let es = mirrored_scene(seed);
            // widths keep every sub-box edge off pixel centers, where the half-open
            // pixel convention is not reflection symmetric
            for (x, w) in [(12.0, 56.0), (4.0, 72.0), (20.0, 40.0)] {
                let b = BoundingBox::new(x, 3.0, w, 80.0);
                let f = rerank_feature(&b, &es);
                assert_eq!(f.0[0], box_objectness(&b, &es));
                assert!((f.0[1] - f.0[2]).abs() < 1e-9, "seed {seed}: {:?}", f.0);
                assert!((f.0[5] - f.0[6]).abs() < 1e-9);
                assert!((f.0[7] - f.0[8]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn score_examples() {
        let m = RerankModel::default();
        assert_eq!(m.score(&RerankFeature([3.0; FEATURE_DIM])), 0.0);
        let mut m = RerankModel::default();
        m.weights[0] = 1.0;
        assert_eq!(m.score(&RerankFeature([0.7, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0])), 0.7);
    }

    #[test]
    fn score_matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..500 {
            let m = RerankModel {
                weights: std::array::from_fn(|_| rng.random_range(-5.0..5.0)),
                bias: rng.random_range(-2.0..2.0),
                mean: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                scale: std::array::from_fn(|_| rng.random_range(0.1..3.0)),
                frames_since_update: 0,
                steps: 1,
            };
            let f = RerankFeature(std::array::from_fn(|_| rng.random_range(0.0..2.0)));
            // compensated summation as the reference
            let mut sum = m.bias;
            let mut c = 0.0;
            for i in 0..FEATURE_DIM {
                let term = m.weights[i] * ((f.0[i] - m.mean[i]) / m.scale[i]) - c;
                let t = sum + term;
                c = (t - sum) - term;
                sum = t;
            }
            assert!((m.score(&f) - sum).abs() < 1e-12);
        }
    }

    fn pool_of(n: usize) -> (Vec<Proposal>, Vec<RerankFeature>) {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let pool: Vec<Proposal> = (0..n)
            .map(|i| Proposal::new(BoundingBox::new((i % 40) as f64 * 7.0, (i / 40) as f64 * 7.0, 20.0, 20.0), rng.random_range(0.0..1.0)))
            .collect();
        let feats = (0..n)
            .map(|_| RerankFeature(std::array::from_fn(|_| rng.random_range(0.0..1.0))))
            .collect();
        (pool, feats)
    }

    #[test]
    fn select_top_sizes_and_fallback() {
        let (pool, feats) = pool_of(800);
        let mut m = RerankModel::default();
        m.weights[3] = 1.0;
        m.steps = 1;
        let top = select_top(&m, &pool, &feats, 200);
        assert_eq!(top.len(), 200);
        assert!(top.windows(2).all(|w| w[0].rerank_score >= w[1].rerank_score));
        assert_eq!(select_top(&m, &pool[..50], &feats[..50], 200).len(), 50);
        let fresh = select_top(&RerankModel::default(), &pool, &feats, 200);
        let by_obj = select_by_objectness(&pool, 200);
        assert!(fresh.iter().zip(&by_obj).all(|(a, b)| a.bbox == b.bbox));
    }

    #[test]
    fn update_schedule_and_negatives() {
        let (pool, feats) = pool_of(100);
        let est = pool[0].bbox;
        let mut m = RerankModel::default();
        let stats = m.update(&feats[0], &est, &pool, &feats, 3).expect("first update always runs");
        let expected = pool.iter().filter(|p| iou(&p.bbox, &est) < 0.5).count();
        assert_eq!(stats.negatives, expected);
        assert!(expected < pool.len());
        let before = m.clone();
        assert!(m.update(&feats[0], &est, &pool, &feats, 3).is_none());
        assert_eq!(m.weights, before.weights);
        assert_eq!(m.bias, before.bias);
        assert!(m.update(&feats[0], &est, &pool, &feats, 10).is_some());
    }

    #[test]
    fn separable_toy_pool() {
        let negatives = vec![unit(1); 30];
        let mut pool = negatives.clone();
        pool.push(unit(0));
        let mut m = RerankModel::default();
        let stats = m.train(&unit(0), &negatives, &pool, 0);
        assert!(m.score(&unit(0)) > m.score(&unit(1)));
        assert!(stats.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", stats.objective);
    }

    #[test]
    fn hinge_objective_non_increasing_on_noisy_toy_data() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = RerankFeature(std::array::from_fn(|i| if i < 3 { 1.0 } else { rng.random_range(0.0..0.5) }));
            let negatives: Vec<RerankFeature> = (0..60)
                .map(|_| RerankFeature(std::array::from_fn(|_| rng.random_range(0.0..1.0))))
                .collect();
            let mut m = RerankModel::default();
            let stats = m.train(&pos, &negatives, &negatives, seed);
            assert!(stats.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12), "seed {seed}: {:?}", stats.objective);
        }
    }

    #[test]
    fn update_is_deterministic() {
        let (pool, feats) = pool_of(200);
        let mut a = RerankModel::default();
        let mut b = RerankModel::default();
        a.update(&feats[5], &pool[5].bbox, &pool, &feats, 0);
        b.update(&feats[5], &pool[5].bbox, &pool, &feats, 0);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn order_invariant_under_positive_affine_maps(a in 0.01f64..100.0, c in -50.0f64..50.0, n in 1usize..120) {
            let (pool, feats) = pool_of(n);
            let mut m = RerankModel::default();
            m.weights = [0.3, -0.2, 0.5, 0.1, 0.0, 0.9, -0.4, 0.2, 0.7, -0.1];
            m.bias = 0.25;
            m.steps = 1;
            let base = select_top(&m, &pool, &feats, 50);
            let mut scaled = m.clone();
            scaled.weights.iter_mut().for_each(|w| *w *= a);
            scaled.bias = m.bias * a + c;
            let other = select_top(&scaled, &pool, &feats, 50);
            let same = base.iter().zip(&other).all(|(x, y)| x.bbox == y.bbox);
            prop_assert!(same);
            for p in &other {
                prop_assert!(pool.iter().any(|q| q.bbox == p.bbox));
            }
        }
    }
}
