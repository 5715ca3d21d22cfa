//! Budgeted structured SVM over candidate boxes, trained online with
//! LaRank-style steps.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::feature::intersection_kernel;
use crate::geometry::{iou, BoundingBox};

pub const DEFAULT_BUDGET: usize = 100;
pub const DEFAULT_C: f64 = 100.0;
/// Candidates kept per pattern besides its positive: the most violating
/// ones at insertion time.
pub const PATTERN_CANDIDATES: usize = 49;
const REPROCESS_ROUNDS: usize = 10;
const OPTIMIZE_ROUNDS: usize = 10;
const ZERO: f64 = 1e-8;

pub type Feature = Arc<Vec<f64>>;

/// One training frame: candidate boxes with their features; index 0 is the
/// positive.
#[derive(Debug, Clone)]
struct Pattern {
    id: u64,
    frame: usize,
    boxes: Vec<BoundingBox>,
    feats: Vec<Feature>,
    svs: usize,
}

impl Pattern {
    fn loss(&self, y: usize) -> f64 {
        1.0 - iou(&self.boxes[y], &self.boxes[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub pattern: u64,
    pub frame: usize,
    pub bbox: BoundingBox,
    pub feature: Feature,
    /// Index within the pattern; 0 is the pattern's positive.
    pub y: usize,
    pub beta: f64,
    pub grad: f64,
}

#[derive(Debug, Clone)]
pub struct SsvmModel {
    pub budget: usize,
    pub c: f64,
    patterns: Vec<Pattern>,
    svs: Vec<SupportVector>,
    /// Kernel values among support vectors, in `svs` order.
    gram: Vec<Vec<f64>>,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl SsvmModel {
    pub fn new(budget: usize, c: f64, seed: u64) -> Self {
        Self {
            budget,
            c,
            patterns: Vec::new(),
            svs: Vec::new(),
            gram: Vec::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn support_vectors(&self) -> &[SupportVector] {
        &self.svs
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// `sum_i beta_i k(sv_i, feat)`.
    pub fn score(&self, feat: &[f64]) -> f64 {
        self.svs.iter().map(|sv| sv.beta * intersection_kernel(&sv.feature, feat)).sum()
    }

    pub fn score_all(&self, feats: &[Feature]) -> Vec<f64> {
        feats.par_iter().map(|f| self.score(f)).collect()
    }

    /// Sum of weights per pattern; every entry is zero for a feasible model.
    pub fn pattern_weight_sums(&self) -> Vec<(u64, f64)> {
        self.patterns
            .iter()
            .map(|p| (p.id, self.svs.iter().filter(|sv| sv.pattern == p.id).map(|sv| sv.beta).sum()))
            .collect()
    }

    /// Scales every weight by `c`, which scales every score by `c`.
    pub fn scale_weights(&mut self, c: f64) {
        for sv in &mut self.svs {
            sv.beta *= c;
        }
    }

    /// One training round for a frame: the positive box and its negatives
    /// with precomputed features.
    pub fn update(
        &mut self,
        frame: usize,
        positive: (BoundingBox, Feature),
        negatives: Vec<(BoundingBox, Feature)>,
    ) {
        if negatives.is_empty() {
            return;
        }
        self.process_new(frame, positive, negatives);
        self.maintain_budget();
        for _ in 0..REPROCESS_ROUNDS {
            self.process_old();
            self.maintain_budget();
            for _ in 0..OPTIMIZE_ROUNDS {
                self.optimize();
            }
        }
    }

    fn pattern_index(&self, id: u64) -> usize {
        self.patterns.iter().position(|p| p.id == id).expect("pattern of a live support vector")
    }

    /// Gradient `-loss(y) - F(x, y)` for every candidate of a pattern.
    fn gradients(&self, p: &Pattern) -> Vec<f64> {
        p.feats
            .par_iter()
            .enumerate()
            .map(|(y, f)| -p.loss(y) - self.score(f))
            .collect()
    }

    fn process_new(&mut self, frame: usize, positive: (BoundingBox, Feature), negatives: Vec<(BoundingBox, Feature)>) {
        let mut boxes = vec![positive.0];
        let mut feats = vec![positive.1];
        for (b, f) in negatives {
            boxes.push(b);
            feats.push(f);
        }
        let mut p = Pattern {
            id: self.next_id,
            frame,
            boxes,
            feats,
            svs: 0,
        };
        self.next_id += 1;
        let grads = self.gradients(&p);
        // keep the positive and the most violating candidates
        let mut order: Vec<usize> = (1..p.boxes.len()).collect();
        order.sort_by(|&a, &b| grads[a].total_cmp(&grads[b]).then(a.cmp(&b)));
        order.truncate(PATTERN_CANDIDATES);
        let keep: Vec<usize> = std::iter::once(0).chain(order).collect();
        p.boxes = keep.iter().map(|&i| p.boxes[i]).collect();
        p.feats = keep.iter().map(|&i| Arc::clone(&p.feats[i])).collect();
        let grads: Vec<f64> = keep.iter().map(|&i| grads[i]).collect();

        let id = p.id;
        self.patterns.push(p);
        let pi = self.patterns.len() - 1;
        let ip = self.add_sv(pi, 0, grads[0]);
        let yn = argmin(&grads);
        if yn == 0 {
            // nothing violates the margin more than the positive itself
            self.remove_sv(ip);
            return;
        }
        let inn = self.add_sv(pi, yn, grads[yn]);
        debug_assert_eq!(self.svs[ip].pattern, id);
        self.smo_step(ip, inn);
    }

    fn process_old(&mut self) {
        if self.patterns.is_empty() {
            return;
        }
        let pi = self.rng.random_range(0..self.patterns.len());
        let Some(ip) = self.best_ascent(pi) else { return };
        let grads = self.gradients(&self.patterns[pi]);
        let yn = argmin(&grads);
        let id = self.patterns[pi].id;
        let inn = match self.svs.iter().position(|sv| sv.pattern == id && sv.y == yn) {
            Some(i) => i,
            None => self.add_sv(pi, yn, grads[yn]),
        };
        self.smo_step(ip, inn);
    }

    fn optimize(&mut self) {
        if self.patterns.is_empty() {
            return;
        }
        let pi = self.rng.random_range(0..self.patterns.len());
        let Some(ip) = self.best_ascent(pi) else { return };
        let id = self.patterns[pi].id;
        let inn = self
            .svs
            .iter()
            .enumerate()
            .filter(|(_, sv)| sv.pattern == id)
            .min_by(|a, b| a.1.grad.total_cmp(&b.1.grad))
            .map(|(i, _)| i)
            .expect("pattern has support vectors");
        self.smo_step(ip, inn);
    }

    /// Support vector of the pattern with the largest gradient among those
    /// whose weight can still grow.
    fn best_ascent(&self, pi: usize) -> Option<usize> {
        let id = self.patterns[pi].id;
        self.svs
            .iter()
            .enumerate()
            .filter(|(_, sv)| sv.pattern == id && sv.beta < if sv.y == 0 { self.c } else { 0.0 })
            .max_by(|a, b| a.1.grad.total_cmp(&b.1.grad).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }

    fn add_sv(&mut self, pi: usize, y: usize, grad: f64) -> usize {
        let p = &mut self.patterns[pi];
        p.svs += 1;
        let sv = SupportVector {
            pattern: p.id,
            frame: p.frame,
            bbox: p.boxes[y],
            feature: Arc::clone(&p.feats[y]),
            y,
            beta: 0.0,
            grad,
        };
        let row: Vec<f64> = self
            .svs
            .iter()
            .map(|o| intersection_kernel(&o.feature, &sv.feature))
            .collect();
        let self_k = intersection_kernel(&sv.feature, &sv.feature);
        for (r, k) in self.gram.iter_mut().zip(&row) {
            r.push(*k);
        }
        let mut row = row;
        row.push(self_k);
        self.gram.push(row);
        self.svs.push(sv);
        self.svs.len() - 1
    }

    fn remove_sv(&mut self, i: usize) {
        let sv = self.svs.swap_remove(i);
        self.gram.swap_remove(i);
        for r in &mut self.gram {
            r.swap_remove(i);
        }
        let pi = self.pattern_index(sv.pattern);
        self.patterns[pi].svs -= 1;
        if self.patterns[pi].svs == 0 {
            self.patterns.remove(pi);
        }
    }

    fn smo_step(&mut self, ip: usize, inn: usize) {
        if ip == inn {
            return;
        }
        let denom = self.gram[ip][ip] + self.gram[inn][inn] - 2.0 * self.gram[ip][inn];
        let (gp, gn) = (self.svs[ip].grad, self.svs[inn].grad);
        if denom > 0.0 && gp - gn > ZERO {
            let bound = if self.svs[ip].y == 0 { self.c } else { 0.0 };
            let lambda = ((gp - gn) / denom).min(bound - self.svs[ip].beta);
            self.svs[ip].beta += lambda;
            self.svs[inn].beta -= lambda;
            for (j, sv) in self.svs.iter_mut().enumerate() {
                sv.grad -= lambda * (self.gram[j][ip] - self.gram[j][inn]);
            }
        }
        // drop whichever ended at zero weight, higher index first
        let (hi, lo) = if ip > inn { (ip, inn) } else { (inn, ip) };
        for i in [hi, lo] {
            if self.svs[i].beta.abs() < ZERO {
                self.remove_sv(i);
            }
        }
    }

    /// Removes negative support vectors until the budget holds, each time
    /// the one whose merge into its pattern's positive changes the weight
    /// vector least; the merged weight moves to that positive.
    fn maintain_budget(&mut self) {
        while self.svs.len() > self.budget {
            let mut best: Option<(f64, usize, usize)> = None;
            for (r, sv) in self.svs.iter().enumerate() {
                if sv.beta >= 0.0 {
                    continue;
                }
                let Some(p) = self.svs.iter().position(|o| o.pattern == sv.pattern && o.y == 0) else {
                    continue;
                };
                let cost = sv.beta * sv.beta * (self.gram[r][r] + self.gram[p][p] - 2.0 * self.gram[r][p]);
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, r, p));
                }
            }
            let Some((_, r, p)) = best else { break };
            let beta_r = self.svs[r].beta;
            self.svs[p].beta += beta_r;
            for (j, sv) in self.svs.iter_mut().enumerate() {
                sv.grad -= beta_r * (self.gram[j][p] - self.gram[j][r]);
            }
            if self.svs[p].beta.abs() < ZERO {
                let (hi, lo) = if r > p { (r, p) } else { (p, r) };
                self.remove_sv(hi);
                self.remove_sv(lo);
            } else {
                self.remove_sv(r);
            }
        }
    }

    /// Debug snapshot: a header line with counts, then one row per support
    /// vector `pattern,frame,y,x,y,w,h,beta,grad,f_0 f_1 ...`.
    pub fn write_snapshot<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let dim = self.svs.first().map_or(0, |sv| sv.feature.len());
        writeln!(
            out,
            "support_vectors={} patterns={} dim={} budget={} c={}",
            self.svs.len(),
            self.patterns.len(),
            dim,
            self.budget,
            self.c
        )?;
        for sv in &self.svs {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},",
                sv.pattern, sv.frame, sv.y, sv.bbox.x, sv.bbox.y, sv.bbox.w, sv.bbox.h, sv.beta, sv.grad
            )?;
            let values: Vec<String> = sv.feature.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", values.join(" "))?;
        }
        Ok(())
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}
