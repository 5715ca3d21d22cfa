use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::groups::{compute_affinities, group_edges, AffinityGraph, EdgeGroup, MIN_AFFINITY};
use crate::geometry::BoundingBox;
use crate::imaging::EdgeMap;

/// Perimeter normalization exponent.
pub const KAPPA: f64 = 1.5;

const CELL: usize = 16;

/// Edge groups, their affinities and a coarse spatial index, built once per
/// frame and shared by every box scored on it.
#[derive(Debug, Clone)]
pub struct EdgeStructures {
    pub width: usize,
    pub height: usize,
    pub groups: Vec<EdgeGroup>,
    pub affinities: AffinityGraph,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl EdgeStructures {
    pub fn build(e: &EdgeMap) -> Self {
        let groups = group_edges(e);
        let affinities = compute_affinities(&groups, e.width, e.height);
        Self::from_parts(e.width, e.height, groups, affinities)
    }

    pub fn from_parts(width: usize, height: usize, groups: Vec<EdgeGroup>, affinities: AffinityGraph) -> Self {
        let cols = width.div_ceil(CELL).max(1);
        let rows = height.div_ceil(CELL).max(1);
        let mut cells = vec![Vec::new(); cols * rows];
        for (g, group) in groups.iter().enumerate() {
            let (x0, y0, x1, y1) = group.extent;
            for cy in y0 as usize / CELL..=(y1 as usize / CELL).min(rows - 1) {
                for cx in x0 as usize / CELL..=(x1 as usize / CELL).min(cols - 1) {
                    cells[cy * cols + cx].push(g as u32);
                }
            }
        }
        Self {
            width,
            height,
            groups,
            affinities,
            cols,
            rows,
            cells,
        }
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn edge_pixel_count(&self) -> usize {
        self.groups.iter().map(|g| g.pixels.len()).sum()
    }
}

/// Where a group sits relative to a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Inside,
    Straddling,
    Outside,
}

/// Classification by pixel centers: inside when every member pixel center
/// is in the box, straddling when some but not all are.
pub fn placement(g: &EdgeGroup, b: &BoundingBox) -> Placement {
    let (x0, y0, x1, y1) = g.extent;
    let inside_extent = b.contains_pixel(x0, y0) && b.contains_pixel(x1, y1);
    if inside_extent {
        return Placement::Inside;
    }
    let lo_x = x0 as f64 + 0.5;
    let hi_x = x1 as f64 + 0.5;
    let lo_y = y0 as f64 + 0.5;
    let hi_y = y1 as f64 + 0.5;
    if hi_x < b.x || lo_x >= b.right() || hi_y < b.y || lo_y >= b.bottom() {
        return Placement::Outside;
    }
    if g.pixels.iter().any(|p| b.contains_pixel(p.x, p.y)) {
        Placement::Straddling
    } else {
        Placement::Outside
    }
}

/// The centered sub-box of half width and half height.
pub fn inner_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(b.x + b.w / 4.0, b.y + b.h / 4.0, b.w / 2.0, b.h / 2.0)
}

#[inline]
pub fn perimeter_norm(b: &BoundingBox) -> f64 {
    2.0 * (b.w + b.h).powf(KAPPA)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    product: f64,
    group: u32,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.product
            .total_cmp(&other.product)
            .then_with(|| other.group.cmp(&self.group))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable per-thread buffers for [`box_objectness_with`].
#[derive(Debug, Default)]
pub struct ScoreScratch {
    epoch: u32,
    seen: Vec<u32>,
    class: Vec<Placement>,
    best: Vec<f64>,
    done: Vec<bool>,
    inside: Vec<u32>,
    straddling: Vec<u32>,
    heap: BinaryHeap<Frontier>,
}

impl ScoreScratch {
    fn reset(&mut self, n: usize) {
        if self.seen.len() != n {
            self.seen = vec![0; n];
            self.class = vec![Placement::Outside; n];
            self.best = vec![0.0; n];
            self.done = vec![false; n];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.inside.clear();
        self.straddling.clear();
        self.heap.clear();
    }
}

thread_local! {
    static SCRATCH: RefCell<ScoreScratch> = RefCell::new(ScoreScratch::default());
}

/// Objectness of a box: continuation-weighted magnitude of the groups it
/// wholly encloses, minus the same quantity over its centered half-size
/// sub-box, normalized by `2 (w + h)^kappa` and floored at zero.
pub fn box_objectness(b: &BoundingBox, es: &EdgeStructures) -> f64 {
    SCRATCH.with(|s| box_objectness_with(b, es, &mut s.borrow_mut()))
}

pub fn box_objectness_with(b: &BoundingBox, es: &EdgeStructures, s: &mut ScoreScratch) -> f64 {
    if es.groups.is_empty() || b.w <= 0.0 || b.h <= 0.0 {
        return 0.0;
    }
    s.reset(es.groups.len());
    let epoch = s.epoch;

    let cx0 = (b.x.max(0.0) as usize / CELL).min(es.cols - 1);
    let cy0 = (b.y.max(0.0) as usize / CELL).min(es.rows - 1);
    if b.right() < 0.0 || b.bottom() < 0.0 {
        return 0.0;
    }
    let cx1 = (b.right() as usize / CELL).min(es.cols - 1);
    let cy1 = (b.bottom() as usize / CELL).min(es.rows - 1);
    for cy in cy0..=cy1 {
        for cx in cx0..=cx1 {
            for &g in &es.cells[cy * es.cols + cx] {
                let gi = g as usize;
                if s.seen[gi] == epoch {
                    continue;
                }
                s.seen[gi] = epoch;
                let p = placement(&es.groups[gi], b);
                s.class[gi] = p;
                match p {
                    Placement::Inside => {
                        s.best[gi] = 0.0;
                        s.done[gi] = false;
                        s.inside.push(g);
                    }
                    Placement::Straddling => s.straddling.push(g),
                    Placement::Outside => {}
                }
            }
        }
    }
    if s.inside.is_empty() {
        return 0.0;
    }

    // best-first widest-path propagation from straddling groups into the box
    for &g in &s.straddling {
        for &(n, a) in es.affinities.neighbors(g as usize) {
            let ni = n as usize;
            if s.seen[ni] == epoch && s.class[ni] == Placement::Inside && a > s.best[ni] {
                s.best[ni] = a;
                s.heap.push(Frontier { product: a, group: n });
            }
        }
    }
    while let Some(Frontier { product, group }) = s.heap.pop() {
        let gi = group as usize;
        if s.done[gi] || product < s.best[gi] {
            continue;
        }
        s.done[gi] = true;
        for &(n, a) in es.affinities.neighbors(gi) {
            let ni = n as usize;
            if s.seen[ni] != epoch || s.class[ni] != Placement::Inside || s.done[ni] {
                continue;
            }
            let p = product * a;
            if p >= MIN_AFFINITY && p > s.best[ni] {
                s.best[ni] = p;
                s.heap.push(Frontier { product: p, group: n });
            }
        }
    }

    let inner = inner_box(b);
    let mut total = 0.0;
    let mut center = 0.0;
    for &g in &s.inside {
        let gi = g as usize;
        let group = &es.groups[gi];
        let contrib = (1.0 - s.best[gi]) * group.magnitude;
        total += contrib;
        let (x0, y0, x1, y1) = group.extent;
        if inner.contains_pixel(x0, y0) && inner.contains_pixel(x1, y1) {
            center += contrib;
        }
    }
    ((total - center) / perimeter_norm(b)).max(0.0)
}
