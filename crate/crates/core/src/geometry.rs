//! Bounding-box arithmetic, overlap measures and local candidate sampling.
//!
//! Coordinates are continuous: `x`/`y` is the top-left corner, `w`/`h` the
//! extent, all in pixels. A pixel at integer position `(px, py)` covers the
//! unit square `[px, px + 1) x [py, py + 1)`.

use rand::Rng;

/// Smallest side length a box may have after clipping to a frame.
pub const MIN_BOX_SIDE: f64 = 4.0;

/// Axis-aligned rectangle in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0, "box extent must be positive");
        Self { x, y, w, h }
    }

    /// Returns `None` unless both extents are strictly positive and finite.
    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Option<Self> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        (finite && w > 0.0 && h > 0.0).then_some(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        center(self)
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when `other` lies entirely within `self`.
    pub fn contains(&self, other: &Self) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// True when the center of pixel `(px, py)` lies inside the box.
    #[inline]
    pub fn contains_pixel(&self, px: u32, py: u32) -> bool {
        let cx = px as f64 + 0.5;
        let cy = py as f64 + 0.5;
        cx >= self.x && cx < self.right() && cy >= self.y && cy < self.bottom()
    }

    /// Raster ordering key: top-to-bottom, then left-to-right, then size.
    pub fn raster_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.x.total_cmp(&other.x))
            .then(self.h.total_cmp(&other.h))
            .then(self.w.total_cmp(&other.w))
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    // Summing the two areas in a fixed order keeps iou(a, b) == iou(b, a) bitwise.
    let (lo, hi) = if a.area() <= b.area() {
        (a.area(), b.area())
    } else {
        (b.area(), a.area())
    };
    inter / (lo + hi - inter)
}

pub fn center(b: &BoundingBox) -> (f64, f64) {
    (b.x + b.w / 2.0, b.y + b.h / 2.0)
}

pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = center(a);
    let (bx, by) = center(b);
    (ax - bx).hypot(ay - by)
}

/// Parameters for the local candidate set sampled around an anchor box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSampleConfig {
    pub radius: f64,
    pub count: usize,
}

impl Default for LocalSampleConfig {
    fn default() -> Self {
        Self {
            radius: 30.0,
            count: 80,
        }
    }
}

/// Draws `cfg.count` boxes of the anchor's size whose centers are uniform in
/// the disc of radius `cfg.radius` around the anchor center. The anchor itself
/// is not included.
pub fn sample_local<R: Rng + ?Sized>(
    anchor: &BoundingBox,
    cfg: &LocalSampleConfig,
    rng: &mut R,
) -> Vec<BoundingBox> {
    let (cx, cy) = anchor.center();
    (0..cfg.count)
        .map(|_| {
            let r = cfg.radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            BoundingBox::from_center(cx + r * theta.cos(), cy + r * theta.sin(), anchor.w, anchor.h)
        })
        .collect()
}

/// Every box of the anchor's size whose center offset is an integer multiple
/// of `step` and lies within `radius` of the anchor center, anchor included.
pub fn sample_exhaustive(anchor: &BoundingBox, radius: f64, step: f64) -> Vec<BoundingBox> {
    let n = (radius / step).floor() as i64;
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let dx = i as f64 * step;
            let dy = j as f64 * step;
            if dx * dx + dy * dy <= radius * radius {
                out.push(anchor.translate(dx, dy));
            }
        }
    }
    out
}

/// Intersection of the box with the `frame_w x frame_h` frame rectangle, or
/// `None` when what survives is smaller than [`MIN_BOX_SIDE`] on either side.
pub fn clip_to_frame(b: &BoundingBox, frame_w: usize, frame_h: usize) -> Option<BoundingBox> {
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(frame_w as f64);
    let y1 = b.bottom().min(frame_h as f64);
    let (w, h) = (x1 - x0, y1 - y0);
    if w < MIN_BOX_SIDE || h < MIN_BOX_SIDE {
        return None;
    }
    Some(BoundingBox { x: x0, y: y0, w, h })
}

/// Greedy non-maximum suppression over boxes already sorted by descending
/// score. A box is dropped when its IoU with any kept box exceeds
/// `threshold`. Stops once `limit` boxes are kept.
pub fn nms_sorted<T>(items: Vec<T>, threshold: f64, limit: usize, bbox: impl Fn(&T) -> BoundingBox) -> Vec<T> {
    let mut kept: Vec<T> = Vec::new();
    let mut kept_boxes: Vec<BoundingBox> = Vec::new();
    for item in items {
        if kept.len() >= limit {
            break;
        }
        let b = bbox(&item);
        if kept_boxes.iter().all(|k| iou(k, &b) <= threshold) {
            kept_boxes.push(b);
            kept.push(item);
        }
    }
    kept
}
