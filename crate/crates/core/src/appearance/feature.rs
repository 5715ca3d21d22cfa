use crate::geometry::BoundingBox;
use crate::imaging::Frame;

/// Side of the canonical raster a patch is resampled to before histogramming.
pub const CANONICAL: usize = 64;
pub const BINS: usize = 16;

/// Histogram layout of an appearance feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Levels 1 to 5, per-channel RGB histograms: 2640 values.
    Pyramid2640,
    /// Levels 1 to 4, grayscale histograms: 480 values.
    Gray480,
}

impl FeatureKind {
    pub fn levels(self) -> usize {
        match self {
            FeatureKind::Pyramid2640 => 5,
            FeatureKind::Gray480 => 4,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            FeatureKind::Pyramid2640 => 3,
            FeatureKind::Gray480 => 1,
        }
    }

    pub fn dim(self) -> usize {
        let cells: usize = (1..=self.levels()).map(|l| l * l).sum();
        cells * self.channels() * BINS
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2640" => Ok(FeatureKind::Pyramid2640),
            "480" => Ok(FeatureKind::Gray480),
            _ => Err(format!("expected 2640 or 480, got `{s}`")),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.dim())
    }
}

/// Cell boundaries along one axis of the canonical raster: cell `i` of `l`
/// covers `[floor(i * 64 / l), floor((i + 1) * 64 / l))`.
#[inline]
pub fn cell_bounds(i: usize, l: usize) -> (usize, usize) {
    (i * CANONICAL / l, (i + 1) * CANONICAL / l)
}

/// Nearest-neighbor source coordinates of the canonical raster over `b`.
fn sample_coords(b: &BoundingBox, width: usize, height: usize) -> ([usize; CANONICAL], [usize; CANONICAL]) {
    let xs = std::array::from_fn(|u| {
        let s = (b.x + (u as f64 + 0.5) * b.w / CANONICAL as f64).floor();
        s.clamp(0.0, (width - 1) as f64) as usize
    });
    let ys = std::array::from_fn(|v| {
        let s = (b.y + (v as f64 + 0.5) * b.h / CANONICAL as f64).floor();
        s.clamp(0.0, (height - 1) as f64) as usize
    });
    (xs, ys)
}

/// Spatial-pyramid histogram of the patch under `b`. Values are ordered by
/// level, then cell (row-major), then channel, then bin; each cell/channel
/// block sums to one.
pub fn pyramid_feature(f: &Frame, b: &BoundingBox, kind: FeatureKind) -> Vec<f64> {
    let (xs, ys) = sample_coords(b, f.width(), f.height());
    let channels = kind.channels();
    let mut bins = vec![0u8; CANONICAL * CANONICAL * channels];
    let data = f.data();
    for (v, &sy) in ys.iter().enumerate() {
        for (u, &sx) in xs.iter().enumerate() {
            let at = (sy * f.width() + sx) * 3;
            let px = &data[at..at + 3];
            let out = &mut bins[(v * CANONICAL + u) * channels..][..channels];
            if channels == 3 {
                for c in 0..3 {
                    out[c] = px[c] >> 4;
                }
            } else {
                let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                out[0] = ((luma / 16.0) as usize).min(BINS - 1) as u8;
            }
        }
    }

    let mut feat = Vec::with_capacity(kind.dim());
    let block = channels * BINS;
    for l in 1..=kind.levels() {
        for cy in 0..l {
            let (y0, y1) = cell_bounds(cy, l);
            for cx in 0..l {
                let (x0, x1) = cell_bounds(cx, l);
                let mut counts = vec![0u32; block];
                for v in y0..y1 {
                    let row = &bins[v * CANONICAL * channels..];
                    for u in x0..x1 {
                        for c in 0..channels {
                            counts[c * BINS + row[u * channels + c] as usize] += 1;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                feat.extend(counts.iter().map(|&k| if n > 0.0 { k as f64 / n } else { 0.0 }));
            }
        }
    }
    debug_assert_eq!(feat.len(), kind.dim());
    feat
}

/// Histogram intersection, `sum_d min(a_d, b_d)`.
#[inline]
pub fn intersection_kernel(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators keep the loop vectorizable
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for j in 0..4 {
            let (x, y) = (a[4 * k + j], b[4 * k + j]);
            acc[j] += if x < y { x } else { y };
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i].min(b[i]);
    }
    s
}
