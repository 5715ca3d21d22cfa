//! Fixed-template normalized cross-correlation.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::Plane;

/// Per-pixel variance below which a patch counts as flat and scores 0.
pub const FLAT_VARIANCE: f64 = 1e-6;

/// Grayscale patch captured once at initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct NccTemplate {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub mean: f64,
    /// `sum (t - mean)^2`.
    pub sq_dev: f64,
}

impl NccTemplate {
    /// Copies the pixels under `b` (rounded to whole pixels) from `gray`.
    pub fn new(gray: &Plane, b: &BoundingBox) -> Result<Self> {
        let width = (b.w.round() as usize).max(1);
        let height = (b.h.round() as usize).max(1);
        if width > gray.width || height > gray.height {
            return Err(Error::TemplateTooLarge {
                template_w: width,
                template_h: height,
                frame_w: gray.width,
                frame_h: gray.height,
            });
        }
        let x0 = (b.x.round().max(0.0) as usize).min(gray.width - width);
        let y0 = (b.y.round().max(0.0) as usize).min(gray.height - height);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            data.extend_from_slice(&gray.data[(y0 + y) * gray.width + x0..][..width]);
        }
        let (mean, sq_dev) = moments(&data);
        if sq_dev / data.len() as f64 <= FLAT_VARIANCE {
            return Err(Error::FlatTemplate);
        }
        Ok(Self {
            width,
            height,
            data,
            mean,
            sq_dev,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sq = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, sq)
}

/// The patch under `b` resampled to `w x h` by nearest neighbor.
pub fn resample_patch(gray: &Plane, b: &BoundingBox, w: usize, h: usize) -> Vec<f64> {
    let xs: Vec<usize> = (0..w)
        .map(|i| ((b.x + (i as f64 + 0.5) * b.w / w as f64).floor().clamp(0.0, (gray.width - 1) as f64)) as usize)
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for j in 0..h {
        let sy = (b.y + (j as f64 + 0.5) * b.h / h as f64).floor().clamp(0.0, (gray.height - 1) as f64) as usize;
        let row = &gray.data[sy * gray.width..][..gray.width];
        out.extend(xs.iter().map(|&sx| row[sx]));
    }
    out
}

/// Correlation coefficient between the template and the candidate patch.
pub fn ncc_score(gray: &Plane, b: &BoundingBox, t: &NccTemplate) -> f64 {
    let patch = resample_patch(gray, b, t.width, t.height);
    let (_, sq) = moments(&patch);
    if sq / patch.len() as f64 <= FLAT_VARIANCE {
        return 0.0;
    }
    let num: f64 = t.data.iter().zip(&patch).map(|(a, c)| (a - t.mean) * c).sum();
    (num / (t.sq_dev * sq).sqrt()).clamp(-1.0, 1.0)
}

fn fft_rows(buf: &mut [Complex<f64>], fft: &dyn Fft<f64>) {
    fft.process(buf);
}

fn transpose(src: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

fn fft2d(buf: Vec<Complex<f64>>, w: usize, h: usize, planner: &mut FftPlanner<f64>, inverse: bool) -> Vec<Complex<f64>> {
    let (rows, cols) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let mut buf = buf;
    fft_rows(&mut buf, rows.as_ref());
    let mut t = transpose(&buf, w, h);
    fft_rows(&mut t, cols.as_ref());
    transpose(&t, h, w)
}

/// Inclusive-exclusive prefix sums with a zero first row and column.
fn integral(values: impl Iterator<Item = f64>, w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    let mut it = values;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += it.next().expect("plane has w * h values");
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

#[inline]
fn window_sum(s: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
    s[(y + h) * stride + x + w] - s[y * stride + x + w] - s[(y + h) * stride + x] + s[y * stride + x]
}

/// NCC of the template at every top-left alignment `(x, y)` with
/// `0 <= x <= W - w`, `0 <= y <= H - h`: frequency-domain correlation for
/// the numerator and running sums for the local normalization.
pub fn ncc_response_map(gray: &Plane, t: &NccTemplate) -> Result<Plane> {
    let (fw, fh) = (gray.width, gray.height);
    let (tw, th) = (t.width, t.height);
    if tw > fw || th > fh {
        return Err(Error::TemplateTooLarge {
            template_w: tw,
            template_h: th,
            frame_w: fw,
            frame_h: fh,
        });
    }
    let mut planner = FftPlanner::new();
    let image: Vec<Complex<f64>> = gray.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut kernel = vec![Complex::new(0.0, 0.0); fw * fh];
    for y in 0..th {
        for x in 0..tw {
            kernel[y * fw + x] = Complex::new(t.data[y * tw + x] - t.mean, 0.0);
        }
    }
    let fi = fft2d(image, fw, fh, &mut planner, false);
    let fk = fft2d(kernel, fw, fh, &mut planner, false);
    let product: Vec<Complex<f64>> = fi.iter().zip(&fk).map(|(a, b)| a * b.conj()).collect();
    let corr = fft2d(product, fw, fh, &mut planner, true);
    let norm = (fw * fh) as f64;

    // centering on the frame mean keeps the running sums small
    let center = gray.data.iter().sum::<f64>() / gray.data.len() as f64;
    let s1 = integral(gray.data.iter().map(|v| v - center), fw, fh);
    let s2 = integral(gray.data.iter().map(|v| (v - center) * (v - center)), fw, fh);
    let n = (tw * th) as f64;
    let (ow, oh) = (fw - tw + 1, fh - th + 1);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let a = window_sum(&s1, fw + 1, x, y, tw, th);
            let b = window_sum(&s2, fw + 1, x, y, tw, th);
            let sq = (b - a * a / n).max(0.0);
            if sq / n <= FLAT_VARIANCE {
                out.push(0.0);
                continue;
            }
            let num = corr[y * fw + x].re / norm;
            out.push((num / (t.sq_dev * sq).sqrt()).clamp(-1.0, 1.0));
        }
    }
    Ok(Plane::new(ow, oh, out))
}
