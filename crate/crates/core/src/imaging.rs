//! Frames, luminance, gradients and thin edges.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub const MIN_FRAME_SIDE: usize = 16;

/// Default threshold on normalized gradient magnitude for edge extraction.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;

/// An 8-bit RGB frame, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::FrameTooSmall { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(Error::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    /// Builds a frame from three planes of `width * height` samples each.
    pub fn from_planar(width: usize, height: usize, planar: &[u8]) -> Result<Self> {
        let n = width * height;
        if planar.len() != n * 3 {
            return Err(Error::BufferSize {
                expected: n * 3,
                actual: planar.len(),
            });
        }
        let mut data = vec![0u8; n * 3];
        for i in 0..n {
            data[i * 3] = planar[i];
            data[i * 3 + 1] = planar[n + i];
            data[i * 3 + 2] = planar[2 * n + i];
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_planar(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = vec![0u8; n * 3];
        for i in 0..n {
            for c in 0..3 {
                out[c * n + i] = self.data[i * 3 + c];
            }
        }
        out
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer size checked at construction")
    }

    pub fn from_rgb_image(img: &image::RgbImage) -> Result<Self> {
        Self::new(img.width() as usize, img.height() as usize, img.as_raw().clone())
    }

    /// Loads a PNG, JPEG or BMP file, or a raw planar RGB dump when the path
    /// ends in `.rgb` (dimensions come from [`read_raw_planar`]'s sidecar).
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "rgb") {
            return read_raw_planar(path);
        }
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb_image(&img.to_rgb8())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "rgb") {
            return write_raw_planar(self, path);
        }
        self.to_rgb_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    s.into()
}

/// Reads a raw planar dump (all R samples, then G, then B). The sidecar file
/// `<path>.hdr` holds `width height` as whitespace-separated integers.
pub fn read_raw_planar(path: &Path) -> Result<Frame> {
    let hdr = sidecar_path(path);
    let text = std::fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let dims: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(hdr.display().to_string(), e.to_string()))?;
    let [width, height] = dims[..] else {
        return Err(Error::parse(hdr.display().to_string(), "expected `width height`"));
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Frame::from_planar(width, height, &bytes)
}

pub fn write_raw_planar(frame: &Frame, path: &Path) -> Result<()> {
    std::fs::write(path, frame.to_planar()).map_err(|e| Error::io(path, e))?;
    let hdr = sidecar_path(path);
    std::fs::write(&hdr, format!("{} {}\n", frame.width, frame.height)).map_err(|e| Error::io(&hdr, e))
}

/// A dense real-valued single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Box-filter downscale by an integer-free factor `scale < 1`; each output
    /// pixel averages the source pixels whose centers fall inside it.
    pub fn downscale(&self, scale: f64) -> Plane {
        let w = ((self.width as f64 * scale).round() as usize).max(1);
        let h = ((self.height as f64 * scale).round() as usize).max(1);
        let mut sum = vec![0.0; w * h];
        let mut cnt = vec![0u32; w * h];
        for y in 0..self.height {
            let oy = (((y as f64 + 0.5) * scale) as usize).min(h - 1);
            for x in 0..self.width {
                let ox = (((x as f64 + 0.5) * scale) as usize).min(w - 1);
                sum[oy * w + ox] += self.at(x, y);
                cnt[oy * w + ox] += 1;
            }
        }
        let data = sum
            .into_iter()
            .zip(cnt)
            .map(|(s, c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        Plane::new(w, h, data)
    }
}

/// Per-pixel `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(f: &Frame) -> Plane {
    let data = f
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    Plane::new(f.width, f.height, data)
}

/// Sobel gradient magnitude and orientation. Orientation is the gradient
/// direction folded into `[0, pi)`; the one-pixel border has zero magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

#[inline]
fn fold_pi(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Smallest angle between two undirected orientations, in `[0, pi/2]`.
#[inline]
pub fn orientation_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

pub fn compute_gradients(luma: &Plane) -> GradientField {
    let (w, h) = (luma.width, luma.height);
    let mut magnitude = vec![0.0; w * h];
    let mut orientation = vec![0.0; w * h];
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            let up = &luma.data[(y - 1) * w..y * w];
            let mid = &luma.data[y * w..(y + 1) * w];
            let dn = &luma.data[(y + 1) * w..(y + 2) * w];
            for x in 1..w - 1 {
                let gx = (up[x + 1] + 2.0 * mid[x + 1] + dn[x + 1]) - (up[x - 1] + 2.0 * mid[x - 1] + dn[x - 1]);
                let gy = (dn[x - 1] + 2.0 * dn[x] + dn[x + 1]) - (up[x - 1] + 2.0 * up[x] + up[x + 1]);
                let i = y * w + x;
                magnitude[i] = gx.hypot(gy);
                orientation[i] = if magnitude[i] > 0.0 { fold_pi(gy.atan2(gx)) } else { 0.0 };
            }
        }
    }
    GradientField {
        width: w,
        height: h,
        magnitude,
        orientation,
    }
}

/// One retained edge pixel. `orientation` is the direction of the edge
/// itself (the tangent, perpendicular to the gradient), in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePixel {
    pub x: u32,
    pub y: u32,
    pub magnitude: f64,
    pub orientation: f64,
}

impl EdgePixel {
    /// Gradient direction recovered from the stored tangent.
    #[inline]
    pub fn gradient_direction(&self) -> f64 {
        fold_pi(self.orientation - PI / 2.0)
    }
}

/// Sparse thin-edge map in raster order, magnitudes normalized to the frame maximum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<EdgePixel>,
}

impl EdgeMap {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Shifts every pixel by a non-negative integer offset, growing the extent.
    pub fn translated(&self, dx: u32, dy: u32) -> EdgeMap {
        EdgeMap {
            width: self.width + dx as usize,
            height: self.height + dy as usize,
            pixels: self
                .pixels
                .iter()
                .map(|p| EdgePixel {
                    x: p.x + dx,
                    y: p.y + dy,
                    ..*p
                })
                .collect(),
        }
    }
}

/// Neighbor offset along a gradient direction quantized to 45 degrees.
#[inline]
fn gradient_step(theta: f64) -> (isize, isize) {
    // theta in [0, pi); image y points down, so positive theta turns toward +y.
    let sector = ((theta + PI / 8.0) / (PI / 4.0)).floor() as i32 % 4;
    match sector {
        0 => (1, 0),
        1 => (1, 1),
        2 => (0, 1),
        _ => (-1, 1),
    }
}

/// Suppression test shared by extraction and re-thinning: strictly greater
/// than the backward neighbor, at least the forward one. The asymmetry keeps
/// exactly one pixel of a plateau pair.
#[inline]
fn is_local_max(mag: &[f64], w: usize, h: usize, x: usize, y: usize, theta: f64) -> bool {
    let (dx, dy) = gradient_step(theta);
    let m = mag[y * w + x];
    let sample = |sx: isize, sy: isize| -> f64 {
        if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
            0.0
        } else {
            mag[sy as usize * w + sx as usize]
        }
    };
    let fwd = sample(x as isize + dx, y as isize + dy);
    let back = sample(x as isize - dx, y as isize - dy);
    m > back && m >= fwd
}

/// Non-maximal suppression along the gradient followed by a threshold on the
/// magnitude normalized by its frame maximum.
pub fn extract_edges(g: &GradientField, mag_threshold: f64) -> EdgeMap {
    let (w, h) = (g.width, g.height);
    let max = g.magnitude.iter().copied().fold(0.0, f64::max);
    let mut pixels = Vec::new();
    if max > 0.0 {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let norm = g.magnitude[i] / max;
                if norm <= mag_threshold {
                    continue;
                }
                if is_local_max(&g.magnitude, w, h, x, y, g.orientation[i]) {
                    pixels.push(EdgePixel {
                        x: x as u32,
                        y: y as u32,
                        magnitude: norm,
                        orientation: fold_pi(g.orientation[i] + PI / 2.0),
                    });
                }
            }
        }
    }
    EdgeMap {
        width: w,
        height: h,
        pixels,
    }
}

/// Re-applies non-maximal suppression to an edge map, treating absent pixels
/// as zero magnitude. Already-thin maps come back unchanged.
pub fn thin_edges(e: &EdgeMap) -> EdgeMap {
    let (w, h) = (e.width, e.height);
    let mut mag = vec![0.0; w * h];
    for p in &e.pixels {
        mag[p.y as usize * w + p.x as usize] = p.magnitude;
    }
    let pixels = e
        .pixels
        .iter()
        .filter(|p| is_local_max(&mag, w, h, p.x as usize, p.y as usize, p.gradient_direction()))
        .copied()
        .collect();
    EdgeMap {
        width: w,
        height: h,
        pixels,
    }
}

/// Edge map of a frame, downscaled first when its longer side exceeds
/// `max_side`. Returns the map and the scale factor applied (1.0 if none).
pub fn frame_edges(frame: &Frame, mag_threshold: f64, max_side: usize) -> (EdgeMap, f64) {
    let luma = to_grayscale(frame);
    let longest = frame.width.max(frame.height);
    let (plane, scale) = if max_side > 0 && longest > max_side {
        let s = max_side as f64 / longest as f64;
        (luma.downscale(s), s)
    } else {
        (luma, 1.0)
    };
    (extract_edges(&compute_gradients(&plane), mag_threshold), scale)
}
