use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::Frame;

/// Image subfolder name in the OTB layout.
pub const IMAGE_DIR: &str = "img";
/// Ground-truth file names tried in order.
pub const GT_FILES: [&str; 2] = ["groundtruth_rect.txt", "groundtruth.txt"];

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "rgb"];

#[derive(Debug, Clone)]
pub enum FrameSource {
    File(PathBuf),
    Memory(Arc<Frame>),
}

impl FrameSource {
    pub fn load(&self) -> Result<Arc<Frame>> {
        match self {
            FrameSource::File(p) => Frame::load(p).map(Arc::new),
            FrameSource::Memory(f) => Ok(Arc::clone(f)),
        }
    }
}

/// An ordered list of frames with optional per-frame ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<FrameSource>,
    /// One entry per frame when present; `None` entries mark frames without
    /// a usable annotation.
    pub ground_truth: Option<Vec<Option<BoundingBox>>>,
}

impl Sequence {
    pub fn in_memory(name: impl Into<String>, frames: Vec<Frame>, gt: Vec<BoundingBox>) -> Self {
        Self {
            name: name.into(),
            frames: frames.into_iter().map(|f| FrameSource::Memory(Arc::new(f))).collect(),
            ground_truth: Some(gt.into_iter().map(Some).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn gt(&self, i: usize) -> Option<BoundingBox> {
        self.ground_truth.as_ref().and_then(|g| g.get(i).copied().flatten())
    }

    pub fn load_frames(&self) -> Result<Vec<Arc<Frame>>> {
        self.frames.iter().map(FrameSource::load).collect()
    }
}

/// Parses one ground-truth line: four numbers separated by commas and/or
/// whitespace, with a 1-based pixel origin. Lines with non-finite values or
/// non-positive extent yield `None`.
pub fn parse_gt_line(line: &str, one_based: bool) -> Result<Option<BoundingBox>> {
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(Error::parse(line, format!("expected 4 fields, found {}", fields.len())));
    }
    let mut v = [0.0; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse::<f64>().map_err(|e| Error::parse(line, e.to_string()))?;
    }
    let shift = if one_based { 1.0 } else { 0.0 };
    Ok(BoundingBox::try_new(v[0] - shift, v[1] - shift, v[2], v[3]))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_gt_line(l, true).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(format!("{}:{}", path.display(), i + 1), message),
                other => other,
            })
        })
        .collect()
}

/// Writes boxes one per line as `x,y,w,h`, adding 1 to `x`/`y` when
/// `one_based`. Absent boxes are written as `NaN,NaN,NaN,NaN`.
pub fn write_boxes(path: &Path, boxes: &[Option<BoundingBox>], one_based: bool) -> Result<()> {
    let shift = if one_based { 1.0 } else { 0.0 };
    let mut out = String::new();
    for b in boxes {
        match b {
            Some(b) => out.push_str(&format!("{},{},{},{}\n", b.x + shift, b.y + shift, b.w, b.h)),
            None => out.push_str("NaN,NaN,NaN,NaN\n"),
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trajectory files use the tracker's own 0-based coordinates.
pub fn read_trajectory(path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_gt_line(l, false))
        .collect()
}

pub fn write_trajectory(path: &Path, boxes: &[BoundingBox]) -> Result<()> {
    let opt: Vec<_> = boxes.iter().copied().map(Some).collect();
    write_boxes(path, &opt, false)
}

fn find_gt_file(dir: &Path) -> Option<PathBuf> {
    GT_FILES.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads an OTB-style directory: numbered images under `img/` (or directly
/// in the directory) and a ground-truth file. `gt_override` replaces the
/// ground-truth lookup.
pub fn load_sequence_with(dir: &Path, gt_override: Option<&Path>) -> Result<Sequence> {
    let img_dir = dir.join(IMAGE_DIR);
    let img_dir = if img_dir.is_dir() { img_dir } else { dir.to_path_buf() };
    let images = list_images(&img_dir)?;
    if images.is_empty() {
        return Err(Error::EmptySequence);
    }
    let gt_path = gt_override.map(Path::to_path_buf).or_else(|| find_gt_file(dir));
    let ground_truth = match gt_path {
        Some(p) => {
            let gt = read_ground_truth(&p)?;
            if gt.len() != images.len() {
                return Err(Error::CountMismatch {
                    path: p,
                    frames: images.len(),
                    boxes: gt.len(),
                });
            }
            Some(gt)
        }
        None => None,
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Ok(Sequence {
        name,
        frames: images.into_iter().map(FrameSource::File).collect(),
        ground_truth,
    })
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    load_sequence_with(dir, None)
}

/// Writes a sequence in the OTB layout: `img/0001.png`, ... and
/// `groundtruth_rect.txt` with a 1-based origin.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let img_dir = dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let digits = seq.len().to_string().len().max(4);
    for (i, src) in seq.frames.iter().enumerate() {
        let frame = src.load()?;
        frame.save(&img_dir.join(format!("{:0digits$}.png", i + 1)))?;
    }
    if let Some(gt) = &seq.ground_truth {
        write_boxes(&dir.join(GT_FILES[0]), gt, true)?;
    }
    Ok(())
}

/// Keeps frames `0, stride, 2*stride, ...` with their ground truth.
pub fn subsample(s: &Sequence, stride: usize) -> Sequence {
    assert!(stride >= 1, "stride must be at least 1");
    Sequence {
        name: format!("{}+{}", s.name, stride),
        frames: s.frames.iter().step_by(stride).cloned().collect(),
        ground_truth: s
            .ground_truth
            .as_ref()
            .map(|g| g.iter().step_by(stride).copied().collect()),
    }
}
