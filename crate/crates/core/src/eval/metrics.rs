use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou, BoundingBox};

/// Largest center-distance threshold on the precision plot, in pixels.
pub const PRECISION_MAX_PX: usize = 50;
/// Overlap thresholds 0, 0.05, ..., 1.0.
pub const SUCCESS_STEPS: usize = 20;

pub fn precision_thresholds() -> impl Iterator<Item = f64> {
    (0..=PRECISION_MAX_PX).map(|t| t as f64)
}

pub fn success_thresholds() -> impl Iterator<Item = f64> {
    (0..=SUCCESS_STEPS).map(|i| i as f64 / SUCCESS_STEPS as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionCurve {
    /// Fraction of frames with center distance `<= t` for `t = 0..=50`.
    pub values: Vec<f64>,
    pub score_20: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCurve {
    /// Fraction of frames with IoU strictly above each of the 21 thresholds.
    pub values: Vec<f64>,
    pub auc: f64,
}

/// Per-frame center distances on frames with ground truth; frames with a
/// missing prediction count as infinitely far.
pub fn center_distances(pred: &[Option<BoundingBox>], gt: &[Option<BoundingBox>]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| g.is_some())
        .map(|(p, g)| p.map_or(f64::INFINITY, |p| center_distance(&p, &g.unwrap())))
        .collect())
}

/// Per-frame IoU on frames with ground truth; missing predictions score 0.
pub fn overlaps(pred: &[Option<BoundingBox>], gt: &[Option<BoundingBox>]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| g.is_some())
        .map(|(p, g)| p.map_or(0.0, |p| iou(&p, &g.unwrap())))
        .collect())
}

pub fn precision_from_distances(distances: &[f64]) -> Result<PrecisionCurve> {
    if distances.is_empty() {
        return Err(Error::NothingToEvaluate);
    }
    let n = distances.len() as f64;
    let values: Vec<f64> = precision_thresholds()
        .map(|t| distances.iter().filter(|&&d| d <= t).count() as f64 / n)
        .collect();
    Ok(PrecisionCurve {
        score_20: values[20],
        values,
    })
}

pub fn success_from_overlaps(ious: &[f64]) -> Result<SuccessCurve> {
    if ious.is_empty() {
        return Err(Error::NothingToEvaluate);
    }
    let n = ious.len() as f64;
    let values: Vec<f64> = success_thresholds()
        .map(|t| ious.iter().filter(|&&o| o > t).count() as f64 / n)
        .collect();
    let auc = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SuccessCurve { values, auc })
}

pub fn precision_curve(pred: &[Option<BoundingBox>], gt: &[Option<BoundingBox>]) -> Result<PrecisionCurve> {
    precision_from_distances(&center_distances(pred, gt)?)
}

pub fn success_curve(pred: &[Option<BoundingBox>], gt: &[Option<BoundingBox>]) -> Result<SuccessCurve> {
    success_from_overlaps(&overlaps(pred, gt)?)
}

/// One-pass evaluation summary for a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub precision: Vec<f64>,
    pub success: Vec<f64>,
    pub auc: f64,
    pub precision_score_20: f64,
    pub fps: f64,
}

impl MetricReport {
    pub fn compute(name: impl Into<String>, pred: &[Option<BoundingBox>], gt: &[Option<BoundingBox>], fps: f64) -> Result<Self> {
        let p = precision_curve(pred, gt)?;
        let s = success_curve(pred, gt)?;
        Ok(Self {
            name: name.into(),
            precision: p.values,
            success: s.values,
            auc: s.auc,
            precision_score_20: p.score_20,
            fps,
        })
    }

    pub fn from_boxes(name: impl Into<String>, pred: &[BoundingBox], gt: &[Option<BoundingBox>], fps: f64) -> Result<Self> {
        let pred: Vec<_> = pred.iter().copied().map(Some).collect();
        Self::compute(name, &pred, gt, fps)
    }

    /// Corpus summary: the arithmetic mean of each per-sequence quantity.
    pub fn mean(name: impl Into<String>, reports: &[MetricReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::NothingToEvaluate);
        }
        let n = reports.len() as f64;
        let avg_vec = |f: fn(&MetricReport) -> &Vec<f64>| -> Vec<f64> {
            let len = f(&reports[0]).len();
            (0..len).map(|i| reports.iter().map(|r| f(r)[i]).sum::<f64>() / n).collect()
        };
        Ok(Self {
            name: name.into(),
            precision: avg_vec(|r| &r.precision),
            success: avg_vec(|r| &r.success),
            auc: reports.iter().map(|r| r.auc).sum::<f64>() / n,
            precision_score_20: reports.iter().map(|r| r.precision_score_20).sum::<f64>() / n,
            fps: reports.iter().map(|r| r.fps).sum::<f64>() / n,
        })
    }

    pub fn summary_line(&self) -> String {
        format!("{},{},{},{}", self.name, self.auc, self.precision_score_20, self.fps)
    }
}
