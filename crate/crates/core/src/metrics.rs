//! Region similarity J, contour accuracy F and their mean.
//!
//! Scores are computed per frame, averaged over a clip's frames, then
//! averaged over clips. A frame where both masks are empty scores 1 for J
//! and F; a frame where exactly one is empty scores 0.
//!
//! Boundary pixels are foreground pixels with at least one background
//! 4-neighbour, counting everything outside the grid as background. A
//! boundary pixel is matched when a boundary pixel of the other mask lies
//! within `tolerance` pixels in Chebyshev distance.

use serde::{Deserialize, Serialize};

use crate::mask::{Mask, MaskSequence};
use crate::model::Subset;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no scored clips in subset {0}")]
    EmptySubset(String),
}

fn check_shapes(pred: &MaskSequence, gt: &MaskSequence) -> Result<(), MetricError> {
    pred.check_aligned(gt)
        .map_err(|e| MetricError::Shape(e.to_string()))
}

pub fn frame_jaccard(pred: &Mask, gt: &Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// Mean per-frame intersection over union.
pub fn jaccard(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    Ok(mean(
        pred.masks()
            .iter()
            .zip(gt.masks())
            .map(|(p, g)| frame_jaccard(p, g)),
    ))
}

/// Foreground pixels touching the background (or the grid edge) through a
/// 4-neighbour.
pub fn boundary(mask: &Mask) -> Mask {
    let (h, w) = mask.dims();
    Mask::from_fn(h, w, |r, c| {
        mask.get(r, c)
            && (r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1))
    })
}

/// Any-set over a sliding window of half-width `radius` along one axis.
fn dilate_line(line: &[bool], radius: usize, out: &mut [bool]) {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &b) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as usize;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        *o = prefix[hi] > prefix[lo];
    }
}

/// Dilation by a `(2r+1) x (2r+1)` square, i.e. all pixels within
/// Chebyshev distance `radius` of a set pixel. Done as a row pass followed
/// by a column pass.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.dims();
    if radius == 0 || h == 0 || w == 0 {
        return mask.clone();
    }
    let bits = mask.bits();
    let mut rows = vec![false; h * w];
    for r in 0..h {
        dilate_line(&bits[r * w..(r + 1) * w], radius, &mut rows[r * w..(r + 1) * w]);
    }
    let mut out = vec![false; h * w];
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = rows[r * w + c];
        }
        dilate_line(&col, radius, &mut col_out);
        for r in 0..h {
            out[r * w + c] = col_out[r];
        }
    }
    Mask::from_bits(h, w, out).expect("same shape")
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn matched_fraction(of: &Mask, within: &Mask) -> f64 {
    let total = of.area();
    let hit = of
        .bits()
        .iter()
        .zip(within.bits())
        .filter(|(&a, &b)| a && b)
        .count();
    hit as f64 / total as f64
}

pub fn frame_boundary_f(pred: &Mask, gt: &Mask, tolerance: usize) -> f64 {
    let pb = boundary(pred);
    let gb = boundary(gt);
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let precision = matched_fraction(&pb, &dilate(&gb, tolerance));
            let recall = matched_fraction(&gb, &dilate(&pb, tolerance));
            harmonic(precision, recall)
        }
    }
}

pub fn boundary_f(pred: &MaskSequence, gt: &MaskSequence, tolerance: usize) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    Ok(mean(
        pred.masks()
            .iter()
            .zip(gt.masks())
            .map(|(p, g)| frame_boundary_f(p, g, tolerance)),
    ))
}

/// Pixel-level F: precision `|P∩G|/|P|`, recall `|P∩G|/|G|`.
pub fn frame_region_f(pred: &Mask, gt: &Mask) -> f64 {
    let (p, g) = (pred.area(), gt.area());
    match (p, g) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let inter = pred
                .bits()
                .iter()
                .zip(gt.bits())
                .filter(|(&a, &b)| a && b)
                .count() as f64;
            harmonic(inter / p as f64, inter / g as f64)
        }
    }
}

pub fn region_f(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    Ok(mean(
        pred.masks()
            .iter()
            .zip(gt.masks())
            .map(|(p, g)| frame_region_f(p, g)),
    ))
}

pub fn jf(j: f64, f: f64) -> f64 {
    (j + f) / 2.0
}

/// Boundary tolerance used when none is configured: 1% of the frame
/// diagonal, at least one pixel.
pub fn default_tolerance((height, width): (usize, usize)) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    ((0.01 * diag).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    #[default]
    Boundary,
    Region,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub f_mode: FMode,
    /// Boundary tolerance in pixels; derived from the frame size when unset.
    pub tolerance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

impl ClipScore {
    pub fn new(clip_id: impl Into<String>, j: f64, f: f64) -> Self {
        Self {
            clip_id: clip_id.into(),
            j,
            f,
            jf: jf(j, f),
        }
    }
}

pub fn score_clip(
    pred: &MaskSequence,
    gt: &MaskSequence,
    config: &MetricsConfig,
) -> Result<ClipScore, MetricError> {
    let j = jaccard(pred, gt)?;
    let f = match config.f_mode {
        FMode::Boundary => {
            let tol = config.tolerance.unwrap_or_else(|| default_tolerance(gt.dims()));
            boundary_f(pred, gt, tol)?
        }
        FMode::Region => region_f(pred, gt)?,
    };
    Ok(ClipScore::new(gt.clip_id(), j, f))
}

/// Rounds a fraction to a percentage with one decimal, halves away from
/// zero. Float noise below 1e-6 of a tenth is removed first so that a
/// value like 0.6915 reports 69.2.
pub fn percent(fraction: f64) -> f64 {
    let tenths = fraction * 1000.0;
    let snapped = (tenths * 1e6).round() / 1e6;
    snapped.round() / 10.0
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}", percent(fraction))
}

/// Means over one group of clips, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subset: String,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    pub clips: usize,
}

impl SubsetReport {
    pub fn from_scores<'a>(
        subset: &str,
        scores: impl IntoIterator<Item = &'a ClipScore>,
    ) -> Result<Self, MetricError> {
        let scores: Vec<_> = scores.into_iter().collect();
        if scores.is_empty() {
            return Err(MetricError::EmptySubset(subset.to_string()));
        }
        let n = scores.len() as f64;
        Ok(Self {
            subset: subset.to_string(),
            j: scores.iter().map(|s| s.j).sum::<f64>() / n,
            f: scores.iter().map(|s| s.f).sum::<f64>() / n,
            jf: scores.iter().map(|s| s.jf).sum::<f64>() / n,
            clips: scores.len(),
        })
    }

    /// `J F J&F` as percentages with one decimal.
    pub fn row(&self) -> String {
        format!(
            "{} {} {}",
            format_percent(self.j),
            format_percent(self.f),
            format_percent(self.jf)
        )
    }
}

pub const MIX: &str = "Mix";

/// One report per subset present (Seen, Unseen, ...) followed by Mix, the
/// clip-level mean over all of them. Null clips are left out everywhere.
/// Fails only when no clip is scored at all.
pub fn aggregate(scores: &[(ClipScore, Subset)]) -> Result<Vec<SubsetReport>, MetricError> {
    let scored: Vec<_> = scores.iter().filter(|(_, s)| s.is_scored()).collect();
    if scored.is_empty() {
        return Err(MetricError::EmptySubset(MIX.into()));
    }
    let mut out = Vec::new();
    for subset in Subset::ALL {
        let group: Vec<_> = scored
            .iter()
            .filter(|(_, s)| *s == subset)
            .map(|(c, _)| c)
            .collect();
        if !group.is_empty() {
            out.push(SubsetReport::from_scores(subset.label(), group)?);
        }
    }
    out.push(SubsetReport::from_scores(MIX, scored.iter().map(|(c, _)| c))?);
    Ok(out)
}
