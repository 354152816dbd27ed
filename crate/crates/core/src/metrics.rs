//! Intersection-over-union on foreground masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, Grid, LabelGrid};

/// Largest label count accepted by [`match_labels`] (2^(K−1) subsets are tried).
pub const MAX_MATCH_LABELS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyFramePolicy {
    /// A frame where prediction and ground truth are both empty scores 1.
    #[default]
    CountAsOne,
    /// Such frames are left out of the mean.
    Skip,
}

impl std::str::FromStr for EmptyFramePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "count_as_one" => Ok(EmptyFramePolicy::CountAsOne),
            "skip" => Ok(EmptyFramePolicy::Skip),
            other => Err(Error::config(format!("unknown empty-frame policy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    /// One entry per frame; `None` for frames skipped under the policy.
    pub per_frame: Vec<Option<f64>>,
    pub mean: f64,
    pub empty_frame_policy: EmptyFramePolicy,
}

fn counts(pred: &BoundaryMask, gt: &BoundaryMask) -> Result<(usize, usize)> {
    gt.require_shape(pred, "predicted mask")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt.iter()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok((inter, union))
}

/// `|pred ∧ gt| / |pred ∨ gt|`, or `None` when both masks are empty.
pub fn iou_checked(pred: &BoundaryMask, gt: &BoundaryMask) -> Result<Option<f64>> {
    let (inter, union) = counts(pred, gt)?;
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// IoU with both-empty scored as 1.
pub fn iou(pred: &BoundaryMask, gt: &BoundaryMask) -> Result<f64> {
    Ok(iou_checked(pred, gt)?.unwrap_or(1.0))
}

pub fn miou(preds: &[BoundaryMask], gts: &[BoundaryMask], policy: EmptyFramePolicy) -> Result<IoUReport> {
    if preds.len() != gts.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    let per_frame = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            let v = iou_checked(p, g)?;
            Ok(match policy {
                EmptyFramePolicy::CountAsOne => Some(v.unwrap_or(1.0)),
                EmptyFramePolicy::Skip => v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<f64> = per_frame.iter().flatten().copied().collect();
    // Nothing scoreable means nothing was missed.
    let mean = if scored.is_empty() {
        1.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(IoUReport {
        per_frame,
        mean,
        empty_frame_policy: policy,
    })
}

/// Foreground mask built from the subset of non-background labels that best matches `gt`.
///
/// All `2^(K−1)` subsets of `{1..K−1}` are tried; ties keep the earliest subset in
/// bitmask order, so an empty `gt` yields the empty mask.
pub fn match_labels(pred: &LabelGrid, gt: &BoundaryMask, k: usize) -> Result<BoundaryMask> {
    if !(1..=MAX_MATCH_LABELS).contains(&k) {
        return Err(Error::config(format!(
            "label matching supports 1..={MAX_MATCH_LABELS} labels, got {k}"
        )));
    }
    gt.require_shape(pred, "label grid")?;
    if let Some(&bad) = pred.iter().find(|&&l| l as usize >= k) {
        return Err(Error::domain(format!("label {bad} out of range for K = {k}")));
    }

    // Per-label pixel and overlap counts make each subset O(K).
    let mut size = vec![0usize; k];
    let mut hit = vec![0usize; k];
    for (&l, &g) in pred.iter().zip(gt.iter()) {
        size[l as usize] += 1;
        hit[l as usize] += g as usize;
    }
    let gt_count = gt.count_ones();

    let mut best = (0u32, -1.0f64);
    for subset in 0u32..(1 << (k - 1)) {
        let (mut inter, mut area) = (0usize, 0usize);
        for label in 1..k {
            if subset & (1 << (label - 1)) != 0 {
                inter += hit[label];
                area += size[label];
            }
        }
        let union = area + gt_count - inter;
        let score = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        if score > best.1 {
            best = (subset, score);
        }
    }
    let chosen = best.0;
    Grid::new(
        pred.shape(),
        pred.iter()
            .map(|&l| l > 0 && chosen & (1 << (l - 1)) != 0)
            .collect(),
    )
}

/// Foreground mask of a single label.
pub fn label_mask(pred: &LabelGrid, label: u32) -> BoundaryMask {
    Grid::from_raw(pred.shape(), pred.iter().map(|&l| l == label).collect())
}
