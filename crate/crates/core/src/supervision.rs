//! Boundary-masked flow reconstruction loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, FlowField, Grid, ScalarField};
use crate::scalar::Scalar;

/// Per-pixel `M(p) · ‖o(p) − ô(p)‖²`; exactly zero wherever the mask is off.
pub type LossMap<S> = ScalarField<S>;

/// How a loss map collapses to the single number used for ranking frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over masked pixels divided by their count.
    #[default]
    MeanMasked,
    Sum,
}

impl std::str::FromStr for Reduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean_masked" => Ok(Reduction::MeanMasked),
            "sum" => Ok(Reduction::Sum),
            other => Err(Error::config(format!("unknown reduction `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLoss<S> {
    pub frame_index: usize,
    pub total: S,
    pub masked_pixel_count: usize,
    pub mean_masked: S,
    pub reduction: Reduction,
}

impl<S: Scalar> FrameLoss<S> {
    /// The scalar used for ranking, per `reduction`.
    pub fn value(&self) -> S {
        match self.reduction {
            Reduction::MeanMasked => self.mean_masked,
            Reduction::Sum => self.total,
        }
    }

    /// The frame had no supervised pixels at all.
    pub fn is_empty_mask(&self) -> bool {
        self.masked_pixel_count == 0
    }

    /// Builds a loss record directly from a ranking value, as when scores come from a file.
    pub fn from_value(frame_index: usize, value: S, masked_pixel_count: usize) -> Self {
        let (total, mean) = if masked_pixel_count == 0 {
            (S::zero(), S::zero())
        } else {
            (value, value)
        };
        FrameLoss {
            frame_index,
            total,
            masked_pixel_count,
            mean_masked: mean,
            reduction: Reduction::MeanMasked,
        }
    }
}

pub fn masked_loss_map<S: Scalar>(
    target: &FlowField<S>,
    predicted: &FlowField<S>,
    mask: &BoundaryMask,
) -> Result<LossMap<S>> {
    target.require_shape(predicted, "predicted flow")?;
    target.require_shape(mask, "boundary mask")?;
    let values = target
        .iter()
        .zip(predicted.iter())
        .zip(mask.iter())
        .map(|((o, p), &m)| if m { o.dist_sq(p) } else { S::zero() })
        .collect();
    Grid::new(target.shape(), values)
}

pub fn frame_loss<S: Scalar>(
    frame_index: usize,
    map: &LossMap<S>,
    mask: &BoundaryMask,
    reduction: Reduction,
) -> Result<FrameLoss<S>> {
    map.require_shape(mask, "boundary mask")?;
    let mut total = S::zero();
    let mut count = 0usize;
    for (&l, &m) in map.iter().zip(mask.iter()) {
        if m {
            total = total + l;
            count += 1;
        }
    }
    let mean_masked = if count == 0 {
        S::zero()
    } else {
        total / S::of(count as f64)
    };
    Ok(FrameLoss {
        frame_index,
        total,
        masked_pixel_count: count,
        mean_masked,
        reduction,
    })
}
