//! Motion-boundary extraction from a dense flow field.
//!
//! The pipeline is flow → per-pixel direction θ → directional difference δ
//! (largest angular gap to a 4-neighbour) → threshold `δ > α` → square
//! dilation. The dilated mask marks where the flow is trusted as supervision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, FlowField, Grid, ScalarField, Shape};
use crate::scalar::Scalar;

/// How the gap between two directions is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleMetric {
    /// Circular distance `min(|Δ|, 2π − |Δ|)`, in `[0, π]`.
    #[default]
    Wrapped,
    /// Raw `|Δ|`, in `[0, 2π)`. Flags directions straddling ±π as boundaries.
    Literal,
}

impl std::str::FromStr for AngleMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wrapped" => Ok(AngleMetric::Wrapped),
            "literal" => Ok(AngleMetric::Literal),
            other => Err(Error::config(format!("unknown angle metric `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig<S> {
    /// Threshold on δ in radians, `0 < alpha ≤ π`.
    pub alpha: S,
    /// Side length of the square dilation kernel; odd.
    pub kernel_size: usize,
    pub angle_metric: AngleMetric,
}

impl<S: Scalar> Default for BoundaryConfig<S> {
    /// α = π/12, 7×7 kernel, wrapped angles.
    fn default() -> Self {
        BoundaryConfig {
            alpha: S::PI() / S::of(12.0),
            kernel_size: 7,
            angle_metric: AngleMetric::Wrapped,
        }
    }
}

impl<S: Scalar> BoundaryConfig<S> {
    /// α = π/3 with a 7×7 kernel, the best-scoring setting of the threshold/kernel sweep.
    pub fn sweep_best() -> Self {
        BoundaryConfig {
            alpha: S::FRAC_PI_3(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > S::zero() && self.alpha <= S::PI()) {
            return Err(Error::config(format!("alpha {} must lie in (0, pi]", self.alpha)));
        }
        check_kernel(self.kernel_size)
    }
}

fn check_kernel(kernel_size: usize) -> Result<()> {
    if kernel_size.is_multiple_of(2) {
        return Err(Error::config(format!(
            "kernel_size {kernel_size} must be an odd positive integer"
        )));
    }
    Ok(())
}

/// Direction field plus the set of pixels that carry no motion at all.
#[derive(Clone, Debug, PartialEq)]
pub struct Angles<S> {
    pub theta: ScalarField<S>,
    /// Pixels whose flow vector is exactly zero; their θ is reported as 0.
    pub zero_motion: BoundaryMask,
}

/// θ = atan2(x, y) per pixel, normalized to (−π, π].
///
/// Note the argument order: the horizontal component comes first, so
/// `(0, 1)` maps to 0 and `(1, 0)` to π/2.
pub fn flow_to_angles<S: Scalar>(field: &FlowField<S>) -> Angles<S> {
    let shape = field.shape();
    let mut theta = Vec::with_capacity(shape.len());
    let mut zero = Vec::with_capacity(shape.len());
    for v in field.iter() {
        if v.is_zero() {
            theta.push(S::zero());
            zero.push(true);
        } else {
            let a = v.x.atan2(v.y);
            theta.push(if a <= -S::PI() { S::PI() } else { a });
            zero.push(false);
        }
    }
    Angles {
        theta: Grid::from_raw(shape, theta),
        zero_motion: Grid::from_raw(shape, zero),
    }
}

#[inline]
pub fn angle_gap<S: Scalar>(a: S, b: S, metric: AngleMetric) -> S {
    let d = (a - b).abs();
    match metric {
        AngleMetric::Literal => d,
        AngleMetric::Wrapped => d.min(S::two_pi() - d),
    }
}

/// δ per pixel: the largest angular gap to any in-bounds 4-neighbour (0 when there are none).
pub fn directional_difference<S: Scalar>(
    angles: &ScalarField<S>,
    metric: AngleMetric,
) -> ScalarField<S> {
    let Shape { height, width } = angles.shape();
    let t = angles.as_slice();
    let mut out = vec![S::zero(); t.len()];
    // Each horizontal and vertical edge is visited once and credited to both ends.
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                let g = angle_gap(t[i], t[i + 1], metric);
                out[i] = out[i].max(g);
                out[i + 1] = out[i + 1].max(g);
            }
            if r + 1 < height {
                let g = angle_gap(t[i], t[i + width], metric);
                out[i] = out[i].max(g);
                out[i + width] = out[i + width].max(g);
            }
        }
    }
    Grid::from_raw(angles.shape(), out)
}

/// Strict threshold: a pixel is set iff `δ > alpha`.
pub fn threshold_mask<S: Scalar>(diff: &ScalarField<S>, alpha: S) -> BoundaryMask {
    Grid::from_raw(diff.shape(), diff.iter().map(|&d| d > alpha).collect())
}

/// Binary dilation by a `kernel_size`×`kernel_size` square, clipped at the borders.
pub fn dilate(mask: &BoundaryMask, kernel_size: usize) -> Result<BoundaryMask> {
    check_kernel(kernel_size)?;
    let radius = kernel_size / 2;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let Shape { height, width } = mask.shape();
    let src = mask.as_slice();

    // The square element is separable: a row pass followed by a column pass.
    let mut rows = vec![false; src.len()];
    for r in 0..height {
        let line = &src[r * width..(r + 1) * width];
        dilate_line(line, radius, |c, v| rows[r * width + c] = v);
    }
    let mut out = vec![false; src.len()];
    let mut column = vec![false; height];
    for c in 0..width {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = rows[r * width + c];
        }
        dilate_line(&column, radius, |r, v| out[r * width + c] = v);
    }
    Ok(Grid::from_raw(mask.shape(), out))
}

/// 1-D max filter over a bit line using the distance to the last set bit on each side.
fn dilate_line(line: &[bool], radius: usize, mut put: impl FnMut(usize, bool)) {
    let n = line.len();
    let mut last_set: Option<usize> = None;
    let mut left = vec![false; n];
    for i in 0..n {
        if line[i] {
            last_set = Some(i);
        }
        left[i] = last_set.is_some_and(|j| i - j <= radius);
    }
    let mut next_set: Option<usize> = None;
    for i in (0..n).rev() {
        if line[i] {
            next_set = Some(i);
        }
        let right = next_set.is_some_and(|j| j - i <= radius);
        put(i, left[i] || right);
    }
}

/// Every intermediate of the boundary pipeline, for inspection and dumps.
#[derive(Clone, Debug)]
pub struct BoundaryStages<S> {
    pub angles: Angles<S>,
    pub diff: ScalarField<S>,
    pub seeds: BoundaryMask,
    pub mask: BoundaryMask,
}

pub fn boundary_stages<S: Scalar>(
    field: &FlowField<S>,
    cfg: &BoundaryConfig<S>,
) -> Result<BoundaryStages<S>> {
    cfg.validate()?;
    let angles = flow_to_angles(field);
    let diff = directional_difference(&angles.theta, cfg.angle_metric);
    let seeds = threshold_mask(&diff, cfg.alpha);
    let mask = dilate(&seeds, cfg.kernel_size)?;
    Ok(BoundaryStages {
        angles,
        diff,
        seeds,
        mask,
    })
}

/// `dilate(threshold_mask(directional_difference(flow_to_angles(field)), α), kernel_size)`.
pub fn extract_boundary_mask<S: Scalar>(
    field: &FlowField<S>,
    cfg: &BoundaryConfig<S>,
) -> Result<BoundaryMask> {
    boundary_stages(field, cfg).map(|s| s.mask)
}
