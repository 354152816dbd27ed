//! Piecewise-constant flow segmentation and its training loop.
//!
//! A frame's flow is explained by `K` constant motions: every pixel takes the
//! motion of its label, `ô(p) = c[label(p)]`. Labels and motions are fit by
//! alternating minimization of the masked reconstruction loss
//! `Σ M(p)·‖o(p) − ô(p)‖²`:
//!
//! 1. assign every pixel to its nearest motion;
//! 2. refit each motion as the mean flow of its masked pixels (all of its
//!    pixels when none are masked; unchanged when it has none).
//!
//! Both steps can only lower the masked loss, so the loss sequence is
//! non-increasing. The training loop samples frame pairs in batches, scores
//! each by its fitted loss, drops the hardest and keeps the best fit per frame.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{extract_boundary_mask, BoundaryConfig};
use crate::curation::drop_hard_cases;
use crate::error::{Error, Result};
use crate::grid::{BoundaryMask, Flow, FlowField, Grid, LabelGrid};
use crate::metrics::{iou, match_labels, miou, EmptyFramePolicy, IoUReport};
use crate::sampler::{FramePair, PairFlowSource, PairSampler, RateMode, SamplerConfig};
use crate::scalar::Scalar;
use crate::seed;
use crate::supervision::{frame_loss, masked_loss_map, FrameLoss, Reduction};

/// One constant flow per segment; `centroids[k]` is the motion of label `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionModel<S> {
    pub centroids: Vec<Flow<S>>,
}

impl<S: Scalar> MotionModel<S> {
    pub fn new(centroids: Vec<Flow<S>>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::config("a motion model needs K >= 2 segments"));
        }
        if centroids.iter().any(|c| !(c.x.is_finite() && c.y.is_finite())) {
            return Err(Error::domain("motion model centroids must be finite"));
        }
        Ok(MotionModel { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    /// Number of segments `K`; label 0 is background.
    pub k: usize,
    pub max_iters: usize,
    /// Stop once an iteration lowers the loss by less than this.
    pub tolerance: S,
    pub batch_size: usize,
    pub drop_count: usize,
    /// Number of batches drawn by the training loop.
    pub batches: usize,
    pub boundary: BoundaryConfig<S>,
    pub sampler: SamplerConfig,
    /// Fraction of batches, from the start, sampled at the fixed rate `r_min`.
    pub warmup_fraction: f64,
    pub use_boundary_mask: bool,
    pub use_dropping: bool,
    pub reduction: Reduction,
    pub init_seed: u64,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            max_iters: 50,
            tolerance: S::of(1e-12),
            batch_size: 8,
            drop_count: 6,
            batches: 32,
            boundary: BoundaryConfig::default(),
            sampler: SamplerConfig::default(),
            warmup_fraction: 0.0,
            use_boundary_mask: true,
            use_dropping: true,
            reduction: Reduction::MeanMasked,
            init_seed: 0,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("K = {} must be at least 2", self.k)));
        }
        if self.max_iters < 1 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if self.batch_size < 1 || self.batches < 1 {
            return Err(Error::config("batch size and batch count must be at least 1"));
        }
        if self.use_dropping && self.drop_count >= self.batch_size {
            return Err(Error::config(format!(
                "drop count h = {} must be smaller than the batch size B = {}",
                self.drop_count, self.batch_size
            )));
        }
        if self.tolerance.is_nan() || self.tolerance < S::zero() {
            return Err(Error::config("tolerance must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup_fraction must lie in [0, 1]"));
        }
        self.boundary.validate()?;
        self.sampler.validate()
    }

    /// Rate mode used for batch `b` of `self.batches`.
    pub fn rate_mode_at(&self, b: usize) -> RateMode {
        let warmup = (self.warmup_fraction * self.batches as f64).round() as usize;
        if b < warmup {
            RateMode::Fixed
        } else {
            self.sampler.mode
        }
    }
}

/// ô(p) = centroid[label(p)].
pub fn reconstruct_flow<S: Scalar>(labels: &LabelGrid, model: &MotionModel<S>) -> Result<FlowField<S>> {
    let k = model.k();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::domain(format!("label {bad} out of range for K = {k}")));
    }
    labels.map(|&l| model.centroids[l as usize])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit<S> {
    pub labels: LabelGrid,
    pub model: MotionModel<S>,
    /// Final reduced masked loss.
    pub loss: S,
    /// Loss after initialization followed by the loss after each iteration.
    pub history: Vec<S>,
}

impl<S> Fit<S> {
    /// Number of labels that hold at least one pixel.
    pub fn segment_count(&self) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        seen.extend(self.labels.iter().copied());
        seen.len()
    }
}

struct Problem<'a, S> {
    values: &'a [Flow<S>],
    mask: Option<&'a [bool]>,
    reduction: Reduction,
}

impl<S: Scalar> Problem<'_, S> {
    fn masked(&self, i: usize) -> bool {
        self.mask.is_none_or(|m| m[i])
    }

    fn loss(&self, labels: &[u32], centroids: &[Flow<S>]) -> S {
        let mut total = S::zero();
        let mut count = 0usize;
        for (i, (v, &l)) in self.values.iter().zip(labels).enumerate() {
            if self.masked(i) {
                total = total + v.dist_sq(&centroids[l as usize]);
                count += 1;
            }
        }
        match self.reduction {
            Reduction::Sum => total,
            Reduction::MeanMasked if count == 0 => S::zero(),
            Reduction::MeanMasked => total / S::of(count as f64),
        }
    }

    /// Nearest centroid per pixel; a pixel keeps its label when that label is among the nearest.
    fn assign(&self, labels: &mut [u32], centroids: &[Flow<S>]) {
        for (v, l) in self.values.iter().zip(labels.iter_mut()) {
            let mut best = *l as usize;
            let mut best_d = v.dist_sq(&centroids[best]);
            for (k, c) in centroids.iter().enumerate() {
                let d = v.dist_sq(c);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            *l = best as u32;
        }
    }

    fn refit(&self, labels: &[u32], centroids: &mut [Flow<S>]) {
        let k = centroids.len();
        let mut masked_sum = vec![Flow::zero(); k];
        let mut masked_n = vec![0usize; k];
        let mut all_sum = vec![Flow::zero(); k];
        let mut all_n = vec![0usize; k];
        for (i, (v, &l)) in self.values.iter().zip(labels).enumerate() {
            let l = l as usize;
            all_sum[l] = all_sum[l] + *v;
            all_n[l] += 1;
            if self.masked(i) {
                masked_sum[l] = masked_sum[l] + *v;
                masked_n[l] += 1;
            }
        }
        for (c, ((ms, mn), (als, aln))) in centroids
            .iter_mut()
            .zip(masked_sum.iter().zip(&masked_n).zip(all_sum.iter().zip(&all_n)))
        {
            if *mn > 0 {
                *c = *ms * (S::one() / S::of(*mn as f64));
            } else if *aln > 0 {
                *c = *als * (S::one() / S::of(*aln as f64));
            }
        }
    }

    /// Farthest-point seeding: a random first centroid, then repeatedly the pixel
    /// farthest from every chosen centroid. Seeds come from masked pixels when any exist.
    fn init(&self, k: usize, seed: u64) -> Vec<Flow<S>> {
        let pool: Vec<usize> = match self.mask {
            Some(m) if m.iter().any(|&b| b) => (0..self.values.len()).filter(|&i| m[i]).collect(),
            _ => (0..self.values.len()).collect(),
        };
        let mut rng = seed::rng(seed);
        let first = self.values[pool[rng.random_range(0..pool.len())]];
        let mut centroids = vec![first];
        let mut nearest: Vec<S> = pool.iter().map(|&i| self.values[i].dist_sq(&first)).collect();
        while centroids.len() < k {
            let (far, _) = nearest
                .iter()
                .enumerate()
                .fold((0usize, S::neg_infinity()), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
            let c = self.values[pool[far]];
            for (d, &i) in nearest.iter_mut().zip(&pool) {
                *d = d.min(self.values[i].dist_sq(&c));
            }
            centroids.push(c);
        }
        centroids
    }
}

/// Relabels segments by decreasing pixel count so the largest becomes background (0).
fn canonicalize<S: Scalar>(labels: &mut [u32], centroids: &mut Vec<Flow<S>>) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l as usize] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut rank = vec![0u32; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new as u32;
    }
    for l in labels.iter_mut() {
        *l = rank[*l as usize];
    }
    *centroids = order.iter().map(|&old| centroids[old]).collect();
}

/// Fits labels and motions to `flow` under `mask` (all pixels when `None`).
///
/// Panics if the loss ever increases between iterations beyond rounding, which
/// would mean the alternating scheme is broken.
pub fn fit_segmentation<S: Scalar>(
    flow: &FlowField<S>,
    mask: Option<&BoundaryMask>,
    cfg: &TrainConfig<S>,
) -> Result<Fit<S>> {
    if cfg.k < 2 {
        return Err(Error::config(format!("K = {} must be at least 2", cfg.k)));
    }
    if cfg.max_iters < 1 {
        return Err(Error::config("max_iters must be at least 1"));
    }
    if let Some(m) = mask {
        flow.require_shape(m, "supervision mask")?;
    }
    let problem = Problem {
        values: flow.as_slice(),
        mask: mask.map(|m| m.as_slice()),
        reduction: cfg.reduction,
    };
    let mut centroids = problem.init(cfg.k, cfg.init_seed);
    let mut labels = vec![0u32; flow.len()];
    problem.assign(&mut labels, &centroids);
    let mut loss = problem.loss(&labels, &centroids);
    let mut history = vec![loss];

    for _ in 0..cfg.max_iters {
        problem.assign(&mut labels, &centroids);
        problem.refit(&labels, &mut centroids);
        let next = problem.loss(&labels, &centroids);
        let slack = S::of(1e-12) * (S::one() + loss.abs());
        assert!(
            next <= loss + slack,
            "alternating minimization increased the loss from {loss} to {next}"
        );
        history.push(next);
        let improvement = loss - next;
        loss = next;
        if improvement < cfg.tolerance {
            break;
        }
    }

    canonicalize(&mut labels, &mut centroids);
    Ok(Fit {
        labels: Grid::new(flow.shape(), labels)?,
        model: MotionModel::new(centroids)?,
        loss,
        history,
    })
}

/// Supervision mask for a flow under `cfg`: the boundary band, or every pixel.
pub fn supervision_mask<S: Scalar>(flow: &FlowField<S>, cfg: &TrainConfig<S>) -> Result<BoundaryMask> {
    if cfg.use_boundary_mask {
        extract_boundary_mask(flow, &cfg.boundary)
    } else {
        Grid::filled(flow.shape(), true)
    }
}

/// One scored sample in the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample: usize,
    pub frame: usize,
    pub r: usize,
    pub loss: f64,
    pub masked_pixels: usize,
    pub empty_mask: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub samples: Vec<SampleRecord>,
    /// Sample ids dropped from this batch.
    pub dropped: Vec<usize>,
}

impl BatchRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("batch records serialize")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    /// Predicted labels for every frame that starts a flow, `0..T−1`.
    pub labels: Vec<LabelGrid>,
    /// Fit kept for each frame, if any sample of it survived dropping.
    pub fits: Vec<Option<Fit<S>>>,
    /// Frames that never kept a fit; they copy the labels of the nearest frame that kept a multi-segment fit.
    pub carried_over: Vec<bool>,
    pub log: Vec<BatchRecord>,
}

impl<S: Scalar> TrainOutcome<S> {
    /// Matched-label mIoU of the predictions against `gts[..labels.len()]`.
    pub fn evaluate(&self, gts: &[BoundaryMask], k: usize, policy: EmptyFramePolicy) -> Result<IoUReport> {
        evaluate_labels(&self.labels, gts, k, policy)
    }

    pub fn log_lines(&self) -> String {
        self.log.iter().map(|b| b.to_json_line() + "\n").collect()
    }
}

/// Matched-label mIoU; ground truth beyond the last prediction is ignored.
pub fn evaluate_labels(
    labels: &[LabelGrid],
    gts: &[BoundaryMask],
    k: usize,
    policy: EmptyFramePolicy,
) -> Result<IoUReport> {
    if gts.len() < labels.len() {
        return Err(Error::domain(format!(
            "{} ground-truth masks for {} predicted frames",
            gts.len(),
            labels.len()
        )));
    }
    let preds = labels
        .iter()
        .zip(gts)
        .map(|(l, g)| match_labels(l, g, k))
        .collect::<Result<Vec<_>>>()?;
    miou(&preds, &gts[..labels.len()], policy)
}

struct Scored<S> {
    fit: Fit<S>,
    loss: FrameLoss<S>,
}

/// Runs batched training over `source`, optionally scoring each sample against `gts`.
///
/// Each batch draws `batch_size` pairs, fits every pair's flow (under the boundary
/// mask when enabled), ranks the samples by loss and drops `drop_count` of them
/// when dropping is enabled. Per frame, the lowest-loss kept fit wins.
pub fn train_sequence<S: Scalar, P: PairFlowSource<S> + ?Sized>(
    source: &P,
    gts: Option<&[BoundaryMask]>,
    cfg: &TrainConfig<S>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    let frames = source.frame_count();
    if frames < 2 {
        return Err(Error::domain("training needs at least two frames"));
    }
    if let Some(g) = gts {
        if g.len() < frames - 1 {
            return Err(Error::domain(format!(
                "{} ground-truth masks for {} frames",
                g.len(),
                frames
            )));
        }
        if cfg.k > crate::metrics::MAX_MATCH_LABELS {
            return Err(Error::config("ground-truth scoring supports K <= 8"));
        }
    }
    let mut sampler = PairSampler::new(cfg.sampler)?;
    let mut cache: HashMap<FramePair, Scored<S>> = HashMap::new();
    let mut best: Vec<Option<(S, FramePair)>> = vec![None; frames - 1];
    let mut log = Vec::with_capacity(cfg.batches);

    for b in 0..cfg.batches {
        let mode = cfg.rate_mode_at(b);
        let pairs = (0..cfg.batch_size)
            .map(|_| sampler.draw_with(frames, mode))
            .collect::<Result<Vec<_>>>()?;
        let mut losses = Vec::with_capacity(pairs.len());
        let mut samples = Vec::with_capacity(pairs.len());
        for (slot, &pair) in pairs.iter().enumerate() {
            let sample = b * cfg.batch_size + slot;
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(pair) {
                e.insert(score_pair(source, pair, cfg)?);
            }
            let scored = &cache[&pair];
            let mut fl = scored.loss;
            fl.frame_index = sample;
            losses.push(fl);
            let sample_iou = match gts {
                Some(g) => Some(iou(&match_labels(&scored.fit.labels, &g[pair.i], cfg.k)?, &g[pair.i])?),
                None => None,
            };
            samples.push(SampleRecord {
                sample,
                frame: pair.i,
                r: pair.r,
                loss: fl.value().as_f64(),
                masked_pixels: fl.masked_pixel_count,
                empty_mask: fl.is_empty_mask(),
                iou: sample_iou,
            });
        }
        let dropped: Vec<usize> = if cfg.use_dropping {
            drop_hard_cases(&losses, cfg.drop_count)?.dropped.into_iter().collect()
        } else {
            Vec::new()
        };
        for (slot, &pair) in pairs.iter().enumerate() {
            if dropped.contains(&(b * cfg.batch_size + slot)) {
                continue;
            }
            let value = cache[&pair].loss.value();
            let better = match best[pair.i] {
                None => true,
                Some((v, _)) => value < v,
            };
            if better {
                best[pair.i] = Some((value, pair));
            }
        }
        log.push(BatchRecord {
            batch: b,
            samples,
            dropped,
        });
    }

    let fits: Vec<Option<Fit<S>>> = best
        .iter()
        .map(|slot| slot.map(|(_, pair)| cache[&pair].fit.clone()))
        .collect();
    let shape = source.pair_flow(FramePair { i: 0, r: 1 })?.shape();
    let background = Grid::filled(shape, 0u32)?;
    let mut labels = Vec::with_capacity(fits.len());
    let mut carried_over = Vec::with_capacity(fits.len());
    for i in 0..fits.len() {
        match &fits[i] {
            Some(f) => {
                labels.push(f.labels.clone());
                carried_over.push(false);
            }
            None => {
                // Nearest frame whose kept fit separates at least two segments, earlier
                // frame on ties; a single-segment fit has nothing to hand on.
                let informative = |j: usize| fits[j].as_ref().is_some_and(|f| f.segment_count() >= 2);
                let donor = (1..fits.len())
                    .flat_map(|d| [i.checked_sub(d), Some(i + d)])
                    .flatten()
                    .find(|&j| j < fits.len() && informative(j));
                labels.push(match donor {
                    Some(j) => fits[j].as_ref().unwrap().labels.clone(),
                    None => background.clone(),
                });
                carried_over.push(true);
            }
        }
    }
    Ok(TrainOutcome {
        labels,
        fits,
        carried_over,
        log,
    })
}

fn score_pair<S: Scalar, P: PairFlowSource<S> + ?Sized>(
    source: &P,
    pair: FramePair,
    cfg: &TrainConfig<S>,
) -> Result<Scored<S>> {
    let flow = source.pair_flow(pair)?;
    let mask = supervision_mask(&flow, cfg)?;
    let fit_cfg = TrainConfig {
        init_seed: seed::derive_indexed(cfg.init_seed, &[pair.i as u64, pair.r as u64]),
        ..cfg.clone()
    };
    let fit = fit_segmentation(&flow, Some(&mask), &fit_cfg)?;
    let predicted = reconstruct_flow(&fit.labels, &fit.model)?;
    let map = masked_loss_map(&flow, &predicted, &mask)?;
    let loss = frame_loss(pair.i, &map, &mask, cfg.reduction)?;
    Ok(Scored { fit, loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{PixelCoord, Shape};
    use crate::synth::{render_sequence, MotionPattern, ObjectShape, SceneObject, SceneSpec, SyntheticSequence};

    fn split(h: usize, w: usize, left: (f64, f64), right: (f64, f64)) -> FlowField<f64> {
        Grid::from_fn(Shape::new(h, w), |p| {
            let v = if p.col < w / 2 { left } else { right };
            Flow::new(v.0, v.1)
        })
        .unwrap()
    }

    #[test]
    fn reconstruct_examples() {
        let s = Shape::new(2, 3);
        let model = MotionModel::new(vec![Flow::new(1.0, 2.0), Flow::new(-1.0, 0.0)]).unwrap();
        let zeros = Grid::filled(s, 0u32).unwrap();
        assert!(reconstruct_flow(&zeros, &model).unwrap().iter().all(|v| *v == Flow::new(1.0, 2.0)));
        let halves = Grid::from_fn(s, |p| (p.col >= 1) as u32).unwrap();
        let f = reconstruct_flow(&halves, &model).unwrap();
        assert_eq!(*f.get(PixelCoord::new(1, 2)).unwrap(), Flow::new(-1.0, 0.0));
        let bad = Grid::filled(s, 2u32).unwrap();
        assert!(matches!(reconstruct_flow(&bad, &model), Err(Error::Domain(_))));
        assert!(MotionModel::<f64>::new(vec![Flow::zero()]).is_err());
    }

    #[test]
    fn two_motion_fit_is_exact() {
        let f = split(16, 16, (2.0, 0.0), (0.0, 1.0));
        let fit = fit_segmentation(&f, None, &TrainConfig::default()).unwrap();
        assert!(fit.loss <= 1e-12);
        for p in f.shape().coords() {
            assert_eq!(fit.labels.at(p.row, p.col) == fit.labels.at(0, 0), p.col < 8);
        }
        let rebuilt = reconstruct_flow(&fit.labels, &fit.model).unwrap();
        assert_eq!(rebuilt, f);
    }

    #[test]
    fn uniform_flow_is_one_segment() {
        let f = Grid::filled(Shape::new(6, 6), Flow::new(0.5, -0.5)).unwrap();
        let fit = fit_segmentation(&f, None, &TrainConfig::default()).unwrap();
        assert_eq!(fit.loss, 0.0);
        assert!(fit.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn larger_k_than_motions_succeeds() {
        let f = split(4, 4, (1.0, 0.0), (0.0, 1.0));
        let cfg = TrainConfig { k: 5, ..TrainConfig::default() };
        let fit = fit_segmentation(&f, None, &cfg).unwrap();
        assert_eq!(fit.model.k(), 5);
        assert!(fit.loss <= 1e-12);
    }

    #[test]
    fn empty_mask_fit_has_zero_loss() {
        let f = split(4, 4, (1.0, 0.0), (0.0, 1.0));
        let m = Grid::filled(f.shape(), false).unwrap();
        let fit = fit_segmentation(&f, Some(&m), &TrainConfig::default()).unwrap();
        assert_eq!(fit.loss, 0.0);
    }

    #[test]
    fn loss_history_is_non_increasing() {
        let f = Grid::from_fn(Shape::new(12, 12), |p| {
            Flow::new(((p.row * 7 + p.col * 3) % 5) as f64, ((p.row + 2 * p.col) % 4) as f64)
        })
        .unwrap();
        for k in 2..6 {
            let cfg = TrainConfig { k, init_seed: k as u64, ..TrainConfig::default() };
            let fit = fit_segmentation(&f, None, &cfg).unwrap();
            assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", fit.history);
        }
    }

    #[test]
    fn mask_restricts_refit() {
        // Two clusters plus an outlier block outside the mask: the outlier must not bias the motions.
        let f = Grid::from_fn(Shape::new(8, 8), |p| {
            if p.row == 0 && p.col == 0 {
                Flow::new(40.0, 40.0)
            } else if p.col < 4 {
                Flow::new(1.0, 0.0)
            } else {
                Flow::new(0.0, 1.0)
            }
        })
        .unwrap();
        let m = Grid::from_fn(f.shape(), |p| !(p.row == 0 && p.col == 0)).unwrap();
        let fit = fit_segmentation(&f, Some(&m), &TrainConfig::default()).unwrap();
        assert!(fit.loss <= 1e-12);
        assert!(fit.model.centroids.contains(&Flow::new(1.0, 0.0)));
        assert!(fit.model.centroids.contains(&Flow::new(0.0, 1.0)));
    }

    fn stop_and_go_scene() -> SyntheticSequence<f64> {
        let spec = SceneSpec {
            shape: Shape::new(24, 24),
            frames: 12,
            objects: vec![SceneObject {
                shape: ObjectShape::Rectangle,
                position: (6.0, 2.0),
                size: (8, 8),
                velocity: Flow::new(1.0, 0.0),
                motion: MotionPattern::StopAndGo { stationary_fraction: 0.6 },
            }],
            background_velocity: Flow::zero(),
            seed: 2,
        };
        SyntheticSequence::new(spec, vec![]).unwrap()
    }

    #[test]
    fn no_dropping_keeps_everything() {
        let seq = stop_and_go_scene();
        let cfg = TrainConfig::<f64> { use_dropping: false, batches: 4, ..TrainConfig::default() };
        let out = train_sequence(&seq, None, &cfg).unwrap();
        assert_eq!(out.log.len(), 4);
        assert!(out.log.iter().all(|b| b.dropped.is_empty()));
    }

    #[test]
    fn dropping_respects_h() {
        let seq = stop_and_go_scene();
        let cfg = TrainConfig::<f64> { batches: 6, ..TrainConfig::default() };
        let out = train_sequence(&seq, None, &cfg).unwrap();
        for b in &out.log {
            let empties = b.samples.iter().filter(|s| s.empty_mask).count();
            assert_eq!(b.dropped.len(), 6.max(empties));
        }
        assert_eq!(out.labels.len(), 11);
    }

    #[test]
    fn variable_rate_sees_more_object_motion() {
        let seq = stop_and_go_scene();
        let masks = seq.masks();
        let magnitude = |mode: RateMode| {
            let cfg = SamplerConfig { mode, seed: 9, ..SamplerConfig::default() };
            let pairs = crate::sampler::sample_pairs(12, 300, &cfg).unwrap();
            let mut total = 0.0;
            let mut n = 0usize;
            for p in pairs {
                let f = seq.pair_flow(p).unwrap();
                for (v, &m) in f.iter().zip(masks[p.i].iter()) {
                    if m {
                        total += v.norm();
                        n += 1;
                    }
                }
            }
            total / n as f64
        };
        assert!(magnitude(RateMode::Variable) > magnitude(RateMode::Fixed));
    }

    #[test]
    fn clean_scene_training_matches_ground_truth() {
        let spec = SceneSpec {
            shape: Shape::new(24, 24),
            frames: 6,
            objects: vec![SceneObject {
                shape: ObjectShape::Ellipse,
                position: (4.0, 4.0),
                size: (9, 11),
                velocity: Flow::new(1.0, 1.0),
                motion: MotionPattern::Constant,
            }],
            background_velocity: Flow::new(-1.0, 0.0),
            seed: 0,
        };
        let rendered = render_sequence(&spec).unwrap();
        let out = train_sequence(&rendered.flows[..], Some(&rendered.masks), &TrainConfig {
            sampler: SamplerConfig::consecutive(1),
            ..TrainConfig::default()
        })
        .unwrap();
        let report = out.evaluate(&rendered.masks, 2, EmptyFramePolicy::CountAsOne).unwrap();
        assert_eq!(report.mean, 1.0);
    }

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig::<f64> { warmup_fraction: 0.25, batches: 8, ..TrainConfig::default() };
        let modes: Vec<_> = (0..8).map(|b| cfg.rate_mode_at(b)).collect();
        assert_eq!(modes.iter().filter(|&&m| m == RateMode::Fixed).count(), 2);
        assert_eq!(modes[0], RateMode::Fixed);
        assert_eq!(modes[7], RateMode::Variable);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { drop_count: 8, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { drop_count: 8, use_dropping: false, ..ok.clone() }.validate().is_ok());
        assert!(TrainConfig { k: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { max_iters: 0, ..ok }.validate().is_err());
    }
}
