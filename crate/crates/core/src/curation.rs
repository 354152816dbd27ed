//! Per-batch hard-frame dropping.
//!
//! Within one batch the frames with the largest loss are treated as
//! unreliable supervision and excluded. Frames whose boundary mask was empty
//! carry no supervision at all and are always dropped first.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::supervision::FrameLoss;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport<S> {
    pub batch: Vec<FrameLoss<S>>,
    pub dropped: BTreeSet<usize>,
    /// Frame indices of the surviving frames, in batch order.
    pub kept: Vec<usize>,
}

impl<S> BatchReport<S> {
    pub fn is_dropped(&self, frame_index: usize) -> bool {
        self.dropped.contains(&frame_index)
    }
}

/// Drops the `h` highest-loss frames of a batch.
///
/// Empty-mask frames are dropped first and count toward `h`; if there are
/// more than `h` of them all are dropped anyway. Among the rest, equal losses
/// drop the larger `frame_index` first. Frame indices must be unique.
pub fn drop_hard_cases<S: Scalar>(losses: &[FrameLoss<S>], h: usize) -> Result<BatchReport<S>> {
    if h >= losses.len() {
        return Err(Error::config(format!(
            "drop count h = {h} must be smaller than the batch size {}",
            losses.len()
        )));
    }
    let mut seen = HashSet::with_capacity(losses.len());
    for fl in losses {
        if !seen.insert(fl.frame_index) {
            return Err(Error::domain(format!("duplicate frame index {} in batch", fl.frame_index)));
        }
        if !fl.value().is_finite() {
            return Err(Error::domain(format!("loss of frame {} is not finite", fl.frame_index)));
        }
    }

    let mut dropped: BTreeSet<usize> = losses
        .iter()
        .filter(|fl| fl.is_empty_mask())
        .map(|fl| fl.frame_index)
        .collect();
    let mut ranked: Vec<&FrameLoss<S>> = losses.iter().filter(|fl| !fl.is_empty_mask()).collect();
    ranked.sort_by(|a, b| {
        b.value()
            .partial_cmp(&a.value())
            .expect("finite losses")
            .then(b.frame_index.cmp(&a.frame_index))
    });
    let remaining = h.saturating_sub(dropped.len());
    dropped.extend(ranked.iter().take(remaining).map(|fl| fl.frame_index));

    let kept = losses
        .iter()
        .map(|fl| fl.frame_index)
        .filter(|i| !dropped.contains(i))
        .collect();
    Ok(BatchReport {
        batch: losses.to_vec(),
        dropped,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(values: &[f64]) -> Vec<FrameLoss<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| FrameLoss::from_value(i, v, 10))
            .collect()
    }

    #[test]
    fn drops_largest() {
        let r = drop_hard_cases(&batch(&[5.0, 1.0, 9.0, 3.0]), 2).unwrap();
        assert_eq!(r.dropped, BTreeSet::from([0, 2]));
        assert_eq!(r.kept, vec![1, 3]);
    }

    #[test]
    fn h_zero_is_identity() {
        let r = drop_hard_cases(&batch(&[5.0, 1.0, 9.0]), 0).unwrap();
        assert!(r.dropped.is_empty());
        assert_eq!(r.kept, vec![0, 1, 2]);
    }

    #[test]
    fn ties_drop_larger_index() {
        let r = drop_hard_cases(&batch(&[2.0, 2.0, 2.0, 1.0]), 2).unwrap();
        assert_eq!(r.dropped, BTreeSet::from([1, 2]));
    }

    #[test]
    fn empty_masks_go_first_and_may_exceed_h() {
        let mut b = batch(&[1.0, 7.0, 3.0, 4.0]);
        b[0] = FrameLoss::from_value(0, 0.0, 0);
        let r = drop_hard_cases(&b, 2).unwrap();
        assert_eq!(r.dropped, BTreeSet::from([0, 1]));

        b[2] = FrameLoss::from_value(2, 0.0, 0);
        b[3] = FrameLoss::from_value(3, 0.0, 0);
        let r = drop_hard_cases(&b, 2).unwrap();
        assert_eq!(r.dropped, BTreeSet::from([0, 2, 3]));
        assert_eq!(r.kept, vec![1]);
    }

    #[test]
    fn rejects_bad_batches() {
        assert!(matches!(drop_hard_cases(&batch(&[1.0, 2.0]), 2), Err(Error::Config(_))));
        let mut b = batch(&[1.0, 2.0, 3.0]);
        b[1].frame_index = 0;
        assert!(matches!(drop_hard_cases(&b, 1), Err(Error::Domain(_))));
        assert!(drop_hard_cases(&batch(&[1.0, f64::NAN]), 1).is_err());
    }

    proptest! {
        #[test]
        fn scaling_preserves_dropped_set(v in proptest::collection::vec(0.0f64..100.0, 2..12), s in 0.01f64..100.0, h in 0usize..11) {
            let h = h % v.len();
            let a = drop_hard_cases(&batch(&v), h).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            let b = drop_hard_cases(&batch(&scaled), h).unwrap();
            prop_assert_eq!(&a.dropped, &b.dropped);
            prop_assert_eq!(a.dropped.len(), h);
            prop_assert!(!a.kept.is_empty());
        }

        #[test]
        fn permutation_equivariance(v in proptest::collection::vec(0u8..6, 2..10), h in 0usize..9, rot in 0usize..10) {
            // Permuting batch positions while keeping frame identities fixed changes nothing.
            let h = h % v.len();
            let frames = batch(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
            let mut permuted = frames.clone();
            permuted.rotate_left(rot % v.len());
            let a = drop_hard_cases(&frames, h).unwrap();
            let b = drop_hard_cases(&permuted, h).unwrap();
            prop_assert_eq!(a.dropped, b.dropped);
        }
    }
}
