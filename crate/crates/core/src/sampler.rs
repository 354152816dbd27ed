//! Frame-pair sampling with a random frame interval.
//!
//! A pair `(i, i + r)` is drawn by first picking the interval `r` uniformly
//! from `r_min..=r_max`, then picking the start `i` uniformly from
//! `0..T`, redrawing only `i` until `i + r ≤ T − 1`. The interval marginal is
//! therefore exactly uniform.
//!
//! Randomness comes from ChaCha8 (a counter-based stream cipher generator)
//! seeded with `seed`; each worker may select its own stream so clones never
//! overlap. Integers are drawn with `rand`'s `random_range`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FlowField;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    #[default]
    Variable,
    /// Always use `r = r_min`.
    Fixed,
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "variable" => Ok(RateMode::Variable),
            "fixed" => Ok(RateMode::Fixed),
            other => Err(Error::config(format!("unknown rate mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub r_min: usize,
    pub r_max: usize,
    pub seed: u64,
    pub mode: RateMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            r_min: 1,
            r_max: 3,
            seed: 0,
            mode: RateMode::Variable,
        }
    }
}

impl SamplerConfig {
    /// Consecutive frames only.
    pub fn consecutive(seed: u64) -> Self {
        SamplerConfig {
            r_min: 1,
            r_max: 1,
            seed,
            mode: RateMode::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_min < 1 || self.r_min > self.r_max {
            return Err(Error::config(format!(
                "need 1 <= r_min <= r_max, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    /// Largest interval this config can emit under `mode`.
    pub fn max_interval(&self, mode: RateMode) -> usize {
        match mode {
            RateMode::Fixed => self.r_min,
            RateMode::Variable => self.r_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FramePair {
    pub i: usize,
    pub r: usize,
}

impl FramePair {
    pub fn partner(&self) -> usize {
        self.i + self.r
    }
}

/// Sampler state: the configuration plus a position in the random stream.
#[derive(Clone, Debug)]
pub struct PairSampler {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
}

impl PairSampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        Self::with_stream(cfg, 0)
    }

    /// Independent stream for worker `stream` under the same seed.
    pub fn with_stream(cfg: SamplerConfig, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = crate::seed::rng(cfg.seed);
        rng.set_stream(stream);
        Ok(PairSampler { cfg, rng })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Draws one pair using the configured mode.
    pub fn draw(&mut self, frames: usize) -> Result<FramePair> {
        self.draw_with(frames, self.cfg.mode)
    }

    /// Draws one pair, overriding the configured mode (used by warmup schedules).
    pub fn draw_with(&mut self, frames: usize, mode: RateMode) -> Result<FramePair> {
        let r_max = self.cfg.max_interval(mode);
        if frames < r_max + 1 {
            return Err(Error::config(format!(
                "sequence of {frames} frames is too short for interval {r_max}"
            )));
        }
        let r = match mode {
            RateMode::Fixed => self.cfg.r_min,
            RateMode::Variable => self.rng.random_range(self.cfg.r_min..=self.cfg.r_max),
        };
        loop {
            let i = self.rng.random_range(0..frames);
            if i + r < frames {
                return Ok(FramePair { i, r });
            }
        }
    }
}

/// Supplies the supervising flow for a frame pair `(i, i + r)`.
pub trait PairFlowSource<S: Scalar> {
    /// Number of frames `T` in the sequence.
    fn frame_count(&self) -> usize;

    /// Flow from frame `i` to frame `i + r`, on frame `i`'s pixel grid.
    fn pair_flow(&self, pair: FramePair) -> Result<FlowField<S>>;
}

/// A plain list of consecutive flows only supplies `r = 1`.
impl<S: Scalar> PairFlowSource<S> for [FlowField<S>] {
    fn frame_count(&self) -> usize {
        self.len() + 1
    }

    fn pair_flow(&self, pair: FramePair) -> Result<FlowField<S>> {
        if pair.r != 1 {
            return Err(Error::domain(format!(
                "consecutive flows cannot supply interval {}",
                pair.r
            )));
        }
        self.get(pair.i)
            .cloned()
            .ok_or_else(|| Error::domain(format!("no flow starts at frame {}", pair.i)))
    }
}

/// `n` pairs over a `frames`-long sequence, fully determined by `cfg`.
pub fn sample_pairs(frames: usize, n: usize, cfg: &SamplerConfig) -> Result<Vec<FramePair>> {
    if n == 0 {
        return Err(Error::config("pair count must be at least 1"));
    }
    let mut s = PairSampler::new(*cfg)?;
    (0..n).map(|_| s.draw(frames)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn only_valid_pair() {
        let cfg = SamplerConfig::consecutive(9);
        assert_eq!(sample_pairs(2, 1, &cfg).unwrap(), vec![FramePair { i: 0, r: 1 }]);
    }

    #[test]
    fn too_short_and_bad_config() {
        let cfg = SamplerConfig::default();
        assert!(matches!(sample_pairs(3, 5, &cfg), Err(Error::Config(_))));
        assert!(sample_pairs(4, 0, &cfg).is_err());
        let bad = SamplerConfig { r_min: 3, r_max: 2, ..cfg };
        assert!(sample_pairs(10, 1, &bad).is_err());
        let zero = SamplerConfig { r_min: 0, ..cfg };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn fixed_mode_is_consecutive() {
        let cfg = SamplerConfig { mode: RateMode::Fixed, ..SamplerConfig::default() };
        assert!(sample_pairs(20, 500, &cfg).unwrap().iter().all(|p| p.r == 1));
    }

    #[test]
    fn streams_differ() {
        let cfg = SamplerConfig { seed: 5, ..SamplerConfig::default() };
        let mut a = PairSampler::with_stream(cfg, 0).unwrap();
        let mut b = PairSampler::with_stream(cfg, 1).unwrap();
        let xa: Vec<_> = (0..32).map(|_| a.draw(50).unwrap()).collect();
        let xb: Vec<_> = (0..32).map(|_| b.draw(50).unwrap()).collect();
        assert_ne!(xa, xb);
    }

    proptest! {
        #[test]
        fn deterministic_and_in_bounds(t in 4usize..30, n in 1usize..200, seed in any::<u64>()) {
            let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
            let a = sample_pairs(t, n, &cfg).unwrap();
            prop_assert_eq!(&a, &sample_pairs(t, n, &cfg).unwrap());
            prop_assert!(a.iter().all(|p| p.partner() < t && (1..=3).contains(&p.r)));
        }
    }
}
