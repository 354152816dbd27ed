//! Ablation harness: strategy toggles and boundary parameters over a seeded scene suite.
//!
//! Each configuration is trained on every scene of the suite and scored by the
//! mean over scenes of the per-scene mIoU. Scenes are independent, so they run
//! in parallel; results are collected in scene order and are deterministic.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Shape;
use crate::kv::{parse_angle, parse_list, KvFile};
use crate::metrics::EmptyFramePolicy;
use crate::sampler::RateMode;
use crate::scalar::Scalar;
use crate::seed;
use crate::segmenter::{train_sequence, TrainConfig};
use crate::synth::{random_scene, SceneRecipe, SyntheticSequence};

/// Which of the three training strategies are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy {
    pub drop: bool,
    pub boundary: bool,
    pub variable: bool,
}

impl Strategy {
    pub const NONE: Strategy = Strategy { drop: false, boundary: false, variable: false };
    pub const DROP: Strategy = Strategy { drop: true, boundary: false, variable: false };
    pub const DROP_BOUNDARY: Strategy = Strategy { drop: true, boundary: true, variable: false };
    pub const ALL: Strategy = Strategy { drop: true, boundary: true, variable: true };

    /// The four rows of the strategy ablation, from baseline to full method.
    pub fn ladder() -> [Strategy; 4] {
        [Self::NONE, Self::DROP, Self::DROP_BOUNDARY, Self::ALL]
    }

    pub fn apply<S: Scalar>(&self, base: &TrainConfig<S>) -> TrainConfig<S> {
        let mut cfg = base.clone();
        cfg.use_dropping = self.drop;
        cfg.use_boundary_mask = self.boundary;
        cfg.sampler.mode = if self.variable { RateMode::Variable } else { RateMode::Fixed };
        cfg
    }

    pub fn name(&self) -> String {
        match *self {
            Self::NONE => "none".into(),
            Self::ALL => "all".into(),
            s => [("drop", s.drop), ("boundary", s.boundary), ("variable", s.variable)]
                .iter()
                .filter(|(_, on)| *on)
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join("+"),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// `none`, `all`, or toggles joined with `+` (e.g. `drop+boundary`).
impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => return Ok(Self::NONE),
            "all" => return Ok(Self::ALL),
            _ => {}
        }
        let mut out = Self::NONE;
        for part in s.trim().split('+') {
            match part.trim() {
                "drop" => out.drop = true,
                "boundary" => out.boundary = true,
                "variable" => out.variable = true,
                other => return Err(Error::config(format!("unknown strategy toggle `{other}`"))),
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Clean,
    Corrupted,
}

impl std::str::FromStr for SuiteKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "clean" => Ok(SuiteKind::Clean),
            "corrupted" => Ok(SuiteKind::Corrupted),
            other => Err(Error::config(format!("unknown suite kind `{other}`"))),
        }
    }
}

/// A seeded family of random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub kind: SuiteKind,
    pub scenes: usize,
    pub seed: u64,
    pub shape: Shape,
    pub frames: usize,
    /// Stationary fraction of the stop-and-go object in corrupted suites.
    pub stationary_fraction: f64,
}

impl SuiteSpec {
    pub fn corrupted(scenes: usize, seed: u64) -> Self {
        SuiteSpec {
            kind: SuiteKind::Corrupted,
            scenes,
            seed,
            shape: Shape::new(32, 32),
            frames: 12,
            stationary_fraction: 0.5,
        }
    }

    pub fn clean(scenes: usize, seed: u64) -> Self {
        SuiteSpec { kind: SuiteKind::Clean, ..Self::corrupted(scenes, seed) }
    }

    /// Reads `kind`, `scenes`, `seed`, `height`, `width`, `frames` and
    /// `stationary_fraction`; unset keys keep the corrupted-suite defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        kv.check_keys(&["kind", "scenes", "seed", "height", "width", "frames", "stationary_fraction"])?;
        let d = Self::corrupted(50, 0);
        let spec = SuiteSpec {
            kind: kv.parse_opt("kind")?.unwrap_or(d.kind),
            scenes: kv.parse_opt("scenes")?.unwrap_or(d.scenes),
            seed: kv.parse_opt("seed")?.unwrap_or(d.seed),
            shape: Shape::new(
                kv.parse_opt("height")?.unwrap_or(d.shape.height),
                kv.parse_opt("width")?.unwrap_or(d.shape.width),
            ),
            frames: kv.parse_opt("frames")?.unwrap_or(d.frames),
            stationary_fraction: kv.parse_opt("stationary_fraction")?.unwrap_or(d.stationary_fraction),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::spec("scenes", "a suite needs at least one scene"));
        }
        if self.frames < 4 {
            return Err(Error::spec("frames", "suite scenes need at least 4 frames"));
        }
        if !(0.0..=1.0).contains(&self.stationary_fraction) {
            return Err(Error::spec("stationary_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn recipe(&self) -> SceneRecipe {
        match self.kind {
            SuiteKind::Clean => SceneRecipe::clean(self.shape, self.frames),
            SuiteKind::Corrupted => SceneRecipe {
                stop_and_go: Some(self.stationary_fraction),
                ..SceneRecipe::corrupted(self.shape, self.frames)
            },
        }
    }

    pub fn scene_seed(&self, idx: usize) -> u64 {
        seed::derive_indexed(self.seed, &[idx as u64])
    }

    pub fn build<S: Scalar>(&self) -> Result<Vec<SyntheticSequence<S>>> {
        self.validate()?;
        let recipe = self.recipe();
        (0..self.scenes)
            .map(|i| random_scene(&recipe, self.scene_seed(i)))
            .collect()
    }
}

/// Per-scene mIoU of `cfg` on `scenes`, in scene order.
pub fn evaluate_suite<S: Scalar>(scenes: &[SyntheticSequence<S>], cfg: &TrainConfig<S>) -> Result<Vec<f64>> {
    cfg.validate()?;
    scenes
        .par_iter()
        .map(|scene| {
            let gts = scene.masks();
            let out = train_sequence(scene, Some(&gts), cfg)?;
            Ok(out.evaluate(&gts, cfg.k, EmptyFramePolicy::CountAsOne)?.mean)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Strategies × α × d. Each α keeps the label it was written with.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationGrid {
    pub strategies: Vec<Strategy>,
    pub alphas: Vec<(String, f64)>,
    pub kernels: Vec<usize>,
}

impl AblationGrid {
    /// Single cell: `strategy` at the given boundary parameters.
    pub fn single(strategy: Strategy, alpha: (String, f64), kernel: usize) -> Self {
        AblationGrid { strategies: vec![strategy], alphas: vec![alpha], kernels: vec![kernel] }
    }

    /// Parses comma-separated lists: strategies (`none,drop,...`), angles (`pi/12,pi/6`) and kernels (`1,3,7`).
    pub fn parse(strategies: &str, alphas: &str, kernels: &str) -> Result<Self> {
        let strategies = parse_list("strategies", strategies)?;
        let alphas = alphas
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Ok((s.to_string(), parse_angle("alphas", s)?)))
            .collect::<Result<Vec<_>>>()?;
        let kernels = parse_list("kernels", kernels)?;
        let grid = AblationGrid { strategies, alphas, kernels };
        if grid.strategies.is_empty() || grid.alphas.is_empty() || grid.kernels.is_empty() {
            return Err(Error::config("every ablation axis needs at least one value"));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.strategies.len() * self.alphas.len() * self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: Strategy,
    pub alpha_label: String,
    pub alpha: f64,
    pub kernel: usize,
    pub miou: f64,
    pub per_scene: Vec<f64>,
}

/// Runs every grid cell (strategy-major, then α, then d) over the suite.
pub fn run_ablation<S: Scalar>(
    scenes: &[SyntheticSequence<S>],
    base: &TrainConfig<S>,
    grid: &AblationGrid,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(grid.len());
    for &strategy in &grid.strategies {
        for (label, alpha) in &grid.alphas {
            for &kernel in &grid.kernels {
                let mut cfg = strategy.apply(base);
                cfg.boundary.alpha = S::of(*alpha);
                cfg.boundary.kernel_size = kernel;
                let per_scene = evaluate_suite(scenes, &cfg)?;
                rows.push(AblationRow {
                    strategy,
                    alpha_label: label.clone(),
                    alpha: *alpha,
                    kernel,
                    miou: mean(&per_scene),
                    per_scene,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV table. Strategy toggle columns appear when several strategies were run;
/// `alpha,d` appear when the boundary grid has several cells or there is only one strategy.
pub fn format_table(rows: &[AblationRow]) -> String {
    let strategies = rows.iter().map(|r| r.strategy).collect::<std::collections::HashSet<_>>().len();
    let cells = rows
        .iter()
        .map(|r| (r.alpha_label.clone(), r.kernel))
        .collect::<std::collections::HashSet<_>>()
        .len();
    let show_strategy = strategies > 1;
    let show_boundary = cells > 1 || !show_strategy;
    let mut header = Vec::new();
    if show_strategy {
        header.extend(["strategy", "drop", "boundary", "variable"]);
    }
    if show_boundary {
        header.extend(["alpha", "d"]);
    }
    header.push("miou");
    let mut out = header.join(",") + "\n";
    for r in rows {
        let mut cols: Vec<String> = Vec::new();
        if show_strategy {
            let flag = |b: bool| if b { "1" } else { "0" }.to_string();
            cols.push(r.strategy.name());
            cols.extend([flag(r.strategy.drop), flag(r.strategy.boundary), flag(r.strategy.variable)]);
        }
        if show_boundary {
            cols.push(r.alpha_label.clone());
            cols.push(r.kernel.to_string());
        }
        cols.push(format!("{:.4}", r.miou));
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ladder() {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(Strategy::DROP_BOUNDARY.name(), "drop+boundary");
        assert_eq!("variable+drop".parse::<Strategy>().unwrap().name(), "drop+variable");
        assert!("fast".parse::<Strategy>().is_err());
    }

    #[test]
    fn strategy_apply_sets_toggles() {
        let base = TrainConfig::<f64>::default();
        let c = Strategy::NONE.apply(&base);
        assert!(!c.use_dropping && !c.use_boundary_mask);
        assert_eq!(c.sampler.mode, RateMode::Fixed);
        let c = Strategy::ALL.apply(&base);
        assert!(c.use_dropping && c.use_boundary_mask);
        assert_eq!(c.sampler.mode, RateMode::Variable);
    }

    #[test]
    fn suite_parse_and_errors() {
        let s = SuiteSpec::parse("kind = clean\nscenes = 3\nseed = 4\n").unwrap();
        assert_eq!(s.kind, SuiteKind::Clean);
        assert_eq!(s.scenes, 3);
        assert_eq!(s.shape, Shape::new(32, 32));
        assert!(SuiteSpec::parse("scenes = 0").is_err());
        assert!(SuiteSpec::parse("colour = red").is_err());
    }

    #[test]
    fn grid_parse_and_table_shapes() {
        let g = AblationGrid::parse("all", "pi/12, pi/6, pi/3", "1,3,7").unwrap();
        assert_eq!(g.len(), 9);
        let rows: Vec<AblationRow> = (0..9)
            .map(|i| AblationRow {
                strategy: Strategy::ALL,
                alpha_label: g.alphas[i / 3].0.clone(),
                alpha: g.alphas[i / 3].1,
                kernel: g.kernels[i % 3],
                miou: 0.5,
                per_scene: vec![0.5],
            })
            .collect();
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 10);
        assert!(t.starts_with("alpha,d,miou\n"));

        let rows: Vec<AblationRow> = Strategy::ladder()
            .iter()
            .map(|&s| AblationRow { strategy: s, ..rows[0].clone() })
            .collect();
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 5);
        assert!(t.starts_with("strategy,drop,boundary,variable,miou\n"));
        assert!(t.contains("\ndrop+boundary,1,1,0,0.5000\n"));
    }

    #[test]
    fn small_ablation_is_deterministic() {
        let suite = SuiteSpec { scenes: 2, frames: 5, ..SuiteSpec::corrupted(2, 3) };
        let scenes = suite.build::<f64>().unwrap();
        let base = TrainConfig { batches: 4, ..TrainConfig::default() };
        let grid = AblationGrid::parse("none,all", "pi/12", "7").unwrap();
        let a = run_ablation(&scenes, &base, &grid).unwrap();
        let b = run_ablation(&scenes, &base, &grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.miou)));
    }
}
