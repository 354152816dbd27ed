//! Run configuration: built-in defaults, then a `key = value` file, then flags.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use flowbound::kv::{parse_angle, KvFile};
use flowbound::seed;
use flowbound::{AngleMetric, BoundaryConfig, EmptyFramePolicy, RateMode, Reduction, TrainConfig};

pub const CONFIG_KEYS: &[&str] = &[
    "alpha",
    "kernel",
    "metric",
    "k",
    "max_iters",
    "tolerance",
    "batch_size",
    "drop",
    "batches",
    "r_min",
    "r_max",
    "rate",
    "warmup",
    "reduction",
    "boundary",
    "dropping",
    "seed",
    "policy",
];

#[derive(Args, Debug, Clone, Default)]
pub struct BoundaryArgs {
    /// Direction threshold α: radians, `pi/12`, `2*pi/3` or `15deg`.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Dilation kernel side d (odd).
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Angle gap metric: `wrapped` or `literal`.
    #[arg(long)]
    pub metric: Option<AngleMetric>,
    /// Use the best parameters of the α × d sweep (α = π/3, d = 7).
    #[arg(long)]
    pub sweep_best: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    /// Number of segments K.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hard cases dropped per batch (h).
    #[arg(long)]
    pub drop: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub r_min: Option<usize>,
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Sample consecutive frames only.
    #[arg(long)]
    pub fixed_rate: bool,
    /// Fraction of batches, from the start, sampled at the fixed rate.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `mean_masked` or `sum`.
    #[arg(long)]
    pub reduction: Option<Reduction>,
    /// Keep every sample instead of dropping hard cases.
    #[arg(long)]
    pub no_drop: bool,
    /// Supervise every pixel instead of the boundary band.
    #[arg(long)]
    pub no_boundary: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key = value` configuration file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; every module derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    pub fn file(&self) -> Result<KvFile> {
        let Some(path) = &self.config else {
            return Ok(KvFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let kv = KvFile::parse(&text)?;
        kv.check_keys(CONFIG_KEYS)?;
        Ok(kv)
    }

    pub fn root_seed(&self, kv: &KvFile) -> Result<u64> {
        Ok(match self.seed {
            Some(s) => s,
            None => kv.parse_opt("seed")?.unwrap_or(0),
        })
    }
}

fn bool_key(kv: &KvFile, key: &str) -> Result<Option<bool>> {
    Ok(kv.parse_opt(key)?)
}

pub fn boundary_config(args: &BoundaryArgs, kv: &KvFile) -> Result<BoundaryConfig<f64>> {
    let mut cfg = if args.sweep_best {
        BoundaryConfig::sweep_best()
    } else {
        BoundaryConfig::default()
    };
    if let Some(a) = kv.get("alpha") {
        cfg.alpha = parse_angle("alpha", a)?;
    }
    if let Some(d) = kv.parse_opt("kernel")? {
        cfg.kernel_size = d;
    }
    if let Some(m) = kv.parse_opt("metric")? {
        cfg.angle_metric = m;
    }
    if let Some(a) = &args.alpha {
        cfg.alpha = parse_angle("--alpha", a)?;
    }
    if let Some(d) = args.kernel {
        cfg.kernel_size = d;
    }
    if let Some(m) = args.metric {
        cfg.angle_metric = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_config(args: &TrainArgs, common: &Common) -> Result<TrainConfig<f64>> {
    let kv = common.file()?;
    let root = common.root_seed(&kv)?;
    let mut cfg = TrainConfig::<f64> {
        boundary: boundary_config(&args.boundary, &kv)?,
        ..TrainConfig::default()
    };
    cfg.sampler.seed = seed::derive(root, "sampler");
    cfg.init_seed = seed::derive(root, "segmenter");

    macro_rules! layer {
        ($field:expr, $key:literal, $flag:expr) => {
            if let Some(v) = kv.parse_opt($key)? {
                $field = v;
            }
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    layer!(cfg.k, "k", args.k);
    layer!(cfg.batch_size, "batch_size", args.batch_size);
    layer!(cfg.drop_count, "drop", args.drop);
    layer!(cfg.batches, "batches", args.batches);
    layer!(cfg.sampler.r_min, "r_min", args.r_min);
    layer!(cfg.sampler.r_max, "r_max", args.r_max);
    layer!(cfg.warmup_fraction, "warmup", args.warmup);
    layer!(cfg.max_iters, "max_iters", args.max_iters);
    layer!(cfg.reduction, "reduction", args.reduction);
    layer!(cfg.tolerance, "tolerance", None::<f64>);
    if let Some(mode) = kv.parse_opt::<RateMode>("rate")? {
        cfg.sampler.mode = mode;
    }
    if args.fixed_rate {
        cfg.sampler.mode = RateMode::Fixed;
    }
    if let Some(b) = bool_key(&kv, "boundary")? {
        cfg.use_boundary_mask = b;
    }
    if let Some(d) = bool_key(&kv, "dropping")? {
        cfg.use_dropping = d;
    }
    if args.no_boundary {
        cfg.use_boundary_mask = false;
    }
    if args.no_drop {
        cfg.use_dropping = false;
    }
    cfg.validate()?;
    if cfg.use_dropping && cfg.drop_count * 2 > cfg.batch_size {
        eprintln!(
            "warning: dropping h = {} of every {} samples keeps only {} per batch",
            cfg.drop_count,
            cfg.batch_size,
            cfg.batch_size - cfg.drop_count
        );
    }
    Ok(cfg)
}

pub fn policy(common: &Common, flag: Option<EmptyFramePolicy>) -> Result<EmptyFramePolicy> {
    if let Some(p) = flag {
        return Ok(p);
    }
    Ok(common.file()?.parse_opt("policy")?.unwrap_or_default())
}
