use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use flowbound::ablation::{format_table, run_ablation, AblationGrid, SuiteSpec};
use flowbound::dataset::{self, FlowDataset};
use flowbound::flow_io::{
    write_atomic, write_flo, write_flow_visualization, write_label_image, write_mask_image,
};
use flowbound::metrics::label_mask;
use flowbound::synth::{parse_scene, random_scene, SyntheticSequence};
use flowbound::{
    boundary_stages, drop_hard_cases, frame_loss, masked_loss_map, miou, sample_pairs, seed,
    EmptyFramePolicy, Flow, FrameLoss, Grid, RateMode, Reduction, SamplerConfig,
};

mod config;
use config::{boundary_config, policy, train_config, BoundaryArgs, Common, TrainArgs};

#[derive(Parser)]
#[command(name = "flowbound", version, about = "Boundary-masked flow supervision for motion segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary band of a `.flo` field, as a P5 mask.
    Boundary {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the directional difference δ as the u channel of a `.flo` file.
        #[arg(long)]
        dump_delta: Option<PathBuf>,
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Masked reconstruction loss between a target and a predicted flow.
    MaskLoss {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
        /// P5 mask; defaults to the boundary band of the target.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        reduction: Option<Reduction>,
        /// Write the per-pixel loss map as the u channel of a `.flo` file.
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Drop the h hardest frames of a batch given as `frame,loss,masked_pixels` lines.
    Curate {
        losses: PathBuf,
        #[arg(long, default_value_t = 6)]
        drop: usize,
    },
    /// Print `i,r` frame pairs.
    Sample {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        r_min: usize,
        #[arg(long, default_value_t = 3)]
        r_max: usize,
        #[arg(long)]
        fixed_rate: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Render a synthetic sequence to a directory of flows and ground-truth masks.
    Synth {
        /// Scene file, or a suite file with `--scene`.
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Treat `spec` as a suite and render its scene with this index.
        #[arg(long)]
        scene: Option<usize>,
        /// Also write `r`-step flows up to this interval.
        #[arg(long, default_value_t = 3)]
        max_r: usize,
    },
    /// Train on a flow directory; writes predicted masks, a log, and a report when ground truth exists.
    Train {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        policy: Option<EmptyFramePolicy>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        common: Common,
    },
    /// mIoU of `pred_NNNN.pgm` masks against `mask_NNNN.pgm` ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        policy: Option<EmptyFramePolicy>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean mIoU of every strategy × α × d cell over a scene suite, as CSV.
    Ablate {
        suite: PathBuf,
        #[arg(long, default_value = "all")]
        strategies: String,
        #[arg(long, default_value = "pi/12")]
        alphas: String,
        #[arg(long, default_value = "7")]
        kernels: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Colour rendering of a `.flo` field (P6).
    Viz {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let input = e
                .chain()
                .find_map(|c| c.downcast_ref::<flowbound::Error>())
                .is_some_and(flowbound::Error::is_input_error);
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}

fn load_flow(path: &Path) -> Result<flowbound::FlowField64> {
    dataset::load_flow(path).with_context(|| format!("reading {}", path.display()))
}

/// δ (or any scalar field) as the u channel of a `.flo` file.
fn scalar_flo(field: &flowbound::ScalarField64) -> Result<Vec<u8>> {
    Ok(write_flo(&field.map(|&d| Flow::new(d, 0.0))?))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Boundary { input, output, dump_delta, boundary, common } => {
            let cfg = boundary_config(&boundary, &common.file()?)?;
            let stages = boundary_stages(&load_flow(&input)?, &cfg)?;
            write_atomic(&output, &write_mask_image(&stages.mask))?;
            if let Some(path) = dump_delta {
                write_atomic(&path, &scalar_flo(&stages.diff)?)?;
            }
        }
        Command::MaskLoss { target, predicted, mask, reduction, map, boundary, common } => {
            let target = load_flow(&target)?;
            let predicted = load_flow(&predicted)?;
            let mask = match mask {
                Some(p) => dataset::load_mask(&p)?,
                None => flowbound::extract_boundary_mask(&target, &boundary_config(&boundary, &common.file()?)?)?,
            };
            let loss_map = masked_loss_map(&target, &predicted, &mask)?;
            let loss = frame_loss(0, &loss_map, &mask, reduction.unwrap_or_default())?;
            if let Some(p) = map {
                write_atomic(&p, &scalar_flo(&loss_map)?)?;
            }
            println!("{}", serde_json::to_string(&loss)?);
        }
        Command::Curate { losses, drop } => {
            let text = fs::read_to_string(&losses).with_context(|| format!("reading {}", losses.display()))?;
            let batch = parse_losses(&text)?;
            let report = drop_hard_cases(&batch, drop)?;
            println!("dropped,{}", join(report.dropped.iter()));
            println!("kept,{}", join(report.kept.iter()));
        }
        Command::Sample { frames, count, r_min, r_max, fixed_rate, common } => {
            let root = common.root_seed(&common.file()?)?;
            let cfg = SamplerConfig {
                r_min,
                r_max,
                seed: seed::derive(root, "sampler"),
                mode: if fixed_rate { RateMode::Fixed } else { RateMode::Variable },
            };
            let mut out = String::from("i,r\n");
            for p in sample_pairs(frames, count, &cfg)? {
                out.push_str(&format!("{},{}\n", p.i, p.r));
            }
            print!("{out}");
        }
        Command::Synth { spec, output, scene, max_r } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let seq: SyntheticSequence<f64> = match scene {
                Some(idx) => {
                    let suite = SuiteSpec::parse(&text)?;
                    if idx >= suite.scenes {
                        bail!(flowbound::Error::Config(format!("suite has {} scenes", suite.scenes)));
                    }
                    random_scene(&suite.recipe(), suite.scene_seed(idx))?
                }
                None => {
                    let (scene, corruptions) = parse_scene(&text)?;
                    SyntheticSequence::new(scene, corruptions)?
                }
            };
            let written = dataset::write_sequence(&output, &seq, max_r)?;
            eprintln!("wrote {} files to {}", written.len(), output.display());
        }
        Command::Train { input, output, policy: policy_flag, train, common } => {
            let cfg = train_config(&train, &common)?;
            let data = FlowDataset::<f64>::load(&input)?;
            let mut cfg = cfg;
            cfg.sampler.r_max = cfg.sampler.r_max.min(data.max_complete_interval().max(cfg.sampler.r_min));
            let out = flowbound::train_sequence(&data, data.masks.as_deref(), &cfg)?;
            fs::create_dir_all(&output)?;
            for (i, labels) in out.labels.iter().enumerate() {
                write_atomic(&output.join(format!("pred_{i:04}.pgm")), &write_mask_image(&foreground(labels)))?;
                write_atomic(&output.join(format!("labels_{i:04}.ppm")), &write_label_image(labels, cfg.k))?;
            }
            write_atomic(&output.join("log.jsonl"), out.log_lines().as_bytes())?;
            let dropped: usize = out.log.iter().map(|b| b.dropped.len()).sum();
            println!("batches = {}, dropped = {dropped}", out.log.len());
            if let Some(gts) = &data.masks {
                let report = out.evaluate(gts, cfg.k, policy(&common, policy_flag)?)?;
                write_atomic(&output.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
                println!("miou = {:.4}", report.mean);
            }
        }
        Command::Eval { pred, gt, policy: policy_flag, common } => {
            let mut preds = Vec::new();
            while pred.join(format!("pred_{:04}.pgm", preds.len())).is_file() {
                preds.push(dataset::load_mask(&pred.join(format!("pred_{:04}.pgm", preds.len())))?);
            }
            if preds.is_empty() {
                bail!(flowbound::Error::Domain(format!("no pred_0000.pgm in {}", pred.display())));
            }
            let gts = (0..preds.len())
                .map(|i| dataset::load_mask(&dataset::mask_path(&gt, i)))
                .collect::<flowbound::Result<Vec<_>>>()?;
            let report = miou(&preds, &gts, policy(&common, policy_flag)?)?;
            for (i, v) in report.per_frame.iter().enumerate() {
                match v {
                    Some(v) => println!("frame {i}: {v:.4}"),
                    None => println!("frame {i}: skipped"),
                }
            }
            println!("miou = {:.4}", report.mean);
        }
        Command::Ablate { suite, strategies, alphas, kernels, output, train, common } => {
            let base = train_config(&train, &common)?;
            let text = fs::read_to_string(&suite).with_context(|| format!("reading {}", suite.display()))?;
            let scenes = SuiteSpec::parse(&text)?.build::<f64>()?;
            let grid = AblationGrid::parse(&strategies, &alphas, &kernels)?;
            let table = format_table(&run_ablation(&scenes, &base, &grid)?);
            match output {
                Some(p) => write_atomic(&p, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::Viz { input, output } => {
            write_atomic(&output, &write_flow_visualization(&load_flow(&input)?))?;
        }
    }
    Ok(())
}

fn foreground(labels: &flowbound::LabelGrid) -> flowbound::BoundaryMask {
    let bg = label_mask(labels, 0);
    Grid::from_fn(labels.shape(), |p| !bg.at(p.row, p.col)).expect("same shape")
}

fn join<'a>(xs: impl Iterator<Item = &'a usize>) -> String {
    xs.map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// `frame,loss,masked_pixels` per line; `#` comments and a header line are allowed.
fn parse_losses(text: &str) -> Result<Vec<FrameLoss<f64>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("frame") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || flowbound::Error::Spec {
            field: format!("line {}", n + 1),
            message: format!("expected `frame,loss,masked_pixels`, got `{line}`"),
        };
        if cols.len() != 3 {
            bail!(bad());
        }
        let frame = cols[0].parse().map_err(|_| bad())?;
        let loss = cols[1].parse().map_err(|_| bad())?;
        let masked = cols[2].parse().map_err(|_| bad())?;
        out.push(FrameLoss::from_value(frame, loss, masked));
    }
    Ok(out)
}
