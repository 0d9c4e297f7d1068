mod config;
mod error;
mod eval;
mod infer;
mod learn;
mod output;
mod synth;
mod visual;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jointseg::grid::LabelSpace;
use jointseg::learning::BoostParams;
use jointseg::synth::SceneConfig;

use crate::config::parse_list;
use crate::error::{config as config_error, CliResult};

#[derive(Parser)]
#[command(name = "jointseg", version, about = "Joint object and motion segmentation with a dense two-layer CRF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnMode {
    Boost,
    Cooccurrence,
}

#[derive(Subcommand)]
enum Command {
    /// Segment frame 0 of a three-frame bundle described by a key=value config.
    Infer {
        config: PathBuf,
        /// Override a config entry.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write a synthetic scene with ground truth and a ready-made infer config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        /// Share of unary blocks whose preferred label is wrong.
        #[arg(long, default_value_t = 0.1)]
        unary_noise: f64,
        #[arg(long, default_value_t = 4)]
        noise_block: usize,
        #[arg(long, default_value_t = 0.7)]
        unary_confidence: f64,
        /// Standard deviation of Gaussian flow noise, pixels.
        #[arg(long, default_value_t = 0.0)]
        flow_noise: f64,
        /// Box velocity `x,y,z` in meters per frame.
        #[arg(long, default_value = "1,0,0")]
        box_velocity: String,
        /// Box rectangle `top,left,height,width` in pixels of frame 0.
        #[arg(long)]
        box_rect: Option<String>,
        #[arg(long, default_value_t = 12.0)]
        box_depth: f64,
    },
    /// Learn the object/motion correlation matrix as CSV.
    Learn {
        #[arg(long, value_enum)]
        mode: LearnMode,
        /// Training CSV (boost mode).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory of ground-truth label maps (cooccurrence mode); repeatable.
        #[arg(long)]
        gt: Vec<PathBuf>,
        /// Comma-separated object label names.
        #[arg(long)]
        labels: String,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        feature_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-class IoU for predicted label maps against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        labels: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn label_space(text: &str) -> CliResult<LabelSpace> {
    LabelSpace::new(parse_list(text)).map_err(|e| config_error(format!("labels: {e}")))
}

fn numbers<const N: usize>(name: &str, text: &str) -> CliResult<[f64; N]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_error(format!("{name}: cannot parse {text:?}")))?;
    values
        .try_into()
        .map_err(|_| config_error(format!("{name}: expected {N} comma-separated values, got {text:?}")))
}

fn scene_config(cmd: &Command) -> CliResult<SceneConfig> {
    let Command::Synth {
        seed,
        height,
        width,
        unary_noise,
        noise_block,
        unary_confidence,
        flow_noise,
        box_velocity,
        box_rect,
        box_depth,
        ..
    } = cmd
    else {
        unreachable!("called for synth only")
    };
    let base = SceneConfig::with_size(*height, *width).map_err(|e| config_error(e.to_string()))?;
    let box_rect = match box_rect {
        Some(text) => {
            let [t, l, h, w] = numbers::<4>("box-rect", text)?;
            if [t, l, h, w].iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                return Err(config_error("box-rect: expected non-negative integers"));
            }
            (t as usize, l as usize, h as usize, w as usize)
        }
        None => base.box_rect,
    };
    Ok(SceneConfig {
        seed: *seed,
        box_rect,
        box_depth: *box_depth,
        box_velocity: numbers::<3>("box-velocity", box_velocity)?,
        unary_noise: *unary_noise,
        noise_block: *noise_block,
        unary_confidence: *unary_confidence,
        flow_noise: *flow_noise,
        ..base
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Infer { config, overrides } => infer::run(config, overrides),
        cmd @ Command::Synth { out, .. } => synth::run(&scene_config(cmd)?, out),
        Command::Learn {
            mode,
            data,
            gt,
            labels,
            rounds,
            seed,
            feature_fraction,
            out,
        } => {
            let labels = label_space(labels)?;
            match mode {
                LearnMode::Boost => {
                    let data = data.as_ref().ok_or_else(|| config_error("boost mode needs --data"))?;
                    let params = BoostParams {
                        rounds: *rounds,
                        seed: *seed,
                        feature_fraction: *feature_fraction,
                    };
                    learn::boost(data, &labels, &params, out)
                }
                LearnMode::Cooccurrence => {
                    if gt.is_empty() {
                        return Err(config_error("cooccurrence mode needs at least one --gt directory"));
                    }
                    learn::cooccurrence(gt, &labels, out)
                }
            }
        }
        Command::Eval { pred, gt, labels, out } => eval::run(pred, gt, &label_space(labels)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jointseg: {e}");
            ExitCode::from(e.code())
        }
    }
}
