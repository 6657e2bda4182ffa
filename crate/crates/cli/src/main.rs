//! `flownet`: dataset generation, training, evaluation and inference.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "flownet", version, about = "Learned optical flow at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Generate(GenerateArgs),
    /// Train a network from scratch.
    Train(TrainArgs),
    /// Fine-tune a checkpoint on another dataset.
    Finetune(FinetuneArgs),
    /// Report EPE, AAE and s40+ on a dataset.
    Eval(EvalArgs),
    /// Estimate flow for one image pair.
    Infer(InferArgs),
    /// Render a .flo file with the flow color code.
    Viz(VizArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Generator config (key=value); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Model config (key=value).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Training config (key=value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Override; `model.` keys go to the model config, the rest to training.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Network checkpoint; omitted means the zero-flow baseline.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also report variational refinement (+v).
    #[arg(long)]
    pub variational: bool,
    /// Refinement config (key=value).
    #[arg(long)]
    pub var_config: Option<PathBuf>,
    /// Input upscaling; defaults to the variant's test scale.
    #[arg(long)]
    pub test_scale: Option<f64>,
    /// Refinement override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub img1: PathBuf,
    #[arg(long)]
    pub img2: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub variational: bool,
    #[arg(long)]
    pub var_config: Option<PathBuf>,
    #[arg(long)]
    pub test_scale: Option<f64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct VizArgs {
    pub flow: PathBuf,
    /// Output PNG; defaults to the input path with a .png extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Magnitude mapped to full saturation; defaults to the field maximum.
    #[arg(long)]
    pub max_magnitude: Option<f64>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Finetune(_) => "finetune",
            Command::Eval(_) => "eval",
            Command::Infer(_) => "infer",
            Command::Viz(_) => "viz",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Finetune(a) => commands::finetune(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Viz(a) => commands::viz(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for part in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&part) {
                    msg = if msg.is_empty() { part } else { format!("{msg}: {part}") };
                }
            }
            let msg = msg.replace(['\n', '\r'], " ");
            eprintln!("error: {name}: {msg}");
            ExitCode::FAILURE
        }
    }
}
