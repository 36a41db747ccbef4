use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use strad::gradcheck::GradcheckOptions;
use strad::metrics::Metric;
use strad_cli::commands::{self, EvalInput};
use strad_cli::config::{self, ExperimentConfig};
use strad_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "strad",
    version,
    about = "Structure-aware reconstruction experiments"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the top-level `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test CSVs and a manifest.
    Synth(Common),
    /// Train one autoencoder per dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Score test splits with trained checkpoints.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<String>,
        /// Defaults to `<out>/<dataset>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate score files against labeled CSVs.
    Eval {
        /// Score CSV (`index,score`); repeat once per sub-dataset.
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        /// Labeled CSV matching each `--scores`, in the same order.
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MetricArg::Both)]
        metric: MetricArg,
        /// Fixed threshold; otherwise each metric uses its best-F1 threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare losses against the MSE baseline.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Worker threads; overrides `compare.jobs`.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the seven loss-component subsets.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        model_samples: usize,
        /// Window lengths, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
        lengths: Vec<usize>,
        /// Channel counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3])]
        channels: Vec<usize>,
        /// Test hook: corrupt the analytic gradient of one suite.
        #[arg(long, hide = true)]
        perturb: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Rpa,
    Pa,
    Both,
}

impl MetricArg {
    fn metrics(self) -> Vec<Metric> {
        match self {
            MetricArg::Rpa => vec![Metric::Rpa],
            MetricArg::Pa => vec![Metric::Pa],
            MetricArg::Both => vec![Metric::Rpa, Metric::Pa],
        }
    }
}

fn load(common: &Common, jobs: Option<usize>) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        cfg.compare.jobs = jobs;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    let written = match cli.command {
        Command::Synth(common) => {
            let (cfg, out) = load(&common, None)?;
            commands::synth(&cfg, &out)?
        }
        Command::Train { common, dataset } => {
            let (cfg, out) = load(&common, None)?;
            commands::train(&cfg, &out, dataset.as_deref())?
        }
        Command::Detect {
            common,
            dataset,
            checkpoint,
        } => {
            let (cfg, out) = load(&common, None)?;
            commands::detect(&cfg, &out, dataset.as_deref(), checkpoint.as_deref())?
        }
        Command::Eval {
            scores,
            labels,
            metric,
            threshold,
            label_column,
            out,
        } => {
            if scores.len() != labels.len() {
                return Err(CliError::Usage(format!(
                    "{} --scores but {} --labels",
                    scores.len(),
                    labels.len()
                )));
            }
            let inputs: Vec<EvalInput> = scores
                .into_iter()
                .zip(labels)
                .map(|(scores, labels)| EvalInput { scores, labels })
                .collect();
            commands::eval(&inputs, &metric.metrics(), threshold, &label_column, &out)?
        }
        Command::Compare { common, jobs } => {
            let (cfg, out) = load(&common, jobs)?;
            commands::compare(&cfg, &out)?
        }
        Command::Ablate { common, jobs } => {
            let (cfg, out) = load(&common, jobs)?;
            commands::ablate(&cfg, &out)?
        }
        Command::Gradcheck {
            seed,
            samples,
            model_samples,
            lengths,
            channels,
            perturb,
        } => {
            let opts = GradcheckOptions {
                seed,
                samples,
                model_samples,
                lengths,
                channels,
                perturb,
                ..GradcheckOptions::default()
            };
            let (text, _) = commands::gradcheck(&opts)?;
            print!("{text}");
            Vec::new()
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
