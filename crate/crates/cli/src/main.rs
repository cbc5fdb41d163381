use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lip_cli::config::{ExperimentConfig, ExperimentKind, PruneMethod};
use lip_cli::{emit_report, load_config, run_experiment, CliError};

#[derive(Parser)]
#[command(name = "lip", version, about = "Lottery image prior experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run, overriding the config (e.g. `--seed 0,1,2`).
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Seeds run concurrently. LIP_DETERMINISTIC=1 forces 1.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the dense prior to each image.
    Fit(RunArgs),
    /// Iterative magnitude pruning on each image.
    Imp(RunArgs),
    /// Iterative magnitude pruning over all images at once.
    ImpMulti(RunArgs),
    /// Re-fit a saved ticket, possibly on another task.
    EvalTicket(RunArgs),
    /// Prune at initialization and fit.
    Prune {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        sparsity: Option<f64>,
    },
    /// Dense and sparse learning curves on clean, noisy, shuffled and noise targets.
    FourTargets(RunArgs),
    /// Tables, profiles and FFT maps for a finished run.
    Report {
        /// Run directory holding manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config whose `out` names the run directory.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Magnitude-spectrum difference of two images.
    FftDiff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Random,
    Profile,
    Snip,
    Synflow,
}

impl From<MethodArg> for PruneMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Random => PruneMethod::Random,
            MethodArg::Profile => PruneMethod::Profile,
            MethodArg::Snip => PruneMethod::Snip,
            MethodArg::Synflow => PruneMethod::Synflow,
        }
    }
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), load_config)
}

fn run(kind: ExperimentKind, args: RunArgs, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<(), CliError> {
    let mut cfg = load(args.config.as_deref())?;
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds;
    }
    tweak(&mut cfg);
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", kind.name(), &cfg.hash(kind)[..12])));
    let manifest = run_experiment(kind, &cfg, &out, args.jobs)?;
    for s in &manifest.summary {
        println!(
            "{:>8} round {:>2}: sparsity {:.3}, PSNR {:.2} ± {:.3} dB, SSIM {:.3} (n={})",
            s.method, s.round, s.sparsity.mean, s.psnr_db.mean, s.psnr_db.variance, s.ssim.mean, s.n
        );
    }
    println!("{}", out.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => run(ExperimentKind::Fit, a, |_| {}),
        Command::Imp(a) => run(ExperimentKind::Imp, a, |_| {}),
        Command::ImpMulti(a) => run(ExperimentKind::ImpMulti, a, |_| {}),
        Command::EvalTicket(a) => run(ExperimentKind::EvalTicket, a, |_| {}),
        Command::FourTargets(a) => run(ExperimentKind::FourTargets, a, |_| {}),
        Command::Prune { run: a, method, sparsity } => run(ExperimentKind::BaselinePrune, a, |cfg| {
            if let Some(m) = method {
                cfg.prune.method = m.into();
            }
            if let Some(s) = sparsity {
                cfg.prune.sparsity = s;
            }
        }),
        Command::Report { out, config } => {
            let dir = match (out, config) {
                (Some(dir), _) => dir,
                (None, Some(c)) => load_config(&c)?
                    .out
                    .ok_or_else(|| CliError::Usage(format!("{} has no `out`; pass --out", c.display())))?,
                (None, None) => return Err(CliError::Usage("report needs --out or --config".into())),
            };
            println!("{}", emit_report(&dir)?.display());
            Ok(())
        }
        Command::FftDiff { a, b, out } => lip_cli::report::fft_diff_files(&a, &b, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::ConfigParse { .. } | CliError::ConfigField { .. } | CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
