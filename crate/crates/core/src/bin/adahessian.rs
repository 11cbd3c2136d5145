//! Command-line front end: run, sweep, verify and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adahessian::harness::{
    default_out_dir, report, run_sweep, run_to_path, verify, Overrides, RunConfig, RunStatus, SweepConfig,
};
use adahessian::optim::OptimizerKind;
use adahessian::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "adahessian", version, about = "AdaHessian optimizer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one problem and write its trajectory.
    Run(RunArgs),
    /// Run a grid of configurations and write a CSV table.
    Sweep(SweepArgs),
    /// Run the property suite against the reference oracles.
    Verify {
        /// Write the JSON report here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a trajectory file (and its timing sidecar when present).
    Report { trajectory: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Hessian power.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Compute a fresh Hessian estimate every this many iterations.
    #[arg(long)]
    hessian_freq: Option<usize>,
    #[arg(long)]
    warmup: Option<u64>,
    /// Probes per Hessian estimate.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Trajectory path (default: <out-dir>/<problem>-<optimizer>-s<seed>.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory for relative and default paths.
    #[arg(long, env = "ADAHESSIAN_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            problem: self.problem.clone(),
            optimizer: self.optimizer,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            k: self.k,
            block_size: self.block_size,
            eps: self.eps,
            weight_decay: self.weight_decay,
            hessian_freq: self.hessian_freq,
            warmup: self.warmup,
            samples: self.samples,
            seed: self.seed,
            iters: self.iters,
            batch_size: self.batch_size,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in sweep: lr-robustness, block-size or frequency.
    #[arg(long)]
    preset: Option<String>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also keep every run's trajectory in this directory.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summaries serialize")
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => RunConfig::default(),
    };
    args.overrides().apply(&mut cfg);
    let out_dir = args.out_dir.clone().unwrap_or_else(default_out_dir);
    let path = cfg.resolve_out(&out_dir);
    match run_to_path(&cfg, &path) {
        Ok(out) => {
            emit(&format!("{}\n", to_json(&out.summary)));
            eprintln!("trajectory written to {}", path.display());
            if out.summary.status == RunStatus::NumericFailure {
                eprintln!("error: {}", out.summary.error.as_deref().unwrap_or("non-finite value"));
                ExitCode::from(EXIT_NUMERIC)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(&e),
    }
}

fn cmd_sweep(args: &SweepArgs) -> ExitCode {
    let loaded = match (&args.config, &args.preset) {
        (Some(p), _) => SweepConfig::load(p),
        (None, Some(name)) => SweepConfig::preset(name),
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    };
    let mut cfg = match loaded {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    let report = match run_sweep(&cfg, args.trajectories.as_deref()) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let csv = report.to_csv();
    match &args.out {
        Some(p) => {
            if let Err(e) = write_text(p, &csv) {
                return fail(&e);
            }
            eprintln!("{} cells written to {}", report.cells.len(), p.display());
        }
        None => emit(&csv),
    }
    ExitCode::SUCCESS
}

fn cmd_verify(out: Option<&Path>) -> ExitCode {
    let report = verify();
    for p in &report.properties {
        eprintln!(
            "{} {} ({:.2}s): {}",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.seconds,
            p.detail
        );
    }
    let json = to_json(&report);
    emit(&format!("{json}\n"));
    if let Some(path) = out {
        if let Err(e) = write_text(path, &json) {
            return fail(&e);
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify { out } => cmd_verify(out.as_deref()),
        Command::Report { trajectory } => match report(trajectory) {
            Ok(s) => {
                emit(&format!("{}\n", to_json(&s)));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
