use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ponderlab::config::{ExperimentConfig, Method, Task};
use ponderlab::halting::TruncationMode;
use ponderlab::metrics::read_metrics_file;
use ponderlab::plot::{emit_plots, emit_sweep_plots, LabelledRun};
use ponderlab::run::{run_experiment, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};
use ponderlab::selftest::run_selftest;
use ponderlab::stepfn::{read_checkpoint, RnnStep};
use ponderlab::sweep::{plan_sweep, read_sweep_csv, run_sweep, sample_values, write_sweep_csv, SweepParam, SWEEP_FILE};
use ponderlab::tasks::{extrapolation_specs, ParityRule, ParitySpec};
use ponderlab::trainer::{evaluate, EvalHalting, RunMetrics};
use ponderlab::Exec;

/// Default output root when `PONDERLAB_OUT` is unset.
const DEFAULT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "ponderlab", version, about = "Train and compare adaptive-computation models on parity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its metrics, summary and checkpoint.
    Train(TrainArgs),
    /// Evaluate a saved run on fresh examples.
    Eval(EvalArgs),
    /// Train many runs across values of one hyperparameter and several seeds.
    Sweep(SweepArgs),
    /// Render SVG charts from run or sweep directories.
    Plot(PlotArgs),
    /// Check gradients and halting invariants; exits non-zero on failure.
    Selftest(SelftestArgs),
}

/// Experiment settings. Flags override values loaded from `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON experiment configuration to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    train_steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_examples: Option<usize>,
    /// normalize-to-one or remainder-to-last.
    #[arg(long)]
    truncation: Option<TruncationMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// plus-ones or nonzero.
    #[arg(long, value_parser = parse_rule)]
    parity_rule: Option<ParityRule>,
    #[arg(long)]
    fixed_steps: Option<usize>,
    /// Shorten PonderNet training unrolls once the halting mass passes 1 − ε.
    #[arg(long)]
    dynamic_cap: bool,
    /// Stop as soon as an evaluation reaches this MAP accuracy.
    #[arg(long)]
    stop_at_accuracy: Option<f64>,
}

fn parse_rule(s: &str) -> std::result::Result<ParityRule, String> {
    match s {
        "plus-ones" => Ok(ParityRule::PlusOnes),
        "nonzero" => Ok(ParityRule::Nonzero),
        other => Err(format!("unknown parity rule `{other}`")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(task, method, dim, hidden_size, n_max, epsilon, batch_size, lr, train_steps, eval_interval);
        set!(eval_examples, truncation, seed, parity_rule);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(lambda_p, beta, tau, output_dir, fixed_steps, stop_at_accuracy);
        if self.dynamic_cap {
            c.dynamic_cap = true;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Evaluate and sample on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Suppress per-evaluation progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory holding config.json and checkpoint.txt.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    examples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate on the training range of an extrapolation run instead.
    #[arg(long)]
    train_range: bool,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// lambda-p (PonderNet) or tau (ACT).
    #[arg(long)]
    param: SweepParam,
    /// Number of randomly drawn values.
    #[arg(long, default_value_t = 10, conflicts_with = "grid")]
    values: usize,
    /// Explicit comma-separated values instead of random draws.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Seed for drawing the values.
    #[arg(long, default_value_t = 0)]
    sweep_seed: u64,
    /// Concurrent runs (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directories, metrics.jsonl files, or sweep directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Where to write the SVGs; defaults to the single input directory, or
    /// `plots` for several inputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn output_root() -> PathBuf {
    std::env::var_os("PONDERLAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::ParityInterp => "parity-interp",
        Task::ParityExtrap => "parity-extrap",
    }
}

fn progress_line(m: &RunMetrics) -> String {
    let mut line = format!(
        "step {:>6}  acc map {:.4} sampled {:.4}  steps {:.2}  fwd {}",
        m.step, m.eval.accuracy_map, m.eval.accuracy_sampled, m.eval.mean_halt_sampled, m.forward_passes
    );
    if let Some(loss) = m.loss {
        line += &format!("  loss {loss:.4}");
    }
    if let Some(e) = &m.eval_interp {
        line += &format!("  | train-range acc {:.4} steps {:.2}", e.accuracy_map, e.mean_halt_sampled);
    }
    if let Some(f) = &m.failure {
        line += &format!("  FAILED: {f}");
    }
    line
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let mut config = args.config.resolve()?;
    config.validate()?;
    let dir = config.output_dir.clone().unwrap_or_else(|| {
        output_root().join(format!(
            "{}-{}-dim{}-seed{}",
            config.method,
            task_name(config.task),
            config.dim,
            config.seed
        ))
    });
    config.output_dir = Some(dir.clone());
    let quiet = args.quiet;
    let outcome = run_experiment(&config, exec(args.sequential), Some(&dir), |m| {
        if !quiet {
            eprintln!("{}", progress_line(m));
        }
    })?;
    println!("{}", dir.display());
    if outcome.failed {
        eprintln!("run diverged at step {}", outcome.last.step);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let config = ExperimentConfig::load(&args.run.join(CONFIG_FILE))
        .with_context(|| format!("reading {}", args.run.join(CONFIG_FILE).display()))?;
    config.validate()?;
    let ckpt = args.run.join(CHECKPOINT_FILE);
    let params = read_checkpoint(BufReader::new(
        File::open(&ckpt).with_context(|| format!("opening {}", ckpt.display()))?,
    ))?;
    let model = RnnStep::from_params(params)?;
    let spec: ParitySpec = match (config.task, args.train_range) {
        (Task::ParityInterp, false) => ParitySpec::interpolation(config.dim)?,
        (Task::ParityInterp, true) => bail!("--train-range only applies to parity-extrap runs"),
        (Task::ParityExtrap, train_range) => {
            let (train, eval) = extrapolation_specs(config.dim)?;
            if train_range {
                train
            } else {
                eval
            }
        }
    }
    .with_rule(config.parity_rule);
    let report = evaluate(
        &model,
        &EvalHalting::for_config(&config),
        &spec,
        args.examples,
        args.seed,
        exec(args.sequential),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = args.config.resolve()?;
    let root = base
        .output_dir
        .clone()
        .unwrap_or_else(|| output_root().join(format!("sweep-{}", args.param.name())));
    let values = match &args.grid {
        Some(grid) => grid.clone(),
        None => sample_values(args.param, args.values, args.sweep_seed)?,
    };
    let runs = plan_sweep(&base, args.param, &values, args.seeds, Some(&root))?;
    eprintln!("{} runs ({} values × {} seeds) into {}", runs.len(), values.len(), args.seeds, root.display());
    std::fs::create_dir_all(&root)?;
    let rows = run_sweep(runs, exec(args.sequential), args.jobs)?;
    write_sweep_csv(args.param, &rows, BufWriter::new(File::create(root.join(SWEEP_FILE))?))?;
    for path in emit_sweep_plots(args.param, &rows, &root)? {
        eprintln!("wrote {}", path.display());
    }
    println!("{}", root.display());
    Ok(ExitCode::SUCCESS)
}

fn run_label(path: &Path, config: Option<&ExperimentConfig>) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    match config {
        Some(c) if !name.contains(&c.method.to_string()) => format!("{} {name}", c.method),
        _ => name,
    }
}

fn cmd_plot(args: PlotArgs) -> Result<ExitCode> {
    let out = match (&args.out, args.inputs.as_slice()) {
        (Some(o), _) => o.clone(),
        (None, [one]) if one.is_dir() => one.clone(),
        _ => PathBuf::from("plots"),
    };
    let mut runs = Vec::new();
    let mut written = Vec::new();
    for input in &args.inputs {
        if input.is_dir() && input.join(SWEEP_FILE).is_file() {
            let (param, rows) = read_sweep_csv(BufReader::new(File::open(input.join(SWEEP_FILE))?))?;
            written.extend(emit_sweep_plots(param, &rows, &out)?);
            continue;
        }
        let (file, dir) = if input.is_dir() {
            (input.join(METRICS_FILE), input.clone())
        } else {
            (input.clone(), input.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        let log = read_metrics_file(&file).with_context(|| format!("reading {}", file.display()))?;
        runs.push(LabelledRun {
            label: run_label(&dir, log.config.as_ref()),
            records: log.records,
        });
    }
    if !runs.is_empty() {
        written.extend(emit_plots(&runs, &out)?);
    }
    for path in written {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(args: SelftestArgs) -> Result<ExitCode> {
    let report = run_selftest(args.seed)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

/// Configuration problems exit with 2, like command-line usage errors.
fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<ponderlab::Error>(),
            Some(ponderlab::Error::Config(_) | ponderlab::Error::Json(_))
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                eprintln!("run `ponderlab help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
