//! Batch front-end: loads a scenario, runs it for a number of steps with a
//! seed, and writes fundamental-diagram samples, per-class speed tables,
//! space-utilisation heatmaps and optional trajectories.
//!
//! Exit codes: 1 for unreadable or unparsable scenarios, 2 for scenarios
//! that parse but fail validation, 3 for internal runtime inconsistencies.

use clap::{Args, Parser, Subcommand};
use pedsim_core::engine::EngineError;
use pedsim_core::metrics::{
    class_rows_from_stats, write_classes_csv, write_fd_csv_rows, FdSample, MetricsAccumulator,
    MetricsConfig, RunningStat, TrajectoryWriter,
};
use pedsim_core::rational::Rational;
use pedsim_core::scenario::ScenarioError;
use pedsim_core::{ScenarioSpec, World64};
use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "pedsim", version, about = "Discrete pedestrian simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metric files to the output directory.
    Run(RunArgs),
    /// Run a scenario across a population ladder, concatenating the
    /// fundamental-diagram samples into one fd.csv.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file to simulate.
    #[arg(long)]
    scenario: PathBuf,
    /// Number of simulation steps.
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    /// RNG seed; defaults to the scenario's rng_seed parameter.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for all output files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Also write per-step trajectories.
    #[arg(long)]
    trajectories: bool,
    /// Fraction of steps discarded before measurement starts.
    #[arg(long, default_value_t = 0.1)]
    warmup_frac: f64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the total block-generated population.
    #[arg(long)]
    agents: Option<u32>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Population ladder, e.g. `10,25,50,100`.
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<u32>,
}

enum CliError {
    Input(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Syntax { .. } => CliError::Input(e.to_string()),
            ScenarioError::Semantic { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Validation(_) => CliError::Validation(e.to_string()),
            EngineError::Inconsistent { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
    };
    if let Err(e) = result {
        eprintln!("pedsim: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn load_spec(path: &Path) -> Result<ScenarioSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let spec = ScenarioSpec::parse(&text)?;
    let violations = spec.validate_slope_pairs()?;
    if !violations.is_empty() {
        let msgs: Vec<String> = violations
            .iter()
            .map(|v| format!("slope area {}: {}", v.area, v.message))
            .collect();
        return Err(CliError::Validation(msgs.join("; ")));
    }
    Ok(spec)
}

struct RunOutput {
    fd: Vec<FdSample>,
    class_stats: BTreeMap<(Rational, i64), RunningStat>,
    bin_width: f64,
    metrics: MetricsAccumulator,
    generated: u64,
    absorbed: u64,
    wall_seconds: f64,
    steps: u64,
}

fn simulate(
    spec: ScenarioSpec,
    seed: u64,
    steps: u64,
    warmup_frac: f64,
    trajectory_path: Option<&Path>,
) -> Result<RunOutput, CliError> {
    let warmup = (steps as f64 * warmup_frac).floor() as u64;
    let mut world = World64::new(spec, seed)?;
    let mut metrics = MetricsAccumulator::new(world.spec(), MetricsConfig::for_spec(world.spec(), warmup));
    let mut trajectories = match trajectory_path {
        Some(path) => Some(TrajectoryWriter::create(path)?),
        None => None,
    };
    let start = Instant::now();
    for _ in 0..steps {
        world.step()?;
        metrics.observe(&world);
        if let Some(w) = trajectories.as_mut() {
            w.record(&world)?;
        }
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    if let Some(w) = trajectories {
        w.finish()?;
    }
    Ok(RunOutput {
        fd: metrics.fd_samples().to_vec(),
        class_stats: metrics.class_stats_by_bin(),
        bin_width: metrics.class_bin_width(),
        generated: world.stats().generated,
        absorbed: world.stats().absorbed,
        metrics,
        wall_seconds,
        steps,
    })
}

fn summary(out: &RunOutput) {
    println!(
        "steps={} generated={} absorbed={} wall_clock={:.2}s steps_per_second={:.0}",
        out.steps,
        out.generated,
        out.absorbed,
        out.wall_seconds,
        out.steps as f64 / out.wall_seconds.max(1e-9),
    );
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut spec = load_spec(&args.common.scenario)?;
    if let Some(total) = args.agents {
        spec.override_population(total)
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let seed = args.common.seed.unwrap_or(spec.params.rng_seed);
    std::fs::create_dir_all(&args.common.out_dir)?;
    let trajectory_path = args.common.trajectories.then(|| args.common.out_dir.join("trajectories.csv"));
    let out = simulate(
        spec,
        seed,
        args.common.steps,
        args.common.warmup_frac,
        trajectory_path.as_deref(),
    )?;
    out.metrics.write_fd_csv(&args.common.out_dir.join("fd.csv"))?;
    out.metrics.write_classes_csv(&args.common.out_dir.join("classes.csv"))?;
    out.metrics.write_cmd_pgm(&args.common.out_dir.join("cmd.pgm"))?;
    summary(&out);
    Ok(())
}

fn sweep_thread_cap(rungs: usize) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("PEDSIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(rungs).max(1)
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = load_spec(&args.common.scenario)?;
    let seed = args.common.seed.unwrap_or(base.params.rng_seed);
    std::fs::create_dir_all(&args.common.out_dir)?;

    // Validate every rung before spending any simulation time.
    let mut rung_specs = Vec::new();
    for &agents in &args.agents {
        let mut spec = base.clone();
        spec.override_population(agents)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        rung_specs.push((agents, spec));
    }

    let queue: Arc<Mutex<VecDeque<usize>>> =
        Arc::new(Mutex::new((0..rung_specs.len()).collect()));
    let results: Arc<Mutex<Vec<Option<Result<RunOutput, String>>>>> =
        Arc::new(Mutex::new((0..rung_specs.len()).map(|_| None).collect()));
    let rung_specs = Arc::new(rung_specs);
    let threads = sweep_thread_cap(rung_specs.len());
    let steps = args.common.steps;
    let warmup_frac = args.common.warmup_frac;
    let out_dir = args.common.out_dir.clone();
    let write_trajectories = args.common.trajectories;

    std::thread::scope(|scope| {
        for _ in 0..threads {
            let queue = Arc::clone(&queue);
            let results = Arc::clone(&results);
            let rung_specs = Arc::clone(&rung_specs);
            let out_dir = out_dir.clone();
            scope.spawn(move || loop {
                let index = match queue.lock().unwrap().pop_front() {
                    Some(i) => i,
                    None => break,
                };
                let (agents, spec) = &rung_specs[index];
                let trajectory_path =
                    write_trajectories.then(|| out_dir.join(format!("trajectories_{agents}.csv")));
                let outcome = simulate(spec.clone(), seed, steps, warmup_frac, trajectory_path.as_deref())
                    .map_err(|e| e.message().to_string());
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });

    let results = Arc::try_unwrap(results).ok().expect("threads joined").into_inner().unwrap();
    let mut fd_rows: Vec<FdSample> = Vec::new();
    let mut class_stats: BTreeMap<(Rational, i64), RunningStat> = BTreeMap::new();
    let mut bin_width = 0.25;
    let mut total_generated = 0;
    let mut total_absorbed = 0;
    let mut total_wall: f64 = 0.0;
    for (index, outcome) in results.into_iter().enumerate() {
        let (agents, _) = rung_specs[index];
        let out = outcome
            .expect("every rung was queued")
            .map_err(CliError::Runtime)?;
        fd_rows.extend_from_slice(&out.fd);
        for (key, stat) in &out.class_stats {
            class_stats.entry(*key).or_default().merge(stat);
        }
        bin_width = out.bin_width;
        total_generated += out.generated;
        total_absorbed += out.absorbed;
        total_wall += out.wall_seconds;
        out.metrics.write_cmd_pgm(&out_dir.join(format!("cmd_{agents}.pgm")))?;
    }
    write_fd_csv_rows(&out_dir.join("fd.csv"), &fd_rows)?;
    write_classes_csv(&out_dir.join("classes.csv"), &class_rows_from_stats(&class_stats, bin_width))?;
    println!(
        "rungs={} steps_per_rung={} generated={} absorbed={} wall_clock={:.2}s",
        rung_specs.len(),
        steps,
        total_generated,
        total_absorbed,
        total_wall,
    );
    Ok(())
}
