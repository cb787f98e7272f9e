//! `navrl`: train, evaluate, export and serve navigation policies.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use navrl::baseline::BaselineConfig;
use navrl::bridge::{self, DeployedPolicy, Endpoint, ServeOptions};
use navrl::config::{parse_config_strs, TaskConfig, TrainConfig, WorldRef};
use navrl::env::TaskSettings;
use navrl::eval::{self, BaselineController, Controller, PolicyController, TrialReport};
use navrl::policy_io;
use navrl::world::WorldSpec;
use navrl::Error;

#[derive(Parser, Debug)]
#[command(name = "navrl", version, about = "Reinforcement-learning local navigation for differential-drive robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy with PPO and write stats, checkpoints and the final policy.
    Train(TrainArgs),
    /// Evaluate an exported policy over seeded trials.
    Eval(EvalArgs),
    /// Run the RL policy or the map-based baseline with identical reporting.
    Benchmark(BenchmarkArgs),
    /// Verify a policy or checkpoint and write it under a new name.
    Export(ExportArgs),
    /// Print a policy manifest after verifying its weights.
    Inspect(InspectArgs),
    /// Serve a policy over the line-delimited JSON protocol.
    Serve(ServeArgs),
    /// Generate a random static-obstacle world file.
    MakeWorld(MakeWorldArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Task configuration (JSON). Defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    task: Option<PathBuf>,
    /// Dotted-key override such as `ppo.learning_rate=1e-4` or
    /// `task.world=empty`. Repeatable; applied after the files.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training configuration (JSON). Defaults apply when omitted.
    #[arg(long = "train", value_name = "FILE")]
    train_file: Option<PathBuf>,
    /// Output directory (overrides `out_dir` from the training config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print nothing while training.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug, Clone)]
struct TrialArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// World preset (empty, static, dynamic, crossing) or world file;
    /// replaces the task's world.
    #[arg(long, value_name = "NAME|FILE")]
    world: Option<String>,
    /// Number of trials.
    #[arg(long, default_value_t = 30)]
    trials: usize,
    /// Seed of the first trial; trial k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the task's observation and action noise during evaluation.
    #[arg(long)]
    noise: bool,
    /// Output directory for the report, summary, curves and trajectories.
    #[arg(long, value_name = "DIR", default_value = "eval_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Policy manifest (`*.manifest.json`).
    #[arg(long, value_name = "FILE")]
    policy: PathBuf,
    #[command(flatten)]
    trials: TrialArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Planner {
    Rl,
    Baseline,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Controller to run.
    #[arg(long, value_enum)]
    planner: Planner,
    /// Policy manifest; required for `--planner rl`.
    #[arg(long, value_name = "FILE")]
    policy: Option<PathBuf>,
    /// Baseline grid resolution in meters.
    #[arg(long, default_value_t = 0.1)]
    resolution: f64,
    /// Baseline obstacle inflation in meters.
    #[arg(long, default_value_t = 0.35)]
    inflation: f64,
    #[command(flatten)]
    trials: TrialArgs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Policy or checkpoint manifest to export.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Destination directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Base name of the written files.
    #[arg(long, default_value = "policy")]
    name: String,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Policy manifest.
    #[arg(long, value_name = "FILE")]
    policy: PathBuf,
    /// Print the manifest as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Policy manifest.
    #[arg(long, value_name = "FILE")]
    policy: PathBuf,
    /// Listen on this TCP address or port instead of stdin/stdout.
    #[arg(long, value_name = "ADDR|PORT")]
    tcp: Option<String>,
    /// Maximum odometry age in seconds for a command to be issued.
    #[arg(long, default_value_t = bridge::DEFAULT_STALENESS_LIMIT)]
    staleness: f64,
    /// Exit after this many TCP sessions.
    #[arg(long)]
    max_sessions: Option<usize>,
}

#[derive(Args, Debug)]
struct MakeWorldArgs {
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of static obstacles.
    #[arg(long, default_value_t = 6)]
    obstacles: usize,
    /// Half side length of the square arena in meters.
    #[arg(long, default_value_t = 4.0)]
    half_extent: f64,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// An error together with the exit code it maps to.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Export(a) => export(a),
        Command::Inspect(a) => inspect(a),
        Command::Serve(a) => serve(a),
        Command::MakeWorld(a) => make_world(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn read_or_empty(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok("{}".into()),
    }
}

/// Parses both configs; world files resolve relative to the task file.
fn load_configs(cfg: &ConfigArgs, train_file: Option<&Path>) -> CliResult<(TaskConfig, TrainConfig, PathBuf)> {
    let task_text = read_or_empty(cfg.task.as_deref())?;
    let train_text = read_or_empty(train_file)?;
    let (task, train) = parse_config_strs(&task_text, &train_text, &cfg.overrides).map_err(usage)?;
    let base = cfg
        .task
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    task.settings().map_err(usage)?;
    task.world.resolve(&base).map_err(usage)?;
    task.stages(&base).map_err(usage)?;
    Ok((task, train, base))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let (task, train_cfg, base) = load_configs(&a.config, a.train_file.as_deref())?;
    let out = a.out.unwrap_or_else(|| train_cfg.out_dir.clone());
    let quiet = a.quiet;
    let artifacts = navrl::ppo::train(&task, &train_cfg, &base, &out, |s| {
        if !quiet && (s.iteration % 10 == 0 || s.iteration == 1) {
            eprintln!(
                "iter {:5} stage {} success {:.2} return {:8.2} length {:6.1} kl {:.4}",
                s.iteration, s.stage, s.success_rate, s.mean_return, s.mean_length, s.update.approx_kl
            );
        }
    })
    .map_err(runtime)?;
    println!("{}", artifacts.policy_manifest.display());
    Ok(())
}

fn trial_setup(t: &TrialArgs) -> CliResult<(TaskSettings, WorldSpec, TaskConfig)> {
    let (mut task, _, base) = load_configs(&t.config, None)?;
    if let Some(w) = &t.world {
        task.world = if WorldSpec::preset(w).is_some() {
            WorldRef::Preset(w.clone())
        } else {
            WorldRef::File { file: std::env::current_dir().map_err(runtime)?.join(w) }
        };
    }
    let spec = task.world.resolve(&base).map_err(usage)?;
    let mut settings = task.settings().map_err(usage)?;
    if !t.noise {
        settings.noise.enabled = false;
    }
    Ok((settings, spec, task))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Report, summary, distance curve, trajectories and run manifest.
fn write_report(report: &TrialReport, t: &TrialArgs, task: &TaskConfig, extra: serde_json::Value) -> CliResult<()> {
    std::fs::create_dir_all(&t.out).map_err(|e| runtime(format!("{}: {e}", t.out.display())))?;
    let summary = eval::summarize(&[report]).map_err(runtime)?;
    write_file(&t.out.join("summary.csv"), &summary)?;
    write_file(&t.out.join("report.json"), &report.to_json_string())?;
    let curve = eval::distance_curve(&report.records, 1.0);
    write_file(&t.out.join("distance_curve.csv"), &eval::curve_csv(&curve))?;
    let success_curve = eval::distance_curve(report.records.iter().filter(|r| r.success()), 1.0);
    write_file(&t.out.join("distance_curve_success.csv"), &eval::curve_csv(&success_curve))?;
    eval::export_trajectories(report, &t.out.join("trajectories")).map_err(runtime)?;
    let manifest = serde_json::json!({
        "navrl_version": env!("CARGO_PKG_VERSION"),
        "controller": report.controller,
        "trials": t.trials,
        "base_seed": t.seed,
        "noise": t.noise,
        "task": task,
        "world": report.world,
        "extra": extra,
    });
    write_file(&t.out.join("run.json"), &serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    print!("{summary}");
    Ok(())
}

fn run(controller: &mut dyn Controller, settings: &TaskSettings, spec: &WorldSpec, t: &TrialArgs) -> CliResult<TrialReport> {
    if t.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    eval::run_trials(controller, settings, spec, t.trials, t.seed).map_err(runtime)
}

/// Loads a policy and makes the simulated lidar and robot match the ones
/// it was exported with.
fn load_controller(path: &Path, settings: &mut TaskSettings) -> CliResult<PolicyController> {
    let c = PolicyController::load(path).map_err(runtime)?;
    settings.lidar = c.manifest().obs.lidar.clone();
    settings.robot = c.manifest().robot.clone();
    Ok(c)
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let (mut settings, spec, task) = trial_setup(&a.trials)?;
    let mut c = load_controller(&a.policy, &mut settings)?;
    let report = run(&mut c, &settings, &spec, &a.trials)?;
    write_report(&report, &a.trials, &task, serde_json::json!({ "policy": a.policy }))
}

fn benchmark(a: BenchmarkArgs) -> CliResult<()> {
    let (mut settings, spec, task) = trial_setup(&a.trials)?;
    let report = match a.planner {
        Planner::Rl => {
            let path = a.policy.as_deref().ok_or_else(|| usage("--planner rl needs --policy"))?;
            let mut c = load_controller(path, &mut settings)?;
            run(&mut c, &settings, &spec, &a.trials)?
        }
        Planner::Baseline => {
            if !(a.resolution > 0.0 && a.inflation >= 0.0) {
                return Err(usage("--resolution must be positive and --inflation non-negative"));
            }
            let cfg = BaselineConfig { resolution: a.resolution, inflation: a.inflation, ..BaselineConfig::default() };
            let mut c = BaselineController::new(cfg, &settings);
            run(&mut c, &settings, &spec, &a.trials)?
        }
    };
    let extra = serde_json::json!({
        "planner": format!("{:?}", a.planner).to_lowercase(),
        "policy": a.policy,
        "resolution": a.resolution,
        "inflation": a.inflation,
    });
    write_report(&report, &a.trials, &task, extra)
}

fn export(a: ExportArgs) -> CliResult<()> {
    let (w, m) = policy_io::load_policy(&a.checkpoint).map_err(runtime)?;
    let path = policy_io::write_policy(&w, &m, &a.out, &a.name).map_err(runtime)?;
    println!("{}", path.display());
    Ok(())
}

fn inspect(a: InspectArgs) -> CliResult<()> {
    let (w, m) = policy_io::load_policy(&a.policy).map_err(runtime)?;
    if a.json {
        println!("{}", m.to_json_string());
        return Ok(());
    }
    let n = &m.network;
    println!("format_version  {}", m.format_version);
    println!(
        "network         input {} hidden {:?} {} action {}",
        n.input_dim,
        n.hidden,
        if n.recurrent { format!("lstm {}", n.recurrent_units) } else { "feed-forward".into() },
        n.action_dim
    );
    println!("parameters      {}", w.num_params());
    println!("robot           {} v {:?} w {:?}", m.robot.name, m.robot.v_range, m.robot.w_range);
    println!(
        "lidar           {} beams [{}, {}] m",
        m.obs.lidar.beam_count, m.obs.lidar.min_range, m.obs.lidar.max_range
    );
    println!("goal            radius {} m, distance scale {}", m.goal_radius, m.obs.goal_dist_scale);
    println!("logstd          {:?}", w.logstd());
    println!("blob            {} ({} bytes, crc32 {:#010x}, verified)", m.blob_file, m.blob_bytes, m.checksum);
    for t in &m.tensors {
        println!("  {:<18} {:?}", t.name, t.shape);
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    if !(a.staleness.is_finite() && a.staleness > 0.0) {
        return Err(usage("--staleness must be positive"));
    }
    let policy = DeployedPolicy::load(&a.policy).map_err(runtime)?;
    let endpoint = match a.tcp {
        // a bare port listens on all interfaces
        Some(p) if p.parse::<u16>().is_ok() => Endpoint::Tcp(format!("0.0.0.0:{p}")),
        Some(addr) => Endpoint::Tcp(addr),
        None => Endpoint::Stdio,
    };
    let opts = ServeOptions { staleness_limit: a.staleness, max_sessions: a.max_sessions, ..ServeOptions::default() };
    bridge::serve(policy, &endpoint, &opts).map_err(runtime)
}

fn make_world(a: MakeWorldArgs) -> CliResult<()> {
    let spec = WorldSpec::generate(a.half_extent, a.obstacles, a.seed).map_err(|e| match e {
        Error::InvalidSpec(_) => usage(e),
        other => runtime(other),
    })?;
    match a.out {
        Some(path) => spec.save(&path).map_err(runtime),
        None => {
            println!("{}", spec.to_json_string());
            Ok(())
        }
    }
}
