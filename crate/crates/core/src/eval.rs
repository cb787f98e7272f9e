//! Repeated-trial evaluation: per-trial metrics, aggregates, distance
//! curves and trajectory logs.
//!
//! Trial `k` of a run uses seed `base_seed + k` for everything random in
//! it (world build, spawn, goal, noise), so reports are reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineConfig, BaselinePlanner, DwaInput};
use crate::env::{apply_action_noise, perturb_ranges, reset, step_env, Cause, TaskSettings};
use crate::nn::{HiddenState, PolicyWeights};
use crate::policy_io::{self, PolicyManifest};
use crate::robot::{Action, Pose};
use crate::world::{scan, Point, World, WorldSpec};
use crate::{rng_from_seed, Error, Result};

/// What a controller gets to see each control period. `ranges` are the
/// sensed (possibly noisy) lidar ranges in meters.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub ranges: &'a [f64],
    pub pose: Pose,
    pub goal: Point,
    pub prev_action: Action,
    pub dt: f64,
}

/// A closed-loop velocity controller driven by [`run_trials`].
pub trait Controller {
    fn id(&self) -> String;

    /// Called once per episode before the first [`Controller::act`].
    /// `world` is the freshly built arena.
    fn begin_episode(&mut self, world: &World, pose: Pose, goal: Point) -> Result<()>;

    fn act(&mut self, input: &ControlInput<'_>) -> Result<Action>;
}

/// Deployed policy: manifest observation constants and deterministic mean
/// actions, exactly as the bridge runs it.
#[derive(Debug, Clone)]
pub struct PolicyController {
    weights: PolicyWeights,
    manifest: PolicyManifest,
    hidden: HiddenState,
    label: String,
}

impl PolicyController {
    pub fn new(weights: PolicyWeights, manifest: PolicyManifest) -> Self {
        let hidden = HiddenState::zeros(weights.shape().state_units());
        let label = if weights.shape().recurrent { "rl-lstm" } else { "rl-mlp" };
        Self { weights, manifest, hidden, label: label.into() }
    }

    /// Wraps in-memory training weights as if they had been exported.
    pub fn from_training(weights: PolicyWeights, settings: &TaskSettings, world: &WorldSpec) -> Result<Self> {
        let (manifest, _) = policy_io::encode(&weights, settings, world, "policy.weights.bin")?;
        Ok(Self::new(weights, manifest))
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let (w, m) = policy_io::load_policy(manifest_path)?;
        Ok(Self::new(w, m))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn manifest(&self) -> &PolicyManifest {
        &self.manifest
    }
}

impl Controller for PolicyController {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn begin_episode(&mut self, _world: &World, _pose: Pose, _goal: Point) -> Result<()> {
        self.hidden = HiddenState::zeros(self.weights.shape().state_units());
        Ok(())
    }

    fn act(&mut self, input: &ControlInput<'_>) -> Result<Action> {
        let (a, h) = policy_io::infer(
            &self.weights,
            &self.manifest,
            input.ranges,
            &input.pose,
            input.goal,
            input.prev_action,
            &self.hidden,
        )?;
        self.hidden = h;
        Ok(a)
    }
}

/// Static-map A* plus dynamic-window tracking.
#[derive(Debug, Clone)]
pub struct BaselineController {
    planner: BaselinePlanner,
    settings: TaskSettings,
}

impl BaselineController {
    pub fn new(cfg: BaselineConfig, settings: &TaskSettings) -> Self {
        Self { planner: BaselinePlanner::new(cfg), settings: settings.clone() }
    }

    pub fn planner(&self) -> &BaselinePlanner {
        &self.planner
    }
}

impl Controller for BaselineController {
    fn id(&self) -> String {
        "baseline".into()
    }

    fn begin_episode(&mut self, world: &World, _pose: Pose, goal: Point) -> Result<()> {
        self.planner.begin(world, goal);
        Ok(())
    }

    fn act(&mut self, input: &ControlInput<'_>) -> Result<Action> {
        let d = DwaInput {
            pose: input.pose,
            ranges: input.ranges,
            lidar: &self.settings.lidar,
            robot: &self.settings.robot,
        };
        Ok(self.planner.act(&d, input.dt).action)
    }
}

/// One logged control period. Row 0 is the spawn state with a zero command;
/// row `k` holds the command applied during step `k` and the pose after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub w: f64,
    pub goal_dist: f64,
    pub scan_min: f64,
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,yaw,v,w,goal_dist,scan_min";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub cause: Cause,
    pub steps: usize,
    pub task_time: f64,
    /// Smallest true lidar range over the whole episode, spawn included.
    pub min_lidar_range: f64,
    /// Arc length over task time.
    pub avg_linear_vel: f64,
    pub path_length: f64,
    pub initial_goal_dist: f64,
    pub final_goal_dist: f64,
    pub episode_return: f64,
    pub goal: Point,
    pub trajectory: Vec<TrajectoryRow>,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.cause == Cause::Goal
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub success_rate: f64,
    pub task_time: MeanStd,
    pub min_lidar_range: MeanStd,
    pub avg_linear_vel: MeanStd,
    pub dist_to_target: MeanStd,
}

impl Aggregate {
    /// Aggregate over `records`; success rate counts `cause = goal` only.
    pub fn of<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let rs: Vec<&TrialRecord> = records.into_iter().collect();
        let col = |f: fn(&TrialRecord) -> f64| MeanStd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let successes = rs.iter().filter(|r| r.success()).count();
        Self {
            n: rs.len(),
            success_rate: if rs.is_empty() { f64::NAN } else { successes as f64 / rs.len() as f64 },
            task_time: col(|r| r.task_time),
            min_lidar_range: col(|r| r.min_lidar_range),
            avg_linear_vel: col(|r| r.avg_linear_vel),
            dist_to_target: col(|r| r.final_goal_dist),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub controller: String,
    pub world: WorldSpec,
    pub dt: f64,
    pub n_trials: usize,
    pub base_seed: u64,
    pub records: Vec<TrialRecord>,
    /// Over every trial.
    pub aggregate: Aggregate,
    /// Over successful trials only.
    pub aggregate_success: Aggregate,
}

impl TrialReport {
    pub fn from_records(controller: String, world: WorldSpec, dt: f64, base_seed: u64, records: Vec<TrialRecord>) -> Self {
        let aggregate = Aggregate::of(&records);
        let aggregate_success = Aggregate::of(records.iter().filter(|r| r.success()));
        Self { controller, world, dt, n_trials: records.len(), base_seed, records, aggregate, aggregate_success }
    }

    pub fn success_rate(&self) -> f64 {
        self.aggregate.success_rate
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs one episode with seed `seed`.
pub fn run_trial(
    controller: &mut dyn Controller,
    settings: &TaskSettings,
    spec: &WorldSpec,
    seed: u64,
) -> Result<TrialRecord> {
    let mut rng = rng_from_seed(seed);
    let (mut state, _) = reset(settings, spec, &mut rng)?;
    let clean = scan(&state.world, &state.pose, &settings.lidar);
    let mut scan_min = clean.min();
    let mut sensed = clean.ranges;
    if settings.noise.enabled {
        perturb_ranges(&mut sensed, settings.noise.obs_lidar_sigma, &settings.lidar, &mut rng);
    }
    controller.begin_episode(&state.world, state.pose, state.goal)?;
    let initial_goal_dist = state.goal_dist();
    let mut trajectory = vec![TrajectoryRow {
        t: 0.0,
        x: state.pose.x,
        y: state.pose.y,
        yaw: state.pose.yaw,
        v: 0.0,
        w: 0.0,
        goal_dist: initial_goal_dist,
        scan_min,
    }];
    let mut min_lidar = scan_min;
    let mut path_length = 0.0;
    let mut episode_return = 0.0;
    let cause = loop {
        let input = ControlInput {
            ranges: &sensed,
            pose: state.pose,
            goal: state.goal,
            prev_action: state.prev_action,
            dt: settings.dt,
        };
        let raw = controller.act(&input)?;
        let a = clamp_to_profile(raw, settings);
        let a = apply_action_noise(a, &settings.noise, &settings.robot, &mut rng);
        let t = step_env(&state, a, settings, &mut rng);
        path_length += a.v.abs() * settings.dt;
        episode_return += t.reward.total;
        scan_min = t.scan_min;
        min_lidar = min_lidar.min(scan_min);
        state = t.state;
        sensed = t.sensed.ranges;
        trajectory.push(TrajectoryRow {
            t: state.step_count as f64 * settings.dt,
            x: state.pose.x,
            y: state.pose.y,
            yaw: state.pose.yaw,
            v: a.v,
            w: a.w,
            goal_dist: state.goal_dist(),
            scan_min,
        });
        if t.reward.cause.is_terminal() {
            break t.reward.cause;
        }
    };
    let steps = state.step_count;
    let task_time = steps as f64 * settings.dt;
    Ok(TrialRecord {
        seed,
        cause,
        steps,
        task_time,
        min_lidar_range: min_lidar,
        avg_linear_vel: path_length / task_time,
        path_length,
        initial_goal_dist,
        final_goal_dist: state.goal_dist(),
        episode_return,
        goal: state.goal,
        trajectory,
    })
}

fn clamp_to_profile(a: Action, settings: &TaskSettings) -> Action {
    let [v0, v1] = settings.robot.v_range;
    let [w0, w1] = settings.robot.w_range;
    let fix = |x: f64, lo: f64, hi: f64| if x.is_finite() { x.clamp(lo, hi) } else { lo.max(0.0).min(hi) };
    Action::new(fix(a.v, v0, v1), fix(a.w, w0, w1))
}

/// `n` episodes with seeds `base_seed..base_seed + n`, gathered in seed
/// order.
pub fn run_trials(
    controller: &mut dyn Controller,
    settings: &TaskSettings,
    spec: &WorldSpec,
    n: usize,
    base_seed: u64,
) -> Result<TrialReport> {
    spec.validate()?;
    let records = (0..n as u64)
        .map(|k| run_trial(controller, settings, spec, base_seed + k))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport::from_records(controller.id(), spec.clone(), settings.dt, base_seed, records))
}

pub const SUMMARY_HEADER: &str = "controller,subset,n,success_rate,task_time_s,task_time_std_s,\
min_lidar_range_m,min_lidar_range_std_m,avg_linear_vel_mps,avg_linear_vel_std_mps,\
dist_to_target_m,dist_to_target_std_m";

fn summary_row(out: &mut String, controller: &str, subset: &str, a: &Aggregate) {
    let _ = writeln!(
        out,
        "{controller},{subset},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
        a.n,
        a.success_rate,
        a.task_time.mean,
        a.task_time.std,
        a.min_lidar_range.mean,
        a.min_lidar_range.std,
        a.avg_linear_vel.mean,
        a.avg_linear_vel.std,
        a.dist_to_target.mean,
        a.dist_to_target.std,
    );
}

/// Metric table as CSV: a header plus `all` and `success` rows per report.
/// Empty subsets print `NaN`.
pub fn summarize(reports: &[&TrialReport]) -> Result<String> {
    if reports.iter().any(|r| r.records.is_empty()) || reports.is_empty() {
        return Err(Error::LengthMismatch("cannot summarize an empty report".into()));
    }
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in reports {
        summary_row(&mut out, &r.controller, "all", &r.aggregate);
        summary_row(&mut out, &r.controller, "success", &r.aggregate_success);
    }
    Ok(out)
}

/// Goal distance resampled on a common time grid, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Linear interpolation of a trajectory's goal distance at time `t`; the
/// final value is held after the episode ends.
pub fn goal_dist_at(traj: &[TrajectoryRow], t: f64) -> f64 {
    let k = traj.partition_point(|r| r.t <= t);
    if k == 0 {
        return traj[0].goal_dist;
    }
    if k >= traj.len() {
        return traj[traj.len() - 1].goal_dist;
    }
    let (a, b) = (&traj[k - 1], &traj[k]);
    let f = (t - a.t) / (b.t - a.t);
    a.goal_dist + f * (b.goal_dist - a.goal_dist)
}

/// Mean/std distance-to-target on a `step`-second grid up to the longest
/// trial.
pub fn distance_curve<'a>(records: impl IntoIterator<Item = &'a TrialRecord>, step: f64) -> DistanceCurve {
    let rs: Vec<&TrialRecord> = records.into_iter().collect();
    let t_end = rs.iter().map(|r| r.task_time).fold(0.0, f64::max);
    let n = (t_end / step + 1e-9).ceil() as usize + 1;
    let mut curve = DistanceCurve { times: Vec::new(), mean: Vec::new(), std: Vec::new() };
    if rs.is_empty() {
        return curve;
    }
    for k in 0..n {
        let t = k as f64 * step;
        let xs: Vec<f64> = rs.iter().map(|r| goal_dist_at(&r.trajectory, t)).collect();
        let ms = MeanStd::of(&xs);
        curve.times.push(t);
        curve.mean.push(ms.mean);
        curve.std.push(ms.std);
    }
    curve
}

pub fn curve_csv(curve: &DistanceCurve) -> String {
    let mut out = String::from("t_s,mean_dist_m,std_dist_m\n");
    for k in 0..curve.times.len() {
        let _ = writeln!(out, "{},{:.6},{:.6}", curve.times[k], curve.mean[k], curve.std[k]);
    }
    out
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        // shortest round-trip representation keeps replays exact
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", r.t, r.x, r.y, r.yaw, r.v, r.w, r.goal_dist, r.scan_min);
    }
    out
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(Error::MalformedMessage("trajectory header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MalformedMessage(format!("{l}: {e}")))?;
            if v.len() != 8 {
                return Err(Error::MalformedMessage(format!("expected 8 columns: {l}")));
            }
            Ok(TrajectoryRow { t: v[0], x: v[1], y: v[2], yaw: v[3], v: v[4], w: v[5], goal_dist: v[6], scan_min: v[7] })
        })
        .collect()
}

pub const INDEX_HEADER: &str = "trial,seed,cause,steps,task_time_s,goal_x,goal_y,file";

/// Writes `trial_NNN.csv` per record plus `index.csv` into `dir`.
pub fn export_trajectories(report: &TrialReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::from(INDEX_HEADER);
    index.push('\n');
    let mut files = Vec::new();
    for (k, r) in report.records.iter().enumerate() {
        let name = format!("trial_{k:03}.csv");
        let path = dir.join(&name);
        std::fs::write(&path, trajectory_csv(&r.trajectory)).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(
            index,
            "{k},{},{},{},{},{},{},{name}",
            r.seed,
            r.cause.as_str(),
            r.steps,
            r.task_time,
            r.goal[0],
            r.goal[1]
        );
        files.push(path);
    }
    let ipath = dir.join("index.csv");
    std::fs::write(&ipath, index).map_err(|e| Error::io(&ipath, e))?;
    files.push(ipath);
    Ok(files)
}
