//! The navigation task.
//!
//! An episode places the robot at a free pose, samples a goal at least 2 m
//! away, and lets the policy command velocities until the goal is reached,
//! the lidar minimum drops below the collision threshold, or the step cap
//! runs out. [`VecEnv`] runs N such episodes in lock-step and resets finished
//! ones automatically.

use crate::robot::{clamp_action, integrate, Action, Pose, RobotProfile};
use crate::world::{
    build_world, sample_free_point, sample_free_pose, scan, step_dynamic_obstacles, LidarScan,
    Point, World, WorldSpec,
};
use crate::{Error, Result, Rng};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use crate::world::LidarConfig;

/// Observation layout: lidar beams, then goal distance, goal bearing,
/// previous v, previous w.
pub const NON_LIDAR_OBS: usize = 4;

/// Minimum spawn-to-goal distance.
pub const MIN_GOAL_DISTANCE: f64 = 2.0;

const RESET_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Collision threshold on the lidar minimum (terminates the episode).
    pub min_dist: f64,
    /// Below this lidar minimum the exponential proximity penalty applies.
    pub warn_dist: f64,
    pub r_goal: f64,
    pub r_collision_terminal: f64,
    pub r_timeout: f64,
    pub time_bonus_scale: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            min_dist: 0.25,
            warn_dist: 0.5,
            r_goal: 30.0,
            r_collision_terminal: 30.0,
            r_timeout: 30.0,
            time_bonus_scale: 30.0,
            goal_radius: 0.3,
            max_steps: 1200,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let all = [
            self.min_dist,
            self.warn_dist,
            self.r_goal,
            self.r_collision_terminal,
            self.r_timeout,
            self.time_bonus_scale,
            self.goal_radius,
        ];
        if !all.iter().all(|x| x.is_finite()) {
            return Err("reward values must be finite".into());
        }
        if !(self.min_dist < self.warn_dist) {
            return Err("min_dist must be < warn_dist".into());
        }
        if [self.r_goal, self.r_collision_terminal, self.r_timeout, self.time_bonus_scale]
            .iter()
            .any(|x| *x < 0.0)
        {
            return Err("reward magnitudes must be >= 0".into());
        }
        if self.goal_radius <= 0.0 {
            return Err("goal_radius must be > 0".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Gaussian noise on raw lidar ranges, meters.
    pub obs_lidar_sigma: f64,
    /// Gaussian noise on commanded velocities, as a fraction of each
    /// range's width.
    pub action_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { enabled: false, obs_lidar_sigma: 0.01, action_sigma: 0.05 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.obs_lidar_sigma >= 0.0 && self.action_sigma >= 0.0) {
            return Err("noise sigmas must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    /// Divide the goal distance by the arena diagonal.
    pub normalize_goal_dist: bool,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { normalize_goal_dist: true }
    }
}

/// Everything about the task except the arena itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSettings {
    pub dt: f64,
    pub lidar: LidarConfig,
    pub robot: RobotProfile,
    pub reward: RewardConfig,
    pub noise: NoiseConfig,
    pub observation: ObservationConfig,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self {
            dt: 0.1,
            lidar: LidarConfig::default(),
            robot: RobotProfile::jetbot(),
            reward: RewardConfig::default(),
            noise: NoiseConfig::default(),
            observation: ObservationConfig::default(),
        }
    }
}

impl TaskSettings {
    pub fn obs_dim(&self) -> usize {
        self.lidar.beam_count + NON_LIDAR_OBS
    }

    pub fn obs_constants(&self, world: &WorldSpec) -> ObsConstants {
        ObsConstants {
            lidar: self.lidar.clone(),
            goal_dist_scale: if self.observation.normalize_goal_dist {
                world.diagonal()
            } else {
                1.0
            },
            v_range: self.robot.v_range,
            w_range: self.robot.w_range,
        }
    }
}

/// The constants needed to turn raw sensor values into an [`Observation`].
/// Deployed policies carry their own copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsConstants {
    pub lidar: LidarConfig,
    pub goal_dist_scale: f64,
    pub v_range: [f64; 2],
    pub w_range: [f64; 2],
}

/// Flat policy input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn lidar_norm(&self) -> &[f64] {
        &self.0[..self.0.len() - NON_LIDAR_OBS]
    }

    fn tail(&self, k: usize) -> f64 {
        self.0[self.0.len() - NON_LIDAR_OBS + k]
    }

    pub fn goal_dist_norm(&self) -> f64 {
        self.tail(0)
    }

    pub fn goal_angle_norm(&self) -> f64 {
        self.tail(1)
    }

    pub fn prev_v_norm(&self) -> f64 {
        self.tail(2)
    }

    pub fn prev_w_norm(&self) -> f64 {
        self.tail(3)
    }
}

/// Assembles an observation from raw ranges (meters) and robot state.
pub fn build_observation(
    ranges: &[f64],
    pose: &Pose,
    goal: Point,
    prev_action: Action,
    c: &ObsConstants,
) -> Observation {
    let span = c.lidar.max_range - c.lidar.min_range;
    let mut v = Vec::with_capacity(ranges.len() + NON_LIDAR_OBS);
    v.extend(ranges.iter().map(|r| {
        let r = r.clamp(c.lidar.min_range, c.lidar.max_range);
        (r - c.lidar.min_range) / span
    }));
    let unit = |x: f64, [lo, hi]: [f64; 2]| 2.0 * (x - lo) / (hi - lo) - 1.0;
    v.push(pose.distance_to(goal) / c.goal_dist_scale);
    v.push(pose.bearing_to(goal) / PI);
    v.push(unit(prev_action.v, c.v_range));
    v.push(unit(prev_action.w, c.w_range));
    Observation(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    None,
    Goal,
    Collision,
    Timeout,
}

impl Cause {
    pub fn is_terminal(self) -> bool {
        self != Cause::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::None => "none",
            Cause::Goal => "goal",
            Cause::Collision => "collision",
            Cause::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_distance: f64,
    pub r_collision: f64,
    pub r_time: f64,
    pub terminal_bonus: f64,
    pub total: f64,
    pub cause: Cause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub pose: Pose,
    pub prev_action: Action,
    pub goal: Point,
    pub step_count: usize,
    /// Goal distance at this state; the next step's progress term uses it.
    pub prev_goal_dist: f64,
    pub world: World,
}

impl EnvState {
    pub fn goal_dist(&self) -> f64 {
        self.pose.distance_to(self.goal)
    }
}

/// Reward and termination for the transition `prev -> cur`.
///
/// Termination precedence is goal, then collision, then timeout.
pub fn reward_and_done(
    prev: &EnvState,
    cur: &EnvState,
    scan_min: f64,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let cur_d = cur.goal_dist();
    let r_distance = prev.prev_goal_dist - cur_d;
    let r_collision = if scan_min < cfg.warn_dist { -(-scan_min).exp() } else { 0.0 };
    let (cause, terminal_bonus, r_time) = if cur_d < cfg.goal_radius {
        let remaining = cfg.max_steps.saturating_sub(cur.step_count) as f64;
        (Cause::Goal, cfg.r_goal, cfg.time_bonus_scale * remaining / cfg.max_steps as f64)
    } else if scan_min < cfg.min_dist {
        (Cause::Collision, -cfg.r_collision_terminal, 0.0)
    } else if cur.step_count >= cfg.max_steps {
        (Cause::Timeout, -cfg.r_timeout, 0.0)
    } else {
        (Cause::None, 0.0, 0.0)
    };
    RewardBreakdown {
        r_distance,
        r_collision,
        r_time,
        terminal_bonus,
        total: r_distance + r_collision + r_time + terminal_bonus,
        cause,
    }
}

/// Adds Gaussian noise (meters) to raw ranges and re-clamps them.
pub fn perturb_ranges(ranges: &mut [f64], sigma: f64, lidar: &LidarConfig, rng: &mut Rng) {
    if sigma == 0.0 {
        return;
    }
    for r in ranges.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *r = (*r + sigma * n).clamp(lidar.min_range, lidar.max_range);
    }
}

/// Applies lidar noise to an already-normalized observation. Identity when
/// noise is disabled.
pub fn apply_obs_noise(
    obs: &Observation,
    noise: &NoiseConfig,
    lidar: &LidarConfig,
    rng: &mut Rng,
) -> Observation {
    if !noise.enabled || noise.obs_lidar_sigma == 0.0 {
        return obs.clone();
    }
    let span = lidar.max_range - lidar.min_range;
    let mut out = obs.clone();
    let n = obs.len() - NON_LIDAR_OBS;
    let mut meters: Vec<f64> = obs.0[..n].iter().map(|u| lidar.min_range + u * span).collect();
    perturb_ranges(&mut meters, noise.obs_lidar_sigma, lidar, rng);
    for (o, m) in out.0[..n].iter_mut().zip(meters) {
        *o = (m - lidar.min_range) / span;
    }
    out
}

/// Perturbs a velocity command and re-clamps it to the profile.
pub fn apply_action_noise(a: Action, noise: &NoiseConfig, robot: &RobotProfile, rng: &mut Rng) -> Action {
    if !noise.enabled || noise.action_sigma == 0.0 {
        return a;
    }
    let nv: f64 = StandardNormal.sample(rng);
    let nw: f64 = StandardNormal.sample(rng);
    let [v0, v1] = robot.v_range;
    let [w0, w1] = robot.w_range;
    Action {
        v: (a.v + noise.action_sigma * (v1 - v0) * nv).clamp(v0, v1),
        w: (a.w + noise.action_sigma * (w1 - w0) * nw).clamp(w0, w1),
    }
}

/// Starts a new episode in a freshly built world.
pub fn reset(settings: &TaskSettings, spec: &WorldSpec, rng: &mut Rng) -> Result<(EnvState, Observation)> {
    let world = build_world(spec, rng.next_u64())?;
    let clearance = spec.spawn_clearance;
    let goal_clearance = settings.reward.goal_radius.max(spec.spawn_clearance);
    let region = spec.effective_goal_region();
    let mut last_err = None;
    for _ in 0..RESET_ATTEMPTS {
        let pose = sample_free_pose(&world, clearance, rng)?;
        let goal = match sample_free_point(&world, &region, goal_clearance, rng, |g| {
            pose.distance_to(g) >= MIN_GOAL_DISTANCE
        }) {
            Ok(g) => g,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let state = EnvState {
            pose,
            prev_action: Action::default(),
            goal,
            step_count: 0,
            prev_goal_dist: pose.distance_to(goal),
            world,
        };
        let obs = sensed_observation(&state, settings, spec, rng);
        return Ok((state, obs));
    }
    Err(last_err.unwrap_or(Error::SamplingExhausted { attempts: RESET_ATTEMPTS, clearance }))
}

/// Noise-free observation of `state`.
pub fn observe(state: &EnvState, settings: &TaskSettings) -> Observation {
    let s = scan(&state.world, &state.pose, &settings.lidar);
    build_observation(
        &s.ranges,
        &state.pose,
        state.goal,
        state.prev_action,
        &settings.obs_constants(state.world.spec()),
    )
}

/// Observation as the policy would see it (lidar noise applied when
/// enabled).
fn sensed_observation(state: &EnvState, settings: &TaskSettings, spec: &WorldSpec, rng: &mut Rng) -> Observation {
    let mut s = scan(&state.world, &state.pose, &settings.lidar);
    if settings.noise.enabled {
        perturb_ranges(&mut s.ranges, settings.noise.obs_lidar_sigma, &settings.lidar, rng);
    }
    build_observation(&s.ranges, &state.pose, state.goal, state.prev_action, &settings.obs_constants(spec))
}

/// Result of advancing a single environment by one control period.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: EnvState,
    /// Ranges the policy observes (noisy when noise is enabled).
    pub sensed: LidarScan,
    /// True minimum range, used for reward and termination.
    pub scan_min: f64,
    pub reward: RewardBreakdown,
    pub observation: Observation,
}

/// Applies an already-clamped velocity command.
pub fn step_env(state: &EnvState, action: Action, settings: &TaskSettings, rng: &mut Rng) -> Transition {
    let world = step_dynamic_obstacles(&state.world, settings.dt);
    let pose = integrate(state.pose, action, settings.dt);
    let mut next = EnvState {
        pose,
        prev_action: action,
        goal: state.goal,
        step_count: state.step_count + 1,
        prev_goal_dist: 0.0,
        world,
    };
    next.prev_goal_dist = next.goal_dist();
    let clean = scan(&next.world, &next.pose, &settings.lidar);
    let scan_min = clean.min();
    let reward = reward_and_done(state, &next, scan_min, &settings.reward);
    let mut sensed = clean;
    if settings.noise.enabled {
        perturb_ranges(&mut sensed.ranges, settings.noise.obs_lidar_sigma, &settings.lidar, rng);
    }
    let observation = build_observation(
        &sensed.ranges,
        &next.pose,
        next.goal,
        next.prev_action,
        &settings.obs_constants(next.world.spec()),
    );
    Transition { state: next, sensed, scan_min, reward, observation }
}

/// Summary of a finished episode reported by [`VecEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub length: usize,
    pub cause: Cause,
}

#[derive(Debug, Clone)]
struct Slot {
    state: EnvState,
    obs: Observation,
    rng: Rng,
    episode_return: f64,
}

/// Output of one lock-step.
#[derive(Debug, Clone)]
pub struct VecStep {
    /// Post-reset observation for environments that finished.
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub breakdowns: Vec<RewardBreakdown>,
    pub finished: Vec<Option<EpisodeSummary>>,
}

/// N independent environments stepped together.
#[derive(Debug, Clone)]
pub struct VecEnv {
    settings: TaskSettings,
    spec: WorldSpec,
    slots: Vec<Slot>,
}

impl VecEnv {
    /// One environment per seed.
    pub fn new(settings: TaskSettings, spec: WorldSpec, seeds: &[u64]) -> Result<Self> {
        spec.validate()?;
        let slots = seeds
            .iter()
            .map(|&s| {
                let mut rng = crate::rng_from_seed(s);
                let (state, obs) = reset(&settings, &spec, &mut rng)?;
                Ok(Slot { state, obs, rng, episode_return: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { settings, spec, slots })
    }

    /// Seeds derived from one base seed, distinct per index.
    pub fn derive_seeds(base: u64, n: usize) -> Vec<u64> {
        let mut rng = crate::rng_from_seed(base);
        (0..n).map(|_| rng.next_u64()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn settings(&self) -> &TaskSettings {
        &self.settings
    }

    pub fn world_spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn states(&self) -> impl Iterator<Item = &EnvState> {
        self.slots.iter().map(|s| &s.state)
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.slots.iter().map(|s| s.obs.clone()).collect()
    }

    /// Switches every environment to a new arena and resets all of them.
    pub fn set_world(&mut self, spec: WorldSpec) -> Result<()> {
        spec.validate()?;
        self.spec = spec;
        for slot in &mut self.slots {
            let (state, obs) = reset(&self.settings, &self.spec, &mut slot.rng)?;
            slot.state = state;
            slot.obs = obs;
            slot.episode_return = 0.0;
        }
        Ok(())
    }

    /// Clamps (and optionally perturbs) each raw action, advances every
    /// environment, and auto-resets the ones that finished.
    pub fn step(&mut self, raw_actions: &[[f64; 2]]) -> Result<VecStep> {
        if raw_actions.len() != self.slots.len() {
            return Err(Error::LengthMismatch(format!(
                "{} actions for {} environments",
                raw_actions.len(),
                self.slots.len()
            )));
        }
        let n = self.slots.len();
        let mut out = VecStep {
            observations: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            breakdowns: Vec::with_capacity(n),
            finished: Vec::with_capacity(n),
        };
        for (slot, raw) in self.slots.iter_mut().zip(raw_actions) {
            let action = clamp_action(*raw, &self.settings.robot);
            let action = apply_action_noise(action, &self.settings.noise, &self.settings.robot, &mut slot.rng);
            let t = step_env(&slot.state, action, &self.settings, &mut slot.rng);
            slot.episode_return += t.reward.total;
            let done = t.reward.cause.is_terminal();
            let summary = done.then(|| EpisodeSummary {
                episode_return: slot.episode_return,
                length: t.state.step_count,
                cause: t.reward.cause,
            });
            if done {
                let (state, obs) = reset(&self.settings, &self.spec, &mut slot.rng)?;
                slot.state = state;
                slot.obs = obs;
                slot.episode_return = 0.0;
            } else {
                slot.state = t.state;
                slot.obs = t.observation;
            }
            out.observations.push(slot.obs.clone());
            out.rewards.push(t.reward.total);
            out.dones.push(done);
            out.breakdowns.push(t.reward);
            out.finished.push(summary);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_world, min_clearance};
    use rand::Rng as _;

    fn state_at(world: &World, pose: Pose, goal: Point, step: usize) -> EnvState {
        EnvState {
            pose,
            prev_action: Action::default(),
            goal,
            step_count: step,
            prev_goal_dist: pose.distance_to(goal),
            world: world.clone(),
        }
    }

    fn empty() -> World {
        build_world(&WorldSpec::empty(4.0), 0).unwrap()
    }

    #[test]
    fn reward_examples() {
        let w = empty();
        let cfg = RewardConfig::default();
        let prev = state_at(&w, Pose::new(-2.0, 0.0, 0.0), [0.0, 0.0], 0);
        let cur = state_at(&w, Pose::new(-1.9, 0.0, 0.0), [0.0, 0.0], 1);
        let r = reward_and_done(&prev, &cur, 1.0, &cfg);
        assert!((r.total - 0.1).abs() < 1e-12);
        assert_eq!(r.cause, Cause::None);

        let r = reward_and_done(&prev, &prev, 0.3, &cfg);
        assert!((r.r_collision + 0.7408).abs() < 1e-4);
        assert_eq!(r.cause, Cause::None);

        let r = reward_and_done(&prev, &prev, 0.2, &cfg);
        assert_eq!(r.cause, Cause::Collision);
        assert_eq!(r.terminal_bonus, -30.0);

        let at_goal = state_at(&w, Pose::new(0.1, 0.0, 0.0), [0.0, 0.0], 400);
        let r = reward_and_done(&prev, &at_goal, 1.0, &cfg);
        assert_eq!(r.cause, Cause::Goal);
        assert!((r.r_time - 20.0).abs() < 1e-12);
        assert_eq!(r.terminal_bonus, 30.0);

        // goal beats collision beats timeout
        let r = reward_and_done(&prev, &state_at(&w, at_goal.pose, [0.0, 0.0], 1200), 0.1, &cfg);
        assert_eq!(r.cause, Cause::Goal);
        let far = state_at(&w, Pose::new(-1.9, 0.0, 0.0), [0.0, 0.0], 1200);
        assert_eq!(reward_and_done(&prev, &far, 0.1, &cfg).cause, Cause::Collision);
        let r = reward_and_done(&prev, &far, 1.0, &cfg);
        assert_eq!(r.cause, Cause::Timeout);
        assert_eq!(r.terminal_bonus, -30.0);
    }

    #[test]
    fn observe_examples() {
        let w = empty();
        let settings = TaskSettings::default();
        let s = state_at(&w, Pose::new(0.0, 0.0, 0.0), [2.0, 0.0], 0);
        let o = observe(&s, &settings);
        assert_eq!(o.len(), 124);
        assert!(o.lidar_norm().iter().all(|&x| x == 1.0));
        assert_eq!(o.goal_angle_norm(), 0.0);
        assert!((o.goal_dist_norm() - 2.0 / (8.0 * 2f64.sqrt())).abs() < 1e-12);
        let behind = state_at(&w, Pose::new(0.0, 0.0, 0.0), [-2.0, 0.0], 0);
        assert!((observe(&behind, &settings).goal_angle_norm().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reset_postconditions() {
        let settings = TaskSettings::default();
        let spec = WorldSpec::empty(4.0);
        let mut rng = crate::rng_from_seed(1);
        let mut longest: f64 = 0.0;
        for _ in 0..100 {
            let (s, o) = reset(&settings, &spec, &mut rng).unwrap();
            assert!(min_clearance(&s.world, s.pose.position()) >= 0.5);
            assert!(s.goal_dist() >= 2.0);
            assert_eq!(s.step_count, 0);
            assert_eq!(s.prev_action, Action::default());
            assert_eq!(o.len(), 124);
            longest = longest.max(s.goal_dist());
        }
        assert!(longest >= 4.7);
        let a = reset(&settings, &spec, &mut crate::rng_from_seed(3)).unwrap().0;
        let b = reset(&settings, &spec, &mut crate::rng_from_seed(3)).unwrap().0;
        assert_eq!((a.pose, a.goal), (b.pose, b.goal));
    }

    #[test]
    fn obs_noise() {
        let lidar = LidarConfig::default();
        let w = empty();
        let settings = TaskSettings::default();
        let s = state_at(&w, Pose::new(3.0, 0.5, 0.3), [0.0, 0.0], 0);
        let obs = observe(&s, &settings);
        let mut rng = crate::rng_from_seed(0);
        let off = NoiseConfig { enabled: true, obs_lidar_sigma: 0.0, action_sigma: 0.0 };
        assert_eq!(apply_obs_noise(&obs, &off, &lidar, &mut rng), obs);
        let disabled = NoiseConfig { enabled: false, ..NoiseConfig::default() };
        assert_eq!(apply_obs_noise(&obs, &disabled, &lidar, &mut rng), obs);

        let on = NoiseConfig { enabled: true, obs_lidar_sigma: 0.01, action_sigma: 0.0 };
        let draws = 100_000;
        // beam 0 points at the wall 1 m away: unclamped, so its mean is unbiased
        let mut sum = 0.0;
        for _ in 0..draws {
            let n = apply_obs_noise(&obs, &on, &lidar, &mut rng);
            assert!(n.lidar_norm().iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(&n.0[120..], &obs.0[120..]);
            sum += n.0[0];
        }
        let mean = sum / draws as f64;
        let se = 0.01 / 2.85 / (draws as f64).sqrt();
        assert!((mean - obs.0[0]).abs() < 3.0 * se, "{mean} vs {}", obs.0[0]);
    }

    #[test]
    fn straight_run_reaches_goal() {
        let mut spec = WorldSpec::empty(4.0);
        spec.spawn_region = Some(crate::world::SampleBox { min: [-1.0, 0.0], max: [-1.0, 0.0] });
        spec.spawn_yaw = Some([0.0, 0.0]);
        spec.goal_region = Some(crate::world::SampleBox { min: [1.0, 0.0], max: [1.0, 0.0] });
        let mut env = VecEnv::new(TaskSettings::default(), spec, &[4]).unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            let out = env.step(&[[1.0, 0.0]]).unwrap();
            if out.dones[0] {
                assert_eq!(out.breakdowns[0].cause, Cause::Goal);
                assert_eq!(env.states().next().unwrap().step_count, 0);
                break;
            }
            assert!(steps < 100);
        }
        assert!(steps <= 45, "{steps}");
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let mut env = VecEnv::new(TaskSettings::default(), WorldSpec::default_dynamic(), &[9; 64]).unwrap();
        let mut rng = crate::rng_from_seed(0);
        for _ in 0..150 {
            let a: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let out = env.step(&vec![a; 64]).unwrap();
            assert!(out.observations.iter().all(|o| o == &out.observations[0]));
            assert!(out.observations.iter().all(|o| o.len() == 124));
            assert!(out.dones.iter().all(|d| *d == out.dones[0]));
            for b in &out.breakdowns {
                assert_eq!(b.cause.is_terminal(), out.dones[0]);
            }
        }
    }

    #[test]
    fn distance_reward_telescopes() {
        let settings = TaskSettings::default();
        let spec = WorldSpec::default_static();
        let mut rng = crate::rng_from_seed(8);
        let (mut state, _) = reset(&settings, &spec, &mut rng).unwrap();
        let d0 = state.goal_dist();
        let mut sum = 0.0;
        for k in 0..300 {
            let a = clamp_action([0.3, if k % 40 < 20 { 0.5 } else { -0.4 }], &settings.robot);
            let t = step_env(&state, a, &settings, &mut rng);
            sum += t.reward.r_distance;
            state = t.state;
            if t.reward.cause.is_terminal() {
                break;
            }
        }
        assert!((sum - (d0 - state.goal_dist())).abs() < 1e-12);
    }
}
