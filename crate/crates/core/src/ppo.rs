//! Clipped-surrogate PPO.
//!
//! One iteration collects `horizon` lock-steps from every environment,
//! computes GAE advantages, then runs `epochs` passes of shuffled
//! minibatches through the network. Recurrent policies are trained on
//! contiguous windows of `unroll_len` steps, each started from the hidden
//! state recorded during collection.

use crate::config::{TaskConfig, TrainConfig};
use crate::env::{Cause, EpisodeSummary, TaskSettings, VecEnv};
use crate::nn::{
    gaussian_logprob_entropy, AdamHyper, HiddenBatch, NetworkShape, OptState, PolicyWeights, SeqInput, SeqOutput,
};
use crate::world::WorldSpec;
use crate::{Error, Result, Rng};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Episodes contributing to the running return/length/success statistics.
pub const STATS_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Steps per environment per iteration.
    pub horizon: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip_norm: f64,
    pub iterations: usize,
    /// Truncated-BPTT window (recurrent networks only).
    pub unroll_len: usize,
    /// Multiplies rewards before advantage estimation.
    pub reward_scale: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 512,
            horizon: 64,
            value_coef: 1.0,
            entropy_coef: 0.005,
            grad_clip_norm: 1.0,
            iterations: 1500,
            unroll_len: 16,
            reward_scale: 0.1,
        }
    }
}

impl PpoHyper {
    /// Returns the offending field and a message.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |name: &'static str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err((name, format!("must be > 0, got {x}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("clip", self.clip)?;
        positive("grad_clip_norm", self.grad_clip_norm)?;
        positive("reward_scale", self.reward_scale)?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(("gae_lambda", format!("must be in [0, 1], got {}", self.gae_lambda)));
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return Err(("value_coef", "coefficients must be finite and value_coef >= 0".into()));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("horizon", self.horizon),
            ("unroll_len", self.unroll_len),
        ] {
            if v == 0 {
                return Err((name, "must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { learning_rate: self.learning_rate, ..AdamHyper::default() }
    }
}

/// Generalized advantage estimates and value targets for one trajectory
/// segment. `bootstrap` is the value of the state after the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(Error::LengthMismatch(format!(
            "gae: {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1±ε)A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Mean 0, standard deviation 1 (population), ε = 1e-8.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

/// Transitions from one iteration. Row `t * num_envs + e` is step `t` of
/// environment `e`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs: Array2<f64>,
    /// Sampled, unclamped actions.
    pub actions: Vec<[f64; 2]>,
    pub logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Hidden state was zeroed before this row was consumed.
    pub resets: Vec<bool>,
    /// Hidden state before each window of `unroll_len` steps (recurrent
    /// networks only).
    pub hidden: Vec<HiddenBatch>,
    pub unroll_len: usize,
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `advantages` and `returns` with per-environment GAE.
    pub fn compute_advantages(&mut self, gamma: f64, lam: f64, reward_scale: f64) -> Result<()> {
        let (n, h) = (self.num_envs, self.horizon);
        self.advantages = vec![0.0; n * h];
        self.returns = vec![0.0; n * h];
        for e in 0..n {
            let col = |v: &[f64]| (0..h).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..h).map(|t| self.dones[t * n + e]).collect();
            let rewards: Vec<f64> = col(&self.rewards).iter().map(|r| r * reward_scale).collect();
            let (adv, ret) = compute_gae(&rewards, &col(&self.values), &dones, self.bootstrap[e], gamma, lam)?;
            for t in 0..h {
                self.advantages[t * n + e] = adv[t];
                self.returns[t * n + e] = ret[t];
            }
        }
        Ok(())
    }
}

fn sample_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn obs_matrix(envs: &VecEnv, dim: usize) -> Array2<f64> {
    let obs = envs.observations();
    let mut m = Array2::zeros((obs.len(), dim));
    for (mut row, o) in m.rows_mut().into_iter().zip(&obs) {
        row.assign(&ndarray::ArrayView1::from(o.as_slice()));
    }
    m
}

/// Runs `horizon` lock-steps with actions sampled from the current policy.
/// `hidden` carries recurrent state across calls and is zeroed for
/// environments whose episode ended. Returns the buffer (advantages not yet
/// computed) and the episodes that finished.
pub fn collect_rollout(
    envs: &mut VecEnv,
    hidden: &mut HiddenBatch,
    weights: &PolicyWeights,
    horizon: usize,
    unroll_len: usize,
    rng: &mut Rng,
) -> Result<(RolloutBuffer, Vec<EpisodeSummary>)> {
    let n = envs.len();
    let dim = weights.shape().input_dim;
    let recurrent = weights.shape().recurrent;
    let logstd = weights.logstd();
    let std = [logstd[0].exp(), logstd[1].exp()];
    let mut buf = RolloutBuffer {
        num_envs: n,
        horizon,
        obs: Array2::zeros((n * horizon, dim)),
        actions: Vec::with_capacity(n * horizon),
        logprobs: Vec::with_capacity(n * horizon),
        values: Vec::with_capacity(n * horizon),
        rewards: Vec::with_capacity(n * horizon),
        dones: Vec::with_capacity(n * horizon),
        resets: Vec::with_capacity(n * horizon),
        hidden: Vec::new(),
        unroll_len,
        bootstrap: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    let mut finished = Vec::new();
    let mut prev_done = vec![false; n];
    for t in 0..horizon {
        if recurrent && t % unroll_len == 0 {
            buf.hidden.push(hidden.clone());
        }
        let obs = obs_matrix(envs, dim);
        let (mean, value) = weights.step_batch(obs.view(), hidden)?;
        let mut actions = Vec::with_capacity(n);
        for e in 0..n {
            let mu = [mean[(e, 0)], mean[(e, 1)]];
            let a = [
                mu[0] + std[0] * sample_normal(rng),
                mu[1] + std[1] * sample_normal(rng),
            ];
            let (lp, _) = gaussian_logprob_entropy(&mu, &logstd, &a);
            actions.push(a);
            buf.logprobs.push(lp);
            buf.values.push(value[e]);
            buf.resets.push(t > 0 && prev_done[e]);
        }
        buf.obs.slice_mut(ndarray::s![t * n..(t + 1) * n, ..]).assign(&obs);
        let step = envs.step(&actions)?;
        buf.actions.extend_from_slice(&actions);
        buf.rewards.extend_from_slice(&step.rewards);
        buf.dones.extend_from_slice(&step.dones);
        for (e, &done) in step.dones.iter().enumerate() {
            if done {
                hidden.reset_row(e);
            }
        }
        prev_done = step.dones;
        finished.extend(step.finished.into_iter().flatten());
    }
    let mut probe = hidden.clone();
    let (_, bootstrap) = weights.step_batch(obs_matrix(envs, dim).view(), &mut probe)?;
    buf.bootstrap = bootstrap.to_vec();
    Ok((buf, finished))
}

/// Averages over the minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    /// Clip fraction of the very first minibatch.
    pub first_clip_fraction: f64,
}

/// Gradients of the PPO loss with respect to the network outputs for one
/// minibatch, plus its statistics.
pub struct MinibatchTerms {
    pub grad_mean: Array2<f64>,
    pub grad_value: Array1<f64>,
    pub grad_logstd: [f64; 2],
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss pieces for outputs `out` of rows whose stored actions, old
/// log-probabilities, normalized advantages and returns are given.
pub fn minibatch_terms(
    out: &SeqOutput,
    logstd: [f64; 2],
    actions: &[[f64; 2]],
    old_logp: &[f64],
    adv: &[f64],
    returns: &[f64],
    hyper: &PpoHyper,
) -> MinibatchTerms {
    let m = actions.len();
    let inv_m = 1.0 / m as f64;
    let var = [(2.0 * logstd[0]).exp(), (2.0 * logstd[1]).exp()];
    let mut grad_mean = Array2::zeros((m, 2));
    let mut grad_value = Array1::zeros(m);
    let mut grad_logstd = [0.0; 2];
    let (mut policy_loss, mut value_loss, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);
    let mut entropy = 0.0;
    for i in 0..m {
        let mu = [out.mean[(i, 0)], out.mean[(i, 1)]];
        let (lp, ent) = gaussian_logprob_entropy(&mu, &logstd, &actions[i]);
        entropy = ent;
        let ratio = (lp - old_logp[i]).exp();
        let a = adv[i];
        policy_loss -= clipped_surrogate(ratio, a, hyper.clip) * inv_m;
        if (ratio - 1.0).abs() > hyper.clip {
            clipped += 1;
        }
        kl += ((ratio - 1.0) - (lp - old_logp[i])) * inv_m;
        // the unclipped branch is active unless the ratio has left the
        // trust region in the direction the advantage rewards
        let active = !((a > 0.0 && ratio > 1.0 + hyper.clip) || (a < 0.0 && ratio < 1.0 - hyper.clip));
        if active {
            let g = -a * ratio * inv_m; // dL/dlogp
            for k in 0..2 {
                let d = actions[i][k] - mu[k];
                grad_mean[(i, k)] = g * d / var[k];
                grad_logstd[k] += g * (d * d / var[k] - 1.0);
            }
        }
        let err = out.value[i] - returns[i];
        value_loss += err * err * inv_m;
        grad_value[i] = 2.0 * hyper.value_coef * err * inv_m;
    }
    grad_logstd[0] -= hyper.entropy_coef;
    grad_logstd[1] -= hyper.entropy_coef;
    MinibatchTerms {
        grad_mean,
        grad_value,
        grad_logstd,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv_m,
        approx_kl: kl,
    }
}

/// `epochs` passes of shuffled minibatches over `buf` (whose advantages
/// must already be computed).
pub fn ppo_update(
    weights: &mut PolicyWeights,
    buf: &RolloutBuffer,
    hyper: &PpoHyper,
    opt: &mut OptState,
    rng: &mut Rng,
    iteration: usize,
) -> Result<UpdateStats> {
    if buf.advantages.len() != buf.len() {
        return Err(Error::LengthMismatch("advantages not computed".into()));
    }
    let n = buf.num_envs;
    let recurrent = weights.shape().recurrent;
    let units = weights.shape().state_units();
    let unroll = if recurrent { buf.unroll_len } else { 1 };
    // units of shuffling: single rows, or (env, window) pairs
    let windows_per_env = buf.horizon / unroll;
    let mut units_list: Vec<(usize, usize)> =
        (0..windows_per_env).flat_map(|k| (0..n).map(move |e| (e, k))).collect();
    let per_batch = (hyper.minibatch_size / unroll).max(1);

    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    for _ in 0..hyper.epochs {
        units_list.shuffle(rng);
        for chunk in units_list.chunks(per_batch) {
            let b = chunk.len();
            let rows: Vec<usize> =
                (0..unroll).flat_map(|t| chunk.iter().map(move |&(e, k)| (k * unroll + t) * n + e)).collect();
            let mut initial = HiddenBatch::zeros(b, units);
            if recurrent {
                for (i, &(e, k)) in chunk.iter().enumerate() {
                    initial.cell.row_mut(i).assign(&buf.hidden[k].cell.row(e));
                    initial.output.row_mut(i).assign(&buf.hidden[k].output.row(e));
                }
            }
            let input = SeqInput {
                t_len: unroll,
                batch: b,
                obs: buf.obs.select(Axis(0), &rows),
                reset: rows.iter().enumerate().map(|(j, &r)| j >= b && buf.resets[r]).collect(),
                initial,
            };
            let (out, cache) = weights.forward_seq(&input)?;
            let mut adv: Vec<f64> = rows.iter().map(|&r| buf.advantages[r]).collect();
            normalize_advantages(&mut adv);
            let actions: Vec<[f64; 2]> = rows.iter().map(|&r| buf.actions[r]).collect();
            let old: Vec<f64> = rows.iter().map(|&r| buf.logprobs[r]).collect();
            let ret: Vec<f64> = rows.iter().map(|&r| buf.returns[r]).collect();
            let terms = minibatch_terms(&out, weights.logstd(), &actions, &old, &adv, &ret, hyper);
            let loss = terms.policy_loss + hyper.value_coef * terms.value_loss - hyper.entropy_coef * terms.entropy;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    detail: format!(
                        "policy {} value {} entropy {}",
                        terms.policy_loss, terms.value_loss, terms.entropy
                    ),
                });
            }
            let mut grads = weights.backward(&cache, terms.grad_mean.view(), terms.grad_value.view(), terms.grad_logstd)?;
            let norm = grads.clip_global_norm(hyper.grad_clip_norm);
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { iteration, detail: format!("gradient norm {norm}") });
            }
            weights.apply_adam(&grads, opt)?;
            if batches == 0 {
                stats.first_clip_fraction = terms.clip_fraction;
            }
            batches += 1;
            stats.policy_loss += terms.policy_loss;
            stats.value_loss += terms.value_loss;
            stats.entropy += terms.entropy;
            stats.clip_fraction += terms.clip_fraction;
            stats.approx_kl += terms.approx_kl;
            stats.grad_norm += norm;
        }
    }
    let k = batches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

/// A curriculum stage with its arena resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub start_iteration: usize,
    pub world: WorldSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSchedule {
    stages: Vec<Stage>,
}

impl CurriculumSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.first().map(|s| s.start_iteration) != Some(0) {
            return Err(Error::Config { path: "curriculum".into(), message: "first stage must start at 0".into() });
        }
        if stages.windows(2).any(|w| w[1].start_iteration <= w[0].start_iteration) {
            return Err(Error::Config {
                path: "curriculum".into(),
                message: "start iterations must be strictly increasing".into(),
            });
        }
        Ok(Self { stages })
    }

    pub fn single(world: WorldSpec) -> Self {
        Self { stages: vec![Stage { start_iteration: 0, world }] }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Index of the stage active at `iteration` (0-based).
    pub fn stage_index(&self, iteration: usize) -> usize {
        self.stages.iter().rposition(|s| s.start_iteration <= iteration).unwrap_or(0)
    }
}

/// The stage active at `iteration`.
pub fn curriculum_stage(iteration: usize, schedule: &CurriculumSchedule) -> &Stage {
    &schedule.stages[schedule.stage_index(iteration)]
}

/// One row of the training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// 1-based.
    pub iteration: usize,
    pub stage: usize,
    pub env_steps: u64,
    /// Episodes that ended during this iteration.
    pub episodes: usize,
    /// Running means over the last [`STATS_WINDOW`] episodes of the current
    /// stage; NaN before the first one ends.
    pub mean_return: f64,
    pub mean_length: f64,
    pub success_rate: f64,
    pub update: UpdateStats,
    pub logstd: [f64; 2],
}

pub const STATS_HEADER: &str = "iteration,stage,env_steps,episodes,mean_return,mean_length,success_rate,\
policy_loss,value_loss,entropy,clip_fraction,approx_kl,grad_norm,logstd_v,logstd_w";

impl IterationStats {
    pub fn csv_row(&self) -> String {
        let u = &self.update;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.stage,
            self.env_steps,
            self.episodes,
            self.mean_return,
            self.mean_length,
            self.success_rate,
            u.policy_loss,
            u.value_loss,
            u.entropy,
            u.clip_fraction,
            u.approx_kl,
            u.grad_norm,
            self.logstd[0],
            self.logstd[1]
        )
    }
}

/// Training state that advances one iteration at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    hyper: PpoHyper,
    schedule: CurriculumSchedule,
    weights: PolicyWeights,
    opt: OptState,
    envs: VecEnv,
    hidden: HiddenBatch,
    rng: Rng,
    iteration: usize,
    stage: usize,
    recent: VecDeque<EpisodeSummary>,
    env_steps: u64,
}

impl Trainer {
    /// Environments are seeded from `env_seed`; weights and action sampling
    /// from `train_seed`.
    pub fn new(
        settings: TaskSettings,
        schedule: CurriculumSchedule,
        num_envs: usize,
        env_seed: u64,
        network: NetworkShape,
        hyper: PpoHyper,
        train_seed: u64,
    ) -> Result<Self> {
        if network.input_dim != settings.obs_dim() {
            return Err(Error::ConfigInconsistent(format!(
                "network.input_dim is {} but observations have {} values",
                network.input_dim,
                settings.obs_dim()
            )));
        }
        hyper.validate().map_err(|(p, m)| Error::Config { path: format!("ppo.{p}"), message: m })?;
        let mut rng = crate::rng_from_seed(train_seed);
        let weights = PolicyWeights::init(network, &mut rng)?;
        let opt = OptState::new(weights.num_params(), hyper.adam());
        let seeds = VecEnv::derive_seeds(env_seed, num_envs);
        let envs = VecEnv::new(settings, schedule.stages()[0].world.clone(), &seeds)?;
        let hidden = HiddenBatch::zeros(num_envs, weights.shape().state_units());
        Ok(Self {
            hyper,
            schedule,
            weights,
            opt,
            envs,
            hidden,
            rng,
            iteration: 0,
            stage: 0,
            recent: VecDeque::new(),
            env_steps: 0,
        })
    }

    pub fn from_configs(task: &TaskConfig, train: &TrainConfig, base_dir: &Path) -> Result<Self> {
        crate::config::cross_validate(task, train)?;
        Self::new(
            task.settings()?,
            CurriculumSchedule::new(task.stages(base_dir)?)?,
            task.num_envs,
            task.seed,
            train.network.clone(),
            train.ppo.clone(),
            train.seed,
        )
    }

    pub fn weights(&self) -> &PolicyWeights {
        &self.weights
    }

    pub fn settings(&self) -> &TaskSettings {
        self.envs.settings()
    }

    /// Arena of the currently active stage.
    pub fn world_spec(&self) -> &WorldSpec {
        self.envs.world_spec()
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn hyper(&self) -> &PpoHyper {
        &self.hyper
    }

    /// Runs one collect + update iteration.
    pub fn step(&mut self) -> Result<IterationStats> {
        let stage = self.schedule.stage_index(self.iteration);
        if stage != self.stage {
            self.envs.set_world(self.schedule.stages()[stage].world.clone())?;
            self.hidden = HiddenBatch::zeros(self.envs.len(), self.weights.shape().state_units());
            self.recent.clear();
            self.stage = stage;
        }
        let (mut buf, finished) = collect_rollout(
            &mut self.envs,
            &mut self.hidden,
            &self.weights,
            self.hyper.horizon,
            self.hyper.unroll_len,
            &mut self.rng,
        )?;
        buf.compute_advantages(self.hyper.gamma, self.hyper.gae_lambda, self.hyper.reward_scale)?;
        self.iteration += 1;
        let update = ppo_update(&mut self.weights, &buf, &self.hyper, &mut self.opt, &mut self.rng, self.iteration)?;
        self.env_steps += buf.len() as u64;
        let episodes = finished.len();
        for ep in finished {
            if self.recent.len() == STATS_WINDOW {
                self.recent.pop_front();
            }
            self.recent.push_back(ep);
        }
        let k = self.recent.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            if self.recent.is_empty() {
                f64::NAN
            } else {
                self.recent.iter().map(f).sum::<f64>() / k
            }
        };
        Ok(IterationStats {
            iteration: self.iteration,
            stage,
            env_steps: self.env_steps,
            episodes,
            mean_return: mean(&|e| e.episode_return),
            mean_length: mean(&|e| e.length as f64),
            success_rate: mean(&|e| if e.cause == Cause::Goal { 1.0 } else { 0.0 }),
            update,
            logstd: self.weights.logstd(),
        })
    }
}

/// Files produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainingArtifacts {
    pub stats_csv: PathBuf,
    pub policy_manifest: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub run_manifest: PathBuf,
    pub stats: Vec<IterationStats>,
    pub weights: PolicyWeights,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Full training run: writes `stats.csv`, periodic checkpoints under
/// `checkpoints/`, the final policy as `policy.*` and `run.json` into
/// `out_dir`. `progress` sees every iteration's statistics.
pub fn train(
    task: &TaskConfig,
    train_cfg: &TrainConfig,
    base_dir: &Path,
    out_dir: &Path,
    mut progress: impl FnMut(&IterationStats),
) -> Result<TrainingArtifacts> {
    let mut trainer = Trainer::from_configs(task, train_cfg, base_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let run_manifest = out_dir.join("run.json");
    write(&run_manifest, &run_manifest_json(task, train_cfg))?;

    let ckpt_dir = out_dir.join("checkpoints");
    let mut csv = String::from(STATS_HEADER);
    csv.push('\n');
    let mut stats = Vec::with_capacity(train_cfg.ppo.iterations);
    let mut checkpoints = Vec::new();
    let stats_csv = out_dir.join("stats.csv");
    for _ in 0..train_cfg.ppo.iterations {
        let s = trainer.step()?;
        progress(&s);
        let _ = writeln!(csv, "{}", s.csv_row());
        stats.push(s);
        if train_cfg.checkpoint_every > 0 && s.iteration % train_cfg.checkpoint_every == 0 {
            std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
            let name = format!("iter_{:06}", s.iteration);
            let (m, _) = crate::policy_io::export_policy(
                trainer.weights(),
                trainer.settings(),
                trainer.world_spec(),
                &ckpt_dir,
                &name,
            )?;
            checkpoints.push(m);
            write(&stats_csv, &csv)?;
        }
    }
    write(&stats_csv, &csv)?;
    let (policy_manifest, _) =
        crate::policy_io::export_policy(trainer.weights(), trainer.settings(), trainer.world_spec(), out_dir, "policy")?;
    Ok(TrainingArtifacts {
        stats_csv,
        policy_manifest,
        checkpoints,
        run_manifest,
        stats,
        weights: trainer.weights,
    })
}

/// Configs, seeds and version of a run, as JSON.
pub fn run_manifest_json(task: &TaskConfig, train: &TrainConfig) -> String {
    let v = serde_json::json!({
        "navrl_version": env!("CARGO_PKG_VERSION"),
        "task_seed": task.seed,
        "train_seed": train.seed,
        "task": task,
        "train": train,
    });
    serde_json::to_string_pretty(&v).expect("manifest serializes")
}
