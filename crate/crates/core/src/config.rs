//! Task and training configuration files.
//!
//! Both files are JSON. Every field has a default, so `{}` is a valid task
//! file and a valid training file. Command-line overrides use dotted keys
//! (`ppo.learning_rate=1e-4`, `task.seed=3`) and are applied to the raw JSON
//! before it is deserialized, so they go through the same validation as the
//! files themselves.

use crate::env::{NoiseConfig, ObservationConfig, RewardConfig, TaskSettings, NON_LIDAR_OBS};
use crate::nn::NetworkShape;
use crate::ppo::PpoHyper;
use crate::robot::RobotProfile;
use crate::world::{LidarConfig, WorldSpec};
use crate::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A world given by preset name, file, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldRef {
    Preset(String),
    File { file: PathBuf },
    Inline(Box<WorldSpec>),
}

impl Default for WorldRef {
    fn default() -> Self {
        WorldRef::Preset("static".into())
    }
}

impl WorldRef {
    /// Resolves to a validated spec. Relative file paths are taken from
    /// `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<WorldSpec> {
        let spec = match self {
            WorldRef::Preset(name) => WorldSpec::preset(name).ok_or_else(|| Error::Config {
                path: "world".into(),
                message: format!("unknown world preset `{name}` (expected empty, static, dynamic or crossing)"),
            })?,
            WorldRef::File { file } => WorldSpec::load(&base_dir.join(file))?,
            WorldRef::Inline(spec) => (**spec).clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A built-in robot name or a full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RobotRef {
    Builtin(String),
    Custom(RobotProfile),
}

impl Default for RobotRef {
    fn default() -> Self {
        RobotRef::Builtin("jetbot".into())
    }
}

impl RobotRef {
    pub fn resolve(&self) -> Result<RobotProfile> {
        let profile = match self {
            RobotRef::Builtin(name) => RobotProfile::builtin(name).ok_or_else(|| Error::Config {
                path: "robot".into(),
                message: format!("unknown robot `{name}` (expected jetbot or turtlebot4lite)"),
            })?,
            RobotRef::Custom(p) => p.clone(),
        };
        profile.validate().map_err(|message| Error::Config { path: "robot".into(), message })?;
        Ok(profile)
    }
}

/// One curriculum stage: from `start_iteration` on, train in `world`,
/// optionally with its moving obstacles removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub start_iteration: usize,
    pub world: WorldRef,
    #[serde(default = "yes")]
    pub dynamic_obstacles: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub num_envs: usize,
    /// Control period, seconds.
    pub dt: f64,
    pub world: WorldRef,
    pub lidar: LidarConfig,
    pub robot: RobotRef,
    pub reward: RewardConfig,
    pub noise: NoiseConfig,
    pub observation: ObservationConfig,
    /// Replaces `world` during training when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curriculum: Option<Vec<StageConfig>>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            num_envs: 64,
            dt: 0.1,
            world: WorldRef::default(),
            lidar: LidarConfig::default(),
            robot: RobotRef::default(),
            reward: RewardConfig::default(),
            noise: NoiseConfig::default(),
            observation: ObservationConfig::default(),
            curriculum: None,
        }
    }
}

/// Static stage for `static_until` iterations in the dynamic arena with
/// its movers removed, then the full dynamic arena.
pub fn static_then_dynamic(world: WorldRef, static_until: usize) -> Vec<StageConfig> {
    vec![
        StageConfig { start_iteration: 0, world: world.clone(), dynamic_obstacles: false },
        StageConfig { start_iteration: static_until, world, dynamic_obstacles: true },
    ]
}

fn field_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl TaskConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = deserialize_value(parse_json(s)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that does not need the file system.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(field_err("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.num_envs == 0 {
            return Err(field_err("num_envs", "must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(field_err("dt", "must be > 0"));
        }
        self.lidar.validate().map_err(|m| field_err("lidar", m))?;
        self.reward.validate().map_err(|m| field_err("reward", m))?;
        self.noise.validate().map_err(|m| field_err("noise", m))?;
        if let RobotRef::Custom(p) = &self.robot {
            p.validate().map_err(|m| field_err("robot", m))?;
        }
        if let Some(stages) = &self.curriculum {
            if stages.first().map(|s| s.start_iteration) != Some(0) {
                return Err(field_err("curriculum", "first stage must start at iteration 0"));
            }
            if stages.windows(2).any(|w| w[1].start_iteration <= w[0].start_iteration) {
                return Err(field_err("curriculum", "start_iteration values must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> Result<TaskSettings> {
        Ok(TaskSettings {
            dt: self.dt,
            lidar: self.lidar.clone(),
            robot: self.robot.resolve()?,
            reward: self.reward.clone(),
            noise: self.noise.clone(),
            observation: self.observation.clone(),
        })
    }

    /// Resolved curriculum; a task without one trains in `world` throughout.
    pub fn stages(&self, base_dir: &Path) -> Result<Vec<crate::ppo::Stage>> {
        let single;
        let stages = match &self.curriculum {
            Some(s) => s,
            None => {
                single = [StageConfig { start_iteration: 0, world: self.world.clone(), dynamic_obstacles: true }];
                &single[..]
            }
        };
        stages
            .iter()
            .map(|s| {
                let mut world = s.world.resolve(base_dir)?;
                if !s.dynamic_obstacles {
                    world.dynamic_obstacles.clear();
                }
                Ok(crate::ppo::Stage { start_iteration: s.start_iteration, world })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub network: NetworkShape,
    pub ppo: PpoHyper,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            network: NetworkShape::default(),
            ppo: PpoHyper::default(),
            checkpoint_every: 100,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl TrainConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = deserialize_value(parse_json(s)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(field_err("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        self.network.validate().map_err(|m| field_err("network", m))?;
        self.ppo.validate().map_err(|(path, m)| field_err(&format!("ppo.{path}"), m))?;
        Ok(())
    }
}

/// Checks the two files against each other.
pub fn cross_validate(task: &TaskConfig, train: &TrainConfig) -> Result<()> {
    let expected = task.lidar.beam_count + NON_LIDAR_OBS;
    if train.network.input_dim != expected {
        return Err(Error::ConfigInconsistent(format!(
            "network.input_dim is {} but lidar.beam_count is {} (observations have beam_count + {NON_LIDAR_OBS} = {expected} values)",
            train.network.input_dim, task.lidar.beam_count
        )));
    }
    let p = &train.ppo;
    let transitions = p.horizon * task.num_envs;
    if transitions % p.minibatch_size != 0 {
        return Err(Error::ConfigInconsistent(format!(
            "ppo.horizon x num_envs = {} x {} = {transitions} is not divisible by ppo.minibatch_size = {}",
            p.horizon, task.num_envs, p.minibatch_size
        )));
    }
    if train.network.recurrent && (p.horizon % p.unroll_len != 0 || p.minibatch_size % p.unroll_len != 0) {
        return Err(Error::ConfigInconsistent(format!(
            "recurrent training needs ppo.horizon ({}) and ppo.minibatch_size ({}) to be multiples of ppo.unroll_len ({})",
            p.horizon, p.minibatch_size, p.unroll_len
        )));
    }
    Ok(())
}

fn parse_json(s: &str) -> Result<Value> {
    serde_json::from_str(s).map_err(|e| field_err("", e.to_string()))
}

fn deserialize_value<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        field_err(if path == "." { "" } else { &path }, e.into_inner().to_string())
    })
}

const TRAIN_KEYS: &[&str] = &["network", "ppo", "checkpoint_every", "out_dir"];
const TASK_KEYS: &[&str] =
    &["num_envs", "dt", "world", "lidar", "robot", "reward", "noise", "observation", "curriculum"];

/// Which file an override targets, and the key path within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Task,
    Train,
}

/// Splits `key=value`. The value is read as JSON when it parses, else as a
/// plain string.
pub fn parse_override(s: &str) -> Result<(Target, Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| field_err(s, "override must look like key.path=value"))?;
    let mut parts: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(field_err(key, "empty key segment"));
    }
    let target = match parts[0].as_str() {
        "task" => {
            parts.remove(0);
            Target::Task
        }
        "train" => {
            parts.remove(0);
            Target::Train
        }
        k if TRAIN_KEYS.contains(&k) => Target::Train,
        k if TASK_KEYS.contains(&k) => Target::Task,
        "seed" | "schema_version" => {
            return Err(field_err(key, "ambiguous key; prefix it with `task.` or `train.`"));
        }
        _ => return Err(field_err(key, "unknown top-level key")),
    };
    if parts.is_empty() {
        return Err(field_err(key, "missing key after prefix"));
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok((target, parts, value))
}

/// Sets `path` in `doc`, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = doc;
    for (i, key) in path.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(field_err(&path[..i].join("."), "cannot set a field inside a non-object value"));
            }
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        cur = obj.entry(key.clone()).or_insert(Value::Null);
    }
    Ok(())
}

/// Parses documents already in memory, applying overrides last.
pub fn parse_config_strs(task: &str, train: &str, overrides: &[String]) -> Result<(TaskConfig, TrainConfig)> {
    let mut task_doc = parse_json(task)?;
    let mut train_doc = parse_json(train)?;
    for o in overrides {
        let (target, path, value) = parse_override(o)?;
        let doc = match target {
            Target::Task => &mut task_doc,
            Target::Train => &mut train_doc,
        };
        set_path(doc, &path, value)?;
    }
    let task: TaskConfig = deserialize_value(task_doc).map_err(|e| prefix(e, "task"))?;
    let train: TrainConfig = deserialize_value(train_doc).map_err(|e| prefix(e, "train"))?;
    task.validate().map_err(|e| prefix(e, "task"))?;
    train.validate().map_err(|e| prefix(e, "train"))?;
    cross_validate(&task, &train)?;
    Ok((task, train))
}

fn prefix(e: Error, which: &str) -> Error {
    match e {
        Error::Config { path, message } if path.is_empty() => Error::Config { path: which.into(), message },
        Error::Config { path, message } => Error::Config { path: format!("{which}.{path}"), message },
        other => other,
    }
}

/// Reads, overrides and validates both files. World files referenced by the
/// task must exist (relative to the task file).
pub fn parse_configs(task_path: &Path, train_path: &Path, overrides: &[String]) -> Result<(TaskConfig, TrainConfig)> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let (task, train) = parse_config_strs(&read(task_path)?, &read(train_path)?, overrides)?;
    let base = task_path.parent().unwrap_or(Path::new("."));
    task.settings()?;
    task.world.resolve(base)?;
    task.stages(base)?;
    Ok((task, train))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_files_fill_defaults() {
        let (task, train) = parse_config_strs("{}", "{}", &[]).unwrap();
        assert_eq!(task, TaskConfig::default());
        assert_eq!(train, TrainConfig::default());
        assert_eq!(task.num_envs, 64);
        assert_eq!(task.reward.max_steps, 1200);
        assert_eq!(train.ppo.iterations, 1500);
        let s = task.settings().unwrap();
        assert_eq!(s.lidar.beam_count, 120);
        assert_eq!(s.robot.name, "jetbot");
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let task = TaskConfig::from_json_str(r#"{"lidar": {"max_range": 2.0}, "reward": {"r_goal": 10}}"#).unwrap();
        assert_eq!(task.lidar.beam_count, 120);
        assert_eq!(task.lidar.max_range, 2.0);
        assert_eq!(task.reward.r_goal, 10.0);
        assert_eq!(task.reward.min_dist, 0.25);
    }

    #[test]
    fn beam_count_input_dim_mismatch_names_both_fields() {
        let err = parse_config_strs(r#"{"lidar": {"beam_count": 60}}"#, "{}", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::ConfigInconsistent(_)));
        assert!(msg.contains("network.input_dim") && msg.contains("lidar.beam_count"), "{msg}");
        // consistent after the matching override
        parse_config_strs(r#"{"lidar": {"beam_count": 60}}"#, "{}", &["network.input_dim=64".into()]).unwrap();
    }

    #[test]
    fn overrides_apply_last() {
        let (task, train) = parse_config_strs(
            "{}",
            r#"{"ppo": {"learning_rate": 0.1}}"#,
            &["ppo.learning_rate=1e-4".into(), "task.seed=7".into(), "world=empty".into(), "train.seed=3".into()],
        )
        .unwrap();
        assert_eq!(train.ppo.learning_rate, 1e-4);
        assert_eq!(task.seed, 7);
        assert_eq!(train.seed, 3);
        assert_eq!(task.world, WorldRef::Preset("empty".into()));
        assert!(parse_config_strs("{}", "{}", &["seed=1".into()]).is_err());
        assert!(parse_config_strs("{}", "{}", &["nonsense=1".into()]).is_err());
        assert!(parse_config_strs("{}", "{}", &["ppo.learning_rate".into()]).is_err());
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let err = parse_config_strs("{}", r#"{"ppo": {"gamma": "high"}}"#, &[]).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "train.ppo.gamma"),
            other => panic!("{other}"),
        }
        let err = parse_config_strs(r#"{"reward": {"bogus": 1}}"#, "{}", &[]).unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.starts_with("task.reward"), "{path}"),
            other => panic!("{other}"),
        }
        let err = parse_config_strs("{}", r#"{"ppo": {"gamma": 1.5}}"#, &[]).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "train.ppo.gamma"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn reserialization_is_a_fixed_point() {
        let task = TaskConfig {
            world: WorldRef::Inline(Box::new(WorldSpec::default_dynamic())),
            robot: RobotRef::Custom(RobotProfile::turtlebot4lite()),
            curriculum: Some(static_then_dynamic(WorldRef::Preset("dynamic".into()), 300)),
            ..Default::default()
        };
        let again = TaskConfig::from_json_str(&task.to_json_string()).unwrap();
        assert_eq!(again, task);
        assert_eq!(again.to_json_string(), task.to_json_string());
        let train = TrainConfig { network: NetworkShape::recurrent(), ..Default::default() };
        assert_eq!(TrainConfig::from_json_str(&train.to_json_string()).unwrap(), train);
    }

    #[test]
    fn curriculum_resolution() {
        let task = TaskConfig {
            curriculum: Some(static_then_dynamic(WorldRef::Preset("dynamic".into()), 300)),
            ..Default::default()
        };
        let stages = task.stages(Path::new(".")).unwrap();
        assert_eq!(stages.len(), 2);
        assert!(stages[0].world.dynamic_obstacles.is_empty());
        assert_eq!(stages[1].world.dynamic_obstacles.len(), 2);
        let bad = TaskConfig {
            curriculum: Some(vec![
                StageConfig { start_iteration: 0, world: WorldRef::default(), dynamic_obstacles: true },
                StageConfig { start_iteration: 0, world: WorldRef::default(), dynamic_obstacles: true },
            ]),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn world_files_resolve_relative_to_task_file() {
        let dir = tempfile::tempdir().unwrap();
        WorldSpec::generate(4.0, 5, 1).unwrap().save(&dir.path().join("arena.json")).unwrap();
        std::fs::write(dir.path().join("task.json"), r#"{"world": {"file": "arena.json"}}"#).unwrap();
        std::fs::write(dir.path().join("train.json"), "{}").unwrap();
        parse_configs(&dir.path().join("task.json"), &dir.path().join("train.json"), &[]).unwrap();
        std::fs::write(dir.path().join("task.json"), r#"{"world": {"file": "missing.json"}}"#).unwrap();
        let err = parse_configs(&dir.path().join("task.json"), &dir.path().join("train.json"), &[]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }
}
