//! Policy files and deterministic inference.
//!
//! A policy is two files in one directory:
//!
//! * `<name>.manifest.json`: format version, network shape, robot profile,
//!   observation constants, tensor layout and a CRC-32 of the blob;
//! * `<name>.weights.bin`: every tensor as little-endian `f32`, in layout
//!   order, nothing else.
//!
//! Everything inference needs is in the manifest, so a deployed policy
//! behaves the same whatever task configuration the caller has.

use crate::env::{build_observation, ObsConstants, Observation, TaskSettings};
use crate::nn::{layout, HiddenState, NetworkShape, PolicyWeights};
use crate::robot::{clamp_action, Action, Pose, RobotProfile};
use crate::world::{Point, WorldSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

/// One tensor inside the blob. `offset` and `len` are in bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyManifest {
    pub format_version: u32,
    pub network: NetworkShape,
    pub robot: RobotProfile,
    pub obs: ObsConstants,
    pub goal_radius: f64,
    pub dtype: String,
    pub tensors: Vec<BlobTensor>,
    pub blob_file: String,
    pub blob_bytes: u64,
    pub checksum: u32,
}

impl PolicyManifest {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

fn blob_layout(shape: &NetworkShape) -> Vec<BlobTensor> {
    layout(shape)
        .into_iter()
        .map(|t| BlobTensor {
            offset: 4 * t.offset as u64,
            len: 4 * t.len() as u64,
            name: t.name,
            shape: t.shape,
        })
        .collect()
}

/// Manifest and blob bytes for `weights`, without touching the disk.
pub fn encode(
    weights: &PolicyWeights,
    settings: &TaskSettings,
    world: &WorldSpec,
    blob_file: &str,
) -> Result<(PolicyManifest, Vec<u8>)> {
    if weights.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::ShapeInconsistent("refusing to export non-finite weights".into()));
    }
    if weights.shape().input_dim != settings.obs_dim() {
        return Err(Error::ShapeInconsistent(format!(
            "network input_dim {} does not match {} lidar beams",
            weights.shape().input_dim,
            settings.lidar.beam_count
        )));
    }
    let blob: Vec<u8> = weights.params().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    let manifest = PolicyManifest {
        format_version: FORMAT_VERSION,
        network: weights.shape().clone(),
        robot: settings.robot.clone(),
        obs: settings.obs_constants(world),
        goal_radius: settings.reward.goal_radius,
        dtype: DTYPE.into(),
        tensors: blob_layout(weights.shape()),
        blob_file: blob_file.into(),
        blob_bytes: blob.len() as u64,
        checksum: crc32fast::hash(&blob),
    };
    Ok((manifest, blob))
}

/// Writes `<name>.manifest.json` and `<name>.weights.bin` into `dir`.
/// Returns the manifest path and contents.
pub fn export_policy(
    weights: &PolicyWeights,
    settings: &TaskSettings,
    world: &WorldSpec,
    dir: &Path,
    name: &str,
) -> Result<(PathBuf, PolicyManifest)> {
    let blob_file = format!("{name}.weights.bin");
    let (manifest, blob) = encode(weights, settings, world, &blob_file)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join(&blob_file);
    std::fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let path = manifest_path(dir, name);
    std::fs::write(&path, manifest.to_json_string()).map_err(|e| Error::io(&path, e))?;
    Ok((path, manifest))
}

/// Re-writes an already loaded policy under `name` in `dir`. The blob is
/// re-encoded from `weights`; the manifest keeps its constants.
pub fn write_policy(weights: &PolicyWeights, manifest: &PolicyManifest, dir: &Path, name: &str) -> Result<PathBuf> {
    let blob: Vec<u8> = weights.params().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    let mut m = manifest.clone();
    m.blob_file = format!("{name}.weights.bin");
    m.blob_bytes = blob.len() as u64;
    m.checksum = crc32fast::hash(&blob);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join(&m.blob_file);
    std::fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let path = manifest_path(dir, name);
    std::fs::write(&path, m.to_json_string()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Parses and checks a manifest on its own (no blob).
pub fn parse_manifest(json: &str) -> Result<PolicyManifest> {
    // read the version first so future formats fail with the right error
    let v: serde_json::Value = serde_json::from_str(json)?;
    let version = v.get("format_version").and_then(|x| x.as_u64());
    match version {
        Some(x) if x == FORMAT_VERSION as u64 => {}
        Some(x) => {
            return Err(Error::VersionUnsupported {
                found: u32::try_from(x).unwrap_or(u32::MAX),
                supported: FORMAT_VERSION,
            })
        }
        None => return Err(Error::ShapeInconsistent("manifest has no integer format_version".into())),
    }
    let m: PolicyManifest = serde_path_to_error::deserialize(v)
        .map_err(|e| Error::ShapeInconsistent(format!("manifest field `{}`: {}", e.path(), e.inner())))?;
    if m.dtype != DTYPE {
        return Err(Error::ShapeInconsistent(format!("dtype `{}` (only {DTYPE} is supported)", m.dtype)));
    }
    m.network.validate().map_err(Error::ShapeInconsistent)?;
    m.robot.validate().map_err(Error::ShapeInconsistent)?;
    m.obs.lidar.validate().map_err(Error::ShapeInconsistent)?;
    if m.network.input_dim != m.obs.lidar.beam_count + crate::env::NON_LIDAR_OBS {
        return Err(Error::ShapeInconsistent(format!(
            "input_dim {} does not match {} lidar beams",
            m.network.input_dim, m.obs.lidar.beam_count
        )));
    }
    if !(m.obs.goal_dist_scale.is_finite() && m.obs.goal_dist_scale > 0.0 && m.goal_radius.is_finite()) {
        return Err(Error::ShapeInconsistent("goal constants must be finite and positive".into()));
    }
    let expected = blob_layout(&m.network);
    if m.tensors != expected {
        let detail = m
            .tensors
            .iter()
            .zip(&expected)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("tensor `{}` {:?}@{} where `{}` {:?}@{} was expected", a.name, a.shape, a.offset, b.name, b.shape, b.offset))
            .unwrap_or_else(|| format!("{} tensors listed, network has {}", m.tensors.len(), expected.len()));
        return Err(Error::ShapeInconsistent(detail));
    }
    let total: u64 = expected.iter().map(|t| t.len).sum();
    if m.blob_bytes != total {
        return Err(Error::ShapeInconsistent(format!("blob_bytes {} but tensors need {total}", m.blob_bytes)));
    }
    let plain = Path::new(&m.blob_file).file_name().is_some_and(|f| f == m.blob_file.as_str());
    if !plain {
        return Err(Error::ShapeInconsistent(format!("blob_file `{}` must be a bare file name", m.blob_file)));
    }
    Ok(m)
}

/// Decodes a policy from manifest text and blob bytes.
pub fn load_from_bytes(manifest_json: &str, blob: &[u8]) -> Result<(PolicyWeights, PolicyManifest)> {
    let m = parse_manifest(manifest_json)?;
    if blob.len() as u64 != m.blob_bytes {
        return Err(Error::ShapeInconsistent(format!(
            "blob has {} bytes, manifest says {}",
            blob.len(),
            m.blob_bytes
        )));
    }
    let actual = crc32fast::hash(blob);
    if actual != m.checksum {
        return Err(Error::ChecksumMismatch { expected: m.checksum, actual });
    }
    let params: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::ShapeInconsistent("blob contains non-finite weights".into()));
    }
    let weights = PolicyWeights::from_params(m.network.clone(), params)?;
    Ok((weights, m))
}

/// Reads a policy given its manifest path.
pub fn load_policy(manifest_path: &Path) -> Result<(PolicyWeights, PolicyManifest)> {
    let json = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m = parse_manifest(&json)?;
    let blob_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&m.blob_file);
    let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    load_from_bytes(&json, &blob)
}

/// Observation exactly as the deployed policy sees it. Non-finite ranges
/// (dropped returns) read as max range.
pub fn deployed_observation(
    manifest: &PolicyManifest,
    raw_scan: &[f64],
    pose: &Pose,
    goal: Point,
    prev_action: Action,
) -> Result<Observation> {
    let expected = manifest.obs.lidar.beam_count;
    if raw_scan.len() != expected {
        return Err(Error::ScanLengthMismatch { expected, got: raw_scan.len() });
    }
    let max = manifest.obs.lidar.max_range;
    let ranges: Vec<f64> = raw_scan.iter().map(|&r| if r.is_nan() { max } else { r }).collect();
    Ok(build_observation(&ranges, pose, goal, prev_action, &manifest.obs))
}

/// Deterministic command: observation from manifest constants, network
/// mean (no sampling), clamped to the manifest's robot ranges.
pub fn infer(
    weights: &PolicyWeights,
    manifest: &PolicyManifest,
    raw_scan: &[f64],
    pose: &Pose,
    goal: Point,
    prev_action: Action,
    hidden: &HiddenState,
) -> Result<(Action, HiddenState)> {
    let obs = deployed_observation(manifest, raw_scan, pose, goal, prev_action)?;
    let f = weights.forward(&obs, hidden)?;
    Ok((clamp_action(f.mean, &manifest.robot), f.hidden))
}
