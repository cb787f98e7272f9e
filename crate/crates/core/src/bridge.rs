//! Line-delimited JSON runtime for a deployed policy.
//!
//! Input lines are `scan`, `odom` and `goal` objects; output lines are
//! `cmd_vel` and `status` objects. Every message may carry a `stamp` in
//! seconds; messages without one are stamped with the session clock.
//!
//! ```text
//! {"type":"goal","x":1.5,"y":0.0}
//! {"type":"odom","stamp":0.0,"x":0.0,"y":0.0,"yaw":0.0,"v":0.0,"w":0.0}
//! {"type":"scan","stamp":0.0,"ranges":[3.0, 2.9, null, ...]}
//! -> {"type":"cmd_vel","stamp":0.0,"v":0.42,"w":-0.03}
//! ```
//!
//! A command is produced for each scan that arrives while a goal is active
//! and odometry is no older than the staleness limit. `null` ranges are
//! dropped returns and read as max range.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::nn::{HiddenState, PolicyWeights};
use crate::policy_io::{self, PolicyManifest};
use crate::robot::{Action, Pose};
use crate::world::Point;
use crate::{Error, Result};

pub const DEFAULT_STALENESS_LIMIT: f64 = 0.5;
pub const HEARTBEAT_PERIOD: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BridgeMessage {
    Scan {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
        /// Meters; `null` marks a dropped return.
        ranges: Vec<Option<f64>>,
    },
    Odom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
        x: f64,
        y: f64,
        yaw: f64,
        #[serde(default)]
        v: f64,
        #[serde(default)]
        w: f64,
    },
    Goal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
        x: f64,
        y: f64,
    },
    CmdVel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
        v: f64,
        w: f64,
    },
    Status {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stamp: Option<f64>,
        state: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl BridgeMessage {
    pub fn stamp(&self) -> Option<f64> {
        match self {
            BridgeMessage::Scan { stamp, .. }
            | BridgeMessage::Odom { stamp, .. }
            | BridgeMessage::Goal { stamp, .. }
            | BridgeMessage::CmdVel { stamp, .. }
            | BridgeMessage::Status { stamp, .. } => *stamp,
        }
    }

    pub fn status(stamp: f64, state: &str, detail: Option<String>) -> Self {
        BridgeMessage::Status { stamp: Some(stamp), state: state.into(), detail }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("bridge messages serialize")
    }
}

/// Parses one protocol line. Unknown fields are ignored; non-finite
/// numbers other than `null` ranges are rejected.
pub fn parse_line(line: &str) -> Result<BridgeMessage> {
    let msg: BridgeMessage =
        serde_json::from_str(line.trim()).map_err(|e| Error::MalformedMessage(e.to_string()))?;
    let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
    let ok = match &msg {
        BridgeMessage::Scan { ranges, .. } => ranges.iter().flatten().all(|r| r.is_finite()),
        BridgeMessage::Odom { x, y, yaw, v, w, .. } => finite(&[*x, *y, *yaw, *v, *w]),
        BridgeMessage::Goal { x, y, .. } => finite(&[*x, *y]),
        BridgeMessage::CmdVel { v, w, .. } => finite(&[*v, *w]),
        BridgeMessage::Status { .. } => true,
    };
    if !ok || msg.stamp().is_some_and(|s| !s.is_finite()) {
        return Err(Error::MalformedMessage("non-finite value".into()));
    }
    Ok(msg)
}

/// A loaded policy as the bridge runs it.
#[derive(Debug, Clone)]
pub struct DeployedPolicy {
    pub weights: PolicyWeights,
    pub manifest: PolicyManifest,
}

impl DeployedPolicy {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let (weights, manifest) = policy_io::load_policy(manifest_path)?;
        Ok(Self { weights, manifest })
    }

    pub fn beam_count(&self) -> usize {
        self.manifest.obs.lidar.beam_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomReading {
    pub pose: Pose,
    pub v: f64,
    pub w: f64,
    pub stamp: f64,
}

/// Session state. Replaced wholesale by [`handle_message`].
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeState {
    pub scan: Option<(Vec<f64>, f64)>,
    pub odom: Option<OdomReading>,
    pub goal: Option<Point>,
    pub hidden: HiddenState,
    /// Last command sent; fed back as the previous action.
    pub prev_action: Action,
    pub staleness_limit: f64,
}

impl BridgeState {
    pub fn new(policy: &DeployedPolicy, staleness_limit: f64) -> Self {
        Self {
            scan: None,
            odom: None,
            goal: None,
            hidden: HiddenState::zeros(policy.weights.shape().state_units()),
            prev_action: Action::default(),
            staleness_limit,
        }
    }

    /// Heartbeat label.
    pub fn phase(&self) -> &'static str {
        if self.goal.is_some() {
            "active"
        } else {
            "idle"
        }
    }
}

/// Applies one message. `now` stamps messages that carry no stamp of their
/// own. Errors leave the state untouched and come back as status lines.
pub fn handle_message(
    state: &BridgeState,
    msg: &BridgeMessage,
    policy: &DeployedPolicy,
    now: f64,
) -> (BridgeState, Vec<BridgeMessage>) {
    let stamp = msg.stamp().unwrap_or(now);
    let mut next = state.clone();
    match msg {
        BridgeMessage::Odom { x, y, yaw, v, w, .. } => {
            next.odom = Some(OdomReading { pose: Pose::new(*x, *y, *yaw), v: *v, w: *w, stamp });
            (next, vec![])
        }
        BridgeMessage::Goal { x, y, .. } => {
            next.goal = Some([*x, *y]);
            next.hidden = HiddenState::zeros(policy.weights.shape().state_units());
            next.prev_action = Action::default();
            (next, vec![BridgeMessage::status(stamp, "goal_accepted", None)])
        }
        BridgeMessage::Scan { ranges, .. } => {
            let expected = policy.beam_count();
            if ranges.len() != expected {
                let err = Error::ScanLengthMismatch { expected, got: ranges.len() };
                return (state.clone(), vec![BridgeMessage::status(stamp, "scan_length_mismatch", Some(err.to_string()))]);
            }
            let ranges: Vec<f64> = ranges.iter().map(|r| r.unwrap_or(f64::NAN)).collect();
            next.scan = Some((ranges, stamp));
            let out = on_scan(&mut next, policy, stamp);
            (next, out)
        }
        BridgeMessage::CmdVel { .. } | BridgeMessage::Status { .. } => (
            state.clone(),
            vec![BridgeMessage::status(stamp, "error", Some("cmd_vel and status are output-only".into()))],
        ),
    }
}

fn on_scan(state: &mut BridgeState, policy: &DeployedPolicy, stamp: f64) -> Vec<BridgeMessage> {
    let Some(goal) = state.goal else {
        return vec![];
    };
    let fresh = state.odom.is_some_and(|o| stamp - o.stamp <= state.staleness_limit);
    if !fresh {
        return vec![BridgeMessage::status(stamp, "stale_inputs", None)];
    }
    let odom = state.odom.expect("checked above");
    if odom.pose.distance_to(goal) < policy.manifest.goal_radius {
        state.goal = None;
        state.prev_action = Action::default();
        return vec![
            BridgeMessage::CmdVel { stamp: Some(stamp), v: 0.0, w: 0.0 },
            BridgeMessage::status(stamp, "goal_reached", None),
        ];
    }
    let (ranges, _) = state.scan.as_ref().expect("scan just stored");
    match policy_io::infer(&policy.weights, &policy.manifest, ranges, &odom.pose, goal, state.prev_action, &state.hidden) {
        Ok((a, h)) => {
            state.hidden = h;
            state.prev_action = a;
            vec![BridgeMessage::CmdVel { stamp: Some(stamp), v: a.v, w: a.w }]
        }
        Err(e) => vec![BridgeMessage::status(stamp, "error", Some(e.to_string()))],
    }
}

/// Stateful wrapper used by the serving loop.
#[derive(Debug, Clone)]
pub struct Bridge {
    pub policy: DeployedPolicy,
    pub state: BridgeState,
}

impl Bridge {
    pub fn new(policy: DeployedPolicy, staleness_limit: f64) -> Self {
        let state = BridgeState::new(&policy, staleness_limit);
        Self { policy, state }
    }

    pub fn handle(&mut self, msg: &BridgeMessage, now: f64) -> Vec<BridgeMessage> {
        let (next, out) = handle_message(&self.state, msg, &self.policy, now);
        self.state = next;
        out
    }

    /// Parses and handles one line; parse failures become status lines.
    pub fn handle_line(&mut self, line: &str, now: f64) -> Vec<BridgeMessage> {
        match parse_line(line) {
            Ok(msg) => self.handle(&msg, now),
            Err(e) => vec![BridgeMessage::status(now, "malformed_message", Some(e.to_string()))],
        }
    }

    pub fn reset(&mut self) {
        self.state = BridgeState::new(&self.policy, self.state.staleness_limit);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Stdio,
    Tcp(String),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub staleness_limit: f64,
    pub heartbeat: Duration,
    /// Stop accepting TCP sessions after this many (runs forever if `None`).
    pub max_sessions: Option<usize>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { staleness_limit: DEFAULT_STALENESS_LIMIT, heartbeat: HEARTBEAT_PERIOD, max_sessions: None }
    }
}

/// Runs one session until the input closes. Lines are read on a helper
/// thread; handling and writing stay on the calling thread.
pub fn run_session<R, W>(bridge: &mut Bridge, reader: R, mut writer: W, heartbeat: Duration) -> Result<()>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in reader.lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    let start = Instant::now();
    let clock = || start.elapsed().as_secs_f64();
    let mut next_beat = heartbeat;
    let send = |w: &mut W, m: &BridgeMessage| -> std::io::Result<()> {
        writeln!(w, "{}", m.to_line())?;
        w.flush()
    };
    if send(&mut writer, &BridgeMessage::status(0.0, "ready", None)).is_err() {
        return Ok(());
    }
    loop {
        let wait = next_beat.saturating_sub(start.elapsed());
        let out = match rx.recv_timeout(wait) {
            Ok(Ok(line)) if line.trim().is_empty() => continue,
            Ok(Ok(line)) => bridge.handle_line(&line, clock()),
            Ok(Err(e)) => return Err(Error::io("<session input>", e)),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                next_beat += heartbeat;
                vec![BridgeMessage::status(clock(), bridge.state.phase(), None)]
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => return Ok(()),
        };
        for m in &out {
            if send(&mut writer, m).is_err() {
                // peer went away
                return Ok(());
            }
        }
    }
}

/// Serves `policy` on `endpoint` until stdin closes or, for TCP, until
/// `max_sessions` sessions have finished. TCP serves one client at a time;
/// concurrent clients receive a `busy` status and are disconnected.
pub fn serve(policy: DeployedPolicy, endpoint: &Endpoint, opts: &ServeOptions) -> Result<()> {
    let mut bridge = Bridge::new(policy, opts.staleness_limit);
    match endpoint {
        Endpoint::Stdio => {
            let reader = BufReader::new(std::io::stdin());
            run_session(&mut bridge, reader, std::io::stdout().lock(), opts.heartbeat)
        }
        Endpoint::Tcp(addr) => {
            let listener = bind(addr)?;
            serve_tcp(&mut bridge, listener, opts)
        }
    }
}

pub fn bind(addr: &str) -> Result<TcpListener> {
    let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| Error::io(addr, e))?.collect();
    TcpListener::bind(&addrs[..]).map_err(|e| Error::io(addr, e))
}

/// Accept loop for an already-bound listener.
pub fn serve_tcp(bridge: &mut Bridge, listener: TcpListener, opts: &ServeOptions) -> Result<()> {
    let busy = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<TcpStream>();
    let busy_acc = Arc::clone(&busy);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            if busy_acc.swap(true, Ordering::SeqCst) {
                let _ = writeln!(stream, "{}", BridgeMessage::status(0.0, "busy", None).to_line());
                continue;
            }
            if tx.send(stream).is_err() {
                break;
            }
        }
    });
    let mut served = 0;
    while opts.max_sessions.is_none_or(|m| served < m) {
        let Ok(stream) = rx.recv() else { break };
        let reader = BufReader::new(stream.try_clone().map_err(|e| Error::io("<tcp session>", e))?);
        bridge.reset();
        let r = run_session(bridge, reader, &stream, opts.heartbeat);
        let _ = stream.shutdown(std::net::Shutdown::Both);
        busy.store(false, Ordering::SeqCst);
        served += 1;
        r?;
    }
    Ok(())
}
