//! Procedural 2D arenas and exact geometric queries.
//!
//! A [`WorldSpec`] is the serializable description of an arena: a walled
//! square, static obstacles (circles, axis-aligned boxes, wall segments) and
//! boxes that oscillate back and forth along a segment. [`World`] is the
//! runtime value built from a spec; it is immutable and stepping it produces a
//! new value.
//!
//! All queries are analytic: rays are intersected with each primitive in
//! closed form and clearances are exact Euclidean distances.

use crate::robot::Pose;
use crate::{Error, Result, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::Arc;

pub const WORLD_SCHEMA_VERSION: u32 = 1;

const MAX_SAMPLING_ATTEMPTS: usize = 2000;

pub type Point = [f64; 2];

/// A static obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Circle { center: Point, radius: f64 },
    Box { center: Point, half_extents: [f64; 2] },
    Segment { a: Point, b: Point },
}

/// Either a fixed value or a closed interval sampled uniformly per world build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sampled {
    Fixed(f64),
    Range([f64; 2]),
}

impl Sampled {
    fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Sampled::Fixed(x) => x,
            Sampled::Range([lo, hi]) if hi > lo => rng.random_range(lo..=hi),
            Sampled::Range([lo, _]) => lo,
        }
    }

    fn bounds(&self) -> [f64; 2] {
        match *self {
            Sampled::Fixed(x) => [x, x],
            Sampled::Range(r) => r,
        }
    }
}

/// A box that travels back and forth along `path` at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicObstacleSpec {
    pub half_extents: [f64; 2],
    pub path: [Point; 2],
    /// m/s; a `[lo, hi]` pair is sampled per world build.
    pub speed: Sampled,
    /// Fraction of the round trip already covered at t = 0. Sampled per
    /// world build when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub min: Point,
    pub max: Point,
}

impl SampleBox {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    fn sample(&self, rng: &mut Rng) -> Point {
        let axis = |lo: f64, hi: f64, rng: &mut Rng| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        [
            axis(self.min[0], self.max[0], rng),
            axis(self.min[1], self.max[1], rng),
        ]
    }
}

/// Serializable arena description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub schema_version: u32,
    /// Walls sit at ±`arena_half_extent` on both axes.
    pub arena_half_extent: f64,
    #[serde(default)]
    pub static_obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub dynamic_obstacles: Vec<DynamicObstacleSpec>,
    /// Goal sampling box; defaults to the arena inset by `spawn_clearance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_region: Option<SampleBox>,
    /// Spawn sampling box; defaults to the whole arena.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn_region: Option<SampleBox>,
    /// Spawn yaw interval; defaults to `[-π, π)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn_yaw: Option<[f64; 2]>,
    #[serde(default = "default_spawn_clearance")]
    pub spawn_clearance: f64,
}

fn default_spawn_clearance() -> f64 {
    0.5
}

impl WorldSpec {
    /// Walls only.
    pub fn empty(arena_half_extent: f64) -> Self {
        Self {
            schema_version: WORLD_SCHEMA_VERSION,
            arena_half_extent,
            static_obstacles: Vec::new(),
            dynamic_obstacles: Vec::new(),
            goal_region: None,
            spawn_region: None,
            spawn_yaw: None,
            spawn_clearance: default_spawn_clearance(),
        }
    }

    /// The default static arena: 8 m square with six fixed obstacles.
    pub fn default_static() -> Self {
        let mut spec = Self::empty(4.0);
        spec.static_obstacles = vec![
            ObstacleSpec::Box { center: [-1.9, 1.9], half_extents: [0.4, 0.3] },
            ObstacleSpec::Circle { center: [1.9, 2.0], radius: 0.35 },
            ObstacleSpec::Box { center: [2.0, -1.8], half_extents: [0.25, 0.45] },
            ObstacleSpec::Circle { center: [-2.0, -2.0], radius: 0.45 },
            ObstacleSpec::Box { center: [0.0, 0.0], half_extents: [0.3, 0.3] },
            ObstacleSpec::Circle { center: [-0.2, 2.9], radius: 0.2 },
        ];
        spec
    }

    /// The default static arena plus two boxes crossing its middle at
    /// 0.1–0.3 m/s.
    pub fn default_dynamic() -> Self {
        let mut spec = Self::default_static();
        spec.dynamic_obstacles = vec![
            DynamicObstacleSpec {
                half_extents: [0.2, 0.2],
                path: [[-3.2, 1.0], [3.2, 1.0]],
                speed: Sampled::Range([0.1, 0.3]),
                phase: None,
            },
            DynamicObstacleSpec {
                half_extents: [0.2, 0.2],
                path: [[1.0, -3.2], [1.0, 3.2]],
                speed: Sampled::Range([0.1, 0.3]),
                phase: None,
            },
        ];
        spec
    }

    /// Fixed start/goal 4.7 m apart with one box sweeping across the
    /// straight-line route at `speed`.
    pub fn crossing(speed: Sampled) -> Self {
        let mut spec = Self::empty(4.0);
        spec.dynamic_obstacles = vec![DynamicObstacleSpec {
            half_extents: [0.2, 0.2],
            path: [[0.0, -2.2], [0.0, 2.2]],
            speed,
            phase: None,
        }];
        spec.spawn_region = Some(SampleBox { min: [-2.5, -0.2], max: [-2.2, 0.2] });
        spec.spawn_yaw = Some([-0.3, 0.3]);
        spec.goal_region = Some(SampleBox { min: [2.2, -0.2], max: [2.5, 0.2] });
        spec
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "empty" => Some(Self::empty(4.0)),
            "static" => Some(Self::default_static()),
            "dynamic" => Some(Self::default_dynamic()),
            "crossing" => Some(Self::crossing(Sampled::Range([0.1, 0.3]))),
            _ => None,
        }
    }

    /// Random static arena: `count` boxes/circles sized 0.3–1.0 m, at least
    /// 0.8 m apart and clear of the walls.
    pub fn generate(arena_half_extent: f64, count: usize, seed: u64) -> Result<Self> {
        let mut rng = crate::rng_from_seed(seed);
        let mut spec = Self::empty(arena_half_extent);
        let mut placed: Vec<(Point, f64)> = Vec::new();
        let mut attempts = 0;
        while placed.len() < count {
            attempts += 1;
            if attempts > MAX_SAMPLING_ATTEMPTS {
                return Err(Error::SamplingExhausted {
                    attempts: MAX_SAMPLING_ATTEMPTS,
                    clearance: 0.8,
                });
            }
            let size = rng.random_range(0.3..=1.0);
            let bound = arena_half_extent - size / 2.0 - 0.6;
            if bound <= 0.0 {
                continue;
            }
            let c = [rng.random_range(-bound..bound), rng.random_range(-bound..bound)];
            let r_bound = size / 2.0 * std::f64::consts::SQRT_2;
            if placed.iter().any(|(p, r)| dist(*p, c) < r + r_bound + 0.8) {
                continue;
            }
            let obstacle = if rng.random_bool(0.5) {
                ObstacleSpec::Circle { center: c, radius: size / 2.0 }
            } else {
                let aspect = rng.random_range(0.6..=1.0);
                ObstacleSpec::Box { center: c, half_extents: [size / 2.0, size / 2.0 * aspect] }
            };
            spec.static_obstacles.push(obstacle);
            placed.push((c, r_bound));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.schema_version != WORLD_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} (expected {WORLD_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let h = self.arena_half_extent;
        if !(h.is_finite() && h > 0.0) {
            return bad("arena_half_extent must be > 0".into());
        }
        if !(self.spawn_clearance.is_finite() && self.spawn_clearance >= 0.0) {
            return bad("spawn_clearance must be >= 0".into());
        }
        let inside = |p: Point, margin: [f64; 2]| {
            p[0].is_finite()
                && p[1].is_finite()
                && p[0] - margin[0] >= -h
                && p[0] + margin[0] <= h
                && p[1] - margin[1] >= -h
                && p[1] + margin[1] <= h
        };
        for (i, o) in self.static_obstacles.iter().enumerate() {
            match *o {
                ObstacleSpec::Circle { center, radius } => {
                    if !(radius.is_finite() && radius > 0.0) {
                        return bad(format!("static_obstacles[{i}]: radius must be > 0"));
                    }
                    if !inside(center, [radius, radius]) {
                        return bad(format!("static_obstacles[{i}] lies outside the arena"));
                    }
                }
                ObstacleSpec::Box { center, half_extents } => {
                    if !half_extents.iter().all(|e| e.is_finite() && *e > 0.0) {
                        return bad(format!("static_obstacles[{i}]: half_extents must be > 0"));
                    }
                    if !inside(center, half_extents) {
                        return bad(format!("static_obstacles[{i}] lies outside the arena"));
                    }
                }
                ObstacleSpec::Segment { a, b } => {
                    if !inside(a, [0.0; 2]) || !inside(b, [0.0; 2]) {
                        return bad(format!("static_obstacles[{i}] lies outside the arena"));
                    }
                }
            }
        }
        for (i, d) in self.dynamic_obstacles.iter().enumerate() {
            if !d.half_extents.iter().all(|e| e.is_finite() && *e > 0.0) {
                return bad(format!("dynamic_obstacles[{i}]: half_extents must be > 0"));
            }
            if !inside(d.path[0], [0.0; 2]) || !inside(d.path[1], [0.0; 2]) {
                return bad(format!("dynamic_obstacles[{i}]: path endpoint outside the arena"));
            }
            let [lo, hi] = d.speed.bounds();
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
                return bad(format!("dynamic_obstacles[{i}]: speed must be > 0"));
            }
            if let Some(p) = d.phase {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("dynamic_obstacles[{i}]: phase must be in [0, 1]"));
                }
            }
        }
        for (name, region) in [("goal_region", &self.goal_region), ("spawn_region", &self.spawn_region)] {
            if let Some(r) = region {
                if !(inside(r.min, [0.0; 2]) && inside(r.max, [0.0; 2]))
                    || r.min[0] > r.max[0]
                    || r.min[1] > r.max[1]
                {
                    return bad(format!("{name} must be a nonempty box inside the arena"));
                }
            }
        }
        if let Some([lo, hi]) = self.spawn_yaw {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("spawn_yaw must be an interval".into());
            }
        }
        Ok(())
    }

    /// Goal sampling box, defaulting to the arena inset by the spawn clearance.
    pub fn effective_goal_region(&self) -> SampleBox {
        self.goal_region.unwrap_or_else(|| {
            let m = (self.arena_half_extent - self.spawn_clearance).max(0.0);
            SampleBox { min: [-m, -m], max: [m, m] }
        })
    }

    /// Length of the arena diagonal.
    pub fn diagonal(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.arena_half_extent
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::InvalidSpec(format!("{}: {}", e.path(), e.inner()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("world spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Lidar geometry. Beam `i` points at `yaw + 2πi / beam_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub beam_count: usize,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { beam_count: 120, min_range: 0.15, max_range: 3.0 }
    }
}

impl LidarConfig {
    /// Range-limited profile of the physical deployment sensor.
    pub fn deployment() -> Self {
        Self { max_range: 2.0, ..Self::default() }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.beam_count == 0 {
            return Err("beam_count must be >= 1".into());
        }
        if !(self.min_range.is_finite() && self.max_range.is_finite()) {
            return Err("ranges must be finite".into());
        }
        if !(0.0 < self.min_range && self.min_range < self.max_range) {
            return Err("need 0 < min_range < max_range".into());
        }
        Ok(())
    }

    pub fn beam_angle(&self, yaw: f64, i: usize) -> f64 {
        yaw + TAU * i as f64 / self.beam_count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn min(&self) -> f64 {
        self.ranges.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runtime geometry primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Circle { center: Point, radius: f64 },
    Box { center: Point, half: [f64; 2] },
    Segment { a: Point, b: Point },
}

impl Shape {
    fn from_spec(o: &ObstacleSpec) -> Self {
        match *o {
            ObstacleSpec::Circle { center, radius } => Shape::Circle { center, radius },
            ObstacleSpec::Box { center, half_extents } => Shape::Box { center, half: half_extents },
            ObstacleSpec::Segment { a, b } => Shape::Segment { a, b },
        }
    }

    /// Smallest `t >= 0` with `origin + t·dir` on the shape, `dir` unit length.
    /// Origins inside an area shape hit at 0.
    pub fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        match *self {
            Shape::Circle { center, radius } => ray_circle(origin, dir, center, radius),
            Shape::Box { center, half } => ray_box(origin, dir, center, half),
            Shape::Segment { a, b } => ray_segment(origin, dir, a, b),
        }
    }

    /// Euclidean distance from `p` to the shape; 0 inside.
    pub fn distance(&self, p: Point) -> f64 {
        match *self {
            Shape::Circle { center, radius } => (dist(p, center) - radius).max(0.0),
            Shape::Box { center, half } => {
                let dx = ((p[0] - center[0]).abs() - half[0]).max(0.0);
                let dy = ((p[1] - center[1]).abs() - half[1]).max(0.0);
                dx.hypot(dy)
            }
            Shape::Segment { a, b } => point_segment_distance(p, a, b),
        }
    }

    /// Closed-set membership (boundary counts as occupied).
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Circle { center, radius } => dist(p, center) <= radius,
            Shape::Box { center, half } => {
                (p[0] - center[0]).abs() <= half[0] && (p[1] - center[1]).abs() <= half[1]
            }
            Shape::Segment { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DynamicState {
    a: Point,
    b: Point,
    half: [f64; 2],
    speed: f64,
    /// Distance travelled along the ping-pong cycle since phase 0.
    travelled: f64,
    time_offset: f64,
}

impl DynamicState {
    fn length(&self) -> f64 {
        dist(self.a, self.b)
    }

    fn center(&self) -> Point {
        let len = self.length();
        if len == 0.0 {
            return self.a;
        }
        let s = self.travelled.rem_euclid(2.0 * len);
        let along = if s <= len { s } else { 2.0 * len - s };
        let f = along / len;
        [
            self.a[0] + f * (self.b[0] - self.a[0]),
            self.a[1] + f * (self.b[1] - self.a[1]),
        ]
    }
}

/// Runtime world. Cheap to clone; the `WorldSpec` is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    spec: Arc<WorldSpec>,
    statics: Arc<Vec<Shape>>,
    dynamic: Vec<DynamicState>,
    sim_time: f64,
}

/// Builds a world from `spec`. Dynamic speeds and phases left open in the
/// spec are drawn from `seed`.
pub fn build_world(spec: &WorldSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = crate::rng_from_seed(seed);
    let h = spec.arena_half_extent;
    let mut statics = vec![
        Shape::Segment { a: [-h, -h], b: [h, -h] },
        Shape::Segment { a: [h, -h], b: [h, h] },
        Shape::Segment { a: [h, h], b: [-h, h] },
        Shape::Segment { a: [-h, h], b: [-h, -h] },
    ];
    statics.extend(spec.static_obstacles.iter().map(Shape::from_spec));
    let dynamic = spec
        .dynamic_obstacles
        .iter()
        .map(|d| {
            let speed = d.speed.sample(&mut rng);
            let phase = d.phase.unwrap_or_else(|| rng.random_range(0.0..1.0));
            let len = dist(d.path[0], d.path[1]);
            let travelled = phase * 2.0 * len;
            DynamicState {
                a: d.path[0],
                b: d.path[1],
                half: d.half_extents,
                speed,
                travelled,
                time_offset: travelled,
            }
        })
        .collect();
    Ok(World {
        spec: Arc::new(spec.clone()),
        statics: Arc::new(statics),
        dynamic,
        sim_time: 0.0,
    })
}

impl World {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    /// The four walls first, then the static obstacles in spec order.
    pub fn static_shapes(&self) -> &[Shape] {
        &self.statics
    }

    pub fn wall_count(&self) -> usize {
        4
    }

    pub fn dynamic_centers(&self) -> Vec<Point> {
        self.dynamic.iter().map(DynamicState::center).collect()
    }

    pub fn dynamic_speeds(&self) -> Vec<f64> {
        self.dynamic.iter().map(|d| d.speed).collect()
    }

    pub fn dynamic_shapes(&self) -> impl Iterator<Item = Shape> + '_ {
        self.dynamic.iter().map(|d| Shape::Box { center: d.center(), half: d.half })
    }

    /// Every shape at the current time.
    pub fn shapes(&self) -> impl Iterator<Item = Shape> + '_ {
        self.statics.iter().copied().chain(self.dynamic_shapes())
    }

    /// Same world with the dynamic obstacles removed.
    pub fn without_dynamics(&self) -> World {
        let mut spec = (*self.spec).clone();
        spec.dynamic_obstacles.clear();
        World {
            spec: Arc::new(spec),
            statics: self.statics.clone(),
            dynamic: Vec::new(),
            sim_time: self.sim_time,
        }
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let h = self.spec.arena_half_extent;
        p[0].abs() <= h && p[1].abs() <= h
    }

    /// True when `p` is inside an obstacle or outside the walls.
    pub fn occupied(&self, p: Point) -> bool {
        !self.contains_point(p) || self.shapes().any(|s| s.contains(p))
    }
}

/// Distance to the nearest surface along `angle`, clamped to `max_range`.
pub fn cast_ray(world: &World, origin: Point, angle: f64, max_range: f64) -> f64 {
    let dir = [angle.cos(), angle.sin()];
    let mut best = max_range;
    for s in world.shapes() {
        if let Some(t) = s.ray_hit(origin, dir) {
            if t < best {
                best = t;
            }
        }
    }
    best.max(0.0)
}

/// Full lidar sweep from `pose`. Readings are clamped to
/// `[min_range, max_range]`.
pub fn scan(world: &World, pose: &Pose, lidar: &LidarConfig) -> LidarScan {
    let origin = pose.position();
    let ranges = (0..lidar.beam_count)
        .map(|i| {
            cast_ray(world, origin, lidar.beam_angle(pose.yaw, i), lidar.max_range)
                .clamp(lidar.min_range, lidar.max_range)
        })
        .collect();
    LidarScan { ranges }
}

/// Advances every dynamic obstacle by `speed·dt` along its ping-pong path.
pub fn step_dynamic_obstacles(world: &World, dt: f64) -> World {
    let mut next = world.clone();
    next.sim_time += dt;
    for d in &mut next.dynamic {
        // recomputed from accumulated time so positions do not depend on
        // how the interval was subdivided
        d.travelled = d.time_offset + d.speed * next.sim_time;
    }
    next
}

/// Exact distance from `p` to the nearest wall or obstacle surface.
pub fn min_clearance(world: &World, p: Point) -> f64 {
    world.shapes().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
}

/// Uniformly samples a pose whose clearance is at least `clearance`, using
/// the `WorldSpec` spawn region and yaw interval when present.
pub fn sample_free_pose(world: &World, clearance: f64, rng: &mut Rng) -> Result<Pose> {
    let h = world.spec.arena_half_extent;
    let region = world
        .spec
        .spawn_region
        .unwrap_or(SampleBox { min: [-h, -h], max: [h, h] });
    let p = sample_free_point(world, &region, clearance, rng, |_| true)?;
    let yaw = match world.spec.spawn_yaw {
        Some([lo, hi]) if hi > lo => rng.random_range(lo..hi),
        Some([lo, _]) => lo,
        None => rng.random_range(-PI..PI),
    };
    Ok(Pose::new(p[0], p[1], yaw))
}

/// Rejection-samples a point in `region` with the requested clearance that
/// also satisfies `accept`.
pub fn sample_free_point(
    world: &World,
    region: &SampleBox,
    clearance: f64,
    rng: &mut Rng,
    accept: impl Fn(Point) -> bool,
) -> Result<Point> {
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let p = region.sample(rng);
        if world.contains_point(p) && min_clearance(world, p) >= clearance && accept(p) {
            return Ok(p);
        }
    }
    Err(Error::SamplingExhausted { attempts: MAX_SAMPLING_ATTEMPTS, clearance })
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn ray_segment(o: Point, d: Point, a: Point, b: Point) -> Option<f64> {
    let e = [b[0] - a[0], b[1] - a[1]];
    let ao = [a[0] - o[0], a[1] - o[1]];
    let denom = cross(d, e);
    if denom.abs() < 1e-15 {
        // parallel: only a collinear segment can be hit, at its nearer end
        if cross(ao, d).abs() > 1e-12 {
            return None;
        }
        let ta = ao[0] * d[0] + ao[1] * d[1];
        let tb = (b[0] - o[0]) * d[0] + (b[1] - o[1]) * d[1];
        return match (ta >= 0.0, tb >= 0.0) {
            (true, true) => Some(ta.min(tb)),
            (false, false) => None,
            _ => Some(0.0),
        };
    }
    let t = cross(ao, e) / denom;
    let s = cross(ao, d) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

fn ray_circle(o: Point, d: Point, c: Point, r: f64) -> Option<f64> {
    let oc = [o[0] - c[0], o[1] - c[1]];
    let b = oc[0] * d[0] + oc[1] * d[1];
    let cc = oc[0] * oc[0] + oc[1] * oc[1] - r * r;
    if cc <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

fn ray_box(o: Point, d: Point, c: Point, half: [f64; 2]) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..2 {
        let lo = c[k] - half[k];
        let hi = c[k] + half[k];
        if d[k].abs() < 1e-15 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
        } else {
            let t1 = (lo - o[k]) / d[k];
            let t2 = (hi - o[k]) / d[k];
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(a);
            t_far = t_far.min(b);
        }
    }
    if t_near > t_far || t_far < 0.0 {
        return None;
    }
    Some(t_near.max(0.0))
}
