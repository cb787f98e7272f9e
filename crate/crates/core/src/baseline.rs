//! Classical costmap navigation used as a benchmark reference: a static
//! occupancy grid, 8-connected A* on it, and a dynamic-window local
//! controller that follows the global path while scoring candidate arcs
//! against the live scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::robot::{integrate, wrap_angle, Action, Pose, RobotProfile};
use crate::world::{dist, LidarConfig, Point, Shape, World};
use crate::{Error, Result};

/// Slack used when deciding whether an area overlap is positive or a
/// segment touches a cell boundary.
const GEOM_EPS: f64 = 1e-9;

/// Static occupancy grid over the arena square.
///
/// Cell `(i, j)` covers `[origin.x + i·res, origin.x + (i+1)·res]` and the
/// analogous `y` interval; its flat index is `j·width + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Point,
    pub width: usize,
    pub height: usize,
    pub inflation_radius: f64,
    occupied: Vec<bool>,
    inflated: Vec<bool>,
}

impl OccupancyGrid {
    /// Grid of the given size with nothing occupied.
    pub fn free(width: usize, height: usize, resolution: f64, origin: Point) -> Self {
        Self {
            resolution,
            origin,
            width,
            height,
            inflation_radius: 0.0,
            occupied: vec![false; width * height],
            inflated: vec![false; width * height],
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Raw obstacle occupancy.
    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupied[self.index(i, j)]
    }

    /// Configuration-space occupancy (obstacles plus inflation).
    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.inflated[self.index(i, j)]
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        !self.is_blocked(i, j)
    }

    /// Marks a cell as an obstacle. Call [`OccupancyGrid::inflate`]
    /// afterwards to refresh the configuration space.
    pub fn set_occupied(&mut self, i: usize, j: usize) {
        let k = self.index(i, j);
        self.occupied[k] = true;
        self.inflated[k] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn blocked_count(&self) -> usize {
        self.inflated.iter().filter(|&&o| o).count()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    fn cell_bounds(&self, i: usize, j: usize) -> (Point, Point) {
        let lo = [
            self.origin[0] + i as f64 * self.resolution,
            self.origin[1] + j as f64 * self.resolution,
        ];
        (lo, [lo[0] + self.resolution, lo[1] + self.resolution])
    }

    /// Cell containing `p`, clamped onto the grid.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |v: f64, o: f64, n: usize| {
            let c = ((v - o) / self.resolution).floor();
            c.clamp(0.0, (n - 1) as f64) as usize
        };
        (f(p[0], self.origin[0], self.width), f(p[1], self.origin[1], self.height))
    }

    /// Index range of cells whose closed extent meets `[lo, hi]` on one axis.
    fn span(&self, lo: f64, hi: f64, origin: f64, n: usize) -> Option<(usize, usize)> {
        let a = ((lo - origin) / self.resolution - GEOM_EPS).floor();
        let b = ((hi - origin) / self.resolution + GEOM_EPS).floor();
        let a = a.max(0.0);
        let b = b.min((n - 1) as f64);
        (a <= b).then_some((a as usize, b as usize))
    }

    fn mark_shape(&mut self, shape: &Shape) {
        let (lo, hi) = shape_bounds(shape);
        let Some((i0, i1)) = self.span(lo[0], hi[0], self.origin[0], self.width) else {
            return;
        };
        let Some((j0, j1)) = self.span(lo[1], hi[1], self.origin[1], self.height) else {
            return;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let (clo, chi) = self.cell_bounds(i, j);
                if cell_hits_shape(clo, chi, shape) {
                    self.set_occupied(i, j);
                }
            }
        }
    }

    /// Recomputes the configuration space: a cell is blocked when some
    /// occupied cell's center lies within `radius` of its center.
    pub fn inflate(&mut self, radius: f64) {
        self.inflation_radius = radius;
        self.inflated = self.occupied.clone();
        let reach = (radius / self.resolution + GEOM_EPS).floor() as isize;
        let mut kernel = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let d = (di as f64).hypot(dj as f64) * self.resolution;
                if d <= radius + GEOM_EPS && (di, dj) != (0, 0) {
                    kernel.push((di, dj));
                }
            }
        }
        let (w, h) = (self.width as isize, self.height as isize);
        for j in 0..h {
            for i in 0..w {
                if !self.occupied[(j * w + i) as usize] {
                    continue;
                }
                for &(di, dj) in &kernel {
                    let (x, y) = (i + di, j + dj);
                    if x >= 0 && x < w && y >= 0 && y < h {
                        self.inflated[(y * w + x) as usize] = true;
                    }
                }
            }
        }
    }
}

fn shape_bounds(shape: &Shape) -> (Point, Point) {
    match *shape {
        Shape::Circle { center, radius } => (
            [center[0] - radius, center[1] - radius],
            [center[0] + radius, center[1] + radius],
        ),
        Shape::Box { center, half } => (
            [center[0] - half[0], center[1] - half[1]],
            [center[0] + half[0], center[1] + half[1]],
        ),
        Shape::Segment { a, b } => ([a[0].min(b[0]), a[1].min(b[1])], [a[0].max(b[0]), a[1].max(b[1])]),
    }
}

/// Area shapes need a positive-area overlap with the cell; segments occupy
/// every closed cell they touch.
fn cell_hits_shape(lo: Point, hi: Point, shape: &Shape) -> bool {
    match *shape {
        Shape::Circle { center, radius } => {
            let cx = center[0].clamp(lo[0], hi[0]);
            let cy = center[1].clamp(lo[1], hi[1]);
            dist(center, [cx, cy]) < radius - GEOM_EPS
        }
        Shape::Box { center, half } => {
            let ox = (hi[0].min(center[0] + half[0]) - lo[0].max(center[0] - half[0])).max(0.0);
            let oy = (hi[1].min(center[1] + half[1]) - lo[1].max(center[1] - half[1])).max(0.0);
            ox > GEOM_EPS && oy > GEOM_EPS
        }
        Shape::Segment { a, b } => segment_touches_box(a, b, lo, hi),
    }
}

/// Liang-Barsky clip of segment `ab` against the closed box `[lo, hi]`
/// (grown by a hair so boundary contact counts).
fn segment_touches_box(a: Point, b: Point, lo: Point, hi: Point) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        let (l, h) = (lo[k] - GEOM_EPS, hi[k] + GEOM_EPS);
        if d[k] == 0.0 {
            if a[k] < l || a[k] > h {
                return false;
            }
            continue;
        }
        let mut ta = (l - a[k]) / d[k];
        let mut tb = (h - a[k]) / d[k];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Rasterizes the static obstacles and walls of `world`; dynamic obstacles
/// are never part of the map.
pub fn rasterize(world: &World, resolution: f64, inflation: f64) -> OccupancyGrid {
    assert!(resolution > 0.0, "resolution must be positive");
    let h = world.spec().arena_half_extent;
    let n = ((2.0 * h) / resolution - GEOM_EPS).ceil().max(1.0) as usize;
    let mut grid = OccupancyGrid::free(n, n, resolution, [-h, -h]);
    for s in world.static_shapes() {
        grid.mark_shape(s);
    }
    grid.inflate(inflation);
    grid
}

/// Exact 8-connected path cost `straight + diagonal·√2` in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GridCost {
    pub straight: u64,
    pub diagonal: u64,
}

impl GridCost {
    pub const STRAIGHT: GridCost = GridCost { straight: 1, diagonal: 0 };
    pub const DIAGONAL: GridCost = GridCost { straight: 0, diagonal: 1 };

    pub fn value(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    /// Octile distance between two cells.
    pub fn octile(a: (usize, usize), b: (usize, usize)) -> GridCost {
        let dx = a.0.abs_diff(b.0) as u64;
        let dy = a.1.abs_diff(b.1) as u64;
        GridCost { straight: dx.max(dy) - dx.min(dy), diagonal: dx.min(dy) }
    }
}

impl std::ops::Add for GridCost {
    type Output = GridCost;
    fn add(self, o: GridCost) -> GridCost {
        GridCost { straight: self.straight + o.straight, diagonal: self.diagonal + o.diagonal }
    }
}

impl Ord for GridCost {
    /// Compares `a1 + b1√2` with `a2 + b2√2` in integer arithmetic.
    fn cmp(&self, o: &Self) -> Ordering {
        // sign of da + db·√2
        let da = self.straight as i128 - o.straight as i128;
        let db = self.diagonal as i128 - o.diagonal as i128;
        match (da.signum(), db.signum()) {
            (0, s) | (s, 0) => s.cmp(&0),
            (1, 1) => Ordering::Greater,
            (-1, -1) => Ordering::Less,
            (sa, _) => {
                // opposite signs: compare |da|² with 2·|db|²
                let lhs = da * da;
                let rhs = 2 * db * db;
                let c = lhs.cmp(&rhs);
                if sa > 0 {
                    c
                } else {
                    c.reverse()
                }
            }
        }
    }
}

impl PartialOrd for GridCost {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Global path through free cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub cells: Vec<(usize, usize)>,
    /// Cell centers, start to goal.
    pub waypoints: Vec<Point>,
    pub cost: GridCost,
    /// Metric length (`cost · resolution`).
    pub length: f64,
}

/// Neighbour offsets in a fixed order.
const MOVES: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Free 8-connected successors of a cell. Diagonal moves need both adjacent
/// orthogonal cells free, so paths never cut obstacle corners.
pub fn neighbors(grid: &OccupancyGrid, c: (usize, usize)) -> impl Iterator<Item = ((usize, usize), GridCost)> + '_ {
    let (w, h) = (grid.width as isize, grid.height as isize);
    let free = move |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && grid.is_free(x as usize, y as usize);
    let (i, j) = (c.0 as isize, c.1 as isize);
    MOVES.iter().filter_map(move |&(di, dj)| {
        let (x, y) = (i + di, j + dj);
        if !free(x, y) {
            return None;
        }
        if di != 0 && dj != 0 {
            if !free(i + di, j) || !free(i, j + dj) {
                return None;
            }
            Some(((x as usize, y as usize), GridCost::DIAGONAL))
        } else {
            Some(((x as usize, y as usize), GridCost::STRAIGHT))
        }
    })
}

#[derive(PartialEq, Eq)]
struct OpenEntry {
    f: GridCost,
    h: GridCost,
    index: usize,
}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap; reverse for smallest (f, h, index) first
    fn cmp(&self, o: &Self) -> Ordering {
        (o.f, o.h, o.index).cmp(&(self.f, self.h, self.index))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A* between the cells containing `start` and `goal`.
pub fn astar(grid: &OccupancyGrid, start: Point, goal: Point) -> Result<PlannedPath> {
    astar_cells(grid, grid.cell_of(start), grid.cell_of(goal))
}

/// A* between two cells.
pub fn astar_cells(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Result<PlannedPath> {
    if !grid.is_free(start.0, start.1) || !grid.is_free(goal.0, goal.1) {
        return Err(Error::NoPath);
    }
    let n = grid.width * grid.height;
    let mut g: Vec<Option<GridCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = grid.index(start.0, start.1);
    let gi = grid.index(goal.0, goal.1);
    g[si] = Some(GridCost::default());
    let h0 = GridCost::octile(start, goal);
    open.push(OpenEntry { f: h0, h: h0, index: si });
    while let Some(OpenEntry { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == gi {
            break;
        }
        let cell = (index % grid.width, index / grid.width);
        let gc = g[index].expect("closed cells have a cost");
        for (nb, step) in neighbors(grid, cell) {
            let ni = grid.index(nb.0, nb.1);
            if closed[ni] {
                continue;
            }
            let cand = gc + step;
            if g[ni].is_none_or(|old| cand < old) {
                g[ni] = Some(cand);
                parent[ni] = index;
                let h = GridCost::octile(nb, goal);
                open.push(OpenEntry { f: cand + h, h, index: ni });
            }
        }
    }
    let cost = g[gi].ok_or(Error::NoPath)?;
    let mut cells = vec![goal];
    let mut k = gi;
    while k != si {
        k = parent[k];
        cells.push((k % grid.width, k / grid.width));
    }
    cells.reverse();
    let waypoints = cells.iter().map(|&(i, j)| grid.cell_center(i, j)).collect();
    Ok(PlannedPath { cells, waypoints, cost, length: cost.value() * grid.resolution })
}

/// Nearest free cell to `c` by breadth-first search over the grid, used when
/// the robot's own cell lies inside the inflated band.
pub fn nearest_free_cell(grid: &OccupancyGrid, c: (usize, usize)) -> Option<(usize, usize)> {
    if grid.is_free(c.0, c.1) {
        return Some(c);
    }
    let mut seen = vec![false; grid.width * grid.height];
    let mut queue = std::collections::VecDeque::from([c]);
    seen[grid.index(c.0, c.1)] = true;
    while let Some((i, j)) = queue.pop_front() {
        for &(di, dj) in &MOVES {
            let (x, y) = (i as isize + di, j as isize + dj);
            if x < 0 || y < 0 || x >= grid.width as isize || y >= grid.height as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            let k = grid.index(x, y);
            if seen[k] {
                continue;
            }
            if grid.is_free(x, y) {
                return Some((x, y));
            }
            seen[k] = true;
            queue.push_back((x, y));
        }
    }
    None
}

/// Local controller parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwaConfig {
    pub v_samples: usize,
    pub w_samples: usize,
    pub horizon: f64,
    pub sim_dt: f64,
    pub w_progress: f64,
    pub w_heading: f64,
    pub w_clearance: f64,
    pub lookahead: f64,
    /// Candidates whose predicted clearance drops below
    /// `min_dist + safety_margin` are discarded.
    pub min_dist: f64,
    /// Slack for the gaps between beams: the nearest scan endpoint can sit
    /// a few centimeters farther away than the true surface.
    pub safety_margin: f64,
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            v_samples: 9,
            w_samples: 11,
            horizon: 1.5,
            sim_dt: 0.1,
            w_progress: 1.0,
            w_heading: 0.5,
            w_clearance: 0.2,
            lookahead: 0.6,
            min_dist: 0.25,
            safety_margin: 0.05,
        }
    }
}

/// What the local controller sees at one control step.
#[derive(Debug, Clone, Copy)]
pub struct DwaInput<'a> {
    pub pose: Pose,
    pub ranges: &'a [f64],
    pub lidar: &'a LidarConfig,
    pub robot: &'a RobotProfile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaDecision {
    pub action: Action,
    /// True when every candidate was unsafe and the escape turn was used.
    pub escaped: bool,
    /// Predicted clearance of the chosen candidate (meters).
    pub clearance: f64,
    pub score: f64,
}

/// Polyline with cumulative arc length, for progress and lookahead queries.
struct Polyline<'a> {
    pts: &'a [Point],
    cum: Vec<f64>,
}

impl<'a> Polyline<'a> {
    fn new(pts: &'a [Point]) -> Self {
        let mut cum = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        for (k, p) in pts.iter().enumerate() {
            if k > 0 {
                s += dist(pts[k - 1], *p);
            }
            cum.push(s);
        }
        Self { pts, cum }
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    /// Arc-length coordinate of the closest point on the path to `p`.
    fn project(&self, p: Point) -> f64 {
        if self.pts.len() == 1 {
            return 0.0;
        }
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..self.pts.len() - 1 {
            let (a, b) = (self.pts[k], self.pts[k + 1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 > 0.0 {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = dist(p, q);
            if d < best.0 {
                best = (d, self.cum[k] + t * len2.sqrt());
            }
        }
        best.1
    }

    fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.total());
        let k = self.cum.partition_point(|&c| c <= s);
        if k == 0 {
            return self.pts[0];
        }
        if k >= self.pts.len() {
            return *self.pts.last().unwrap();
        }
        let (a, b) = (self.pts[k - 1], self.pts[k]);
        let seg = self.cum[k] - self.cum[k - 1];
        let t = if seg > 0.0 { (s - self.cum[k - 1]) / seg } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

fn grid_values(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![if n <= 1 { hi } else { lo }];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Scan hits in world coordinates. Beams at max range saw nothing.
pub fn scan_endpoints(pose: &Pose, ranges: &[f64], lidar: &LidarConfig) -> Vec<Point> {
    ranges
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_finite() && **r < lidar.max_range)
        .map(|(i, r)| {
            let a = lidar.beam_angle(pose.yaw, i);
            [pose.x + r * a.cos(), pose.y + r * a.sin()]
        })
        .collect()
}

/// Scores every velocity candidate against `path` and the live scan and
/// returns the best safe one.
pub fn dwa_step(input: &DwaInput<'_>, path: &[Point], cfg: &DwaConfig) -> DwaDecision {
    assert!(!path.is_empty(), "dwa_step needs a nonempty path");
    let line = Polyline::new(path);
    let s0 = line.project(input.pose.position());
    let hits = scan_endpoints(&input.pose, input.ranges, input.lidar);
    let steps = (cfg.horizon / cfg.sim_dt).round().max(1.0) as usize;
    let vs = grid_values(input.robot.v_range[0], input.robot.v_range[1], cfg.v_samples);
    let ws = grid_values(input.robot.w_range[0], input.robot.w_range[1], cfg.w_samples);

    let mut best: Option<DwaDecision> = None;
    for &v in &vs {
        for &w in &ws {
            let a = Action::new(v, w);
            let mut p = input.pose;
            let mut clearance = f64::INFINITY;
            for _ in 0..steps {
                p = integrate(p, a, cfg.sim_dt);
                for h in &hits {
                    clearance = clearance.min(dist(p.position(), *h));
                }
            }
            if clearance < cfg.min_dist + cfg.safety_margin {
                continue;
            }
            let s1 = line.project(p.position());
            let progress = s1 - s0;
            let look = line.point_at(s1 + cfg.lookahead);
            let heading = 1.0 - wrap_angle(p.bearing_to(look)).abs() / std::f64::consts::PI;
            let score = cfg.w_progress * progress + cfg.w_heading * heading - cfg.w_clearance / clearance;
            let cand = DwaDecision { action: a, escaped: false, clearance, score };
            best = Some(match best {
                None => cand,
                Some(b) if better(&cand, &b) => cand,
                Some(b) => b,
            });
        }
    }
    best.unwrap_or_else(|| escape(input, &hits))
}

/// Higher score wins; near-equal scores go to the smaller |ω|, then to the
/// left turn.
fn better(c: &DwaDecision, b: &DwaDecision) -> bool {
    const TIE: f64 = 1e-12;
    if c.score > b.score + TIE {
        return true;
    }
    if c.score < b.score - TIE {
        return false;
    }
    let (cw, bw) = (c.action.w.abs(), b.action.w.abs());
    if cw != bw {
        return cw < bw;
    }
    c.action.w > b.action.w
}

/// Slow forward crawl with a full-rate turn toward the side whose beams
/// report more free space.
fn escape(input: &DwaInput<'_>, hits: &[Point]) -> DwaDecision {
    let (mut left, mut right) = (0.0, 0.0);
    for (i, r) in input.ranges.iter().enumerate() {
        let rel = wrap_angle(input.lidar.beam_angle(0.0, i));
        let r = if r.is_finite() { *r } else { input.lidar.max_range };
        if rel > 0.0 && rel < std::f64::consts::PI {
            left += r;
        } else if rel < 0.0 {
            right += r;
        }
    }
    let [w_lo, w_hi] = input.robot.w_range;
    let w = if left >= right { w_hi } else { w_lo };
    let clearance = hits
        .iter()
        .map(|h| dist(input.pose.position(), *h))
        .fold(f64::INFINITY, f64::min);
    DwaDecision {
        action: Action::new(input.robot.v_range[0], w),
        escaped: true,
        clearance,
        score: f64::NEG_INFINITY,
    }
}

/// Settings of the full baseline stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub resolution: f64,
    pub inflation: f64,
    /// Global replanning period in seconds.
    pub replan_period: f64,
    pub dwa: DwaConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { resolution: 0.1, inflation: 0.35, replan_period: 2.0, dwa: DwaConfig::default() }
    }
}

/// Map-based planner: A* on the static grid refreshed every
/// `replan_period`, tracked by [`dwa_step`].
#[derive(Debug, Clone)]
pub struct BaselinePlanner {
    pub cfg: BaselineConfig,
    grid: Option<OccupancyGrid>,
    path: Vec<Point>,
    goal: Point,
    since_plan: f64,
    pub replans: usize,
    pub escapes: usize,
}

impl BaselinePlanner {
    pub fn new(cfg: BaselineConfig) -> Self {
        Self {
            cfg,
            grid: None,
            path: Vec::new(),
            goal: [0.0, 0.0],
            since_plan: 0.0,
            replans: 0,
            escapes: 0,
        }
    }

    pub fn grid(&self) -> Option<&OccupancyGrid> {
        self.grid.as_ref()
    }

    pub fn path(&self) -> &[Point] {
        &self.path
    }

    /// Builds the static map for a new episode.
    pub fn begin(&mut self, world: &World, goal: Point) {
        self.grid = Some(rasterize(&world.without_dynamics(), self.cfg.resolution, self.cfg.inflation));
        self.goal = goal;
        self.path.clear();
        self.since_plan = f64::INFINITY;
        self.replans = 0;
        self.escapes = 0;
    }

    fn replan(&mut self, from: Point) {
        let grid = self.grid.as_ref().expect("begin() builds the grid");
        let start = nearest_free_cell(grid, grid.cell_of(from));
        let goal = grid.cell_of(self.goal);
        let planned = start.map(|s| astar_cells(grid, s, goal));
        self.path = match planned {
            Some(Ok(p)) => {
                let mut pts = p.waypoints;
                pts.insert(0, from);
                pts.push(self.goal);
                pts
            }
            // no route on the map: head straight for the goal and let the
            // local controller keep the robot safe
            _ => vec![from, self.goal],
        };
        self.replans += 1;
        self.since_plan = 0.0;
    }

    /// One control step. `dt` is the control period in seconds.
    pub fn act(&mut self, input: &DwaInput<'_>, dt: f64) -> DwaDecision {
        if self.since_plan + 1e-9 >= self.cfg.replan_period {
            self.replan(input.pose.position());
        }
        self.since_plan += dt;
        let d = dwa_step(input, &self.path, &self.cfg.dwa);
        if d.escaped {
            self.escapes += 1;
        }
        d
    }
}
