use std::collections::BTreeSet;

use navrl::baseline::OccupancyGrid;
use navrl::rng_from_seed;
use rand::Rng as _;

/// Plain Dijkstra with f64 priorities and its own neighbour rules.
pub fn dijkstra(grid: &OccupancyGrid, s: (usize, usize), g: (usize, usize)) -> Option<(u64, u64)> {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && grid.is_free(x as usize, y as usize);
    let mut best: Vec<Option<(u64, u64)>> = vec![None; (w * h) as usize];
    let val = |c: (u64, u64)| c.0 as f64 + c.1 as f64 * std::f64::consts::SQRT_2;
    let mut frontier: BTreeSet<(u64, usize)> = BTreeSet::new();
    let key = |c: (u64, u64)| val(c).to_bits();
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    best[idx(s.0 as i64, s.1 as i64)] = Some((0, 0));
    frontier.insert((key((0, 0)), idx(s.0 as i64, s.1 as i64)));
    let mut done = vec![false; (w * h) as usize];
    while let Some((_, k)) = frontier.pop_first() {
        if done[k] {
            continue;
        }
        done[k] = true;
        let (x, y) = (k as i64 % w, k as i64 / w);
        let c = best[k].unwrap();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && (!free(x + dx, y) || !free(x, y + dy)) {
                    continue;
                }
                let n = if diag { (c.0, c.1 + 1) } else { (c.0 + 1, c.1) };
                let nk = idx(x + dx, y + dy);
                if best[nk].is_none_or(|o| val(n) < val(o)) {
                    best[nk] = Some(n);
                    frontier.insert((key(n), nk));
                }
            }
        }
    }
    best[idx(g.0 as i64, g.1 as i64)]
}

pub fn random_grid(seed: u64, density: f64) -> OccupancyGrid {
    let mut rng = rng_from_seed(seed);
    let mut g = OccupancyGrid::free(30, 30, 0.1, [0.0, 0.0]);
    for j in 0..30 {
        for i in 0..30 {
            if rng.random::<f64>() < density {
                g.set_occupied(i, j);
            }
        }
    }
    // a few walls with gaps make the searches non-trivial
    for _ in 0..3 {
        let x = rng.random_range(3..27);
        let gap = rng.random_range(0..30);
        for j in 0..30 {
            if j != gap {
                g.set_occupied(x, j);
            }
        }
    }
    g
}
