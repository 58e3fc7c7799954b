//! Shared test oracles, independent of the implementations they check.

use pedsim_core::scenario::{
    BoundaryMode, CalibrationParams, Coord, DestinationMarker, GridGeometry, ScenarioSpec,
    CELL_SIDE_M,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Reference distance field by exhaustive relaxation (Bellman-Ford style):
/// orthogonal steps cost 1, diagonal steps sqrt(2), diagonals may not pass
/// between two obstacles, and obstacle cells are never relaxed into.
pub fn oracle_distance_field(
    width: usize,
    height: usize,
    obstacles: &[bool],
    seeds: &[(usize, f64)],
) -> Vec<f64> {
    let idx = |x: usize, y: usize| y * width + x;
    let mut dist = vec![f64::INFINITY; width * height];
    for &(i, d) in seeds {
        if d < dist[i] {
            dist[i] = d;
        }
    }
    loop {
        let mut changed = false;
        for y in 0..height as i32 {
            for x in 0..width as i32 {
                let i = idx(x as usize, y as usize);
                if obstacles[i] {
                    continue;
                }
                for dy in -1..=1i32 {
                    for dx in -1..=1i32 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = (x - dx, y - dy);
                        if jx < 0 || jy < 0 || jx >= width as i32 || jy >= height as i32 {
                            continue;
                        }
                        let j = idx(jx as usize, jy as usize);
                        let diagonal = dx != 0 && dy != 0;
                        if diagonal {
                            let corner_a = idx(x as usize, jy as usize);
                            let corner_b = idx(jx as usize, y as usize);
                            if obstacles[corner_a] || obstacles[corner_b] {
                                continue;
                            }
                        }
                        let cost = if diagonal { SQRT_2 } else { 1.0 };
                        if dist[j] + cost < dist[i] {
                            dist[i] = dist[j] + cost;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Seeds matching the path field: destination cells at 0.
pub fn oracle_path_seeds(spec: &ScenarioSpec, dest: u32) -> Vec<(usize, f64)> {
    spec.destinations[&dest]
        .cells
        .iter()
        .map(|&c| (spec.geometry.index(c), 0.0))
        .collect()
}

/// Seeds matching the obstacle field: obstacle cells at 0, walkable border
/// cells at 1 (the boundary counts as a wall).
pub fn oracle_obstacle_seeds(spec: &ScenarioSpec) -> Vec<(usize, f64)> {
    let g = &spec.geometry;
    let mut seeds = Vec::new();
    for i in 0..g.cell_count() {
        if spec.obstacles[i] {
            seeds.push((i, 0.0));
        } else {
            let c = g.coord(i);
            if c.x == 0 || c.y == 0 || c.x as usize == g.width - 1 || c.y as usize == g.height - 1 {
                seeds.push((i, 1.0));
            }
        }
    }
    seeds
}

/// Random open-boundary scenario with one destination, no start markers.
pub fn random_grid_spec(rng: &mut ChaCha8Rng, max_side: usize) -> ScenarioSpec {
    let width = rng.gen_range(1..=max_side);
    let height = rng.gen_range(1..=max_side);
    let mut obstacles: Vec<bool> = (0..width * height).map(|_| rng.gen_bool(0.25)).collect();
    let dest_index = rng.gen_range(0..width * height);
    obstacles[dest_index] = false;
    let geometry = GridGeometry { width, height, cell_side_m: CELL_SIDE_M, boundary: BoundaryMode::Open };
    let dest = Coord::new((dest_index % width) as i32, (dest_index / width) as i32);
    let mut destinations = BTreeMap::new();
    destinations.insert(1, DestinationMarker { id: 1, cells: vec![dest] });
    ScenarioSpec {
        geometry,
        obstacles,
        starts: BTreeMap::new(),
        destinations,
        slopes: BTreeMap::new(),
        params: CalibrationParams::default(),
    }
}

/// Convex hull area by gift wrapping plus the shoelace formula; independent
/// of the monotone-chain implementation under test.
pub fn jarvis_hull_area(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let start = pts
        .iter()
        .copied()
        .min_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap())
        .unwrap();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let dist_sq = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut hull = vec![start];
    let mut current = start;
    loop {
        let mut next = pts[0];
        if next == current {
            next = pts[1];
        }
        for &p in &pts {
            if p == current {
                continue;
            }
            let c = cross(current, next, p);
            if c < 0.0 || (c == 0.0 && dist_sq(current, p) > dist_sq(current, next)) {
                next = p;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        current = next;
        if hull.len() > pts.len() {
            break; // degenerate safety stop
        }
    }
    if hull.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let (x1, y1) = hull[i];
        let (x2, y2) = hull[(i + 1) % hull.len()];
        twice += x1 * y2 - x2 * y1;
    }
    twice.abs() / 2.0
}
