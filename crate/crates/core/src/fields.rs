//! Floor fields: the static path and obstacle distance fields and the
//! per-step dynamic density field.
//!
//! Distance fields use the chessboard metric with a `sqrt(2)` diagonal cost.
//! Diagonal spreading never cuts obstacle corners: a diagonal edge is valid
//! only if both orthogonal cells shared by its endpoints are free.

use crate::scalar::{scalar, sqrt2, Scalar};
use crate::scenario::{Coord, DestId, GridGeometry, ScenarioSpec};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("unknown destination {0}")]
    UnknownDestination(DestId),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FieldKind {
    Path(DestId),
    Obstacle,
    Density,
}

/// A scalar grid superimposed on the environment. Cells that cannot be
/// reached by a distance field hold `F::infinity()`.
#[derive(Clone, PartialEq, Debug)]
pub struct FloorField<F> {
    pub kind: FieldKind,
    width: usize,
    height: usize,
    values: Vec<F>,
}

impl<F: Scalar> FloorField<F> {
    fn new(kind: FieldKind, width: usize, height: usize, values: Vec<F>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        FloorField { kind, width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Perception lookup. Panics on out-of-bounds coordinates; use
    /// [`FloorField::try_val`] when bounds are not known.
    pub fn val(&self, c: Coord) -> F {
        self.try_val(c).expect("coordinate inside the grid")
    }

    pub fn try_val(&self, c: Coord) -> Option<F> {
        if c.x < 0 || c.y < 0 {
            return None;
        }
        let (x, y) = (c.x as usize, c.y as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        Some(self.values[y * self.width + x])
    }

    pub fn is_reachable(&self, c: Coord) -> bool {
        self.try_val(c).map(|v| v.is_finite()).unwrap_or(false)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn all_unreachable(&self) -> bool {
        self.values.iter().all(|v| !v.is_finite())
    }

    /// Debug heatmap dump; see [`crate::pgm`] for the format.
    pub fn write_pgm(&self, path: &Path) -> io::Result<()> {
        let as_f64: Vec<f64> = self.values.iter().map(|v| v.to_f64().unwrap_or(f64::INFINITY)).collect();
        crate::pgm::write_pgm16(path, self.width, self.height, &as_f64)
    }
}

/// The eight Moore neighbourhood offsets with their step costs.
fn neighbour_offsets<F: Scalar>() -> [(i32, i32, F); 8] {
    let one = F::one();
    let diag = sqrt2::<F>();
    [
        (-1, -1, diag),
        (0, -1, one),
        (1, -1, diag),
        (-1, 0, one),
        (1, 0, one),
        (-1, 1, diag),
        (0, 1, one),
        (1, 1, diag),
    ]
}

struct HeapEntry<F> {
    cost: F,
    index: usize,
}

impl<F: Scalar> PartialEq for HeapEntry<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.index == other.index
    }
}
impl<F: Scalar> Eq for HeapEntry<F> {}
impl<F: Scalar> Ord for HeapEntry<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost; costs are finite sums of 1 and sqrt(2).
        other
            .cost
            .partial_cmp(&self.cost)
            .expect("field costs are never NaN")
            .then_with(|| other.index.cmp(&self.index))
    }
}
impl<F: Scalar> PartialOrd for HeapEntry<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over the 8-connected grid. Obstacle cells are never
/// relaxed into (their seed value, if any, stays) and diagonal edges with a
/// blocked shared corner are skipped.
fn spread<F: Scalar>(
    geometry: &GridGeometry,
    obstacles: &[bool],
    seeds: &[(usize, F)],
) -> Vec<F> {
    let mut dist = vec![F::infinity(); geometry.cell_count()];
    let mut heap = BinaryHeap::new();
    for &(index, cost) in seeds {
        if cost < dist[index] {
            dist[index] = cost;
            heap.push(HeapEntry { cost, index });
        }
    }
    let offsets = neighbour_offsets::<F>();
    while let Some(HeapEntry { cost, index }) = heap.pop() {
        if cost > dist[index] {
            continue;
        }
        let from = geometry.coord(index);
        for &(dx, dy, step) in &offsets {
            let to = from.offset(dx, dy);
            if !geometry.contains(to) {
                continue;
            }
            let to_index = geometry.index(to);
            if obstacles[to_index] {
                continue;
            }
            if dx != 0 && dy != 0 {
                // Corner-cut check: both orthogonal cells shared by the
                // diagonal must be free.
                let side_a = geometry.index(from.offset(dx, 0));
                let side_b = geometry.index(from.offset(0, dy));
                if obstacles[side_a] || obstacles[side_b] {
                    continue;
                }
            }
            let next = cost + step;
            if next < dist[to_index] {
                dist[to_index] = next;
                heap.push(HeapEntry { cost: next, index: to_index });
            }
        }
    }
    dist
}

/// Shortest chessboard-sqrt2 distance from every walkable cell to the given
/// destination. Unreachable cells (and obstacles) hold infinity.
pub fn compute_path_field<F: Scalar>(
    spec: &ScenarioSpec,
    destination: DestId,
) -> Result<FloorField<F>, FieldError> {
    let marker = spec
        .destinations
        .get(&destination)
        .ok_or(FieldError::UnknownDestination(destination))?;
    let seeds: Vec<(usize, F)> = marker
        .cells
        .iter()
        .map(|&c| (spec.geometry.index(c), F::zero()))
        .collect();
    let values = spread(&spec.geometry, &spec.obstacles, &seeds);
    let field = FloorField::new(FieldKind::Path(destination), spec.geometry.width, spec.geometry.height, values);
    if field.values.iter().zip(&spec.obstacles).all(|(v, &o)| o || !v.is_finite()) {
        log::warn!("destination {destination} is unreachable from every walkable cell");
    }
    Ok(field)
}

/// Distance of every cell from the nearest obstacle or boundary wall. The
/// grid boundary counts as a wall at distance 1 from border cells; obstacle
/// cells themselves hold 0.
pub fn compute_obstacle_field<F: Scalar>(spec: &ScenarioSpec) -> FloorField<F> {
    let geometry = &spec.geometry;
    let mut seeds: Vec<(usize, F)> = Vec::new();
    for index in 0..geometry.cell_count() {
        if spec.obstacles[index] {
            seeds.push((index, F::zero()));
        } else {
            let c = geometry.coord(index);
            let on_border = c.x == 0
                || c.y == 0
                || c.x as usize == geometry.width - 1
                || c.y as usize == geometry.height - 1;
            if on_border {
                seeds.push((index, F::one()));
            }
        }
    }
    let values = spread(geometry, &spec.obstacles, &seeds);
    FloorField::new(FieldKind::Obstacle, geometry.width, geometry.height, values)
}

/// Precomputed density kernel: offsets whose centre-to-centre Euclidean
/// distance `d` (cells) satisfies `d * cell_side <= R`, weighted `1/d²`.
#[derive(Clone, Debug)]
pub struct DensityKernel<F> {
    offsets: Vec<(i32, i32, F)>,
    radius_cells_sq: f64,
}

impl<F: Scalar> DensityKernel<F> {
    pub fn new(radius_m: f64, cell_side_m: f64) -> Self {
        let radius_cells = radius_m / cell_side_m;
        // Tolerate float division noise so cells exactly at R stay included.
        let radius_cells_sq = radius_cells * radius_cells + 1e-9;
        let reach = radius_cells.ceil() as i32;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let d_sq = (dx * dx + dy * dy) as f64;
                if d_sq <= radius_cells_sq {
                    offsets.push((dx, dy, scalar::<F>(1.0 / d_sq)));
                }
            }
        }
        DensityKernel { offsets, radius_cells_sq }
    }

    /// The contribution a pedestrian at `pos` makes to the density value of
    /// `cell`: 1 on its own cell, `1/d²` within the radius, 0 beyond.
    pub fn own_contribution(&self, pos: Coord, cell: Coord) -> F {
        if pos == cell {
            return F::one();
        }
        let dx = (pos.x - cell.x) as f64;
        let dy = (pos.y - cell.y) as f64;
        let d_sq = dx * dx + dy * dy;
        if d_sq <= self.radius_cells_sq {
            scalar(1.0 / d_sq)
        } else {
            F::zero()
        }
    }
}

/// Rebuilds the density field from scratch: each pedestrian adds 1 to its
/// own cell and `1/d²` to every other cell within the kernel radius.
/// Summation order is fixed by the input order, so the result is
/// bit-deterministic.
pub fn compute_density_field<F: Scalar>(
    geometry: &GridGeometry,
    positions: &[Coord],
    kernel: &DensityKernel<F>,
) -> FloorField<F> {
    let mut values = vec![F::zero(); geometry.cell_count()];
    for &pos in positions {
        values[geometry.index(pos)] = values[geometry.index(pos)] + F::one();
        for &(dx, dy, weight) in &kernel.offsets {
            let cell = pos.offset(dx, dy);
            if geometry.contains(cell) {
                let index = geometry.index(cell);
                values[index] = values[index] + weight;
            }
        }
    }
    FloorField::new(FieldKind::Density, geometry.width, geometry.height, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioSpec;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn spec_from(text: &str) -> ScenarioSpec {
        ScenarioSpec::parse(text).unwrap()
    }

    #[test]
    fn single_destination_one_step_distances() {
        let spec = spec_from("[map]\n.,.,.\n.,D1,.\n.,.,.\n");
        let field: FloorField<f64> = compute_path_field(&spec, 1).unwrap();
        assert_eq!(field.val(Coord::new(1, 1)), 0.0);
        assert_eq!(field.val(Coord::new(1, 0)), 1.0);
        assert_eq!(field.val(Coord::new(0, 1)), 1.0);
        assert!((field.val(Coord::new(0, 0)) - SQRT_2).abs() < 1e-12);
        assert!((field.val(Coord::new(2, 2)) - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn corner_to_corner_is_four_diagonals() {
        let spec = spec_from("[map]\nD1,.,.,.,.\n.,.,.,.,.\n.,.,.,.,.\n.,.,.,.,.\n.,.,.,.,.\n");
        let field: FloorField<f64> = compute_path_field(&spec, 1).unwrap();
        assert!((field.val(Coord::new(4, 4)) - 4.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn wall_disconnects() {
        let spec = spec_from("[map]\nD1,#,.\n.,#,.\n.,#,.\n");
        let field: FloorField<f64> = compute_path_field(&spec, 1).unwrap();
        assert!(!field.is_reachable(Coord::new(2, 0)));
        assert!(!field.is_reachable(Coord::new(2, 2)));
        assert!(field.is_reachable(Coord::new(0, 2)));
        assert!(field.val(Coord::new(2, 1)).is_infinite());
    }

    #[test]
    fn corner_cutting_blocked_in_spreading() {
        // The diagonal from D1 to (1,1) passes between two obstacles; the
        // field must go the long way round.
        let spec = spec_from("[map]\nD1,#,.\n#,.,.\n.,.,.\n");
        let field: FloorField<f64> = compute_path_field(&spec, 1).unwrap();
        assert!(field.val(Coord::new(1, 1)) > SQRT_2 + 1e-9 || !field.is_reachable(Coord::new(1, 1)));
    }

    #[test]
    fn obstacle_field_basics() {
        let spec = spec_from("[map]\n.....\n.....\n..#..\n.....\n.....\n");
        let field: FloorField<f64> = compute_obstacle_field(&spec);
        assert_eq!(field.val(Coord::new(2, 2)), 0.0);
        assert_eq!(field.val(Coord::new(2, 1)), 1.0);
        assert_eq!(field.val(Coord::new(0, 0)), 1.0); // border wall
        assert!((field.val(Coord::new(1, 1)) - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn obstacle_field_room_centre() {
        let spec = spec_from(&format!("[map]\n{}", ".......\n".repeat(7)));
        let field: FloorField<f64> = compute_obstacle_field(&spec);
        assert_eq!(field.val(Coord::new(3, 3)), 4.0);
    }

    #[test]
    fn density_kernel_values() {
        let spec = spec_from("[map]\n.,.,.,.,.\n.,.,.,.,.\n.,.,D1,.,.\n.,.,.,.,.\n.,.,.,.,.\n");
        let kernel = DensityKernel::<f64>::new(1.2, 0.4);
        let positions = [Coord::new(2, 2)];
        let field = compute_density_field(&spec.geometry, &positions, &kernel);
        assert_eq!(field.val(Coord::new(2, 2)), 1.0);
        assert_eq!(field.val(Coord::new(4, 2)), 0.25); // d = 2
        assert_eq!(field.val(Coord::new(2, 3)), 1.0); // d = 1
        assert_eq!(field.val(Coord::new(3, 3)), 0.5); // d = sqrt(2)
    }

    #[test]
    fn density_is_additive() {
        let spec = spec_from("[map]\n.,.,.\n.,.,.\n.,.,.\n");
        let kernel = DensityKernel::<f64>::new(1.2, 0.4);
        let positions = [Coord::new(0, 1), Coord::new(2, 1)];
        let field = compute_density_field(&spec.geometry, &positions, &kernel);
        // Both pedestrians are at distance 1 from the centre cell.
        assert_eq!(field.val(Coord::new(1, 1)), 2.0);
    }

    #[test]
    fn radius_boundary_inclusive() {
        // R = 1.2 m and 0.4 m cells puts d = 3 exactly on the boundary.
        let kernel = DensityKernel::<f64>::new(1.2, 0.4);
        assert!(kernel.offsets.iter().any(|&(dx, dy, _)| dx == 3 && dy == 0));
        assert!(!kernel.offsets.iter().any(|&(dx, dy, _)| dx == 3 && dy == 1));
    }

    #[test]
    fn rebuild_is_pure() {
        let spec = spec_from("[map]\n.,.,.,.\n.,.,.,.\n");
        let kernel = DensityKernel::<f64>::new(1.2, 0.4);
        let positions = [Coord::new(0, 0), Coord::new(3, 1), Coord::new(2, 0)];
        let a = compute_density_field(&spec.geometry, &positions, &kernel);
        let b = compute_density_field(&spec.geometry, &positions, &kernel);
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn val_out_of_bounds_is_none() {
        let spec = spec_from("[map]\n.,D1\n");
        let field: FloorField<f64> = compute_path_field(&spec, 1).unwrap();
        assert_eq!(field.try_val(Coord::new(-1, 0)), None);
        assert_eq!(field.try_val(Coord::new(2, 0)), None);
        assert_eq!(field.try_val(Coord::new(1, 0)), Some(0.0));
    }
}
