//! Simulation scenarios: grid geometry, cell states, spatial markers,
//! population generation profiles and calibration parameters.
//!
//! Scenarios are plain text files with an ASCII `[map]` section and
//! `key = value` sections; see the crate README for the format. A parsed
//! [`ScenarioSpec`] is immutable and safe to share across threads.

mod parse;

pub use parse::ScenarioError;

use crate::rational::{format_rational, rational_to_f64, Rational};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Pedestrian identifier, unique within a run.
pub type PedId = u32;
/// Destination marker identifier.
pub type DestId = u32;
/// Start marker identifier.
pub type StartId = u32;
/// Slope (stair/ramp) area identifier.
pub type AreaId = u32;

/// Side length of a grid cell in metres. The discretisation caps density at
/// 1 / 0.16 = 6.25 persons/m² before overlapping is considered.
pub const CELL_SIDE_M: f64 = 0.4;

/// Grid coordinate; `x` grows rightwards, `y` grows downwards.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Coord { x: self.x + dx, y: self.y + dy }
    }

    /// Euclidean distance in cell units.
    pub fn distance_cells(self, other: Coord) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// State of one grid cell. At most two pedestrians may share a cell, and
/// only through the overlap mechanism.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CellState {
    Free,
    Obstacle,
    OnePed(PedId),
    TwoPeds(PedId, PedId),
}

impl CellState {
    pub fn occupant_count(self) -> usize {
        match self {
            CellState::Free | CellState::Obstacle => 0,
            CellState::OnePed(_) => 1,
            CellState::TwoPeds(_, _) => 2,
        }
    }

    pub fn contains(self, id: PedId) -> bool {
        match self {
            CellState::OnePed(a) => a == id,
            CellState::TwoPeds(a, b) => a == id || b == id,
            _ => false,
        }
    }
}

/// How the world treats agents that reach their destination.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BoundaryMode {
    /// Destination cells absorb pedestrians.
    Open,
    /// Pedestrians reaching their destination re-enter at their origin start
    /// area with their dynamic state intact, holding the population constant
    /// for fundamental-diagram runs.
    PeriodicX,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    /// Fixed at [`CELL_SIDE_M`].
    pub cell_side_m: f64,
    pub boundary: BoundaryMode,
}

impl GridGeometry {
    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.width + c.x as usize
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new((index % self.width) as i32, (index / self.width) as i32)
    }
}

/// Population generation profile of a start area.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Generation {
    /// All pedestrians created at step 0 (spawns deferred while cells are
    /// occupied).
    Block(u32),
    /// Persons per second, accumulated fractionally per step.
    Frequency(f64),
}

/// One desired-speed class with its sampling probability.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SpeedClass {
    pub speed: Rational,
    pub probability: f64,
}

/// Group membership assigned to pedestrians generated by a start area.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupSpec {
    None,
    /// All pedestrians from markers naming this id form one simple group.
    Simple(u32),
    /// Members join `subgroup` of the structured group `group`.
    Structured { group: u32, subgroup: u32 },
}

#[derive(Clone, PartialEq, Debug)]
pub struct StartMarker {
    pub id: StartId,
    pub cells: Vec<Coord>,
    pub generation: Generation,
    pub speeds: Vec<SpeedClass>,
    pub destination: DestId,
    pub group: GroupSpec,
}

#[derive(Clone, PartialEq, Debug)]
pub struct DestinationMarker {
    pub id: DestId,
    pub cells: Vec<Coord>,
}

/// One boundary marker of a slope area: crossing it entering the area scales
/// the desired speed by `k_enter`, crossing it leaving scales by `k_exit`.
#[derive(Clone, PartialEq, Debug)]
pub struct SlopeMarker {
    pub cells: Vec<Coord>,
    pub k_enter: Rational,
    pub k_exit: Rational,
}

#[derive(Clone, PartialEq, Debug)]
pub struct SlopeArea {
    pub id: AreaId,
    pub side_a: SlopeMarker,
    pub side_b: SlopeMarker,
}

/// Calibration constants. The shipped defaults are uncalibrated placeholders;
/// benchmark scenarios override them explicitly.
#[derive(Clone, PartialEq, Debug)]
pub struct CalibrationParams {
    pub kappa_g: f64,
    pub kappa_ob: f64,
    pub kappa_s: f64,
    pub kappa_c: f64,
    pub kappa_i: f64,
    pub kappa_d: f64,
    pub kappa_ov: f64,
    /// Dispersion scale of the group balance mechanism, m² per person.
    pub delta: f64,
    /// Density field radius, metres.
    pub density_radius: f64,
    pub frict_l: f64,
    pub frict_h: f64,
    /// Maximum speed of the simulation; one step lasts
    /// `CELL_SIDE_M / speed_m` seconds.
    pub speed_m: Rational,
    /// Group member perception radius, metres.
    pub perception_distance: f64,
    pub rng_seed: u64,
    /// Density-field value at which social repulsion saturates at -1.
    pub rho_sat: f64,
    /// Obstacle-field distance (cells) beyond which geometric repulsion
    /// vanishes.
    pub obstacle_span: f64,
    /// Density-field value at the agent's own cell above which single-
    /// occupied cells become enterable (overlap mechanism).
    pub overlap_threshold: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            kappa_g: 3.0,
            kappa_ob: 1.0,
            kappa_s: 1.0,
            kappa_c: 2.0,
            kappa_i: 1.0,
            kappa_d: 0.5,
            kappa_ov: 0.5,
            delta: 2.5,
            density_radius: 1.2,
            frict_l: 0.4,
            frict_h: 0.9,
            speed_m: Rational::new(8, 5),
            perception_distance: 5.0,
            rng_seed: 0,
            rho_sat: 4.0,
            obstacle_span: 2.0,
            overlap_threshold: 4.0,
        }
    }
}

impl CalibrationParams {
    /// Duration of one simulation step in seconds.
    pub fn step_duration_s(&self) -> f64 {
        CELL_SIDE_M / rational_to_f64(self.speed_m)
    }
}

/// Reported inconsistency between the two boundary markers of a slope area.
#[derive(Clone, PartialEq, Debug)]
pub struct SlopeViolation {
    pub area: AreaId,
    pub message: String,
}

#[derive(Clone, PartialEq, Debug)]
pub struct ScenarioSpec {
    pub geometry: GridGeometry,
    /// Row-major obstacle mask.
    pub obstacles: Vec<bool>,
    pub starts: BTreeMap<StartId, StartMarker>,
    pub destinations: BTreeMap<DestId, DestinationMarker>,
    pub slopes: BTreeMap<AreaId, SlopeArea>,
    pub params: CalibrationParams,
}

impl ScenarioSpec {
    /// Parses and validates scenario text. See [`parse::ScenarioError`] for
    /// the reported failure modes.
    pub fn parse(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        parse::parse_scenario(text)
    }

    pub fn is_obstacle(&self, c: Coord) -> bool {
        !self.geometry.contains(c) || self.obstacles[self.geometry.index(c)]
    }

    pub fn is_walkable(&self, c: Coord) -> bool {
        self.geometry.contains(c) && !self.obstacles[self.geometry.index(c)]
    }

    pub fn walkable_cell_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| !o).count()
    }

    /// Checks the reciprocity constraints between the paired boundary
    /// markers of every slope area: the exit constant of one side must be
    /// the reciprocal of the entry constant of the other. Returns the list
    /// of violations (empty means all consistent). Errors if an area is
    /// missing one of its two markers on the map.
    pub fn validate_slope_pairs(&self) -> Result<Vec<SlopeViolation>, ScenarioError> {
        let mut violations = Vec::new();
        for (id, area) in &self.slopes {
            let sides = usize::from(!area.side_a.cells.is_empty()) + usize::from(!area.side_b.cells.is_empty());
            if sides != 2 {
                return Err(ScenarioError::Semantic {
                    message: format!("slope area {id} has {sides} boundary markers, expected exactly 2"),
                });
            }
            let ka1 = rational_to_f64(area.side_a.k_enter);
            let ka2 = rational_to_f64(area.side_a.k_exit);
            let kb1 = rational_to_f64(area.side_b.k_enter);
            let kb2 = rational_to_f64(area.side_b.k_exit);
            if (ka2 - 1.0 / kb1).abs() > 1e-9 {
                violations.push(SlopeViolation {
                    area: *id,
                    message: format!("k_exit_a = {ka2} is not the reciprocal of k_enter_b = {kb1}"),
                });
            }
            if (kb2 - 1.0 / ka1).abs() > 1e-9 {
                violations.push(SlopeViolation {
                    area: *id,
                    message: format!("k_exit_b = {kb2} is not the reciprocal of k_enter_a = {ka1}"),
                });
            }
        }
        Ok(violations)
    }

    /// Replaces the block counts of block-generation start areas so that
    /// they sum to `total`, distributing proportionally to the original
    /// counts by largest remainder (equally when all counts are zero).
    /// Frequency-generation areas are untouched.
    pub fn override_population(&mut self, total: u32) -> Result<(), ScenarioError> {
        let ids: Vec<StartId> = self
            .starts
            .iter()
            .filter(|(_, m)| matches!(m.generation, Generation::Block(_)))
            .map(|(&id, _)| id)
            .collect();
        if ids.is_empty() {
            return Err(ScenarioError::Semantic {
                message: "population override requires a block-generation start area".into(),
            });
        }
        let mut weights: Vec<u64> = ids
            .iter()
            .map(|id| match self.starts[id].generation {
                Generation::Block(n) => n as u64,
                Generation::Frequency(_) => 0,
            })
            .collect();
        if weights.iter().all(|&w| w == 0) {
            weights = vec![1; ids.len()];
        }
        let weight_total: u64 = weights.iter().sum();
        let mut assigned: Vec<u32> = Vec::with_capacity(ids.len());
        let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(ids.len());
        let mut used: u32 = 0;
        for (i, &w) in weights.iter().enumerate() {
            let exact = total as u64 * w;
            assigned.push((exact / weight_total) as u32);
            used += assigned[i];
            remainders.push((exact % weight_total, i));
        }
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut leftover = total - used;
        for &(_, i) in &remainders {
            if leftover == 0 {
                break;
            }
            assigned[i] += 1;
            leftover -= 1;
        }
        for (i, id) in ids.iter().enumerate() {
            self.starts.get_mut(id).unwrap().generation = Generation::Block(assigned[i]);
        }
        Ok(())
    }

    /// Serialises the scenario in the canonical file format; parsing the result
    /// yields an identical spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[map]\n");
        for y in 0..self.geometry.height {
            let row: Vec<String> = (0..self.geometry.width)
                .map(|x| self.cell_token(Coord::new(x as i32, y as i32)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out.push_str("\n[params]\n");
        let p = &self.params;
        let _ = writeln!(out, "kappa_g = {}", p.kappa_g);
        let _ = writeln!(out, "kappa_ob = {}", p.kappa_ob);
        let _ = writeln!(out, "kappa_s = {}", p.kappa_s);
        let _ = writeln!(out, "kappa_c = {}", p.kappa_c);
        let _ = writeln!(out, "kappa_i = {}", p.kappa_i);
        let _ = writeln!(out, "kappa_d = {}", p.kappa_d);
        let _ = writeln!(out, "kappa_ov = {}", p.kappa_ov);
        let _ = writeln!(out, "delta = {}", p.delta);
        let _ = writeln!(out, "R = {}", p.density_radius);
        let _ = writeln!(out, "frict_l = {}", p.frict_l);
        let _ = writeln!(out, "frict_h = {}", p.frict_h);
        let _ = writeln!(out, "speed_m = {}", format_rational(p.speed_m));
        let _ = writeln!(out, "perception_distance = {}", p.perception_distance);
        let _ = writeln!(out, "rng_seed = {}", p.rng_seed);
        let _ = writeln!(out, "rho_sat = {}", p.rho_sat);
        let _ = writeln!(out, "obstacle_span = {}", p.obstacle_span);
        let _ = writeln!(out, "overlap_threshold = {}", p.overlap_threshold);
        let _ = writeln!(
            out,
            "boundary = {}",
            match self.geometry.boundary {
                BoundaryMode::Open => "open",
                BoundaryMode::PeriodicX => "periodic-x",
            }
        );
        for (id, start) in &self.starts {
            let _ = writeln!(out, "\n[start.{id}]");
            let gen = match start.generation {
                Generation::Block(n) => format!("block({n})"),
                Generation::Frequency(f) => format!("frequency({f})"),
            };
            let _ = writeln!(out, "generation = {gen}");
            let speeds: Vec<String> = start
                .speeds
                .iter()
                .map(|s| format!("{}:{}", format_rational(s.speed), s.probability))
                .collect();
            let _ = writeln!(out, "speeds = {}", speeds.join(", "));
            let _ = writeln!(out, "destination = {}", start.destination);
            let group = match start.group {
                GroupSpec::None => "none".to_string(),
                GroupSpec::Simple(g) => format!("simple({g})"),
                GroupSpec::Structured { group, subgroup } => format!("structured({group}.{subgroup})"),
            };
            let _ = writeln!(out, "group = {group}");
        }
        for (id, slope) in &self.slopes {
            let _ = writeln!(out, "\n[slope.{id}]");
            let _ = writeln!(out, "k_enter_a = {}", format_rational(slope.side_a.k_enter));
            let _ = writeln!(out, "k_exit_a = {}", format_rational(slope.side_a.k_exit));
            let _ = writeln!(out, "k_enter_b = {}", format_rational(slope.side_b.k_enter));
            let _ = writeln!(out, "k_exit_b = {}", format_rational(slope.side_b.k_exit));
        }
        out
    }

    fn cell_token(&self, c: Coord) -> String {
        if self.obstacles[self.geometry.index(c)] {
            return "#".to_string();
        }
        for (id, m) in &self.starts {
            if m.cells.contains(&c) {
                return format!("S{id}");
            }
        }
        for (id, m) in &self.destinations {
            if m.cells.contains(&c) {
                return format!("D{id}");
            }
        }
        for (id, s) in &self.slopes {
            if s.side_a.cells.contains(&c) {
                return format!("A{id}a");
            }
            if s.side_b.cells.contains(&c) {
                return format!("A{id}b");
            }
        }
        ".".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_map(map: &str) -> String {
        format!("[map]\n{map}\n")
    }

    #[test]
    fn minimal_scenario_parses() {
        // 3x3 map, one destination cell, no obstacles.
        let text = minimal_map(".,.,.\n.,D1,.\n.,.,.");
        let spec = ScenarioSpec::parse(&text).unwrap();
        assert_eq!(spec.geometry.width, 3);
        assert_eq!(spec.geometry.height, 3);
        assert_eq!(spec.destinations.len(), 1);
        assert_eq!(spec.walkable_cell_count(), 9);
    }

    #[test]
    fn three_speed_classes() {
        let text = "\
[map]
S1,.,.,.,D1

[start.1]
generation = block(3)
speeds = 1.2:1/3, 1.4:1/3, 1.6:1/3
destination = 1
";
        let spec = ScenarioSpec::parse(text).unwrap();
        let start = &spec.starts[&1];
        assert_eq!(start.speeds.len(), 3);
        assert_eq!(start.speeds[0].speed, Rational::new(6, 5));
        assert_eq!(start.speeds[2].speed, Rational::new(8, 5));
    }

    #[test]
    fn friction_out_of_order_rejected() {
        let text = "\
[map]
.,D1

[params]
frict_l = 0.6
frict_h = 0.5
";
        let err = ScenarioSpec::parse(text).unwrap_err();
        match err {
            ScenarioError::Semantic { message } => {
                assert!(message.contains("friction thresholds out of order"), "{message}")
            }
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn slope_pair_reciprocity() {
        let text = "\
[map]
S1,.,A1a,.,A1b,.,D1

[start.1]
generation = block(1)
speeds = 1.4:1
destination = 1

[slope.1]
k_enter_a = 100/233
k_exit_a = 233/100
k_enter_b = 100/233
k_exit_b = 233/100
";
        let spec = ScenarioSpec::parse(text).unwrap();
        assert!(spec.validate_slope_pairs().unwrap().is_empty());
    }

    #[test]
    fn identity_slope_is_consistent() {
        let text = "\
[map]
.,A1a,.,A1b,D1

[slope.1]
k_enter_a = 1
k_exit_a = 1
k_enter_b = 1
k_exit_b = 1
";
        let spec = ScenarioSpec::parse(text).unwrap();
        assert!(spec.validate_slope_pairs().unwrap().is_empty());
    }

    #[test]
    fn broken_reciprocity_reported() {
        // k_exit_b = 3 is not 1 / k_enter_a = 2.
        let text = "\
[map]
.,A1a,.,A1b,D1

[slope.1]
k_enter_a = 0.5
k_exit_a = 1
k_enter_b = 1
k_exit_b = 3
";
        let spec = ScenarioSpec::parse(text).unwrap();
        let violations = spec.validate_slope_pairs().unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].area, 1);
    }

    #[test]
    fn round_trip_identical() {
        let text = "\
[map]
#,#,#,#,#,#,#
S1,.,A1a,.,A1b,.,D1
#,#,#,#,#,#,#

[params]
kappa_g = 10
frict_l = 0.4
frict_h = 0.9
speed_m = 1.6
boundary = periodic-x

[start.1]
generation = frequency(1.5)
speeds = 1.2:0.5, 1.6:0.5
destination = 1
group = simple(3)

[slope.1]
k_enter_a = 100/233
k_exit_a = 233/100
k_enter_b = 100/233
k_exit_b = 233/100
";
        let spec = ScenarioSpec::parse(text).unwrap();
        let reparsed = ScenarioSpec::parse(&spec.to_text()).unwrap();
        assert_eq!(spec, reparsed);
    }
}
