//! The simulation engine: three-phase parallel update with friction-based
//! conflict resolution, urn activation, slope markers, generation and
//! absorption.
//!
//! Each step runs:
//! 1. choices: every pedestrian draws its activation; activated ones
//!    perceive, evaluate utilities (group-balanced where applicable) and
//!    pick a tentative action against the same world snapshot;
//! 2. conflict detection and resolution over contended target cells;
//! 3. commit: winners move, urn bookkeeping and diagonal penalties apply,
//!    slope markers fire, arrivals are absorbed (or recycled in periodic
//!    mode), start areas generate, and the density field is rebuilt.
//!
//! Agents are processed in id order and all randomness comes from
//! per-pedestrian and per-conflict seed-derived streams, so runs are
//! reproducible bit for bit.

mod conflict;
mod urn;

pub use conflict::{
    detect_conflicts, resolve_conflict, ConflictGroup, ConflictOutcome, ConflictResolution,
};
pub use urn::{apply_diag_penalty, frac, split_urn, UrnError, UrnState, DIAG_STEP_EXCESS};

use crate::behavior::{
    balance_weights, choose_action, dispersion, evaluate, perceive, Action, BehaviorParams,
    GroupRegistry, Pedestrian, Weights,
};
use crate::fields::{
    compute_density_field, compute_obstacle_field, compute_path_field, DensityKernel, FloorField,
};
use crate::rational::rational_to_f64;
use crate::scalar::{scalar, Scalar};
use crate::scenario::{
    AreaId, BoundaryMode, CellState, Coord, DestId, Generation, GridGeometry, PedId, ScenarioSpec,
    StartId,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario validation failed: {0}")]
    Validation(String),
    #[error("internal consistency violation at step {step}: {message}")]
    Inconsistent { step: u64, message: String },
}

#[derive(Clone, Copy, Default, Debug)]
pub struct WorldStats {
    pub generated: u64,
    pub absorbed: u64,
    pub recycled: u64,
    pub conflicts: u64,
}

#[derive(Clone, Copy, Debug)]
enum SlopeSide {
    A,
    B,
}

struct GenState {
    rng: ChaCha8Rng,
    pending_block: u32,
    freq_accumulator: f64,
}

struct Choice {
    attempted: bool,
    action: Action,
    target: Coord,
}

pub struct World<F: Scalar> {
    spec: ScenarioSpec,
    weights: Weights<F>,
    behavior: BehaviorParams<F>,
    kernel: DensityKernel<F>,
    cells: Vec<CellState>,
    peds: BTreeMap<PedId, Pedestrian>,
    groups: GroupRegistry,
    path_fields: BTreeMap<DestId, FloorField<F>>,
    obstacle_field: FloorField<F>,
    density_field: FloorField<F>,
    dest_lookup: Vec<Option<DestId>>,
    slope_lookup: Vec<Option<(AreaId, SlopeSide)>>,
    seed: u64,
    step: u64,
    next_ped_id: PedId,
    gen_states: BTreeMap<StartId, GenState>,
    stats: WorldStats,
}

impl<F: Scalar> World<F> {
    /// Builds the initial world: validates the scenario, computes the static
    /// fields, spawns block-generation pedestrians and the first density
    /// field.
    pub fn new(spec: ScenarioSpec, seed: u64) -> Result<Self, EngineError> {
        let violations = spec
            .validate_slope_pairs()
            .map_err(|e| EngineError::Validation(e.to_string()))?;
        if !violations.is_empty() {
            let msgs: Vec<String> = violations
                .iter()
                .map(|v| format!("slope area {}: {}", v.area, v.message))
                .collect();
            return Err(EngineError::Validation(msgs.join("; ")));
        }
        if spec.geometry.cell_count() as u64 >= crate::rng::MAX_CONFLICT_CELLS {
            return Err(EngineError::Validation(format!(
                "grid of {} cells exceeds the supported maximum",
                spec.geometry.cell_count()
            )));
        }

        let mut path_fields = BTreeMap::new();
        for &dest in spec.destinations.keys() {
            let field = compute_path_field(&spec, dest)
                .map_err(|e| EngineError::Validation(e.to_string()))?;
            path_fields.insert(dest, field);
        }
        let obstacle_field = compute_obstacle_field(&spec);
        let kernel = DensityKernel::new(spec.params.density_radius, spec.geometry.cell_side_m);

        let mut cells = vec![CellState::Free; spec.geometry.cell_count()];
        for (index, &obstacle) in spec.obstacles.iter().enumerate() {
            if obstacle {
                cells[index] = CellState::Obstacle;
            }
        }
        let mut dest_lookup = vec![None; spec.geometry.cell_count()];
        for (id, marker) in &spec.destinations {
            for &c in &marker.cells {
                dest_lookup[spec.geometry.index(c)] = Some(*id);
            }
        }
        let mut slope_lookup = vec![None; spec.geometry.cell_count()];
        for (id, area) in &spec.slopes {
            for &c in &area.side_a.cells {
                slope_lookup[spec.geometry.index(c)] = Some((*id, SlopeSide::A));
            }
            for &c in &area.side_b.cells {
                slope_lookup[spec.geometry.index(c)] = Some((*id, SlopeSide::B));
            }
        }

        let gen_states = spec
            .starts
            .iter()
            .map(|(&id, marker)| {
                let pending_block = match marker.generation {
                    Generation::Block(n) => n,
                    Generation::Frequency(_) => 0,
                };
                (id, GenState {
                    rng: crate::rng::marker_stream(seed, id),
                    pending_block,
                    freq_accumulator: 0.0,
                })
            })
            .collect();

        let density_field = compute_density_field(&spec.geometry, &[], &kernel);
        let mut world = World {
            weights: Weights::from_params(&spec.params),
            behavior: BehaviorParams::from_params(&spec.params),
            kernel,
            cells,
            peds: BTreeMap::new(),
            groups: GroupRegistry::new(),
            path_fields,
            obstacle_field,
            density_field,
            dest_lookup,
            slope_lookup,
            seed,
            step: 0,
            next_ped_id: 0,
            gen_states,
            stats: WorldStats::default(),
            spec,
        };
        world.generate(false);
        world.rebuild_density();
        world.verify_occupancy()?;
        Ok(world)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.spec.geometry
    }

    pub fn step_duration_s(&self) -> f64 {
        self.spec.params.step_duration_s()
    }

    pub fn population(&self) -> usize {
        self.peds.len()
    }

    pub fn pedestrians(&self) -> impl Iterator<Item = &Pedestrian> {
        self.peds.values()
    }

    pub fn pedestrian(&self, id: PedId) -> Option<&Pedestrian> {
        self.peds.get(&id)
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cell(&self, c: Coord) -> CellState {
        self.cells[self.spec.geometry.index(c)]
    }

    pub fn density_field(&self) -> &FloorField<F> {
        &self.density_field
    }

    pub fn obstacle_field(&self) -> &FloorField<F> {
        &self.obstacle_field
    }

    pub fn path_field(&self, dest: DestId) -> Option<&FloorField<F>> {
        self.path_fields.get(&dest)
    }

    pub fn groups(&self) -> &GroupRegistry {
        &self.groups
    }

    pub fn stats(&self) -> &WorldStats {
        &self.stats
    }

    /// Advances the simulation by one step.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.step += 1;
        let ids: Vec<PedId> = self.peds.keys().copied().collect();

        // Phase 1: activation and tentative choices against the snapshot.
        let mut choices: BTreeMap<PedId, Choice> = BTreeMap::new();
        let mut intents: BTreeMap<PedId, Coord> = BTreeMap::new();
        for &id in &ids {
            let u: f64 = self.peds.get_mut(&id).expect("live id").rng.gen();
            let ped = &self.peds[&id];
            if !ped.urn.decide(u) {
                choices.insert(id, Choice { attempted: false, action: Action::X, target: ped.pos });
                continue;
            }
            let eval = self.evaluate_agent(ped);
            let ped = self.peds.get_mut(&id).expect("live id");
            let action = choose_action(&eval, &mut ped.rng);
            let (dx, dy) = action.delta();
            let target = ped.pos.offset(dx, dy);
            if action != Action::X {
                intents.insert(id, target);
            }
            choices.insert(id, Choice { attempted: true, action, target });
        }

        // Phase 2: conflicts over contended targets.
        let groups = detect_conflicts(&intents, |c| {
            match self.cells[self.spec.geometry.index(c)] {
                CellState::Free => 2,
                CellState::OnePed(_) => 1,
                CellState::Obstacle | CellState::TwoPeds(_, _) => 0,
            }
        });
        let mut blocked: BTreeSet<PedId> = BTreeSet::new();
        for group in &groups {
            let cell_index = self.spec.geometry.index(group.target);
            let mut rng = crate::rng::conflict_stream(self.seed, self.step, cell_index);
            let resolution =
                resolve_conflict(group, self.spec.params.frict_l, self.spec.params.frict_h, &mut rng);
            self.stats.conflicts += 1;
            for contender in &group.contenders {
                if !resolution.movers.contains(contender) {
                    blocked.insert(*contender);
                }
            }
        }

        // Phase 3: commit, urn bookkeeping, slopes, arrivals, generation.
        let mut moved: Vec<(PedId, Coord)> = Vec::new();
        for &id in &ids {
            let choice = &choices[&id];
            if !choice.attempted {
                let ped = self.peds.get_mut(&id).expect("live id");
                ped.last_action = Action::X;
                ped.urn.settle(false, false, 0);
                continue;
            }
            let won = choice.action == Action::X || !blocked.contains(&id);
            if !won {
                let ped = self.peds.get_mut(&id).expect("live id");
                ped.last_action = Action::X;
                ped.urn.settle(true, false, 0);
                continue;
            }
            if choice.action != Action::X {
                let from = self.peds[&id].pos;
                self.vacate(from, id)?;
                self.occupy(choice.target, id)?;
                moved.push((id, choice.target));
            }
            let ped = self.peds.get_mut(&id).expect("live id");
            ped.pos = choice.target;
            ped.old_dir = choice.action;
            ped.last_action = choice.action;
            ped.moves_completed += 1;
            let extra = if choice.action.is_diagonal() {
                apply_diag_penalty(&mut ped.diag_penalty)
            } else {
                0
            };
            ped.urn.settle(true, true, extra);
        }

        for &(id, cell) in &moved {
            self.process_slope_marker(id, cell);
        }
        self.process_arrivals(&ids)?;
        self.generate(true);
        self.rebuild_density();
        self.verify_occupancy()
    }

    /// Perception, balancing, and utility evaluation for one agent.
    fn evaluate_agent(&self, ped: &Pedestrian) -> crate::behavior::ActionEvaluation<F> {
        let (cohort, affiliates) = self.group_positions(ped);
        let path = self
            .path_fields
            .get(&ped.dest)
            .expect("destinations validated at parse time");
        let perception = perceive(
            ped,
            &self.spec.geometry,
            path,
            &self.obstacle_field,
            &self.density_field,
            &self.cells,
            &cohort,
            &affiliates,
            self.spec.params.perception_distance,
        );
        let weights = if ped.group.is_some() {
            let side = scalar::<F>(self.spec.geometry.cell_side_m);
            let mut members_m: Vec<(F, F)> = perception
                .cohort
                .iter()
                .map(|c| (scalar::<F>(c.x as f64) * side, scalar::<F>(c.y as f64) * side))
                .collect();
            members_m.push((scalar::<F>(ped.pos.x as f64) * side, scalar::<F>(ped.pos.y as f64) * side));
            let disp = dispersion(&members_m);
            balance_weights(&self.weights, disp, scalar(self.spec.params.delta))
        } else {
            self.weights
        };
        evaluate(ped.pos, ped.old_dir, &perception, &weights, &self.behavior, &self.kernel)
    }

    /// Live positions of the agent's leaf-group companions and of the
    /// members of its structured group outside the own subgroup.
    fn group_positions(&self, ped: &Pedestrian) -> (Vec<Coord>, Vec<Coord>) {
        let Some(gref) = ped.group else {
            return (Vec::new(), Vec::new());
        };
        let cohort = self
            .groups
            .cohort(gref)
            .iter()
            .filter(|&&m| m != ped.id)
            .filter_map(|m| self.peds.get(m).map(|p| p.pos))
            .collect();
        let affiliates = self
            .groups
            .affiliates(gref)
            .iter()
            .filter_map(|m| self.peds.get(m).map(|p| p.pos))
            .collect();
        (cohort, affiliates)
    }

    fn vacate(&mut self, cell: Coord, id: PedId) -> Result<(), EngineError> {
        let index = self.spec.geometry.index(cell);
        self.cells[index] = match self.cells[index] {
            CellState::OnePed(a) if a == id => CellState::Free,
            CellState::TwoPeds(a, b) if a == id => CellState::OnePed(b),
            CellState::TwoPeds(a, b) if b == id => CellState::OnePed(a),
            other => {
                return Err(self.inconsistent(format!(
                    "pedestrian {id} vacating ({}, {}) not found there (cell is {other:?})",
                    cell.x, cell.y
                )))
            }
        };
        Ok(())
    }

    fn occupy(&mut self, cell: Coord, id: PedId) -> Result<(), EngineError> {
        let index = self.spec.geometry.index(cell);
        self.cells[index] = match self.cells[index] {
            CellState::Free => CellState::OnePed(id),
            CellState::OnePed(a) if a != id => CellState::TwoPeds(a, id),
            other => {
                return Err(self.inconsistent(format!(
                    "pedestrian {id} cannot enter ({}, {}): cell is {other:?}",
                    cell.x, cell.y
                )))
            }
        };
        Ok(())
    }

    fn inconsistent(&self, message: String) -> EngineError {
        EngineError::Inconsistent { step: self.step, message }
    }

    /// Speed update on crossing a slope boundary marker: entering the area
    /// applies the marker's entry constant, crossing any marker of the area
    /// one is already in applies its exit constant. The new activation
    /// probability takes effect at the next urn refill.
    fn process_slope_marker(&mut self, id: PedId, entered: Coord) {
        let Some((area, side)) = self.slope_lookup[self.spec.geometry.index(entered)] else {
            return;
        };
        let speed_m = self.spec.params.speed_m;
        let marker = {
            let slope = &self.spec.slopes[&area];
            match side {
                SlopeSide::A => &slope.side_a,
                SlopeSide::B => &slope.side_b,
            }
        };
        let (k_enter, k_exit) = (marker.k_enter, marker.k_exit);
        let ped = self.peds.get_mut(&id).expect("live id");
        if ped.current_area != Some(area) {
            ped.current_area = Some(area);
            ped.speed_desired = ped.speed_desired * k_enter;
        } else {
            ped.current_area = None;
            ped.speed_desired = ped.speed_desired * k_exit;
        }
        if ped.speed_desired > speed_m {
            log::warn!(
                "pedestrian {id} desired speed {} clamped to the maximum {}",
                rational_to_f64(ped.speed_desired),
                rational_to_f64(speed_m)
            );
            ped.speed_desired = speed_m;
        }
        let rho = ped.speed_desired / speed_m;
        ped.urn.set_rho(rho).expect("clamped speed keeps rho in (0, 1]");
    }

    /// Absorbs pedestrians standing on their destination, or recycles them
    /// to their origin start area when the boundary is periodic.
    fn process_arrivals(&mut self, ids: &[PedId]) -> Result<(), EngineError> {
        for &id in ids {
            let Some(ped) = self.peds.get(&id) else { continue };
            let at = self.dest_lookup[self.spec.geometry.index(ped.pos)];
            if at != Some(ped.dest) {
                continue;
            }
            match self.spec.geometry.boundary {
                BoundaryMode::Open => {
                    let pos = ped.pos;
                    self.vacate(pos, id)?;
                    self.peds.remove(&id);
                    self.stats.absorbed += 1;
                }
                BoundaryMode::PeriodicX => {
                    let origin = ped.origin;
                    let spawn = self.spec.starts[&origin]
                        .cells
                        .iter()
                        .copied()
                        .find(|&c| self.cells[self.spec.geometry.index(c)] == CellState::Free);
                    // No free cell: stay put and retry next step.
                    let Some(spawn) = spawn else { continue };
                    let pos = ped.pos;
                    self.vacate(pos, id)?;
                    self.occupy(spawn, id)?;
                    let ped = self.peds.get_mut(&id).expect("live id");
                    ped.pos = spawn;
                    ped.old_dir = Action::X;
                    ped.teleports += 1;
                    self.stats.recycled += 1;
                }
            }
        }
        Ok(())
    }

    /// Spawns new pedestrians. Block generation drains at step 0 and defers
    /// arrivals while spawn cells are occupied; frequency generation
    /// accumulates fractional arrivals scaled by the step duration.
    fn generate(&mut self, accumulate_frequency: bool) {
        let dt = self.spec.params.step_duration_s();
        let start_ids: Vec<StartId> = self.spec.starts.keys().copied().collect();
        for id in start_ids {
            if accumulate_frequency {
                if let Generation::Frequency(rate) = self.spec.starts[&id].generation {
                    self.gen_states.get_mut(&id).expect("marker state").freq_accumulator += rate * dt;
                }
            }
            loop {
                let state = self.gen_states.get_mut(&id).expect("marker state");
                let due = match self.spec.starts[&id].generation {
                    Generation::Block(_) => state.pending_block > 0,
                    Generation::Frequency(_) => state.freq_accumulator >= 1.0,
                };
                if !due || !self.spawn_one(id) {
                    break;
                }
                let state = self.gen_states.get_mut(&id).expect("marker state");
                match self.spec.starts[&id].generation {
                    Generation::Block(_) => state.pending_block -= 1,
                    Generation::Frequency(_) => state.freq_accumulator -= 1.0,
                }
            }
        }
    }

    /// Places one pedestrian on the first free cell of the marker; false if
    /// the start area is full.
    fn spawn_one(&mut self, marker_id: StartId) -> bool {
        let marker = &self.spec.starts[&marker_id];
        let Some(cell) = marker
            .cells
            .iter()
            .copied()
            .find(|&c| self.cells[self.spec.geometry.index(c)] == CellState::Free)
        else {
            return false;
        };
        let destination = marker.destination;
        let group_spec = marker.group;
        let speed = {
            let state = self.gen_states.get_mut(&marker_id).expect("marker state");
            let u: f64 = state.rng.gen();
            let marker = &self.spec.starts[&marker_id];
            let mut cumulative = 0.0;
            let mut chosen = marker.speeds.last().expect("validated non-empty").speed;
            for class in &marker.speeds {
                cumulative += class.probability;
                if u < cumulative {
                    chosen = class.speed;
                    break;
                }
            }
            chosen
        };
        let id = self.next_ped_id;
        self.next_ped_id += 1;
        let rho = speed / self.spec.params.speed_m;
        let urn = UrnState::new(rho).expect("speeds validated against the maximum");
        let group = self.groups.register(group_spec, id);
        let ped = Pedestrian {
            id,
            group,
            pos: cell,
            old_dir: Action::X,
            dest: destination,
            speed_desired: speed,
            speed_spawn: speed,
            urn,
            diag_penalty: 0.0,
            current_area: None,
            origin: marker_id,
            rng: crate::rng::ped_stream(self.seed, id),
            teleports: 0,
            moves_completed: 0,
            last_action: Action::X,
        };
        self.occupy(cell, id).expect("spawn cell checked free");
        self.peds.insert(id, ped);
        self.stats.generated += 1;
        true
    }

    fn rebuild_density(&mut self) {
        let positions: Vec<Coord> = self.peds.values().map(|p| p.pos).collect();
        self.density_field = compute_density_field(&self.spec.geometry, &positions, &self.kernel);
    }

    /// Occupancy grid and pedestrian positions must agree exactly.
    fn verify_occupancy(&self) -> Result<(), EngineError> {
        let mut counted = 0usize;
        for (index, cell) in self.cells.iter().enumerate() {
            match *cell {
                CellState::Free => {}
                CellState::Obstacle => {
                    if !self.spec.obstacles[index] {
                        return Err(self.inconsistent(format!("cell {index} is not an obstacle in the scenario")));
                    }
                }
                CellState::OnePed(a) => {
                    counted += 1;
                    self.check_ped_at(a, index)?;
                }
                CellState::TwoPeds(a, b) => {
                    if a == b {
                        return Err(self.inconsistent(format!("cell {index} holds pedestrian {a} twice")));
                    }
                    counted += 2;
                    self.check_ped_at(a, index)?;
                    self.check_ped_at(b, index)?;
                }
            }
        }
        if counted != self.peds.len() {
            return Err(self.inconsistent(format!(
                "occupancy counts {counted} pedestrians, map holds {}",
                self.peds.len()
            )));
        }
        Ok(())
    }

    fn check_ped_at(&self, id: PedId, index: usize) -> Result<(), EngineError> {
        match self.peds.get(&id) {
            Some(p) if self.spec.geometry.index(p.pos) == index => Ok(()),
            Some(p) => Err(self.inconsistent(format!(
                "pedestrian {id} recorded at cell {index} but positioned at ({}, {})",
                p.pos.x, p.pos.y
            ))),
            None => Err(self.inconsistent(format!("cell {index} references absent pedestrian {id}"))),
        }
    }
}
