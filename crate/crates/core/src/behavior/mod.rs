//! Agent perception, group structure and the stochastic action choice.

mod hull;
mod utility;

pub use hull::convex_hull_area;
pub use utility::{
    balance_weights, choose_action, comp_cohesion, comp_direction, comp_goal, comp_obstacle,
    comp_overlap, comp_social, dispersion, evaluate, ActionEvaluation, BehaviorParams, OverlapEval,
    Weights,
};

use crate::engine::UrnState;
use crate::fields::FloorField;
use crate::rational::Rational;
use crate::scenario::{AreaId, CellState, Coord, DestId, GridGeometry, PedId, StartId};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// The action set: the eight Moore directions plus keeping the position.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Action {
    NW,
    N,
    NE,
    W,
    X,
    E,
    SW,
    S,
    SE,
}

pub const ACTIONS: [Action; 9] = [
    Action::NW,
    Action::N,
    Action::NE,
    Action::W,
    Action::X,
    Action::E,
    Action::SW,
    Action::S,
    Action::SE,
];

impl Action {
    /// Grid offset; `y` grows downwards, so `N` is `(0, -1)`.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::NW => (-1, -1),
            Action::N => (0, -1),
            Action::NE => (1, -1),
            Action::W => (-1, 0),
            Action::X => (0, 0),
            Action::E => (1, 0),
            Action::SW => (-1, 1),
            Action::S => (0, 1),
            Action::SE => (1, 1),
        }
    }

    pub fn is_diagonal(self) -> bool {
        let (dx, dy) = self.delta();
        dx != 0 && dy != 0
    }

    pub fn index(self) -> usize {
        ACTIONS.iter().position(|&a| a == self).unwrap()
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::NW => "NW",
            Action::N => "N",
            Action::NE => "NE",
            Action::W => "W",
            Action::X => "X",
            Action::E => "E",
            Action::SW => "SW",
            Action::S => "S",
            Action::SE => "SE",
        }
    }

    /// Clockwise compass position (N = 0), `None` for `X`.
    pub(crate) fn compass(self) -> Option<u8> {
        match self {
            Action::N => Some(0),
            Action::NE => Some(1),
            Action::E => Some(2),
            Action::SE => Some(3),
            Action::S => Some(4),
            Action::SW => Some(5),
            Action::W => Some(6),
            Action::NW => Some(7),
            Action::X => None,
        }
    }
}

/// Reference from a pedestrian into the group registry.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GroupRef {
    pub group: u32,
    /// `None` for plain simple groups; `Some` identifies the leaf subgroup
    /// of a structured group.
    pub subgroup: Option<u32>,
}

/// A simulated pedestrian. Speeds stay rational so stair round trips and urn
/// refills are exact; everything float-valued lives in the fields and the
/// utility evaluation.
#[derive(Clone, Debug)]
pub struct Pedestrian {
    pub id: PedId,
    pub group: Option<GroupRef>,
    pub pos: Coord,
    pub old_dir: Action,
    pub dest: DestId,
    /// Current desired speed (m/s), modified by slope markers.
    pub speed_desired: Rational,
    /// Desired speed as sampled at generation; also the class key in metrics.
    pub speed_spawn: Rational,
    pub urn: UrnState,
    /// Accumulated diagonal excess distance, always in `[0, 1 + (sqrt2 - 1))`.
    pub diag_penalty: f64,
    pub current_area: Option<AreaId>,
    pub origin: StartId,
    pub rng: ChaCha8Rng,
    /// Incremented on every recycle teleport so measurement windows reset.
    pub teleports: u32,
    /// Successful position updates (including chosen stays).
    pub moves_completed: u64,
    /// What happened this step; `X` when inactive or blocked.
    pub last_action: Action,
}

/// Group tree: a simple group holds members directly and has no subgroups; a
/// structured group holds subgroups and no direct members.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Group {
    pub id: u32,
    pub subgroups: Vec<Group>,
    pub members: Vec<PedId>,
}

/// Flat registry behind the group trees; membership is stable for the whole
/// run (dynamic group formation is out of scope).
#[derive(Clone, Default, Debug)]
pub struct GroupRegistry {
    simple: BTreeMap<u32, Vec<PedId>>,
    structured: BTreeMap<u32, BTreeMap<u32, Vec<PedId>>>,
}

impl GroupRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: crate::scenario::GroupSpec, ped: PedId) -> Option<GroupRef> {
        match spec {
            crate::scenario::GroupSpec::None => None,
            crate::scenario::GroupSpec::Simple(group) => {
                self.simple.entry(group).or_default().push(ped);
                Some(GroupRef { group, subgroup: None })
            }
            crate::scenario::GroupSpec::Structured { group, subgroup } => {
                self.structured.entry(group).or_default().entry(subgroup).or_default().push(ped);
                Some(GroupRef { group, subgroup: Some(subgroup) })
            }
        }
    }

    /// Members of the pedestrian's leaf group (its simple group, or its
    /// subgroup within a structured group), including the pedestrian itself.
    pub fn cohort(&self, r: GroupRef) -> &[PedId] {
        match r.subgroup {
            None => self.simple.get(&r.group).map(Vec::as_slice).unwrap_or(&[]),
            Some(sub) => self
                .structured
                .get(&r.group)
                .and_then(|g| g.get(&sub))
                .map(Vec::as_slice)
                .unwrap_or(&[]),
        }
    }

    /// Members of the same structured group outside the pedestrian's own
    /// subgroup. Empty for simple groups and individuals.
    pub fn affiliates(&self, r: GroupRef) -> Vec<PedId> {
        let Some(own) = r.subgroup else { return Vec::new() };
        let Some(group) = self.structured.get(&r.group) else { return Vec::new() };
        group
            .iter()
            .filter(|(sub, _)| **sub != own)
            .flat_map(|(_, members)| members.iter().copied())
            .collect()
    }

    /// Tree view of all registered groups.
    pub fn groups(&self) -> Vec<Group> {
        let mut out: Vec<Group> = self
            .simple
            .iter()
            .map(|(&id, members)| Group { id, subgroups: Vec::new(), members: members.clone() })
            .collect();
        for (&id, subs) in &self.structured {
            out.push(Group {
                id,
                subgroups: subs
                    .iter()
                    .map(|(&sid, members)| Group { id: sid, subgroups: Vec::new(), members: members.clone() })
                    .collect(),
                members: Vec::new(),
            });
        }
        out
    }
}

/// Everything one agent sees about a candidate cell.
#[derive(Clone, Copy, Debug)]
pub struct CandidateView<F> {
    pub action: Action,
    pub cell: Coord,
    /// Inside the grid and not an obstacle.
    pub geometry_feasible: bool,
    pub path: F,
    pub obstacle: F,
    /// Raw density value, own contribution included.
    pub density: F,
    pub occupancy: CellState,
}

/// Snapshot handed to the utility evaluation.
#[derive(Clone, Debug)]
pub struct Perception<F> {
    pub candidates: [CandidateView<F>; 9],
    /// Perceived positions of leaf-group companions (cell units, self
    /// excluded).
    pub cohort: Vec<Coord>,
    /// Perceived positions of same-structured-group members outside the own
    /// subgroup.
    pub affiliates: Vec<Coord>,
}

/// Gathers field values, occupancy and group positions for the nine
/// candidate cells. Group members beyond `perception_distance_m` are not
/// perceived; walls do not occlude.
#[allow(clippy::too_many_arguments)]
pub fn perceive<F: crate::scalar::Scalar>(
    ped: &Pedestrian,
    geometry: &GridGeometry,
    path: &FloorField<F>,
    obstacle: &FloorField<F>,
    density: &FloorField<F>,
    cells: &[CellState],
    cohort_positions: &[Coord],
    affiliate_positions: &[Coord],
    perception_distance_m: f64,
) -> Perception<F> {
    let candidates = ACTIONS.map(|action| {
        let (dx, dy) = action.delta();
        let cell = ped.pos.offset(dx, dy);
        if !geometry.contains(cell) {
            return CandidateView {
                action,
                cell,
                geometry_feasible: false,
                path: F::infinity(),
                obstacle: F::zero(),
                density: F::zero(),
                occupancy: CellState::Obstacle,
            };
        }
        let occupancy = cells[geometry.index(cell)];
        CandidateView {
            action,
            cell,
            geometry_feasible: occupancy != CellState::Obstacle,
            path: path.val(cell),
            obstacle: obstacle.val(cell),
            density: density.val(cell),
            occupancy,
        }
    });
    let within = |positions: &[Coord]| -> Vec<Coord> {
        positions
            .iter()
            .copied()
            .filter(|p| ped.pos.distance_cells(*p) * geometry.cell_side_m <= perception_distance_m)
            .collect()
    };
    Perception {
        candidates,
        cohort: within(cohort_positions),
        affiliates: within(affiliate_positions),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::UrnState;
    use crate::fields::{compute_density_field, compute_obstacle_field, compute_path_field, DensityKernel};
    use crate::scenario::ScenarioSpec;
    use rand::SeedableRng;

    fn test_ped(pos: Coord) -> Pedestrian {
        Pedestrian {
            id: 0,
            group: None,
            pos,
            old_dir: Action::X,
            dest: 1,
            speed_desired: Rational::new(6, 5),
            speed_spawn: Rational::new(6, 5),
            urn: UrnState::new(Rational::new(3, 4)).unwrap(),
            diag_penalty: 0.0,
            current_area: None,
            origin: 1,
            rng: ChaCha8Rng::seed_from_u64(0),
            teleports: 0,
            moves_completed: 0,
            last_action: Action::X,
        }
    }

    #[test]
    fn action_deltas_cover_moore_neighbourhood() {
        let mut seen: Vec<(i32, i32)> = ACTIONS.iter().map(|a| a.delta()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        assert_eq!(Action::N.delta(), (0, -1));
        assert!(Action::NE.is_diagonal());
        assert!(!Action::E.is_diagonal());
        assert!(!Action::X.is_diagonal());
    }

    #[test]
    fn perceive_marks_outside_cells_infeasible() {
        let spec = ScenarioSpec::parse("[map]\nD1,.\n.,.\n").unwrap();
        let path = compute_path_field::<f64>(&spec, 1).unwrap();
        let obstacle = compute_obstacle_field::<f64>(&spec);
        let kernel = DensityKernel::new(1.2, 0.4);
        let density = compute_density_field(&spec.geometry, &[], &kernel);
        let cells = vec![CellState::Free; 4];
        let ped = test_ped(Coord::new(0, 0));
        let p = perceive(&ped, &spec.geometry, &path, &obstacle, &density, &cells, &[], &[], 5.0);
        let nw = &p.candidates[Action::NW.index()];
        assert!(!nw.geometry_feasible);
        let e = &p.candidates[Action::E.index()];
        assert!(e.geometry_feasible);
        assert!(p.cohort.is_empty());
    }

    #[test]
    fn perception_distance_filters_members() {
        let spec = ScenarioSpec::parse(&format!("[map]\n{}\n", "D1,.,.,.,.,.,.,.,.,.,.,.,.,.,.".to_string())).unwrap();
        let path = compute_path_field::<f64>(&spec, 1).unwrap();
        let obstacle = compute_obstacle_field::<f64>(&spec);
        let kernel = DensityKernel::new(1.2, 0.4);
        let density = compute_density_field(&spec.geometry, &[], &kernel);
        let cells = vec![CellState::Free; 15];
        let ped = test_ped(Coord::new(0, 0));
        // 1 m away (2.5 cells is not representable; use 2 cells = 0.8 m) and
        // 14 cells = 5.6 m away: only the first is within the default 5 m.
        let members = [Coord::new(2, 0), Coord::new(14, 0)];
        let p = perceive(&ped, &spec.geometry, &path, &obstacle, &density, &cells, &members, &[], 5.0);
        assert_eq!(p.cohort, vec![Coord::new(2, 0)]);
    }

    #[test]
    fn registry_cohort_and_affiliates() {
        use crate::scenario::GroupSpec;
        let mut reg = GroupRegistry::new();
        let r1 = reg.register(GroupSpec::Simple(1), 10).unwrap();
        reg.register(GroupSpec::Simple(1), 11);
        let r2 = reg.register(GroupSpec::Structured { group: 2, subgroup: 0 }, 20).unwrap();
        reg.register(GroupSpec::Structured { group: 2, subgroup: 0 }, 21);
        reg.register(GroupSpec::Structured { group: 2, subgroup: 1 }, 22);
        assert_eq!(reg.cohort(r1), &[10, 11]);
        assert!(reg.affiliates(r1).is_empty());
        assert_eq!(reg.cohort(r2), &[20, 21]);
        assert_eq!(reg.affiliates(r2), vec![22]);

        let groups = reg.groups();
        assert_eq!(groups.len(), 2);
        // Simple group: members, no subgroups.
        assert!(groups[0].subgroups.is_empty());
        assert_eq!(groups[0].members, vec![10, 11]);
        // Structured group: subgroups, no direct members.
        assert!(groups[1].members.is_empty());
        assert_eq!(groups[1].subgroups.len(), 2);
    }
}
