//! The movement utility and its seven behavioural components.
//!
//! Each candidate cell `c` scores
//! `U(c) = (kg*G + kob*Ob + ks*S + kc*C + ki*I + kd*D + kov*Ov) / d`
//! with `d = sqrt(2)` for diagonal actions and 1 otherwise. Attractive
//! components live in `[-1, 1]` (`D` in `[0, 1]`), repulsive ones in
//! `[-1, 0]`. Action choice is softmax: `P(c) = N * exp(U(c))` over the
//! feasible actions; keeping the position is always feasible.

use super::{convex_hull_area, Action, CandidateView, Perception, ACTIONS};
use crate::fields::DensityKernel;
use crate::scalar::{scalar, sqrt2, Scalar};
use crate::scenario::{CalibrationParams, CellState, Coord};
use rand::Rng;

/// Calibration weights of the seven components.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Weights<F> {
    pub goal: F,
    pub obstacle: F,
    pub social: F,
    pub cohesion: F,
    pub affiliation: F,
    pub direction: F,
    pub overlap: F,
}

impl<F: Scalar> Weights<F> {
    pub fn from_params(p: &CalibrationParams) -> Self {
        Weights {
            goal: scalar(p.kappa_g),
            obstacle: scalar(p.kappa_ob),
            social: scalar(p.kappa_s),
            cohesion: scalar(p.kappa_c),
            affiliation: scalar(p.kappa_i),
            direction: scalar(p.kappa_d),
            overlap: scalar(p.kappa_ov),
        }
    }
}

/// Constants consumed by component evaluation.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct BehaviorParams<F> {
    /// Density-field value at which social repulsion saturates.
    pub rho_sat: F,
    /// Obstacle-field distance beyond which geometric repulsion vanishes.
    pub obstacle_span: F,
    /// Own-cell density value above which single-occupied cells open up.
    pub overlap_threshold: F,
}

impl<F: Scalar> BehaviorParams<F> {
    pub fn from_params(p: &CalibrationParams) -> Self {
        BehaviorParams {
            rho_sat: scalar(p.rho_sat),
            obstacle_span: scalar(p.obstacle_span),
            overlap_threshold: scalar(p.overlap_threshold),
        }
    }
}

fn clamp_unit<F: Scalar>(x: F) -> F {
    x.max(-F::one()).min(F::one())
}

/// Goal attraction from the path field gradient. `None` marks an
/// unreachable candidate as infeasible; the stay action is always 0.
pub fn comp_goal<F: Scalar>(path_current: F, path_candidate: F, is_stay: bool) -> Option<F> {
    if is_stay {
        return Some(F::zero());
    }
    if !path_candidate.is_finite() {
        return None;
    }
    Some(clamp_unit((path_current - path_candidate) / sqrt2()))
}

/// Geometric repulsion: -1 on obstacle-distance 0, fading to 0 at `span`.
pub fn comp_obstacle<F: Scalar>(obstacle_val: F, span: F) -> F {
    -(F::one() - obstacle_val / span).max(F::zero())
}

/// Social repulsion from perceived density, the evaluating agent's own
/// contribution already removed; saturates at -1 for `rho_sat` and above.
pub fn comp_social<F: Scalar>(density_excluding_self: F, rho_sat: F) -> F {
    -(density_excluding_self.max(F::zero()) / rho_sat).min(F::one())
}

/// Cohesion toward perceived companions: positive when the candidate cell
/// reduces the mean Euclidean distance (cell units) to them. Also used for
/// the structured-group affiliation component over the members outside the
/// agent's own subgroup.
pub fn comp_cohesion<F: Scalar>(from: Coord, to: Coord, members: &[Coord]) -> F {
    if members.is_empty() {
        return F::zero();
    }
    let mean = |origin: Coord| -> f64 {
        members.iter().map(|m| origin.distance_cells(*m)).sum::<f64>() / members.len() as f64
    };
    clamp_unit(scalar::<F>(mean(from) - mean(to)) / sqrt2())
}

/// Inertia bonus: 1 for repeating the previous direction, 0.5 for a 45-degree
/// turn, 0 otherwise and for keeping the position.
pub fn comp_direction<F: Scalar>(action: Action, old_dir: Action) -> F {
    let (Some(a), Some(b)) = (action.compass(), old_dir.compass()) else {
        return F::zero();
    };
    match (a as i8 - b as i8).rem_euclid(8) {
        0 => F::one(),
        1 | 7 => scalar(0.5),
        _ => F::zero(),
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct OverlapEval<F> {
    pub value: F,
    pub feasible: bool,
}

/// Overlap mechanism: free cells cost nothing; a single-occupied cell is
/// enterable only above the local density threshold and then costs -1;
/// double-occupied cells never accept entrants. The stay action is exempt.
pub fn comp_overlap<F: Scalar>(
    occupancy: CellState,
    density_at_current: F,
    threshold: F,
    is_stay: bool,
) -> OverlapEval<F> {
    if is_stay {
        return OverlapEval { value: F::zero(), feasible: true };
    }
    match occupancy {
        CellState::Free => OverlapEval { value: F::zero(), feasible: true },
        CellState::OnePed(_) => OverlapEval {
            value: -F::one(),
            feasible: density_at_current >= threshold,
        },
        CellState::Obstacle | CellState::TwoPeds(_, _) => {
            OverlapEval { value: F::zero(), feasible: false }
        }
    }
}

/// Group dispersion: convex hull area (m²) of the member positions divided
/// by the member count.
pub fn dispersion<F: Scalar>(member_positions_m: &[(F, F)]) -> F {
    if member_positions_m.is_empty() {
        return F::zero();
    }
    convex_hull_area(member_positions_m) / scalar(member_positions_m.len() as f64)
}

/// Rebalances the cohesion, goal and affiliation weights of a simple group
/// by its dispersion: compact groups relax cohesion in favour of the goal,
/// dispersed groups do the opposite. All other weights pass through.
pub fn balance_weights<F: Scalar>(weights: &Weights<F>, dispersion_m2: F, delta: F) -> Weights<F> {
    let b = (dispersion_m2 / delta).tanh();
    let third = F::one() / scalar(3.0);
    let two_thirds = scalar::<F>(2.0) / scalar(3.0);
    Weights {
        cohesion: weights.cohesion * third + weights.cohesion * two_thirds * b,
        goal: weights.goal * third + weights.goal * two_thirds * (F::one() - b),
        affiliation: weights.affiliation * third + weights.affiliation * two_thirds * (F::one() - b),
        ..*weights
    }
}

/// Per-action utilities, feasibility and choice probabilities.
#[derive(Clone, Copy, Debug)]
pub struct ActionEvaluation<F> {
    pub utilities: [F; 9],
    pub feasible: [bool; 9],
    pub probabilities: [F; 9],
}

impl<F: Scalar> ActionEvaluation<F> {
    pub fn utility(&self, a: Action) -> F {
        self.utilities[a.index()]
    }

    pub fn probability(&self, a: Action) -> F {
        self.probabilities[a.index()]
    }

    pub fn is_feasible(&self, a: Action) -> bool {
        self.feasible[a.index()]
    }

    /// Softmax over the feasible actions from raw utilities. Shifting all
    /// utilities by a constant leaves the result unchanged.
    pub fn from_utilities(utilities: [F; 9], feasible: [bool; 9]) -> Self {
        let max = ACTIONS
            .iter()
            .filter(|a| feasible[a.index()])
            .map(|a| utilities[a.index()])
            .fold(F::neg_infinity(), F::max);
        let mut probabilities = [F::zero(); 9];
        let mut total = F::zero();
        for a in ACTIONS {
            if feasible[a.index()] {
                let w = (utilities[a.index()] - max).exp();
                probabilities[a.index()] = w;
                total = total + w;
            }
        }
        for p in &mut probabilities {
            *p = *p / total;
        }
        ActionEvaluation { utilities, feasible, probabilities }
    }
}

/// Scores all nine actions for one agent against a perception snapshot.
/// `weights` must already be group-balanced where that applies.
pub fn evaluate<F: Scalar>(
    pos: Coord,
    old_dir: Action,
    perception: &Perception<F>,
    weights: &Weights<F>,
    params: &BehaviorParams<F>,
    kernel: &DensityKernel<F>,
) -> ActionEvaluation<F> {
    let current: &CandidateView<F> = &perception.candidates[Action::X.index()];
    let mut utilities = [F::zero(); 9];
    let mut feasible = [false; 9];
    for cand in &perception.candidates {
        let idx = cand.action.index();
        let is_stay = cand.action == Action::X;
        if !cand.geometry_feasible && !is_stay {
            continue;
        }
        let overlap = comp_overlap(cand.occupancy, current.density, params.overlap_threshold, is_stay);
        if !overlap.feasible {
            continue;
        }
        let Some(goal) = comp_goal(current.path, cand.path, is_stay) else {
            continue;
        };
        let density_excl = cand.density - kernel.own_contribution(pos, cand.cell);
        let sum = weights.goal * goal
            + weights.obstacle * comp_obstacle(cand.obstacle, params.obstacle_span)
            + weights.social * comp_social(density_excl, params.rho_sat)
            + weights.cohesion * comp_cohesion(pos, cand.cell, &perception.cohort)
            + weights.affiliation * comp_cohesion(pos, cand.cell, &perception.affiliates)
            + weights.direction * comp_direction(cand.action, old_dir)
            + weights.overlap * overlap.value;
        let divisor = if cand.action.is_diagonal() { sqrt2() } else { F::one() };
        utilities[idx] = sum / divisor;
        feasible[idx] = true;
    }
    debug_assert!(feasible[Action::X.index()], "keeping the position is always feasible");
    ActionEvaluation::from_utilities(utilities, feasible)
}

/// Samples one action with probability proportional to `exp(U)` over the
/// feasible set. Does not mutate any world state.
pub fn choose_action<F: Scalar>(eval: &ActionEvaluation<F>, rng: &mut impl Rng) -> Action {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_feasible = Action::X;
    for a in ACTIONS {
        if !eval.feasible[a.index()] {
            continue;
        }
        last_feasible = a;
        cumulative += eval.probabilities[a.index()].to_f64().unwrap_or(0.0);
        if u < cumulative {
            return a;
        }
    }
    last_feasible
}
