//! Property tests for the utility components, hull geometry and action
//! choice.

mod common;

use common::jarvis_hull_area;
use pedsim_core::behavior::{
    comp_cohesion, comp_direction, comp_goal, comp_obstacle, comp_overlap, comp_social,
    convex_hull_area, Action, ActionEvaluation, ACTIONS,
};
use pedsim_core::scenario::{CellState, Coord};
use proptest::prelude::*;

#[test]
fn hull_area_matches_gift_wrapping_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4011);
    for case in 0..50 {
        let n = rng.gen_range(3..50);
        let points: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))).collect();
        let got = convex_hull_area(&points);
        let expected = jarvis_hull_area(&points);
        assert!((got - expected).abs() <= 1e-9, "case {case}: {got} vs {expected}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn component_ranges_hold(
        path_cur in 0.0..500.0f64,
        path_cand in 0.0..500.0f64,
        obstacle in 0.0..50.0f64,
        density in 0.0..80.0f64,
        members in proptest::collection::vec((-30..30i32, -30..30i32), 0..9),
    ) {
        if let Some(g) = comp_goal(path_cur, path_cand, false) {
            prop_assert!((-1.0..=1.0).contains(&g));
        }
        let ob = comp_obstacle(obstacle, 2.0);
        prop_assert!((-1.0..=0.0).contains(&ob));
        let s = comp_social(density, 4.0);
        prop_assert!((-1.0..=0.0).contains(&s));
        let member_coords: Vec<Coord> = members.iter().map(|&(x, y)| Coord::new(x, y)).collect();
        let c = comp_cohesion::<f64>(Coord::new(0, 0), Coord::new(1, 1), &member_coords);
        prop_assert!((-1.0..=1.0).contains(&c));
        for a in ACTIONS {
            for b in ACTIONS {
                let d = comp_direction::<f64>(a, b);
                prop_assert!(d == 0.0 || d == 0.5 || d == 1.0);
            }
        }
        let ov = comp_overlap(CellState::OnePed(1), density, 4.0, false);
        prop_assert!((-1.0..=0.0).contains(&ov.value));
    }

    #[test]
    fn probabilities_normalise(
        utilities in proptest::array::uniform9(-30.0..30.0f64),
        mask in proptest::array::uniform9(proptest::bool::ANY),
    ) {
        let mut feasible = mask;
        feasible[Action::X.index()] = true; // keeping the position is always open
        let eval = ActionEvaluation::from_utilities(utilities, feasible);
        let total: f64 = ACTIONS
            .iter()
            .filter(|a| feasible[a.index()])
            .map(|a| eval.probability(*a))
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        for a in ACTIONS {
            if !feasible[a.index()] {
                prop_assert_eq!(eval.probability(a), 0.0);
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant(
        utilities in proptest::array::uniform9(-20.0..20.0f64),
        mask in proptest::array::uniform9(proptest::bool::ANY),
        shift in -50.0..50.0f64,
    ) {
        let mut feasible = mask;
        feasible[Action::X.index()] = true;
        let base = ActionEvaluation::from_utilities(utilities, feasible);
        let mut shifted = utilities;
        for u in &mut shifted {
            *u += shift;
        }
        let moved = ActionEvaluation::from_utilities(shifted, feasible);
        for a in ACTIONS {
            prop_assert!((base.probability(a) - moved.probability(a)).abs() <= 1e-12);
        }
    }

    #[test]
    fn hull_area_never_negative_and_translation_invariant(
        points in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..30),
        dx in -100.0..100.0f64,
        dy in -100.0..100.0f64,
    ) {
        let area = convex_hull_area(&points);
        prop_assert!(area >= 0.0);
        let moved: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
        let moved_area = convex_hull_area(&moved);
        prop_assert!((area - moved_area).abs() <= 1e-6 * (1.0 + area));
    }
}
