//! Conflict detection and friction-based resolution.
//!
//! A conflict is the simultaneous choice of one target cell by two or more
//! pedestrians. Groups larger than two are first reduced by blocking all but
//! two contenders chosen uniformly; a single uniform draw `r` then decides:
//! `r < frict_l` blocks both, `frict_l <= r <= frict_h` moves one (chosen
//! uniformly), `r > frict_h` moves both into an overlap when the target can
//! still take two entrants.

use crate::scenario::{Coord, PedId};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConflictGroup {
    pub target: Coord,
    /// At least two pedestrians, in id order.
    pub contenders: Vec<PedId>,
    /// Entrants the target can accept this step: 2 for a free cell, 1 for a
    /// single-occupied cell, 0 for an already overlapped cell.
    pub capacity: u8,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConflictOutcome {
    AllBlocked,
    OneMoves,
    /// Both finalists move; the target becomes an overlap cell.
    Overlap,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConflictResolution {
    pub target: Coord,
    pub outcome: ConflictOutcome,
    /// The two contenders left after random reduction (all of them for
    /// two-way conflicts).
    pub finalists: Vec<PedId>,
    pub movers: Vec<PedId>,
}

/// Groups movement intents by target cell; entries with at least two
/// contenders form conflict groups, ordered by target cell index.
pub fn detect_conflicts(
    intents: &BTreeMap<PedId, Coord>,
    capacity_of: impl Fn(Coord) -> u8,
) -> Vec<ConflictGroup> {
    let mut by_target: BTreeMap<Coord, Vec<PedId>> = BTreeMap::new();
    for (&ped, &target) in intents {
        by_target.entry(target).or_default().push(ped);
    }
    by_target
        .into_iter()
        .filter(|(_, contenders)| contenders.len() >= 2)
        .map(|(target, contenders)| ConflictGroup { target, capacity: capacity_of(target), contenders })
        .collect()
}

/// Resolves one conflict group with the given friction thresholds.
pub fn resolve_conflict(
    group: &ConflictGroup,
    frict_l: f64,
    frict_h: f64,
    rng: &mut impl Rng,
) -> ConflictResolution {
    debug_assert!(group.contenders.len() >= 2);
    if group.capacity == 0 {
        // Target already holds two pedestrians: the whole group is blocked.
        return ConflictResolution {
            target: group.target,
            outcome: ConflictOutcome::AllBlocked,
            finalists: Vec::new(),
            movers: Vec::new(),
        };
    }

    let mut finalists: Vec<PedId> = group.contenders.clone();
    while finalists.len() > 2 {
        // Remove a loser at random until two remain.
        let out = uniform_index(rng, finalists.len());
        finalists.remove(out);
    }

    let r: f64 = rng.gen();
    let (outcome, movers) = if r < frict_l {
        (ConflictOutcome::AllBlocked, Vec::new())
    } else if r <= frict_h {
        let winner = finalists[uniform_index(rng, 2)];
        (ConflictOutcome::OneMoves, vec![winner])
    } else if group.capacity >= 2 {
        (ConflictOutcome::Overlap, finalists.clone())
    } else {
        // Overlap drawn but the cell can only take one entrant.
        let winner = finalists[uniform_index(rng, 2)];
        (ConflictOutcome::OneMoves, vec![winner])
    };
    ConflictResolution { target: group.target, outcome, finalists, movers }
}

/// Uniform index from a single draw; every call consumes exactly one value,
/// which keeps the stream layout independent of the outcome.
fn uniform_index(rng: &mut impl Rng, n: usize) -> usize {
    let u: f64 = rng.gen();
    ((u * n as f64) as usize).min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::mock::StepRng;

    fn group(contenders: Vec<PedId>, capacity: u8) -> ConflictGroup {
        ConflictGroup { target: Coord::new(3, 3), contenders, capacity }
    }

    /// StepRng yielding `gen::<f64>()` close to `u`.
    fn rng_for(u: f64) -> StepRng {
        StepRng::new((u * 2.0_f64.powi(53)) as u64 * (1 << 11), 0)
    }

    #[test]
    fn detection_groups_by_target() {
        let mut intents = BTreeMap::new();
        intents.insert(1, Coord::new(2, 2));
        intents.insert(2, Coord::new(2, 2));
        intents.insert(3, Coord::new(4, 4));
        let groups = detect_conflicts(&intents, |_| 2);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].contenders, vec![1, 2]);
    }

    #[test]
    fn low_draw_blocks_both() {
        let g = group(vec![1, 2], 2);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng_for(0.2));
        assert_eq!(res.outcome, ConflictOutcome::AllBlocked);
        assert!(res.movers.is_empty());
    }

    #[test]
    fn mid_draw_moves_exactly_one() {
        let g = group(vec![1, 2], 2);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng_for(0.65));
        assert_eq!(res.outcome, ConflictOutcome::OneMoves);
        assert_eq!(res.movers.len(), 1);
        assert!(g.contenders.contains(&res.movers[0]));
    }

    #[test]
    fn high_draw_overlaps_both() {
        let g = group(vec![1, 2], 2);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng_for(0.95));
        assert_eq!(res.outcome, ConflictOutcome::Overlap);
        assert_eq!(res.movers, vec![1, 2]);
    }

    #[test]
    fn large_group_reduces_to_two_finalists() {
        let g = group(vec![1, 2, 3, 4, 5], 2);
        let mut rng = crate::rng::conflict_stream(0, 1, 9);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng);
        assert_eq!(res.finalists.len(), 2);
        assert!(res.movers.len() <= 2);
        for m in &res.movers {
            assert!(res.finalists.contains(m));
        }
    }

    #[test]
    fn full_cell_blocks_everyone() {
        let g = group(vec![1, 2, 3], 0);
        let mut rng = crate::rng::conflict_stream(0, 1, 9);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng);
        assert_eq!(res.outcome, ConflictOutcome::AllBlocked);
    }

    #[test]
    fn capacity_one_downgrades_overlap() {
        let g = group(vec![1, 2], 1);
        let res = resolve_conflict(&g, 0.4, 0.9, &mut rng_for(0.95));
        assert_eq!(res.outcome, ConflictOutcome::OneMoves);
        assert_eq!(res.movers.len(), 1);
    }
}
