//! Urn-based activation: extraction without replacement realising a desired
//! activation probability `rho = speed_desired / speed_m`.
//!
//! The urn holds `alpha` move events out of `beta` total. Each step draws
//! once: the agent attempts to move iff the draw falls within `alpha/beta`.
//! A successful position update consumes a move event; a failed attempt
//! (lost conflict) returns the event to the urn. Every step consumes one
//! event overall, and an empty urn refills from `Frac(rho)` or the pending
//! sub-urn plan.

use crate::rational::Rational;
use num_integer::Integer;
use std::collections::VecDeque;
use thiserror::Error;

/// Excess distance of a diagonal step relative to an orthogonal one:
/// `(0.4 * sqrt(2) - 0.4) / 0.4 = sqrt(2) - 1`.
pub const DIAG_STEP_EXCESS: f64 = std::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UrnError {
    #[error("activation probability {0} exceeds 1 (desired speed above the maximum)")]
    AboveUnity(String),
    #[error("activation probability must be positive")]
    Zero,
}

/// Minimal integer pair `(alpha, beta)` with `alpha / beta = rho`.
pub fn frac(rho: Rational) -> Result<(u32, u32), UrnError> {
    if rho == Rational::from_integer(0) {
        return Err(UrnError::Zero);
    }
    if rho > Rational::from_integer(1) {
        return Err(UrnError::AboveUnity(format!("{rho}")));
    }
    // `Ratio` keeps itself reduced, so numerator/denominator are minimal.
    Ok((*rho.numer() as u32, *rho.denom() as u32))
}

/// Splits an urn with `gcd(alpha, beta) = g > 1` into `g` sequential
/// sub-urns of `(alpha/g, beta/g)`; `None` when already reduced.
pub fn split_urn(alpha: u32, beta: u32) -> Option<Vec<(u32, u32)>> {
    let g = alpha.gcd(&beta);
    if g <= 1 {
        return None;
    }
    Some(vec![(alpha / g, beta / g); g as usize])
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UrnState {
    alpha: u32,
    beta: u32,
    rho: Rational,
    /// Sub-urns consumed in order before refilling from `frac(rho)`.
    plan: VecDeque<(u32, u32)>,
}

impl UrnState {
    pub fn new(rho: Rational) -> Result<Self, UrnError> {
        let (alpha, beta) = frac(rho)?;
        Ok(UrnState { alpha, beta, rho, plan: VecDeque::new() })
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn rho(&self) -> Rational {
        self.rho
    }

    pub fn pending_sub_urns(&self) -> &VecDeque<(u32, u32)> {
        &self.plan
    }

    /// Updates the activation probability. The current urn drains first; the
    /// new value takes effect at the next refill.
    pub fn set_rho(&mut self, rho: Rational) -> Result<(), UrnError> {
        frac(rho)?;
        self.rho = rho;
        Ok(())
    }

    pub fn move_probability(&self) -> f64 {
        self.alpha as f64 / self.beta as f64
    }

    /// Activation decision for a uniform draw `u` in `[0, 1)`. The
    /// comparison is inclusive as in the update rule `Random() <= alpha/beta`.
    pub fn decide(&self, u: f64) -> bool {
        debug_assert!(self.beta >= 1);
        u <= self.move_probability()
    }

    /// Post-step bookkeeping. `attempted`/`moved` describe the outcome of
    /// the position update; `extra_do_not_move` injects diagonal penalty
    /// events. Order: movement bookkeeping, penalty events, unconditional
    /// consumption, refill, sub-urn split.
    pub fn settle(&mut self, attempted: bool, moved: bool, extra_do_not_move: u32) {
        if attempted {
            if moved {
                debug_assert!(self.alpha > 0, "a move was drawn, so a move event exists");
                self.alpha -= 1;
            } else {
                self.beta += 1;
            }
        }
        self.beta += extra_do_not_move;
        self.beta -= 1;
        if self.beta == 0 {
            let (alpha, beta) = match self.plan.pop_front() {
                Some(sub) => sub,
                None => frac(self.rho).expect("rho validated on construction"),
            };
            self.alpha = alpha;
            self.beta = beta;
        } else if let Some(subs) = split_urn(self.alpha, self.beta) {
            let (first, rest) = subs.split_first().expect("split yields at least two urns");
            self.alpha = first.0;
            self.beta = first.1;
            for &sub in rest.iter().rev() {
                self.plan.push_front(sub);
            }
        }
        debug_assert!(self.alpha <= self.beta);
    }
}

/// Accrues the diagonal excess onto the penalty accumulator and converts
/// whole units into extra do-not-move events for [`UrnState::settle`].
/// Call only after a completed diagonal move.
pub fn apply_diag_penalty(diag_penalty: &mut f64) -> u32 {
    *diag_penalty += DIAG_STEP_EXCESS;
    debug_assert!(*diag_penalty < 1.0 + DIAG_STEP_EXCESS);
    if *diag_penalty >= 1.0 {
        *diag_penalty -= 1.0;
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_minimal_pairs() {
        // 1.0 / 1.6 -> 5 move events out of 8 (3 do-not-move).
        assert_eq!(frac(Rational::new(10, 16)).unwrap(), (5, 8));
        // 1.3 / 2.0 -> 13/20.
        assert_eq!(frac(Rational::new(13, 20)).unwrap(), (13, 20));
        assert_eq!(frac(Rational::from_integer(1)).unwrap(), (1, 1));
        assert_eq!(frac(Rational::new(4, 8)).unwrap(), (1, 2));
    }

    #[test]
    fn frac_rejects_out_of_range() {
        assert_eq!(frac(Rational::new(3, 2)), Err(UrnError::AboveUnity("3/2".into())));
        assert_eq!(frac(Rational::from_integer(0)), Err(UrnError::Zero));
    }

    #[test]
    fn activation_bookkeeping() {
        let mut urn = UrnState::new(Rational::new(5, 8)).unwrap();
        assert!(urn.decide(0.5)); // 0.5 <= 5/8
        urn.settle(true, true, 0);
        assert_eq!((urn.alpha(), urn.beta()), (4, 7));

        // Failed attempt leaves the urn unchanged: +1 then -1.
        let mut urn = UrnState::new(Rational::new(5, 8)).unwrap();
        urn.settle(true, false, 0);
        assert_eq!((urn.alpha(), urn.beta()), (5, 8));

        // Skip consumes one do-not-move event.
        let mut urn = UrnState::new(Rational::new(5, 8)).unwrap();
        assert!(!urn.decide(0.9));
        urn.settle(false, false, 0);
        assert_eq!((urn.alpha(), urn.beta()), (5, 7));
    }

    #[test]
    fn decide_is_inclusive() {
        let urn = UrnState::new(Rational::new(1, 2)).unwrap();
        assert!(urn.decide(0.5));
        assert!(!urn.decide(0.5000001));
    }

    #[test]
    fn refill_after_exhaustion() {
        let mut urn = UrnState::new(Rational::new(1, 2)).unwrap();
        urn.settle(true, true, 0); // (0, 1)
        assert_eq!((urn.alpha(), urn.beta()), (0, 1));
        urn.settle(false, false, 0); // beta hits 0, refill
        assert_eq!((urn.alpha(), urn.beta()), (1, 2));
    }

    #[test]
    fn sub_urn_worked_example() {
        // Frac(rho) = 5/11; one move leaves 4/10, gcd 2, so two sub-urns of
        // (2, 5): 2 move and 3 do-not-move events each.
        let mut urn = UrnState::new(Rational::new(5, 11)).unwrap();
        urn.settle(true, true, 0);
        assert_eq!((urn.alpha(), urn.beta()), (2, 5));
        assert_eq!(urn.pending_sub_urns().len(), 1);
        assert_eq!(urn.pending_sub_urns()[0], (2, 5));
    }

    #[test]
    fn split_urn_arithmetic() {
        assert_eq!(split_urn(4, 10), Some(vec![(2, 5), (2, 5)]));
        assert_eq!(split_urn(3, 7), None);
        assert_eq!(split_urn(4, 8), Some(vec![(1, 2); 4]));
        assert_eq!(split_urn(0, 4), Some(vec![(0, 1); 4]));
    }

    #[test]
    fn sub_urns_consumed_before_initial_refill() {
        let mut urn = UrnState::new(Rational::new(5, 11)).unwrap();
        urn.settle(true, true, 0); // (2,5) + plan [(2,5)]
        // Drain the current sub-urn with skips and moves.
        urn.settle(true, true, 0); // (1,4)
        urn.settle(false, false, 0); // (1,3)
        urn.settle(false, false, 0); // (1,2)
        urn.settle(true, true, 0); // (0,1)
        urn.settle(false, false, 0); // exhausted -> next sub-urn
        assert_eq!((urn.alpha(), urn.beta()), (2, 5));
        assert!(urn.pending_sub_urns().is_empty());
    }

    #[test]
    fn rho_change_takes_effect_at_refill() {
        let mut urn = UrnState::new(Rational::new(1, 2)).unwrap();
        urn.set_rho(Rational::new(1, 4)).unwrap();
        assert_eq!((urn.alpha(), urn.beta()), (1, 2));
        urn.settle(true, true, 0); // (0,1)
        urn.settle(false, false, 0); // refill from the new rho
        assert_eq!((urn.alpha(), urn.beta()), (1, 4));
    }

    #[test]
    fn diag_penalty_threshold() {
        let mut penalty = 0.0;
        assert_eq!(apply_diag_penalty(&mut penalty), 0);
        assert_eq!(apply_diag_penalty(&mut penalty), 0);
        // Third diagonal move crosses 1.0: 3 * 0.41421 = 1.2426.
        assert_eq!(apply_diag_penalty(&mut penalty), 1);
        assert!((penalty - (3.0 * DIAG_STEP_EXCESS - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn penalty_event_delays_refill() {
        // Full-speed agent: urn (1,1); the penalty event must be consumed
        // before the refill.
        let mut urn = UrnState::new(Rational::from_integer(1)).unwrap();
        let mut penalty = 0.7; // next diagonal crosses 1
        let extra = apply_diag_penalty(&mut penalty);
        assert_eq!(extra, 1);
        assert!((penalty - (0.7 + DIAG_STEP_EXCESS - 1.0)).abs() < 1e-12);
        urn.settle(true, true, extra);
        assert_eq!((urn.alpha(), urn.beta()), (0, 1));
        urn.settle(false, false, 0);
        assert_eq!((urn.alpha(), urn.beta()), (1, 1));
    }

    #[test]
    fn long_run_move_fraction_matches_rho() {
        // Exactness on aligned windows: with rho = 13/20 and every attempt
        // succeeding, each 20-step window holds exactly 13 moves.
        use rand::Rng as _;
        let mut rng = crate::rng::ped_stream(9, 0);
        let mut urn = UrnState::new(Rational::new(13, 20)).unwrap();
        for _window in 0..50 {
            let mut moves = 0;
            for _ in 0..20 {
                let attempt = urn.decide(rng.gen());
                if attempt {
                    moves += 1;
                }
                urn.settle(attempt, attempt, 0);
            }
            assert_eq!(moves, 13);
        }
    }

    #[test]
    fn rho_to_f64_sanity() {
        use crate::rational::rational_to_f64;
        assert!((rational_to_f64(Rational::new(13, 20)) - 0.65).abs() < 1e-15);
    }
}
