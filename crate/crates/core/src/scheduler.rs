//! Longest Leftover Duration First (LLDF) scheduling.
//!
//! At each slot `t` every consumer `x` has a leftover duration `y_t(x)`. LLDF
//! picks the smallest `k ≥ 1` such that the power of everyone with `y_t ≥ k`
//! fits in `q_t`, serves that whole group, then fills the remaining power with
//! the `y_t = k − 1` group in ascending position order, cutting the last piece
//! exactly. The rule only looks at `q_t`, so it runs on-line.
//!
//! Consumers with leftover zero are never served; any power they would have
//! absorbed is spilled.

use serde::Serialize;

use crate::model::{Allocation, Interval, Population, Segment, SupplyTimeProfile};
use crate::{MASS_TOL, POSITION_TOL};

/// Slack when testing whether a leftover group fits in the slot's supply.
const FIT_TOL: f64 = 1e-12;

/// A piece of a class with a common leftover duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentState {
    pub class: usize,
    pub interval: Interval,
    pub leftover: usize,
}

/// Consumers still owed service after the last slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmetDemand {
    pub class: usize,
    pub interval: Interval,
    pub leftover: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotSummary {
    pub slot: usize,
    pub supply: f64,
    pub served: f64,
    /// Threshold `k`; one past the longest leftover means no full group fit.
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub allocation: Allocation,
    pub slots: Vec<SlotSummary>,
    pub unmet: Vec<UnmetDemand>,
    /// Consumer mass with leftover service.
    pub unmet_mass: f64,
    /// Energy still owed, `Σ power · mass · leftover`.
    pub unmet_energy: f64,
    /// Supply left unused, `Σ_t (q_t − served_t)`.
    pub spilled_energy: f64,
}

impl Schedule {
    pub fn is_complete(&self) -> bool {
        self.unmet.is_empty()
    }
}

/// Runs LLDF over the supply time profile `q`.
///
/// Adequacy is not required: on inadequate input the partial allocation is
/// returned together with the unmet consumers.
pub fn lldf_schedule(pop: &Population, q: &SupplyTimeProfile) -> Schedule {
    let horizon = q.horizon();
    let mut states: Vec<SegmentState> = pop
        .classes()
        .iter()
        .map(|c| SegmentState {
            class: c.id,
            interval: c.position,
            leftover: c.duration,
        })
        .collect();
    let power = |s: &SegmentState| pop.classes()[s.class].power;
    let load = |s: &SegmentState| power(s) * s.interval.len();

    let mut allocation = Allocation::empty(horizon);
    let mut slots = Vec::with_capacity(horizon);
    let mut spilled = 0.0;

    for (t, &supply) in q.values().iter().enumerate() {
        let max_left = states.iter().map(|s| s.leftover).max().unwrap_or(0);
        let group_load =
            |k: usize| -> f64 { states.iter().filter(|s| s.leftover >= k).map(load).sum() };
        let threshold = (1..=max_left + 1)
            .find(|&k| group_load(k) <= supply + FIT_TOL)
            .unwrap_or(max_left + 1);

        let mut served_flags = vec![false; states.len()];
        let mut served = 0.0;
        for (i, s) in states.iter().enumerate() {
            if s.leftover >= threshold {
                served_flags[i] = true;
                served += load(s);
            }
        }

        // Partial group: leftover k − 1, filled from the left.
        let mut split: Option<(usize, f64)> = None;
        if threshold >= 2 {
            let mut budget = supply - served;
            for (i, s) in states.iter().enumerate() {
                if s.leftover != threshold - 1 {
                    continue;
                }
                let need = load(s);
                if need <= budget + FIT_TOL {
                    served_flags[i] = true;
                    served += need;
                    budget -= need;
                    continue;
                }
                let cut = s.interval.start + budget.max(0.0) / power(s);
                if cut - s.interval.start > POSITION_TOL {
                    split = Some((i, cut));
                    served += power(s) * (cut - s.interval.start);
                }
                break;
            }
        }

        if let Some((i, cut)) = split {
            let tail = SegmentState {
                interval: Interval::new(cut, states[i].interval.end),
                ..states[i]
            };
            states[i].interval.end = cut;
            served_flags[i] = true;
            states.insert(i + 1, tail);
            served_flags.insert(i + 1, false);
        }

        for (s, _) in states.iter_mut().zip(&served_flags).filter(|(_, &on)| on) {
            allocation.slots[t].push(Segment {
                class: s.class,
                interval: s.interval,
            });
            s.leftover -= 1;
        }

        spilled += (supply - served).max(0.0);
        slots.push(SlotSummary {
            slot: t,
            supply,
            served,
            threshold,
        });
    }

    let unmet: Vec<UnmetDemand> = states
        .iter()
        .filter(|s| s.leftover > 0 && power(s) > 0.0 && !s.interval.is_empty())
        .map(|s| UnmetDemand {
            class: s.class,
            interval: s.interval,
            leftover: s.leftover,
        })
        .collect();
    let unmet_mass = unmet.iter().map(|u| u.interval.len()).sum::<f64>();
    let unmet_energy = unmet
        .iter()
        .map(|u| pop.classes()[u.class].power * u.interval.len() * u.leftover as f64)
        .sum::<f64>();

    Schedule {
        allocation,
        slots,
        unmet,
        unmet_mass: if unmet_mass <= MASS_TOL {
            0.0
        } else {
            unmet_mass
        },
        unmet_energy,
        spilled_energy: spilled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_allocation, ClassSpec, ValidationMode};

    fn pop(horizon: usize, classes: &[(f64, f64, usize)]) -> Population {
        Population::new(
            horizon,
            classes
                .iter()
                .map(|&(m, p, h)| ClassSpec::new(m, p, h))
                .collect(),
        )
        .unwrap()
    }

    fn supply(v: &[f64]) -> SupplyTimeProfile {
        SupplyTimeProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_class_example() {
        // A: mass .5, ℓ=2, h=2; B: mass .5, ℓ=2, h=1; q=(2,4).
        let p = pop(2, &[(0.5, 2.0, 2), (0.5, 2.0, 1)]);
        let q = supply(&[2.0, 4.0]);
        let s = lldf_schedule(&p, &q);
        assert!(s.is_complete());
        assert_eq!(s.slots[0].threshold, 1);
        assert_eq!(s.allocation.slots[0].len(), 2);
        assert_eq!(s.allocation.slots[1].len(), 1);
        assert_eq!(s.allocation.slots[1][0].class, 0);
        assert!((s.spilled_energy - 3.0).abs() < 1e-12);
        assert!(
            validate_allocation(&p, &s.allocation, &q, ValidationMode::Simple)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn single_class_every_slot() {
        let p = pop(4, &[(1.0, 1.0, 4)]);
        let q = supply(&[1.0; 4]);
        let s = lldf_schedule(&p, &q);
        assert!(s.is_complete());
        assert!(s.allocation.slots.iter().all(|segs| segs.len() == 1));
        assert!(
            validate_allocation(&p, &s.allocation, &q, ValidationMode::Exact)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn empty_first_slot() {
        // p = (1,1,0) arriving as q = (0,1,1); d = (1,1,0).
        let p = pop(3, &[(1.0, 1.0, 2)]);
        let q = supply(&[0.0, 1.0, 1.0]);
        let s = lldf_schedule(&p, &q);
        // Every leftover group overflows an empty slot.
        assert_eq!(s.slots[0].threshold, 3);
        assert!(s.allocation.slots[0].is_empty());
        assert!(s.is_complete());
    }

    #[test]
    fn longest_leftover_goes_first() {
        // A greedy rule serving B (h=1) first in slot 1 would strand A.
        let p = pop(2, &[(0.5, 1.0, 1), (0.5, 1.0, 2)]);
        let q = supply(&[0.5, 1.0]);
        let s = lldf_schedule(&p, &q);
        assert_eq!(s.slots[0].threshold, 2);
        assert_eq!(s.allocation.slots[0][0].class, 1);
        assert!(s.is_complete());
    }

    #[test]
    fn boundary_cut_is_exact() {
        let p = pop(2, &[(1.0, 2.0, 1)]);
        let q = supply(&[0.5, 1.5]);
        let s = lldf_schedule(&p, &q);
        assert!(s.is_complete());
        let first = s.allocation.slots[0][0].interval;
        assert!((first.end - 0.25).abs() < 1e-15);
        assert!(
            validate_allocation(&p, &s.allocation, &q, ValidationMode::Exact)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn inadequate_supply_reports_unmet() {
        let p = pop(2, &[(1.0, 1.0, 2)]);
        let q = supply(&[1.0, 0.25]);
        let s = lldf_schedule(&p, &q);
        assert!(!s.is_complete());
        assert!((s.unmet_mass - 0.75).abs() < 1e-12);
        assert!((s.unmet_energy - 0.75).abs() < 1e-12);
        assert!(
            validate_allocation(&p, &s.allocation, &q, ValidationMode::Simple)
                .unwrap()
                .violation
                .is_some()
        );
    }
}
