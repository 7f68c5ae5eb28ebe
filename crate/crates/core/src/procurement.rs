//! Minimum-cost supplemental power.
//!
//! When `p` is not adequate for `d`, the supplier buys `a ≥ 0` at unit price
//! `c`. Adequacy only depends on the multiset of supply values, so the
//! supplement is computed in sorted coordinates and mapped back to time order
//! through the profile's permutation.
//!
//! For simple adequacy the least total purchase is the largest tail deficit
//! `M = max_s (Σ_{t≥s} d_t − Σ_{t≥s} p_t)_+`: the sum of the `k` smallest entries
//! of `p + a` can never exceed the sum of the `k` smallest entries of `p` plus
//! `Σa`. Water-filling the smallest entries up to a common level with exactly
//! `M` reaches it. Every tail made entirely of raised entries sits at the
//! level, which is at least the average of the matching demand tail because
//! `d` is non-increasing; longer tails gain the full `M`.

use serde::{Deserialize, Serialize};

use crate::adequacy::{self, AdequacyError};
use crate::model::{DemandProfile, SupplyProfile};
use crate::MASS_TOL;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProcurementError {
    #[error(transparent)]
    Adequacy(#[from] AdequacyError),
    #[error("unit cost must be finite and non-negative, got {0}")]
    BadCost(f64),
    #[error("exact adequacy is unreachable: supply exceeds demand or a tail deficit exceeds the total shortfall")]
    ExactInfeasible,
    #[error("instance too large for brute force: {0}")]
    TooLarge(String),
    #[error("grid step must be positive")]
    BadStep,
}

/// Which adequacy notion the augmented supply must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Simple,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supplement {
    /// Purchase indexed like the sorted profile.
    pub sorted: Vec<f64>,
    /// Purchase in real time order.
    pub time: Vec<f64>,
    pub total: f64,
    pub cost: f64,
}

fn check_cost(c: f64) -> Result<(), ProcurementError> {
    if c.is_finite() && c >= 0.0 {
        Ok(())
    } else {
        Err(ProcurementError::BadCost(c))
    }
}

/// Raises the smallest entries of `values` (sorted non-increasing) to a common
/// level using exactly `amount`. Returns the per-entry increments.
fn water_fill(values: &[f64], amount: f64) -> Vec<f64> {
    let n = values.len();
    let mut add = vec![0.0; n];
    if amount <= 0.0 || n == 0 {
        return add;
    }
    // Grow the raised block from the smallest entry upwards.
    let mut block_sum = 0.0;
    let mut level = 0.0;
    let mut first = n;
    for (count, i) in (0..n).rev().enumerate() {
        block_sum += values[i];
        let candidate = (block_sum + amount) / (count + 1) as f64;
        level = candidate;
        first = i;
        if i == 0 || values[i - 1] >= candidate {
            break;
        }
    }
    for i in first..n {
        add[i] = (level - values[i]).max(0.0);
    }
    add
}

/// Least supplemental purchase making `sorted(p + a)` adequate for `d`.
pub fn min_supplement(
    p: &SupplyProfile,
    d: &DemandProfile,
    c: f64,
    target: Target,
) -> Result<Supplement, ProcurementError> {
    check_cost(c)?;
    let (pv, dv) = (p.values(), d.values());
    // Validates lengths and ordering.
    adequacy::is_simply_adequate(pv, dv)?;
    let deficit = adequacy::tail_deficit(pv, dv);
    if target == Target::Exact {
        let shortfall = d.total() - pv.iter().sum::<f64>();
        if shortfall < -MASS_TOL || deficit > shortfall + MASS_TOL {
            return Err(ProcurementError::ExactInfeasible);
        }
    }
    let sorted = water_fill(pv, deficit);
    let total: f64 = sorted.iter().sum();
    Ok(Supplement {
        time: p.to_time_order(&sorted),
        sorted,
        total,
        cost: c * total,
    })
}

/// Largest supported brute-force lattice.
const MAX_LATTICE_POINTS: f64 = 5e6;

/// Exhaustive lattice search for the cheapest simple-adequacy supplement.
///
/// Each entry ranges over multiples of `step` up to `Σd` (no entry ever needs
/// more). Intended as an oracle for `T ≤ 4`.
pub fn brute_force_supplement(
    p: &[f64],
    d: &[f64],
    c: f64,
    step: f64,
) -> Result<(Vec<f64>, f64), ProcurementError> {
    check_cost(c)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(ProcurementError::BadStep);
    }
    adequacy::is_simply_adequate(p, d)?;
    let n = p.len();
    let levels = (d.iter().sum::<f64>() / step).ceil() as usize + 1;
    if n > 4 || (levels as f64).powi(n as i32) > MAX_LATTICE_POINTS {
        return Err(ProcurementError::TooLarge(format!(
            "{n} slots with {levels} levels each"
        )));
    }

    let feasible = |a: &[usize]| {
        let mut augmented: Vec<f64> = p.iter().zip(a).map(|(x, &k)| x + k as f64 * step).collect();
        augmented.sort_by(|x, y| y.total_cmp(x));
        adequacy::is_simply_adequate(&augmented, d).unwrap_or(false)
    };

    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut current = vec![0usize; n];
    loop {
        let units: usize = current.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| units < *b) && feasible(&current) {
            best = Some((units, current.clone()));
        }
        // Odometer increment.
        let mut i = 0;
        while i < n {
            current[i] += 1;
            if current[i] < levels {
                break;
            }
            current[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    let (_, units) = best.expect("the all-max lattice point is always adequate");
    let a: Vec<f64> = units.iter().map(|&k| k as f64 * step).collect();
    let cost = c * a.iter().sum::<f64>();
    Ok((a, cost))
}
