//! Majorization tests for supply adequacy and Robin Hood transfers.
//!
//! Majorization uses the reversed convention: `p ⪰ d` when every prefix sum of
//! `p` is at most the matching prefix sum of `d` and the totals agree, so the
//! flatter vector is the "larger" one. Partial sums are compared with
//! [`MAJORIZATION_TOL`].

use serde::Serialize;

/// Slack allowed on partial and total sums.
pub const MAJORIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdequacyError {
    #[error("length mismatch: supply has {supply} entries, demand has {demand}")]
    LengthMismatch { supply: usize, demand: usize },
    #[error("{which} is not sorted non-increasing at index {index}")]
    NotSorted { which: &'static str, index: usize },
    #[error("invalid transfer amount")]
    InvalidTransfer,
    #[error("not majorized")]
    NotMajorized,
}

fn check_pair(p: &[f64], d: &[f64]) -> Result<(), AdequacyError> {
    if p.len() != d.len() {
        return Err(AdequacyError::LengthMismatch {
            supply: p.len(),
            demand: d.len(),
        });
    }
    check_sorted("supply", p)?;
    check_sorted("demand", d)
}

fn check_sorted(which: &'static str, v: &[f64]) -> Result<(), AdequacyError> {
    match v.windows(2).position(|w| w[1] > w[0] + MAJORIZATION_TOL) {
        Some(i) => Err(AdequacyError::NotSorted {
            which,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

fn prefix_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `tails[s] = Σ_{t ≥ s} v_t`, accumulated from the back.
pub fn tail_sums(v: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; v.len()];
    let mut acc = 0.0;
    for (t, &x) in v.iter().enumerate().rev() {
        acc += x;
        tails[t] = acc;
    }
    tails
}

/// First prefix index (zero-based `s` meaning entries `0..=s`) at which `p`'s
/// partial sum exceeds `d`'s, or `len − 1` when only the totals differ.
fn first_prefix_violation(p: &[f64], d: &[f64]) -> Option<usize> {
    let n = p.len();
    let (pp, dp) = (prefix_sums(p), prefix_sums(d));
    (0..n.saturating_sub(1))
        .find(|&s| pp[s] > dp[s] + MAJORIZATION_TOL)
        .or_else(|| (n > 0 && (pp[n - 1] - dp[n - 1]).abs() > MAJORIZATION_TOL).then(|| n - 1))
}

/// Exact adequacy: `p` is majorized by `d` (prefix sums of `p` never exceed
/// those of `d`, totals equal).
pub fn is_exactly_adequate(p: &[f64], d: &[f64]) -> Result<bool, AdequacyError> {
    check_pair(p, d)?;
    Ok(first_prefix_violation(p, d).is_none())
}

/// Exact adequacy through tail sums: `Σ_{t≥s} d ≤ Σ_{t≥s} p` for `s ≥ 2`
/// plus equal totals.
pub fn tail_exact_check(p: &[f64], d: &[f64]) -> Result<bool, AdequacyError> {
    check_pair(p, d)?;
    let (pt, dt) = (tail_sums(p), tail_sums(d));
    if p.is_empty() {
        return Ok(true);
    }
    let totals_match = (pt[0] - dt[0]).abs() <= MAJORIZATION_TOL;
    Ok(totals_match && (1..p.len()).all(|s| dt[s] <= pt[s] + MAJORIZATION_TOL))
}

fn first_tail_violation(p: &[f64], d: &[f64]) -> Option<usize> {
    let (pt, dt) = (tail_sums(p), tail_sums(d));
    (0..p.len())
        .rev()
        .find(|&s| dt[s] > pt[s] + MAJORIZATION_TOL)
}

/// Simple adequacy: every tail of `d` fits under the matching tail of `p`.
pub fn is_simply_adequate(p: &[f64], d: &[f64]) -> Result<bool, AdequacyError> {
    check_pair(p, d)?;
    Ok(first_tail_violation(p, d).is_none())
}

/// Both verdicts plus the first violated index (zero-based) for each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdequacyReport {
    pub exact: bool,
    pub simple: bool,
    pub first_exact_violation: Option<usize>,
    pub first_simple_violation: Option<usize>,
    /// `max_s (Σ_{t≥s} d − Σ_{t≥s} p)_+`, the energy short of simple adequacy.
    pub tail_deficit: f64,
}

pub fn assess(p: &[f64], d: &[f64]) -> Result<AdequacyReport, AdequacyError> {
    check_pair(p, d)?;
    let first_exact_violation = first_prefix_violation(p, d);
    // The simple test scans from the shortest tail, so report the largest
    // violated `s` as the first one met.
    let first_simple_violation = first_tail_violation(p, d);
    Ok(AdequacyReport {
        exact: first_exact_violation.is_none(),
        simple: first_simple_violation.is_none(),
        first_exact_violation,
        first_simple_violation,
        tail_deficit: tail_deficit(p, d),
    })
}

pub(crate) fn tail_deficit(p: &[f64], d: &[f64]) -> f64 {
    tail_sums(d)
        .iter()
        .zip(tail_sums(p))
        .map(|(dt, pt)| dt - pt)
        .fold(0.0, f64::max)
}

/// A single Robin Hood transfer: `amount` moves from index `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    pub amount: f64,
}

/// Moves `eps` from the richer entry `a[t]` to the poorer `a[s]` and re-sorts
/// non-increasing. Requires `a[t] > a[s]` and `0 < eps < a[t] − a[s]`.
pub fn robin_hood_transfer(
    a: &[f64],
    t: usize,
    s: usize,
    eps: f64,
) -> Result<Vec<f64>, AdequacyError> {
    if t >= a.len() || s >= a.len() {
        return Err(AdequacyError::InvalidTransfer);
    }
    let gap = a[t] - a[s];
    if !(gap > 0.0 && eps > 0.0 && eps < gap) {
        return Err(AdequacyError::InvalidTransfer);
    }
    let mut out = a.to_vec();
    out[t] -= eps;
    out[s] += eps;
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// Replays a transfer sequence on `a`.
pub fn apply_transfers(a: &[f64], transfers: &[Transfer]) -> Result<Vec<f64>, AdequacyError> {
    transfers.iter().try_fold(a.to_vec(), |v, tr| {
        robin_hood_transfer(&v, tr.from, tr.to, tr.amount)
    })
}

/// Finds Robin Hood transfers turning `a` into `b`, where `b ⪰ a`.
///
/// Each step takes the first index `k` where `a` falls short of `b` and the
/// last index `j < k` where `a` exceeds `b`, and moves the smaller of the two
/// discrepancies from `j` to `k`. Entries strictly between them already agree,
/// so order is preserved and every step settles at least one coordinate; at
/// most `T − 1` steps are needed.
pub fn rh_decompose(a: &[f64], b: &[f64]) -> Result<Vec<Transfer>, AdequacyError> {
    if a.len() != b.len() {
        return Err(AdequacyError::LengthMismatch {
            supply: b.len(),
            demand: a.len(),
        });
    }
    check_sorted("source", a)?;
    check_sorted("target", b)?;
    if first_prefix_violation(b, a).is_some() {
        return Err(AdequacyError::NotMajorized);
    }

    // Discrepancies at or below this level count as settled.
    let scale = a.iter().chain(b).fold(1.0_f64, |m, x| m.max(x.abs()));
    let settle = 1e-12 * scale;

    let mut cur = a.to_vec();
    let mut transfers = Vec::new();
    for _ in 0..a.len() {
        let Some(k) = (0..cur.len()).find(|&i| cur[i] < b[i] - settle) else {
            break;
        };
        let Some(j) = (0..k).rev().find(|&i| cur[i] > b[i] + settle) else {
            break;
        };
        let amount = (cur[j] - b[j]).min(b[k] - cur[k]);
        cur = robin_hood_transfer(&cur, j, k, amount)?;
        transfers.push(Transfer {
            from: j,
            to: k,
            amount,
        });
    }
    Ok(transfers)
}
