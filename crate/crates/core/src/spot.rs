//! Zero-profit prices in a spot market versus a DD forward market.
//!
//! Consumers buy one-slot service `ℓ(π) = (U')⁻¹(π)` at the posted price.
//! Free supply `p_t` is iid per slot; shortfalls are covered at the backstop
//! price `C` and delivery costs `c` per kW. In the spot market a fraction
//! `n_t` of consumers lands in each slot, so
//!
//! ```text
//! R_s(π) = (π − c)·ℓ(π) − C·E[Σ_t (n_t·ℓ(π) − p_t)_+]
//! R_d(π) = (π − c)·ℓ(π) − C·E[(ℓ(π) − Σ_t p_t)_+]
//! ```
//!
//! and each market settles at the smallest zero of its profit in `[c, C]`.
//! Since `(·)_+` is convex and `Σ n_t = 1`, the spot shortfall dominates the
//! DD shortfall outcome by outcome.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::bisect;
use crate::utility::{ServiceUtility, UtilitySpec};

/// Discrete supply laws with at most this many joint outcomes are enumerated.
pub const MAX_ENUMERATED: usize = 1_000_000;
/// Intervals in the price scan that precedes bisection.
const SCAN_INTERVALS: usize = 256;
const DEMAND_BRACKET: (f64, f64) = (1e-12, 1e12);
const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpotError {
    #[error("invalid spot scenario: {0}")]
    BadScenario(String),
    #[error("at least one Monte Carlo sample is required")]
    NoSamples,
}

/// Per-slot law of the free supply `p_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyDistribution {
    Constant { value: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
}

impl SupplyDistribution {
    fn validate(&self) -> Result<(), SpotError> {
        let bad = |m: &str| Err(SpotError::BadScenario(m.to_string()));
        match self {
            Self::Constant { value } if !(value.is_finite() && *value >= 0.0) => {
                bad("constant supply must be finite and non-negative")
            }
            Self::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("discrete supply needs matching, non-empty values and probs");
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
                    || probs.iter().any(|q| !(q.is_finite() && *q >= 0.0))
                {
                    return bad("discrete supply values and probs must be non-negative");
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
                    return bad("discrete supply probs must sum to 1");
                }
                Ok(())
            }
            Self::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && 0.0 <= *low && low <= high) =>
            {
                bad("uniform supply needs 0 ≤ low ≤ high")
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            Self::Discrete { values, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, q) in values.iter().zip(probs) {
                    acc += q;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotScenario {
    pub horizon: usize,
    pub supply: SupplyDistribution,
    pub distribution_cost: f64,
    pub backstop_price: f64,
    /// Fraction of consumers buying in each slot; uniform when absent.
    #[serde(default)]
    pub arrivals: Option<Vec<f64>>,
    /// One-slot utility; evaluated at `h = 1`.
    pub utility: UtilitySpec,
}

impl SpotScenario {
    pub fn validate(&self) -> Result<(), SpotError> {
        let bad = |m: String| Err(SpotError::BadScenario(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        let (c, cap) = (self.distribution_cost, self.backstop_price);
        if !(c.is_finite() && c >= 0.0) {
            return bad("distribution cost must be finite and non-negative".into());
        }
        if !(cap.is_finite() && cap >= c) {
            return bad("backstop price must be finite and at least the distribution cost".into());
        }
        if let Some(n) = &self.arrivals {
            if n.len() != self.horizon {
                return bad(format!(
                    "{} arrival fractions for {} slots",
                    n.len(),
                    self.horizon
                ));
            }
            if n.iter().any(|x| !(x.is_finite() && *x >= 0.0))
                || (n.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
            {
                return bad("arrival fractions must be non-negative and sum to 1".into());
            }
        }
        self.utility
            .validate(1)
            .map_err(|e| SpotError::BadScenario(e.to_string()))?;
        self.supply.validate()
    }

    pub fn arrivals(&self) -> Vec<f64> {
        self.arrivals
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.horizon as f64; self.horizon])
    }
}

/// Demand at a price, flagged when `U' = π` has no solution in the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandPoint {
    pub power: f64,
    pub clamped: bool,
}

/// Solves `U'(ℓ) = π` for a strictly decreasing marginal utility.
pub fn demand_curve<U: ServiceUtility + ?Sized>(u: &U, price: f64) -> DemandPoint {
    let (lo, hi) = DEMAND_BRACKET;
    let excess = |x: f64| u.marginal(x.exp(), 1) - price;
    if excess(lo.ln()) <= 0.0 {
        warn!("price {price} is above the marginal utility range; demand clamped to {lo}");
        return DemandPoint {
            power: lo,
            clamped: true,
        };
    }
    if excess(hi.ln()) >= 0.0 {
        warn!("price {price} is below the marginal utility range; demand clamped to {hi}");
        return DemandPoint {
            power: hi,
            clamped: true,
        };
    }
    DemandPoint {
        power: bisect(excess, lo.ln(), hi.ln(), 1e-14).exp(),
        clamped: false,
    }
}

/// Joint supply outcomes `(p_1, …, p_T)` with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    horizon: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
    exact: bool,
}

impl Outcomes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when the outcomes enumerate the distribution exactly.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.values
            .chunks(self.horizon)
            .zip(self.weights.iter().copied())
    }

    /// Weighted mean and its standard error (zero when exact).
    pub fn moments<F: Fn(&[f64]) -> f64>(&self, f: F) -> (f64, f64) {
        let mut mean = 0.0;
        for (p, w) in self.iter() {
            mean += w * f(p);
        }
        if self.exact || self.len() < 2 {
            return (mean, 0.0);
        }
        let n = self.len() as f64;
        let ss: f64 = self.iter().map(|(p, _)| (f(p) - mean).powi(2)).sum();
        (mean, (ss / (n - 1.0) / n).sqrt())
    }
}

/// Enumerates small discrete laws; otherwise draws `samples` outcomes, the
/// `i`-th from its own ChaCha stream so results do not depend on order.
pub fn outcomes(scn: &SpotScenario, samples: usize, seed: u64) -> Result<Outcomes, SpotError> {
    scn.validate()?;
    let t = scn.horizon;
    match &scn.supply {
        SupplyDistribution::Constant { value } => {
            return Ok(Outcomes {
                horizon: t,
                values: vec![*value; t],
                weights: vec![1.0],
                exact: true,
            });
        }
        SupplyDistribution::Discrete { values, probs } => {
            let k = values.len();
            let count = (k as f64).powi(t as i32);
            if count <= MAX_ENUMERATED as f64 {
                let count = count as usize;
                let mut vals = Vec::with_capacity(count * t);
                let mut weights = Vec::with_capacity(count);
                let mut digits = vec![0usize; t];
                for _ in 0..count {
                    vals.extend(digits.iter().map(|&d| values[d]));
                    weights.push(digits.iter().map(|&d| probs[d]).product());
                    for d in digits.iter_mut() {
                        *d += 1;
                        if *d < k {
                            break;
                        }
                        *d = 0;
                    }
                }
                return Ok(Outcomes {
                    horizon: t,
                    values: vals,
                    weights,
                    exact: true,
                });
            }
        }
        SupplyDistribution::Uniform { .. } => {}
    }
    if samples == 0 {
        return Err(SpotError::NoSamples);
    }
    let mut vals = Vec::with_capacity(samples * t);
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        vals.extend((0..t).map(|_| scn.supply.sample(&mut rng)));
    }
    Ok(Outcomes {
        horizon: t,
        values: vals,
        weights: vec![1.0 / samples as f64; samples],
        exact: false,
    })
}

/// `Σ_t (n_t·ℓ − p_t)_+`.
pub fn shortfall_spot(power: f64, supply: &[f64], arrivals: &[f64]) -> f64 {
    supply
        .iter()
        .zip(arrivals)
        .map(|(p, n)| (n * power - p).max(0.0))
        .sum()
}

/// `(ℓ − Σ_t p_t)_+`.
pub fn shortfall_dd(power: f64, supply: &[f64]) -> f64 {
    (power - supply.iter().sum::<f64>()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Market {
    Spot,
    Dd,
}

/// Expected profit at `price` with its standard error.
pub fn expected_profit(
    scn: &SpotScenario,
    outs: &Outcomes,
    market: Market,
    price: f64,
) -> (f64, f64) {
    let arrivals = scn.arrivals();
    let power = demand_curve(&scn.utility, price).power;
    let margin = (price - scn.distribution_cost) * power;
    let (short, se) = match market {
        Market::Spot => outs.moments(|p| shortfall_spot(power, p, &arrivals)),
        Market::Dd => outs.moments(|p| shortfall_dd(power, p)),
    };
    (margin - scn.backstop_price * short, scn.backstop_price * se)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceSolution {
    pub price: f64,
    pub demand: f64,
    pub profit_std_error: f64,
    /// Delta-method standard error of the price.
    pub price_std_error: f64,
    /// False when profit stays negative on `[c, C]` and the price is capped at `C`.
    pub root_found: bool,
    /// The price scan saw more than one upward zero crossing.
    pub multiple_roots: bool,
}

/// Smallest zero of the expected profit on `[c, C]`.
pub fn zero_profit_price(scn: &SpotScenario, outs: &Outcomes, market: Market) -> PriceSolution {
    let (c, cap) = (scn.distribution_cost, scn.backstop_price);
    let profit = |pi: f64| expected_profit(scn, outs, market, pi).0;
    let finish = |price: f64, root_found: bool, multiple_roots: bool| {
        let (_, se) = expected_profit(scn, outs, market, price);
        let h = 1e-6 * (cap - c).max(1e-12);
        let slope = (profit((price + h).min(cap)) - profit((price - h).max(c)))
            / ((price + h).min(cap) - (price - h).max(c)).max(f64::MIN_POSITIVE);
        PriceSolution {
            price,
            demand: demand_curve(&scn.utility, price).power,
            profit_std_error: se,
            price_std_error: if se > 0.0 && slope.abs() > 0.0 {
                se / slope.abs()
            } else {
                0.0
            },
            root_found,
            multiple_roots,
        }
    };
    if cap <= c {
        return finish(c, true, false);
    }

    let grid: Vec<f64> = (0..=SCAN_INTERVALS)
        .map(|i| c + (cap - c) * i as f64 / SCAN_INTERVALS as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&pi| profit(pi)).collect();
    let mut crossings = 0;
    let mut first: Option<usize> = None;
    for i in 0..values.len() {
        let up = values[i] >= 0.0 && (i == 0 || values[i - 1] < 0.0);
        if up {
            crossings += 1;
            first.get_or_insert(i);
        }
    }
    match first {
        None => finish(cap, false, false),
        Some(0) => finish(c, true, crossings > 1),
        Some(i) => {
            let root = bisect(profit, grid[i - 1], grid[i], 1e-15 * cap.abs().max(1.0));
            finish(root, true, crossings > 1)
        }
    }
}

pub fn spot_equilibrium_price(
    scn: &SpotScenario,
    samples: usize,
    seed: u64,
) -> Result<PriceSolution, SpotError> {
    Ok(zero_profit_price(
        scn,
        &outcomes(scn, samples, seed)?,
        Market::Spot,
    ))
}

pub fn dd_equilibrium_price(
    scn: &SpotScenario,
    samples: usize,
    seed: u64,
) -> Result<PriceSolution, SpotError> {
    Ok(zero_profit_price(
        scn,
        &outcomes(scn, samples, seed)?,
        Market::Dd,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Spot consumers pay more and buy less.
    SpotHigher,
    Equal,
    DdHigher,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub spot: PriceSolution,
    pub dd: PriceSolution,
    pub price_gap: f64,
    /// `E[Σ_t (n_t ℓ − p_t)_+ − (ℓ − Σ_t p_t)_+]` at the DD demand.
    pub jensen_gap: f64,
    pub jensen_gap_std_error: f64,
    pub outcomes: usize,
    pub exact: bool,
    /// Outcomes where the spot shortfall fell below the DD shortfall at
    /// either equilibrium demand.
    pub pointwise_violations: usize,
    pub verdict: Verdict,
}

/// Gaps at or below this are reported as equal prices.
pub const PRICE_EQ_TOL: f64 = 1e-9;

/// Both prices on common outcomes.
pub fn compare(
    scn: &SpotScenario,
    samples: usize,
    seed: u64,
) -> Result<ComparisonReport, SpotError> {
    let outs = outcomes(scn, samples, seed)?;
    let spot = zero_profit_price(scn, &outs, Market::Spot);
    let dd = zero_profit_price(scn, &outs, Market::Dd);
    let arrivals = scn.arrivals();
    let (jensen_gap, jensen_gap_std_error) =
        outs.moments(|p| shortfall_spot(dd.demand, p, &arrivals) - shortfall_dd(dd.demand, p));
    let pointwise_violations = outs
        .iter()
        .filter(|(p, _)| {
            [spot.demand, dd.demand].iter().any(|&l| {
                let (s, d) = (shortfall_spot(l, p, &arrivals), shortfall_dd(l, p));
                s < d - 1e-12 * (1.0 + d.abs())
            })
        })
        .count();
    let price_gap = spot.price - dd.price;
    let verdict = if price_gap.abs() <= PRICE_EQ_TOL {
        Verdict::Equal
    } else if price_gap > 0.0 {
        Verdict::SpotHigher
    } else {
        Verdict::DdHigher
    };
    Ok(ComparisonReport {
        price_gap,
        jensen_gap,
        jensen_gap_std_error,
        outcomes: outs.len(),
        exact: outs.is_exact(),
        pointwise_violations,
        verdict,
        spot,
        dd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfitRow {
    pub price: f64,
    pub demand: f64,
    pub spot_profit: f64,
    pub dd_profit: f64,
}

/// `R_s` and `R_d` on `points` evenly spaced prices in `[c, C]`.
pub fn profit_table(
    scn: &SpotScenario,
    samples: usize,
    seed: u64,
    points: usize,
) -> Result<Vec<ProfitRow>, SpotError> {
    let outs = outcomes(scn, samples, seed)?;
    let (c, cap) = (scn.distribution_cost, scn.backstop_price);
    let points = points.max(2);
    Ok((0..points)
        .map(|i| {
            let price = c + (cap - c) * i as f64 / (points - 1) as f64;
            ProfitRow {
                price,
                demand: demand_curve(&scn.utility, price).power,
                spot_profit: expected_profit(scn, &outs, Market::Spot, price).0,
                dd_profit: expected_profit(scn, &outs, Market::Dd, price).0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sqrt() -> UtilitySpec {
        UtilitySpec::power_law(2.0, 0.5, 1.0)
    }

    fn scenario(supply: SupplyDistribution, c: f64, cap: f64) -> SpotScenario {
        SpotScenario {
            horizon: 2,
            supply,
            distribution_cost: c,
            backstop_price: cap,
            arrivals: None,
            utility: two_sqrt(),
        }
    }

    fn two_point() -> SupplyDistribution {
        SupplyDistribution::Discrete {
            values: vec![0.0, 2.0],
            probs: vec![0.5, 0.5],
        }
    }

    #[test]
    fn demand_examples() {
        let u = two_sqrt();
        for pi in [0.25, 0.5, 1.0, 3.0] {
            let l = demand_curve(&u, pi).power;
            assert!((l - 1.0 / (pi * pi)).abs() < 1e-9 * (1.0 + l));
        }
        assert!((demand_curve(&u, u.marginal(1.0, 1)).power - 1.0).abs() < 1e-10);
        let huge = demand_curve(&u, 1e9);
        assert!(huge.power < 1e-10);
    }

    #[test]
    fn enumeration_is_exact() {
        let scn = scenario(two_point(), 0.1, 1.0);
        let outs = outcomes(&scn, 10, 0).unwrap();
        assert!(outs.is_exact());
        assert_eq!(outs.len(), 4);
        assert!((outs.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_supply_prices_agree() {
        let scn = scenario(SupplyDistribution::Constant { value: 0.5 }, 0.1, 1.0);
        let r = compare(&scn, 1, 0).unwrap();
        assert!(r.price_gap.abs() <= 1e-12, "{r:?}");
        assert_eq!(r.verdict, Verdict::Equal);
        assert!(r.jensen_gap.abs() < 1e-12);
    }

    #[test]
    fn two_point_spot_is_dearer() {
        let scn = scenario(two_point(), 0.1, 1.0);
        let r = compare(&scn, 1, 0).unwrap();
        assert!(r.spot.root_found && r.dd.root_found);
        assert!(r.price_gap > 0.0);
        assert_eq!(r.verdict, Verdict::SpotHigher);
        assert!(r.spot.demand <= r.dd.demand);
        assert!(r.jensen_gap > 0.0);
        assert_eq!(r.pointwise_violations, 0);
    }

    #[test]
    fn concentrated_arrivals() {
        let mut scn = scenario(SupplyDistribution::Constant { value: 0.3 }, 0.1, 1.0);
        scn.arrivals = Some(vec![1.0, 0.0]);
        let r = compare(&scn, 1, 0).unwrap();
        assert!(r.price_gap >= 0.0);
        assert!(r.jensen_gap >= 0.0);
    }

    #[test]
    fn degenerate_costs() {
        let scn = scenario(two_point(), 0.0, 0.0);
        assert_eq!(spot_equilibrium_price(&scn, 1, 0).unwrap().price, 0.0);
        let bad = scenario(two_point(), 1.0, 0.5);
        assert!(matches!(
            compare(&bad, 1, 0),
            Err(SpotError::BadScenario(_))
        ));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let scn = scenario(
            SupplyDistribution::Uniform {
                low: 0.0,
                high: 1.0,
            },
            0.1,
            1.0,
        );
        let a = compare(&scn, 2000, 7).unwrap();
        let b = compare(&scn, 2000, 7).unwrap();
        assert_eq!(a, b);
        assert!(!a.exact);
        assert!(a.spot.profit_std_error > 0.0);
        assert!(matches!(outcomes(&scn, 0, 7), Err(SpotError::NoSamples)));
    }

    #[test]
    fn profit_table_shape() {
        let scn = scenario(two_point(), 0.1, 1.0);
        let rows = profit_table(&scn, 1, 0, 11).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.iter().all(|r| r.spot_profit <= r.dd_profit + 1e-12));
    }
}
