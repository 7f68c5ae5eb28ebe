//! Equilibria when every consumer has the same utility `U(ℓ, h)`.
//!
//! Case A (`U` strictly concave in `ℓ`, strictly increasing with
//! non-decreasing increments in `h`): all consumers end up with the same
//! surplus `H`. For a trial `H` the willingness to pay is
//! `π(h, H) = max_{ℓ>0} (U(ℓ,h) − H)/ℓ` and the matching demand `ℓ(h, H)` is
//! the argmax. Duration `h` is sold to `n(h) = (p_h − p_{h+1})/ℓ(h,H)`
//! consumers (`p_{T+1} = 0`), and `H` is moved until `N(H) = Σ n(h) = 1`.
//!
//! Case B (`U` strictly convex in `ℓ`, non-increasing increments in `h`):
//! only one-slot contracts are used, and the problem reduces to sharing the
//! total energy `Σp`.

use serde::Serialize;

use crate::lp::{LinearProgram, LpError, Relation};
use crate::market::{ContractGrid, MarketError, MixedAllocation};
use crate::numeric::{bisect, golden_max};
use crate::utility::ServiceUtility;
use crate::MASS_TOL;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdenticalError {
    #[error("supply profile must be finite, non-negative and non-increasing")]
    BadSupply,
    #[error("population cannot absorb supply: N(H) < 1 for every H ≥ 0")]
    CannotAbsorb,
    #[error("could not bracket the equilibrium surplus")]
    NoBracket,
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdenticalConfig {
    /// Smallest power considered in the 1-D maximizations.
    pub min_power: f64,
    /// Largest power considered.
    pub max_power: f64,
}

impl Default for IdenticalConfig {
    fn default() -> Self {
        Self {
            min_power: 1e-8,
            max_power: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Lower,
    Upper,
}

/// Willingness to pay and power demand at one `(h, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Quote {
    Priced {
        price: f64,
        power: f64,
    },
    /// The supremum is approached at the edge of the power bracket.
    Unbounded {
        edge: Edge,
    },
    /// No `ℓ > 0` and `π ≥ 0` give surplus `H`.
    Undefined,
}

impl Quote {
    pub fn price(&self) -> Option<f64> {
        match *self {
            Quote::Priced { price, .. } => Some(price),
            _ => None,
        }
    }

    pub fn power(&self) -> Option<f64> {
        match *self {
            Quote::Priced { power, .. } => Some(power),
            _ => None,
        }
    }
}

/// Solves `max_{ℓ>0} (U(ℓ,h) − H)/ℓ`.
pub fn quote<U: ServiceUtility + ?Sized>(
    u: &U,
    h: usize,
    surplus: f64,
    cfg: &IdenticalConfig,
) -> Quote {
    let g = |l: f64| (u.value(l, h) - surplus) / l;
    let (a, b) = (cfg.min_power.ln(), cfg.max_power.ln());
    let (x, _) = golden_max(|x| g(x.exp()), a, b, 1e-10 * (b - a).abs().max(1.0));
    let mut power = x.exp();

    // Polish with the first-order condition ℓU' − U + H = 0 when it brackets.
    let foc = |l: f64| l * u.marginal(l, h) - u.value(l, h) + surplus;
    let (lo, hi) = (
        (power / 2.0).max(cfg.min_power),
        (power * 2.0).min(cfg.max_power),
    );
    if foc(lo) > 0.0 && foc(hi) < 0.0 {
        let refined = bisect(|x| foc(x.exp()), lo.ln(), hi.ln(), 1e-15).exp();
        if g(refined) >= g(power) - 1e-12 * g(power).abs() {
            power = refined;
        }
    }

    let span = b - a;
    let best = g(power);
    if best < 0.0 {
        return Quote::Undefined;
    }
    if (power.ln() - a) <= 1e-6 * span {
        return Quote::Unbounded { edge: Edge::Lower };
    }
    if (b - power.ln()) <= 1e-6 * span {
        return Quote::Unbounded { edge: Edge::Upper };
    }
    Quote::Priced { price: best, power }
}

/// `π(h, H)`, or `None` when unbounded or undefined.
pub fn willingness_to_pay<U: ServiceUtility + ?Sized>(
    u: &U,
    h: usize,
    surplus: f64,
    cfg: &IdenticalConfig,
) -> Option<f64> {
    quote(u, h, surplus, cfg).price()
}

/// `ℓ(h, H)`, or `None` when unbounded or undefined.
pub fn demand_at<U: ServiceUtility + ?Sized>(
    u: &U,
    h: usize,
    surplus: f64,
    cfg: &IdenticalConfig,
) -> Option<f64> {
    quote(u, h, surplus, cfg).power()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MenuEntry {
    pub duration: usize,
    pub price: f64,
    pub power: f64,
    pub fraction: f64,
}

/// Contracts offered at one trial surplus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MenuAt {
    pub surplus: f64,
    /// Smallest duration with a finite willingness to pay.
    pub min_duration: Option<usize>,
    pub entries: Vec<MenuEntry>,
    /// `N(H)`; infinite when some group needs vanishing power.
    pub served: f64,
}

fn check_supply(p: &[f64]) -> Result<(), IdenticalError> {
    if p.is_empty()
        || p.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        || p.windows(2).any(|w| w[0] < w[1])
    {
        return Err(IdenticalError::BadSupply);
    }
    Ok(())
}

/// Builds the staircase menu for surplus `H` and counts the consumers it serves.
pub fn menu_at<U: ServiceUtility + ?Sized>(
    u: &U,
    p: &[f64],
    surplus: f64,
    cfg: &IdenticalConfig,
) -> MenuAt {
    let horizon = p.len();
    let quotes: Vec<Quote> = (1..=horizon).map(|h| quote(u, h, surplus, cfg)).collect();
    let min_duration = quotes
        .iter()
        .position(|q| !matches!(q, Quote::Undefined))
        .map(|i| i + 1);
    let mut entries = Vec::new();
    let mut served = 0.0;
    if let Some(h_min) = min_duration {
        for h in (h_min..=horizon).rev() {
            let step = p[h - 1] - p.get(h).copied().unwrap_or(0.0);
            if step <= 0.0 {
                continue;
            }
            match quotes[h - 1] {
                Quote::Priced { price, power } => {
                    let fraction = step / power;
                    served += fraction;
                    entries.push(MenuEntry {
                        duration: h,
                        price,
                        power,
                        fraction,
                    });
                }
                Quote::Unbounded { edge: Edge::Lower } => served = f64::INFINITY,
                Quote::Unbounded { edge: Edge::Upper } | Quote::Undefined => {}
            }
        }
    }
    MenuAt {
        surplus,
        min_duration,
        entries,
        served,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdenticalEquilibrium {
    pub surplus: f64,
    pub menu: Vec<MenuEntry>,
    /// `π(h, H*)` for `h = 1..T` where defined.
    pub prices: Vec<Option<f64>>,
    pub served: f64,
    pub welfare: f64,
}

/// Case A equilibrium by bisection on the common surplus.
pub fn concave_equilibrium<U: ServiceUtility + ?Sized>(
    u: &U,
    p: &[f64],
    cfg: &IdenticalConfig,
) -> Result<IdenticalEquilibrium, IdenticalError> {
    check_supply(p)?;
    if p.iter().all(|&v| v <= 0.0) {
        return Err(IdenticalError::CannotAbsorb);
    }
    let n = |h: f64| menu_at(u, p, h, cfg).served;

    // N is strictly decreasing: find N(lo) > 1 > N(hi).
    let (mut lo, mut hi) = (1.0, 1.0);
    if n(1.0) > 1.0 {
        let mut found = false;
        for _ in 0..200 {
            hi *= 2.0;
            if n(hi) < 1.0 {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return Err(IdenticalError::NoBracket);
        }
    } else {
        let mut found = false;
        for _ in 0..200 {
            lo /= 2.0;
            if n(lo) > 1.0 {
                found = true;
                break;
            }
            hi = lo;
        }
        if !found {
            return Err(IdenticalError::CannotAbsorb);
        }
    }
    let surplus = bisect(|h| n(h) - 1.0, lo, hi, 1e-15 * hi);

    let at = menu_at(u, p, surplus, cfg);
    let prices = (1..=p.len())
        .map(|h| willingness_to_pay(u, h, surplus, cfg))
        .collect();
    let welfare = at
        .entries
        .iter()
        .map(|e| e.fraction * u.value(e.power, e.duration))
        .sum();
    Ok(IdenticalEquilibrium {
        surplus,
        menu: at.entries,
        prices,
        served: at.served,
        welfare,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaProperty {
    PriceIncreasingInDuration,
    PriceIncrementsNonDecreasing,
    PriceDecreasingInSurplus,
    PowerIncreasingInSurplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaViolation {
    pub property: LemmaProperty,
    pub duration: usize,
    pub surplus: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub comparisons: usize,
    /// Grid points with no finite quote.
    pub skipped: usize,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural properties of `π(h, H)` and `ℓ(h, H)` on a grid.
pub fn lemma_properties_check<U: ServiceUtility + ?Sized>(
    u: &U,
    durations: &[usize],
    surpluses: &[f64],
    cfg: &IdenticalConfig,
) -> LemmaReport {
    let mut hs = durations.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let mut ss = surpluses.to_vec();
    ss.sort_by(f64::total_cmp);
    ss.dedup();

    let grid: Vec<Vec<Quote>> = ss
        .iter()
        .map(|&s| hs.iter().map(|&h| quote(u, h, s, cfg)).collect())
        .collect();
    let mut report = LemmaReport {
        comparisons: 0,
        skipped: grid
            .iter()
            .flatten()
            .filter(|q| q.price().is_none())
            .count(),
        violations: Vec::new(),
    };
    let strict = |a: f64, b: f64| b - a > 1e-12 * (1.0 + a.abs().max(b.abs()));
    let flag = |report: &mut LemmaReport, property, duration, surplus, lhs, rhs, ok: bool| {
        report.comparisons += 1;
        if !ok {
            report.violations.push(LemmaViolation {
                property,
                duration,
                surplus,
                lhs,
                rhs,
            });
        }
    };

    for (si, &s) in ss.iter().enumerate() {
        let row = &grid[si];
        for k in 1..hs.len() {
            let (Some(a), Some(b)) = (row[k - 1].price(), row[k].price()) else {
                continue;
            };
            flag(
                &mut report,
                LemmaProperty::PriceIncreasingInDuration,
                hs[k],
                s,
                a,
                b,
                strict(a, b),
            );
            if k >= 2 {
                if let Some(z) = row[k - 2].price() {
                    let prev = (a - z) / (hs[k - 1] - hs[k - 2]) as f64;
                    let next = (b - a) / (hs[k] - hs[k - 1]) as f64;
                    let ok = next >= prev - 1e-9 * (1.0 + prev.abs());
                    flag(
                        &mut report,
                        LemmaProperty::PriceIncrementsNonDecreasing,
                        hs[k],
                        s,
                        prev,
                        next,
                        ok,
                    );
                }
            }
        }
    }
    for (hi, &h) in hs.iter().enumerate() {
        for si in 1..ss.len() {
            let (q0, q1) = (grid[si - 1][hi], grid[si][hi]);
            if let (Some(a), Some(b)) = (q0.price(), q1.price()) {
                flag(
                    &mut report,
                    LemmaProperty::PriceDecreasingInSurplus,
                    h,
                    ss[si],
                    a,
                    b,
                    strict(b, a),
                );
            }
            if let (Some(a), Some(b)) = (q0.power(), q1.power()) {
                flag(
                    &mut report,
                    LemmaProperty::PowerIncreasingInSurplus,
                    h,
                    ss[si],
                    a,
                    b,
                    strict(a, b),
                );
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexSolution {
    /// Single-class allocation over the one-slot contracts.
    pub allocation: MixedAllocation,
    pub welfare: f64,
    pub energy: f64,
    /// Multiplier of the energy constraint, the per-kW price of a one-slot
    /// contract.
    pub energy_price: f64,
    /// The allocation also meets every tail constraint of the full problem.
    pub tail_feasible: bool,
}

/// Case B: mixes one-slot contracts so that the total energy stays within `Σp`.
pub fn convex_case_solve<U: ServiceUtility + ?Sized>(
    u: &U,
    p: &[f64],
    powers: &[f64],
) -> Result<ConvexSolution, IdenticalError> {
    check_supply(p)?;
    let grid = ContractGrid::new(powers.to_vec(), p.len())?;
    let levels = grid.powers();
    let mut lp = LinearProgram::new(levels.iter().map(|&l| u.value(l, 1)).collect());
    lp.push(vec![1.0; levels.len()], Relation::Eq, 1.0);
    let total: f64 = p.iter().sum();
    lp.push(levels.to_vec(), Relation::Le, total);
    let sol = lp.solve()?;

    let mut allocation = MixedAllocation::zeros(1, &grid);
    for (i, &mass) in sol.x.iter().enumerate() {
        allocation.masses[0][i][0] = mass;
    }
    let usage = allocation.tail_usage();
    let tails = crate::adequacy::tail_sums(p);
    let tail_feasible = usage.iter().zip(&tails).all(|(z, s)| *z <= s + MASS_TOL);
    Ok(ConvexSolution {
        energy: usage[0],
        energy_price: sol.duals[1].max(0.0),
        welfare: sol.objective,
        allocation,
        tail_feasible,
    })
}

/// A point where `U(ℓh, 1) ≥ h·U(ℓ, 1) ≥ U(ℓ, h)` fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityViolation {
    pub power: f64,
    pub duration: usize,
    pub concentrated: f64,
    pub repeated: f64,
    pub spread: f64,
}

/// Checks the energy-concentration chain on every `(ℓ, h)` pair.
pub fn concentration_check<U: ServiceUtility + ?Sized>(
    u: &U,
    powers: &[f64],
    horizon: usize,
) -> Vec<ConvexityViolation> {
    let mut out = Vec::new();
    for &l in powers {
        for h in 1..=horizon {
            let concentrated = u.value(l * h as f64, 1);
            let repeated = h as f64 * u.value(l, 1);
            let spread = u.value(l, h);
            let tol = 1e-9 * (1.0 + concentrated.abs().max(repeated.abs()));
            if concentrated < repeated - tol || repeated < spread - tol {
                out.push(ConvexityViolation {
                    power: l,
                    duration: h,
                    concentrated,
                    repeated,
                    spread,
                });
            }
        }
    }
    out
}
