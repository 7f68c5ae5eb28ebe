//! Welfare maximization and competitive-equilibrium prices for DD contracts.
//!
//! Consumers choose a contract `(ℓ, h)` from a finite grid. A class may split
//! its mass across several contracts, which is what makes the welfare problem
//! a linear program over contract masses `μ(c, ℓ, h)`:
//!
//! ```text
//! max  Σ μ(c,ℓ,h)·U_c(ℓ,h)
//! s.t. Σ_{ℓ,h} μ(c,ℓ,h) = mass_c                          for every class
//!      z_t = Σ μ(c,ℓ,h)·ℓ·[h + 1 − t]_+ ≤ Σ_{i≥t} p_i      for t = 1..T
//! ```
//!
//! The multipliers `λ_t ≥ 0` of the tail rows price an `h`-slot kW at
//! `π_h = Σ_t λ_t·[h + 1 − t]_+`, and the slot prices are `μ_t = Σ_{i≤t} λ_i`.

use serde::Serialize;

use crate::adequacy::tail_sums;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::model::{Population, SupplyProfile};
use crate::utility::{ServiceUtility, UtilityError, UtilitySpec};

/// Tolerance for the equilibrium checks.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;
/// Masses below this are treated as unused contracts.
const ACTIVE_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarketError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("contract grid powers must be finite, non-negative and strictly ascending")]
    BadGrid,
    #[error("negative multiplier {value} at index {index}")]
    NegativeMultiplier { index: usize, value: f64 },
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Finite menu of power levels; durations run over `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractGrid {
    powers: Vec<f64>,
    horizon: usize,
}

impl ContractGrid {
    /// The null contract `ℓ = 0` is added when missing.
    pub fn new(mut powers: Vec<f64>, horizon: usize) -> Result<Self, MarketError> {
        if horizon == 0 {
            return Err(MarketError::DimensionMismatch("empty horizon".into()));
        }
        if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || powers.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MarketError::BadGrid);
        }
        if powers.first() != Some(&0.0) {
            powers.insert(0, 0.0);
        }
        Ok(Self { powers, horizon })
    }

    /// `0, step, 2·step, …, max`.
    pub fn uniform(max: f64, step: f64, horizon: usize) -> Result<Self, MarketError> {
        if !(step > 0.0 && max.is_finite() && max >= 0.0) {
            return Err(MarketError::BadGrid);
        }
        let n = (max / step).round() as usize;
        Self::new((0..=n).map(|i| i as f64 * step).collect(), horizon)
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Contract masses `μ(c, ℓ, h)`; `masses[c][i][h − 1]` at power `powers[i]`.
/// Mass on the null contract is stored at `h = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedAllocation {
    pub powers: Vec<f64>,
    pub horizon: usize,
    pub masses: Vec<Vec<Vec<f64>>>,
}

/// One used contract of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractShare {
    pub class: usize,
    pub power: f64,
    pub duration: usize,
    pub mass: f64,
}

impl MixedAllocation {
    pub fn zeros(classes: usize, grid: &ContractGrid) -> Self {
        Self {
            powers: grid.powers.clone(),
            horizon: grid.horizon,
            masses: vec![vec![vec![0.0; grid.horizon]; grid.powers.len()]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.masses.len()
    }

    /// Contracts with positive mass, including the null contract.
    pub fn shares(&self) -> Vec<ContractShare> {
        let mut out = Vec::new();
        for (class, by_power) in self.masses.iter().enumerate() {
            for (i, by_h) in by_power.iter().enumerate() {
                for (k, &mass) in by_h.iter().enumerate() {
                    if mass > ACTIVE_MASS {
                        out.push(ContractShare {
                            class,
                            power: self.powers[i],
                            duration: k + 1,
                            mass,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn class_mass(&self, class: usize) -> f64 {
        self.masses[class].iter().flatten().sum()
    }

    /// `L_h = Σ_c Σ_ℓ μ(c,ℓ,h)·ℓ`, the kW sold at each duration.
    pub fn bundle(&self) -> Vec<f64> {
        let mut l = vec![0.0; self.horizon];
        for by_power in &self.masses {
            for (i, by_h) in by_power.iter().enumerate() {
                for (k, &mass) in by_h.iter().enumerate() {
                    l[k] += mass * self.powers[i];
                }
            }
        }
        l
    }

    /// `z_t = Σ μ·ℓ·[h + 1 − t]_+`, the energy needed in the `t`-th tail.
    pub fn tail_usage(&self) -> Vec<f64> {
        // z_t = Σ_{i ≥ t} δ_i with δ_i = Σ_{h ≥ i} L_h.
        tail_sums(&tail_sums(&self.bundle()))
    }

    pub fn welfare<U: ServiceUtility>(&self, utilities: &[U]) -> f64 {
        self.shares()
            .iter()
            .map(|s| s.mass * utilities[s.class].value(s.power, s.duration))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareSolution {
    pub allocation: MixedAllocation,
    pub welfare: f64,
    /// Multipliers of the tail constraints.
    pub lambda: Vec<f64>,
    /// Per-class multipliers of the mass balance, the surplus per unit mass.
    pub surplus: Vec<f64>,
    pub dual_bound: f64,
    pub duality_gap: f64,
}

fn check_dims<U>(
    pop: &Population,
    p: &SupplyProfile,
    grid: &ContractGrid,
    utilities: &[U],
) -> Result<(), MarketError> {
    let t = pop.horizon();
    if p.horizon() != t || grid.horizon != t {
        return Err(MarketError::DimensionMismatch(format!(
            "population has {t} slots, supply {}, grid {}",
            p.horizon(),
            grid.horizon
        )));
    }
    if utilities.len() != pop.classes().len() {
        return Err(MarketError::DimensionMismatch(format!(
            "{} utilities for {} classes",
            utilities.len(),
            pop.classes().len()
        )));
    }
    Ok(())
}

/// Validates each named utility against the horizon.
pub fn validate_utilities(specs: &[UtilitySpec], horizon: usize) -> Result<(), MarketError> {
    for spec in specs {
        spec.validate(horizon)?;
    }
    Ok(())
}

/// Maximizes welfare over mixed contract assignments.
pub fn solve_welfare<U: ServiceUtility>(
    pop: &Population,
    p: &SupplyProfile,
    grid: &ContractGrid,
    utilities: &[U],
) -> Result<WelfareSolution, MarketError> {
    check_dims(pop, p, grid, utilities)?;
    let horizon = grid.horizon;
    let classes = pop.classes().len();
    let powers = &grid.powers;

    // Column layout: per class, the null contract then (ℓ, h) for ℓ > 0.
    let mut columns: Vec<(usize, usize, usize)> = Vec::new();
    for c in 0..classes {
        columns.push((c, 0, 1));
        for i in 1..powers.len() {
            for h in 1..=horizon {
                columns.push((c, i, h));
            }
        }
    }
    let objective = columns
        .iter()
        .map(|&(c, i, h)| utilities[c].value(powers[i], h))
        .collect();
    let mut lp = LinearProgram::new(objective);
    for class in pop.classes() {
        let row = columns
            .iter()
            .map(|&(c, _, _)| if c == class.id { 1.0 } else { 0.0 })
            .collect();
        lp.push(row, Relation::Eq, class.mass);
    }
    let supply_tails = tail_sums(p.values());
    for t in 1..=horizon {
        let row = columns
            .iter()
            .map(|&(_, i, h)| powers[i] * (h + 1).saturating_sub(t) as f64)
            .collect();
        lp.push(row, Relation::Le, supply_tails[t - 1]);
    }

    let solution = lp.solve()?;
    let mut allocation = MixedAllocation::zeros(classes, grid);
    for (&(c, i, h), &mass) in columns.iter().zip(&solution.x) {
        allocation.masses[c][i][h - 1] += mass;
    }
    let surplus = solution.duals[..classes].to_vec();
    let lambda: Vec<f64> = solution.duals[classes..]
        .iter()
        .map(|&y| y.max(0.0))
        .collect();
    let dual_bound = solution.dual_objective(&lp);
    Ok(WelfareSolution {
        allocation,
        welfare: solution.objective,
        duality_gap: (solution.objective - dual_bound).abs(),
        dual_bound,
        lambda,
        surplus,
    })
}

/// `π_h = Σ_t λ_t·[h + 1 − t]_+` for `h = 1..T`.
pub fn prices_from_multipliers(lambda: &[f64]) -> Result<Vec<f64>, MarketError> {
    if let Some((index, &value)) = lambda
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v < 0.0)
    {
        return Err(MarketError::NegativeMultiplier { index, value });
    }
    let n = lambda.len();
    Ok((1..=n)
        .map(|h| {
            lambda[..h]
                .iter()
                .enumerate()
                .map(|(t, l)| l * (h - t) as f64)
                .sum()
        })
        .collect())
}

/// Inverts [`prices_from_multipliers`]: `λ_h` is the second difference of `π`
/// with `π_0 = π_{−1} = 0`. Negative entries mean `π` has a shrinking increment.
pub fn multipliers_from_prices(prices: &[f64]) -> Vec<f64> {
    let at = |h: isize| -> f64 {
        if h <= 0 {
            0.0
        } else {
            prices[h as usize - 1]
        }
    };
    (1..=prices.len() as isize)
        .map(|h| {
            let inc = at(h) - at(h - 1);
            let prev = if h == 1 { 0.0 } else { at(h - 1) - at(h - 2) };
            inc - prev
        })
        .collect()
}

/// Per-kW slot prices `μ_t = Σ_{i≤t} λ_i`.
pub fn slot_prices(lambda: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .scan(0.0, |acc, &l| {
            *acc += l;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Per class, the worst shortfall of a used contract against the best
    /// contract on the grid at the given prices.
    pub consumer_residuals: Vec<f64>,
    pub mass_balance_residual: f64,
    /// `L_h` per duration.
    pub bundle: Vec<f64>,
    pub revenue: f64,
    /// `Σ λ_t z_t`.
    pub revenue_bound: f64,
    /// `Σ λ_t Σ_{i≥t} p_i`, the most any feasible bundle can earn.
    pub supplier_optimum: f64,
    pub revenue_residual: f64,
    pub tail_usage: Vec<f64>,
    pub tail_supply: Vec<f64>,
    pub feasibility_residuals: Vec<f64>,
    pub slackness_residuals: Vec<f64>,
    pub consumer_optimal: bool,
    pub supplier_optimal: bool,
    pub feasible: bool,
    pub complementary: bool,
    pub passed: bool,
}

/// Checks consumer optimality, supplier revenue, bundle feasibility and
/// complementary slackness for an allocation at prices `π` and multipliers `λ`.
#[allow(clippy::too_many_arguments)]
pub fn verify_equilibrium<U: ServiceUtility>(
    pop: &Population,
    p: &SupplyProfile,
    grid: &ContractGrid,
    utilities: &[U],
    alloc: &MixedAllocation,
    prices: &[f64],
    lambda: &[f64],
) -> Result<EquilibriumReport, MarketError> {
    check_dims(pop, p, grid, utilities)?;
    let horizon = grid.horizon;
    if prices.len() != horizon || lambda.len() != horizon {
        return Err(MarketError::DimensionMismatch(format!(
            "{} prices and {} multipliers for {horizon} slots",
            prices.len(),
            lambda.len()
        )));
    }
    if alloc.classes() != pop.classes().len()
        || alloc.horizon != horizon
        || alloc.powers != grid.powers
    {
        return Err(MarketError::DimensionMismatch(
            "allocation does not match population and grid".into(),
        ));
    }

    let net = |c: usize, power: f64, h: usize| utilities[c].value(power, h) - prices[h - 1] * power;
    let consumer_residuals: Vec<f64> = (0..pop.classes().len())
        .map(|c| {
            let best = grid
                .powers
                .iter()
                .flat_map(|&l| (1..=horizon).map(move |h| (l, h)))
                .map(|(l, h)| net(c, l, h))
                .fold(0.0, f64::max);
            alloc
                .shares()
                .iter()
                .filter(|s| s.class == c)
                .map(|s| best - net(c, s.power, s.duration))
                .fold(0.0, f64::max)
        })
        .collect();
    let mass_balance_residual = pop
        .classes()
        .iter()
        .map(|c| (alloc.class_mass(c.id) - c.mass).abs())
        .fold(0.0, f64::max);

    let bundle = alloc.bundle();
    let revenue: f64 = bundle.iter().zip(prices).map(|(l, pi)| l * pi).sum();
    let tail_usage = alloc.tail_usage();
    let tail_supply = tail_sums(p.values());
    let revenue_bound: f64 = lambda.iter().zip(&tail_usage).map(|(l, z)| l * z).sum();
    let supplier_optimum: f64 = lambda.iter().zip(&tail_supply).map(|(l, s)| l * s).sum();
    let revenue_residual = (revenue - revenue_bound).abs();
    let feasibility_residuals: Vec<f64> = tail_usage
        .iter()
        .zip(&tail_supply)
        .map(|(z, s)| (z - s).max(0.0))
        .collect();
    let slackness_residuals: Vec<f64> = lambda
        .iter()
        .zip(tail_usage.iter().zip(&tail_supply))
        .map(|(l, (z, s))| (l * (z - s)).abs())
        .collect();

    let within = |v: &[f64]| v.iter().all(|&r| r <= EQUILIBRIUM_TOL);
    let consumer_optimal = within(&consumer_residuals) && mass_balance_residual <= EQUILIBRIUM_TOL;
    let supplier_optimal = revenue_residual <= EQUILIBRIUM_TOL;
    let feasible = within(&feasibility_residuals);
    let complementary = within(&slackness_residuals);
    Ok(EquilibriumReport {
        consumer_residuals,
        mass_balance_residual,
        bundle,
        revenue,
        revenue_bound,
        supplier_optimum,
        revenue_residual,
        tail_usage,
        tail_supply,
        feasibility_residuals,
        slackness_residuals,
        passed: consumer_optimal && supplier_optimal && feasible && complementary,
        consumer_optimal,
        supplier_optimal,
        feasible,
        complementary,
    })
}

/// Full pipeline: solve, price, verify.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub solution: WelfareSolution,
    pub prices: Vec<f64>,
    pub slot_prices: Vec<f64>,
    pub report: EquilibriumReport,
}

pub fn competitive_equilibrium<U: ServiceUtility>(
    pop: &Population,
    p: &SupplyProfile,
    grid: &ContractGrid,
    utilities: &[U],
) -> Result<Equilibrium, MarketError> {
    let solution = solve_welfare(pop, p, grid, utilities)?;
    let prices = prices_from_multipliers(&solution.lambda)?;
    let report = verify_equilibrium(
        pop,
        p,
        grid,
        utilities,
        &solution.allocation,
        &prices,
        &solution.lambda,
    )?;
    Ok(Equilibrium {
        slot_prices: slot_prices(&solution.lambda),
        solution,
        prices,
        report,
    })
}
