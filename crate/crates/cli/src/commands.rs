//! One function per subcommand. Slots in every report are numbered from 1;
//! classes keep their 0-based position in the scenario's `classes` array.

use std::path::Path;

use serde_json::{json, Value};

use dd_core::adequacy::{assess, is_simply_adequate, tail_sums};
use dd_core::identical::{concave_equilibrium, convex_case_solve, IdenticalConfig};
use dd_core::market::{
    competitive_equilibrium, prices_from_multipliers, slot_prices, solve_welfare,
};
use dd_core::procurement::{min_supplement, Target};
use dd_core::scenario::Scenario;
use dd_core::scheduler::lldf_schedule;
use dd_core::spot::{compare, profit_table};
use dd_core::{
    demand_profile, sort_supply, validate_allocation, Allocation, SupplyTimeProfile, ValidationMode,
};

use crate::output::{num, to_json, Report, Table};
use crate::{CaseArg, CliError, Command, ModeArg, TargetArg};

pub struct Outcome {
    pub report: Report,
    /// Set when the report was produced but its check failed.
    pub check: Option<String>,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Self {
            report,
            check: None,
        }
    }
}

fn domain<E: Into<dd_core::Error>>(e: E) -> CliError {
    CliError::from(e.into())
}

fn one_based(i: Option<usize>) -> Option<usize> {
    i.map(|i| i + 1)
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Adequacy { input } => {
            adequacy(&Scenario::from_path(input.path())?).map(Into::into)
        }
        Command::Schedule { input } => {
            schedule(&Scenario::from_path(input.path())?).map(Into::into)
        }
        Command::Procure {
            input,
            target,
            unit_cost,
        } => procure(&Scenario::from_path(input.path())?, *target, *unit_cost).map(Into::into),
        Command::Welfare { input } => welfare(&Scenario::from_path(input.path())?).map(Into::into),
        Command::Equilibrium { input } => equilibrium(&Scenario::from_path(input.path())?),
        Command::Identical {
            input,
            case,
            min_power,
            max_power,
        } => {
            let cfg = IdenticalConfig {
                min_power: *min_power,
                max_power: *max_power,
            };
            identical(&Scenario::from_path(input.path())?, *case, &cfg).map(Into::into)
        }
        Command::Spot {
            input,
            samples,
            seed,
            points,
        } => spot(
            &Scenario::from_path(input.path())?,
            *samples,
            *seed,
            *points,
        )
        .map(Into::into),
        Command::Validate {
            input,
            allocation,
            mode,
        } => validate(&Scenario::from_path(input.path())?, allocation, *mode),
    }
}

fn prefix_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

pub fn adequacy(scn: &Scenario) -> Result<Report, CliError> {
    let p = sort_supply(&scn.supply);
    let d = demand_profile(&scn.population);
    let (pv, dv) = (p.values(), d.values());
    let r = assess(pv, dv).map_err(domain)?;
    let json = to_json(&json!({
        "exact": r.exact,
        "simple": r.simple,
        "first_exact_violation": one_based(r.first_exact_violation),
        "first_simple_violation": one_based(r.first_simple_violation),
        "tail_deficit": r.tail_deficit,
        "mass_scale": scn.mass_scale,
        "supply_sorted": pv,
        "demand": dv,
    }));
    let mut table = Table::new(vec![
        "t",
        "supply",
        "demand",
        "supply_prefix",
        "demand_prefix",
        "supply_tail",
        "demand_tail",
    ]);
    let (pp, dp, pt, dt) = (
        prefix_sums(pv),
        prefix_sums(dv),
        tail_sums(pv),
        tail_sums(dv),
    );
    for t in 0..pv.len() {
        table.push(vec![
            (t + 1).to_string(),
            num(pv[t]),
            num(dv[t]),
            num(pp[t]),
            num(dp[t]),
            num(pt[t]),
            num(dt[t]),
        ]);
    }
    Ok(Report {
        name: "adequacy",
        json,
        table,
    })
}

pub fn schedule(scn: &Scenario) -> Result<Report, CliError> {
    let s = lldf_schedule(&scn.population, &scn.supply);
    let slots: Vec<Value> = s
        .slots
        .iter()
        .map(|x| {
            json!({
                "slot": x.slot + 1,
                "supply": x.supply,
                "served": x.served,
                "threshold": x.threshold,
            })
        })
        .collect();
    let json = to_json(&json!({
        "complete": s.is_complete(),
        "unmet_mass": s.unmet_mass,
        "unmet_energy": s.unmet_energy,
        "spilled_energy": s.spilled_energy,
        "slots": slots,
        "unmet": s.unmet,
        "allocation": s.allocation,
    }));
    let mut table = Table::new(vec![
        "slot",
        "class",
        "interval_start",
        "interval_end",
        "power",
    ]);
    let classes = scn.population.classes();
    for (t, segs) in s.allocation.slots.iter().enumerate() {
        for seg in segs {
            table.push(vec![
                (t + 1).to_string(),
                seg.class.to_string(),
                num(seg.interval.start),
                num(seg.interval.end),
                num(classes[seg.class].power),
            ]);
        }
    }
    Ok(Report {
        name: "schedule",
        json,
        table,
    })
}

pub fn procure(
    scn: &Scenario,
    target: TargetArg,
    unit_cost: Option<f64>,
) -> Result<Report, CliError> {
    let target = match target {
        TargetArg::Simple => Target::Simple,
        TargetArg::Exact => Target::Exact,
    };
    let c = unit_cost.or(scn.unit_cost).unwrap_or(0.0);
    let p = sort_supply(&scn.supply);
    let d = demand_profile(&scn.population);
    let sup = min_supplement(&p, &d, c, target).map_err(domain)?;
    let augmented: Vec<f64> = scn
        .supply
        .values()
        .iter()
        .zip(&sup.time)
        .map(|(q, a)| q + a)
        .collect();
    let augmented_q = SupplyTimeProfile::new(augmented.clone()).map_err(domain)?;
    let simple =
        is_simply_adequate(sort_supply(&augmented_q).values(), d.values()).map_err(domain)?;
    let schedulable = lldf_schedule(&scn.population, &augmented_q).is_complete();
    let json = to_json(&json!({
        "target": target,
        "unit_cost": c,
        "purchase_time": sup.time,
        "purchase_sorted": sup.sorted,
        "total": sup.total,
        "cost": sup.cost,
        "augmented_supply": augmented,
        "simply_adequate": simple,
        "schedulable": schedulable,
        "mass_scale": scn.mass_scale,
    }));
    let mut table = Table::new(vec!["slot", "supply", "purchase", "augmented"]);
    for (t, q) in scn.supply.values().iter().enumerate() {
        table.push(vec![
            (t + 1).to_string(),
            num(*q),
            num(sup.time[t]),
            num(augmented[t]),
        ]);
    }
    Ok(Report {
        name: "procure",
        json,
        table,
    })
}

fn price_table(pi: &[f64]) -> Table {
    let mut table = Table::new(vec!["h", "pi_h", "increment"]);
    let mut prev = 0.0;
    for (i, &x) in pi.iter().enumerate() {
        table.push(vec![(i + 1).to_string(), num(x), num(x - prev)]);
        prev = x;
    }
    table
}

pub fn welfare(scn: &Scenario) -> Result<Report, CliError> {
    let grid = scn.require_grid()?;
    let utilities = scn.utilities()?;
    let p = sort_supply(&scn.supply);
    let sol = solve_welfare(&scn.population, &p, grid, &utilities).map_err(domain)?;
    let pi = prices_from_multipliers(&sol.lambda).map_err(domain)?;
    let json = to_json(&json!({
        "welfare": sol.welfare,
        "lambda": sol.lambda,
        "pi": pi,
        "mu_slot": slot_prices(&sol.lambda),
        "allocation": sol.allocation.shares(),
        "report": {
            "dual_bound": sol.dual_bound,
            "duality_gap": sol.duality_gap,
            "surplus": sol.surplus,
        },
    }));
    Ok(Report {
        name: "welfare",
        json,
        table: price_table(&pi),
    })
}

pub fn equilibrium(scn: &Scenario) -> Result<Outcome, CliError> {
    let grid = scn.require_grid()?;
    let utilities = scn.utilities()?;
    let p = sort_supply(&scn.supply);
    let eq = competitive_equilibrium(&scn.population, &p, grid, &utilities).map_err(domain)?;
    let json = to_json(&json!({
        "welfare": eq.solution.welfare,
        "lambda": eq.solution.lambda,
        "pi": eq.prices,
        "mu_slot": eq.slot_prices,
        "allocation": eq.solution.allocation.shares(),
        "report": eq.report,
    }));
    let check = (!eq.report.passed).then(|| "equilibrium verification failed".to_string());
    Ok(Outcome {
        report: Report {
            name: "equilibrium",
            json,
            table: price_table(&eq.prices),
        },
        check,
    })
}

pub fn identical(scn: &Scenario, case: CaseArg, cfg: &IdenticalConfig) -> Result<Report, CliError> {
    let u = scn.require_utility()?;
    let p = sort_supply(&scn.supply);
    let mut table = Table::new(vec!["h", "price", "power", "fraction"]);
    let json = match case {
        CaseArg::Concave => {
            let eq = concave_equilibrium(u, p.values(), cfg).map_err(domain)?;
            let mut menu = eq.menu.clone();
            menu.sort_by_key(|e| e.duration);
            for e in &menu {
                table.push(vec![
                    e.duration.to_string(),
                    num(e.price),
                    num(e.power),
                    num(e.fraction),
                ]);
            }
            json!({
                "case": "concave",
                "surplus": eq.surplus,
                "menu": menu,
                "prices": eq.prices,
                "served": eq.served,
                "welfare": eq.welfare,
            })
        }
        CaseArg::Convex => {
            let grid = scn.require_grid()?;
            let sol = convex_case_solve(u, p.values(), grid.powers()).map_err(domain)?;
            let shares: Vec<_> = sol
                .allocation
                .shares()
                .into_iter()
                .filter(|s| s.power > 0.0)
                .collect();
            for s in &shares {
                table.push(vec![
                    s.duration.to_string(),
                    num(sol.energy_price * s.duration as f64),
                    num(s.power),
                    num(s.mass),
                ]);
            }
            json!({
                "case": "convex",
                "welfare": sol.welfare,
                "energy": sol.energy,
                "energy_price": sol.energy_price,
                "tail_feasible": sol.tail_feasible,
                "allocation": shares,
            })
        }
    };
    Ok(Report {
        name: "identical",
        json: to_json(&json),
        table,
    })
}

pub fn spot(scn: &Scenario, samples: usize, seed: u64, points: usize) -> Result<Report, CliError> {
    let s = scn.require_spot()?;
    let report = compare(s, samples, seed).map_err(domain)?;
    let rows = profit_table(s, samples, seed, points).map_err(domain)?;
    let mut table = Table::new(vec!["price", "demand", "spot_profit", "dd_profit"]);
    for r in &rows {
        table.push(vec![
            num(r.price),
            num(r.demand),
            num(r.spot_profit),
            num(r.dd_profit),
        ]);
    }
    let json = to_json(&json!({
        "samples": samples,
        "seed": seed,
        "report": report,
    }));
    Ok(Report {
        name: "spot",
        json,
        table,
    })
}

/// Accepts either a bare allocation or any object with an `allocation` field
/// (such as the `schedule` report).
fn read_allocation(path: &Path) -> Result<Allocation, CliError> {
    let fail = |message: String| CliError::Allocation {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
    if let Some(inner) = v.get_mut("allocation") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| fail(e.to_string()))
}

pub fn validate(scn: &Scenario, path: &Path, mode: ModeArg) -> Result<Outcome, CliError> {
    let alloc = read_allocation(path)?;
    let mode = match mode {
        ModeArg::Simple => ValidationMode::Simple,
        ModeArg::Exact => ValidationMode::Exact,
    };
    let r = validate_allocation(&scn.population, &alloc, &scn.supply, mode).map_err(domain)?;
    let mut table = Table::new(vec!["slot", "supply", "served"]);
    for (t, (q, s)) in scn.supply.values().iter().zip(&r.served_power).enumerate() {
        table.push(vec![(t + 1).to_string(), num(*q), num(*s)]);
    }
    let check = (!r.passed).then(|| "allocation failed validation".to_string());
    Ok(Outcome {
        report: Report {
            name: "validate",
            json: to_json(&json!({"mode": mode, "report": r})),
            table,
        },
        check,
    })
}
