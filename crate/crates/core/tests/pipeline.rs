//! Cross-module checks: scenario text through scheduling, procurement and
//! pricing.

mod common;

use common::*;
use dd_core::adequacy::{assess, is_simply_adequate};
use dd_core::market::{competitive_equilibrium, ContractGrid};
use dd_core::procurement::{min_supplement, Target};
use dd_core::scenario::{ClassEntry, Scenario, ScenarioFile};
use dd_core::scheduler::lldf_schedule;
use dd_core::utility::UtilitySpec;
use dd_core::{
    demand_profile, sort_supply, validate_allocation, ClassSpec, Population, SupplyTimeProfile,
    ValidationMode,
};
use proptest::prelude::*;
use rand::Rng;

fn population_strategy(t: usize) -> impl Strategy<Value = Population> {
    prop::collection::vec((0.05f64..1.0, 0.0f64..3.0, 1..=t), 1..6).prop_map(move |specs| {
        let specs = specs
            .into_iter()
            .map(|(m, l, h)| ClassSpec::new(m, l, h))
            .collect();
        Population::normalized(t, specs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Whatever the supply, buying the supplement lets LLDF finish.
    #[test]
    fn supplement_then_schedule(
        pop in (1usize..=6).prop_flat_map(population_strategy),
        raw in prop::collection::vec(0.0f64..2.0, 6),
    ) {
        let t = pop.horizon();
        let q = SupplyTimeProfile::new(raw[..t].to_vec()).unwrap();
        let p = sort_supply(&q);
        let d = demand_profile(&pop);
        let sup = min_supplement(&p, &d, 1.0, Target::Simple).unwrap();
        let boosted: Vec<f64> = q.values().iter().zip(&sup.time).map(|(a, b)| a + b).collect();
        let boosted = SupplyTimeProfile::new(boosted).unwrap();
        prop_assert!(is_simply_adequate(sort_supply(&boosted).values(), d.values()).unwrap());

        let schedule = lldf_schedule(&pop, &boosted);
        prop_assert!(schedule.is_complete(), "{:?}", schedule.unmet);
        let report = validate_allocation(&pop, &schedule.allocation, &boosted, ValidationMode::Simple).unwrap();
        prop_assert!(report.passed, "{:?}", report.violation);

        // Nothing is bought when the supply was already adequate.
        if assess(p.values(), d.values()).unwrap().simple {
            prop_assert!(sup.total.abs() < 1e-12);
        }
    }

    /// LLDF leaves the allocation unchanged in meaning when the classes are
    /// listed in a different order: the served power per slot is the same.
    #[test]
    fn served_power_ignores_class_order(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let t = rng.gen_range(1..=5);
        let pop = random_population(&mut rng, t, 5);
        let q = adequate_supply(&mut rng, demand_profile(&pop).values(), false);
        let specs: Vec<ClassSpec> = pop.classes().iter().rev()
            .map(|c| ClassSpec::new(c.mass, c.power, c.duration))
            .collect();
        let flipped = Population::new(t, specs).unwrap();
        let a = lldf_schedule(&pop, &q);
        let b = lldf_schedule(&flipped, &q);
        prop_assert!(a.is_complete() && b.is_complete());
        for (x, y) in a.allocation.served_power(&pop).iter().zip(b.allocation.served_power(&flipped)) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn scenario_round_trips_through_its_file_form() {
    let file = ScenarioFile {
        horizon: 3,
        classes: vec![
            ClassEntry {
                mass: 2.0,
                power: 1.0,
                duration: 3,
                name: Some("heater".into()),
                utility: None,
            },
            ClassEntry {
                mass: 2.0,
                power: 3.0,
                duration: 1,
                name: None,
                utility: Some(UtilitySpec::power_law(2.0, 0.5, 1.0)),
            },
        ],
        supply: vec![8.0, 4.0, 12.0],
        unit_cost: Some(0.5),
        contracts: None,
        utility: Some(UtilitySpec::sqrt_duration()),
        spot: None,
    };
    let text = serde_json::to_string(&file).unwrap();
    let scn = Scenario::from_json(&text).unwrap();
    assert_eq!(scn, Scenario::from_file(file).unwrap());
    assert_eq!(scn.mass_scale, 4.0);
    assert_eq!(scn.supply.values(), &[2.0, 1.0, 3.0]);
    let us = scn.utilities().unwrap();
    assert_eq!(us[0], UtilitySpec::sqrt_duration());
    assert_eq!(us[1], UtilitySpec::power_law(2.0, 0.5, 1.0));
}

/// Doubling every mass and the supply together describes the same per-capita
/// market, so prices and welfare do not move.
#[test]
fn equilibrium_is_invariant_to_mass_units() {
    let base = r#"{"T": 3, "classes": [
        {"mass": MA, "power": 1, "duration": 3},
        {"mass": MB, "power": 2, "duration": 1}],
        "supply": [S1, S2, S3],
        "contracts": {"powers": [0.5, 1, 1.5, 2]},
        "utility": {"form": "power_law", "power_exponent": 0.5}}"#;
    let render = |k: f64| {
        base.replace("MA", &(0.4 * k).to_string())
            .replace("MB", &(0.6 * k).to_string())
            .replace("S1", &(1.0 * k).to_string())
            .replace("S2", &(0.5 * k).to_string())
            .replace("S3", &(2.0 * k).to_string())
    };
    let solve = |text: &str| {
        let s = Scenario::from_json(text).unwrap();
        let us = s.utilities().unwrap();
        competitive_equilibrium(
            &s.population,
            &sort_supply(&s.supply),
            s.require_grid().unwrap(),
            &us,
        )
        .unwrap()
    };
    let a = solve(&render(1.0));
    let b = solve(&render(2.0));
    assert!(a.report.passed && b.report.passed);
    assert!((a.solution.welfare - b.solution.welfare).abs() < 1e-9);
    for (x, y) in a.prices.iter().zip(&b.prices) {
        assert!((x - y).abs() < 1e-9);
    }
}

/// Serving the 2 kW class first would spend slot 1 on it and leave the
/// 2-slot class a single slot; LLDF gives slot 1 to the 2-slot class.
#[test]
fn lldf_finishes_tight_instance_exactly() {
    let pop = Population::new(
        2,
        vec![ClassSpec::new(0.5, 2.0, 1), ClassSpec::new(0.5, 1.0, 2)],
    )
    .unwrap();
    let q = SupplyTimeProfile::new(vec![0.5, 1.5]).unwrap();
    let s = lldf_schedule(&pop, &q);
    assert!(s.is_complete());
    assert!(s.spilled_energy.abs() < 1e-12);
    let r = validate_allocation(&pop, &s.allocation, &q, ValidationMode::Exact).unwrap();
    assert!(r.passed, "{:?}", r.violation);
    // The 2-slot class is on in both slots.
    for slot in &s.allocation.slots {
        assert!(slot.iter().any(|seg| seg.class == 1));
    }
}

#[test]
fn grid_with_zero_is_not_duplicated() {
    let g = ContractGrid::new(vec![0.0, 1.0], 2).unwrap();
    assert_eq!(g.powers(), &[0.0, 1.0]);
    assert!(ContractGrid::new(vec![1.0, 1.0], 2).is_err());
}
