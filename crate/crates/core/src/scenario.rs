//! JSON scenario files.
//!
//! ```json
//! {
//!   "T": 2,
//!   "classes": [{"mass": 0.5, "power": 2.0, "duration": 2, "name": "ev"}],
//!   "supply": [2.0, 4.0],
//!   "unit_cost": 1.0,
//!   "contracts": {"powers": [0, 1, 2]},
//!   "utility": {"form": "power_law", "scale": 1, "power_exponent": 0.5},
//!   "spot": {"supply": {"kind": "constant", "value": 1}, "distribution_cost": 0.1, "backstop_price": 1}
//! }
//! ```
//!
//! Class masses that do not sum to one are rescaled to the unit continuum and
//! the supply is divided by the same factor, so powers stay per capita.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::market::ContractGrid;
use crate::model::{ClassSpec, ModelError, Population, SupplyTimeProfile};
use crate::spot::{SpotScenario, SupplyDistribution};
use crate::utility::UtilitySpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed scenario at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("scenario has no `{0}` section")]
    Missing(&'static str),
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub mass: f64,
    pub power: f64,
    pub duration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractEntry {
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotEntry {
    pub supply: SupplyDistribution,
    pub distribution_cost: f64,
    pub backstop_price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<Vec<f64>>,
    /// Falls back to the top-level utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub classes: Vec<ClassEntry>,
    pub supply: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracts: Option<ContractEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spot: Option<SpotEntry>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub population: Population,
    pub supply: SupplyTimeProfile,
    /// Original total class mass; supply was divided by it.
    pub mass_scale: f64,
    pub unit_cost: Option<f64>,
    pub grid: Option<ContractGrid>,
    pub utility: Option<UtilitySpec>,
    class_utilities: Vec<Option<UtilitySpec>>,
    pub spot: Option<SpotScenario>,
}

fn model_field(err: &ModelError) -> String {
    match err {
        ModelError::InvalidMass { class, .. } => format!("classes[{class}].mass"),
        ModelError::InvalidPower { class, .. } => format!("classes[{class}].power"),
        ModelError::InvalidDuration { class, .. } => format!("classes[{class}].duration"),
        ModelError::NoClasses => "classes".into(),
        ModelError::EmptyHorizon => "T".into(),
        ModelError::InvalidSupply { .. } => "supply".into(),
        _ => "classes".into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                field: if path == "." { "(root)".into() } else { path },
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Self::from_file(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let t = file.horizon;
        if t == 0 {
            return Err(invalid("T", "horizon must be at least 1"));
        }
        if file.supply.len() != t {
            return Err(invalid(
                "supply",
                format!("expected {t} values, found {}", file.supply.len()),
            ));
        }
        let specs: Vec<ClassSpec> = file
            .classes
            .iter()
            .map(|c| ClassSpec {
                name: c.name.clone(),
                mass: c.mass,
                power: c.power,
                duration: c.duration,
            })
            .collect();
        let population =
            Population::normalized(t, specs).map_err(|e| invalid(model_field(&e), &e))?;
        let mass_scale: f64 = file.classes.iter().map(|c| c.mass).sum();
        let supply = SupplyTimeProfile::new(file.supply.iter().map(|q| q / mass_scale).collect())
            .map_err(|e| invalid("supply", e))?;

        if let Some(c) = file.unit_cost {
            if !(c.is_finite() && c >= 0.0) {
                return Err(invalid("unit_cost", "must be finite and non-negative"));
            }
        }
        let grid = file
            .contracts
            .map(|g| ContractGrid::new(g.powers, t))
            .transpose()
            .map_err(|e| invalid("contracts.powers", e))?;
        if let Some(u) = &file.utility {
            u.validate(t).map_err(|e| invalid("utility", e))?;
        }
        for (i, c) in file.classes.iter().enumerate() {
            if let Some(u) = &c.utility {
                u.validate(t)
                    .map_err(|e| invalid(format!("classes[{i}].utility"), e))?;
            }
        }
        let spot = match file.spot {
            None => None,
            Some(s) => {
                let utility = s
                    .utility
                    .or_else(|| file.utility.clone())
                    .ok_or_else(|| invalid("spot.utility", "no spot or top-level utility"))?;
                let scn = SpotScenario {
                    horizon: t,
                    supply: s.supply,
                    distribution_cost: s.distribution_cost,
                    backstop_price: s.backstop_price,
                    arrivals: s.arrivals,
                    utility,
                };
                scn.validate().map_err(|e| invalid("spot", e))?;
                Some(scn)
            }
        };
        Ok(Self {
            population,
            supply,
            mass_scale,
            unit_cost: file.unit_cost,
            grid,
            utility: file.utility,
            class_utilities: file.classes.into_iter().map(|c| c.utility).collect(),
            spot,
        })
    }

    pub fn horizon(&self) -> usize {
        self.population.horizon()
    }

    /// One utility per class, falling back to the top-level utility.
    pub fn utilities(&self) -> Result<Vec<UtilitySpec>, ScenarioError> {
        self.class_utilities
            .iter()
            .enumerate()
            .map(|(i, u)| {
                u.clone().or_else(|| self.utility.clone()).ok_or_else(|| {
                    invalid(
                        format!("classes[{i}].utility"),
                        "no class or top-level utility",
                    )
                })
            })
            .collect()
    }

    pub fn require_grid(&self) -> Result<&ContractGrid, ScenarioError> {
        self.grid
            .as_ref()
            .ok_or(ScenarioError::Missing("contracts"))
    }

    pub fn require_utility(&self) -> Result<&UtilitySpec, ScenarioError> {
        self.utility
            .as_ref()
            .ok_or(ScenarioError::Missing("utility"))
    }

    pub fn require_spot(&self) -> Result<&SpotScenario, ScenarioError> {
        self.spot.as_ref().ok_or(ScenarioError::Missing("spot"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "T": 2,
        "classes": [
            {"mass": 0.5, "power": 2, "duration": 2},
            {"mass": 0.5, "power": 2, "duration": 1, "name": "short"}
        ],
        "supply": [2, 4],
        "unit_cost": 1.5,
        "contracts": {"powers": [1, 2]},
        "utility": {"form": "power_law", "power_exponent": 0.5}
    }"#;

    #[test]
    fn parses_basic_file() {
        let s = Scenario::from_json(BASIC).unwrap();
        assert_eq!(s.horizon(), 2);
        assert_eq!(s.population.classes().len(), 2);
        assert_eq!(s.supply.values(), &[2.0, 4.0]);
        assert_eq!(s.require_grid().unwrap().powers(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.utilities().unwrap().len(), 2);
        assert_eq!(s.require_spot(), Err(ScenarioError::Missing("spot")));
    }

    #[test]
    fn masses_are_prescaled() {
        let text = r#"{"T": 1, "classes": [{"mass": 2, "power": 1, "duration": 1},
            {"mass": 2, "power": 1, "duration": 1}], "supply": [8]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.mass_scale, 4.0);
        assert_eq!(s.population.classes()[0].mass, 0.5);
        assert_eq!(s.supply.values(), &[2.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let text =
            r#"{"T": 2, "classes": [{"mass": 1, "power": "x", "duration": 1}], "supply": [1, 1]}"#;
        match Scenario::from_json(text) {
            Err(ScenarioError::Parse { field, line, .. }) => {
                assert_eq!(field, "classes[0].power");
                assert_eq!(line, 1);
            }
            other => panic!("{other:?}"),
        }

        let text =
            r#"{"T": 2, "classes": [{"mass": 1, "power": 1, "duration": 3}], "supply": [1, 1]}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(ScenarioError::Invalid { field, .. }) if field == "classes[0].duration"
        ));

        let text =
            r#"{"T": 2, "classes": [{"mass": 1, "power": 1, "duration": 1}], "supply": [1]}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(ScenarioError::Invalid { field, .. }) if field == "supply"
        ));

        let text = r#"{"T": 1, "classes": [], "supply": [1], "colour": 3}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn spot_section_inherits_utility() {
        let text = r#"{"T": 2, "classes": [{"mass": 1, "power": 1, "duration": 1}], "supply": [0, 2],
            "utility": {"form": "power_law", "scale": 2, "power_exponent": 0.5},
            "spot": {"supply": {"kind": "discrete", "values": [0, 2], "probs": [0.5, 0.5]},
                     "distribution_cost": 0.1, "backstop_price": 1}}"#;
        let s = Scenario::from_json(text).unwrap();
        let spot = s.require_spot().unwrap();
        assert_eq!(spot.horizon, 2);
        assert_eq!(&spot.utility, s.require_utility().unwrap());
    }
}
