//! Consumer utility `U(ℓ, h)` for a service of power `ℓ` over `h` slots.

use serde::{Deserialize, Serialize};

pub trait ServiceUtility {
    fn value(&self, power: f64, duration: usize) -> f64;

    /// `∂U/∂ℓ`; central difference unless overridden.
    fn marginal(&self, power: f64, duration: usize) -> f64 {
        let step = 1e-6 * power.abs().max(1e-6);
        let lo = (power - step).max(0.0);
        let hi = power + step;
        (self.value(hi, duration) - self.value(lo, duration)) / (hi - lo)
    }
}

impl<F> ServiceUtility for F
where
    F: Fn(f64, usize) -> f64,
{
    fn value(&self, power: f64, duration: usize) -> f64 {
        self(power, duration)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UtilityError {
    #[error("utility parameter `{0}` must be finite and non-negative")]
    BadParameter(&'static str),
    #[error("power exponent must be positive")]
    BadExponent,
    #[error("table needs ascending non-negative powers and one row of {horizon} values per power")]
    BadTable { horizon: usize },
    #[error("table utilities must vanish at zero power")]
    TableNonZeroAtOrigin,
}

/// Named utility forms accepted in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `scale · h^duration_exponent · ℓ^power_exponent`.
    PowerLaw {
        #[serde(default = "one")]
        scale: f64,
        power_exponent: f64,
        #[serde(default = "one")]
        duration_exponent: f64,
    },
    /// `value · 1{ℓ ≥ min_power, ℓ > 0, h ≥ min_duration}`; not concave.
    Indicator {
        min_power: f64,
        min_duration: usize,
        #[serde(default = "one")]
        value: f64,
    },
    /// `values[i][h − 1]` at `powers[i]`, linear in `ℓ` between entries and
    /// flat beyond the last one.
    Table {
        powers: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl UtilitySpec {
    pub fn power_law(scale: f64, power_exponent: f64, duration_exponent: f64) -> Self {
        Self::PowerLaw {
            scale,
            power_exponent,
            duration_exponent,
        }
    }

    /// `h·√ℓ`, the running concave example.
    pub fn sqrt_duration() -> Self {
        Self::power_law(1.0, 0.5, 1.0)
    }

    pub fn validate(&self, horizon: usize) -> Result<(), UtilityError> {
        let finite_nonneg = |x: f64, name| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(UtilityError::BadParameter(name))
            }
        };
        match self {
            Self::PowerLaw {
                scale,
                power_exponent,
                duration_exponent,
            } => {
                finite_nonneg(*scale, "scale")?;
                finite_nonneg(*duration_exponent, "duration_exponent")?;
                if !(power_exponent.is_finite() && *power_exponent > 0.0) {
                    return Err(UtilityError::BadExponent);
                }
                Ok(())
            }
            Self::Indicator {
                min_power, value, ..
            } => {
                finite_nonneg(*min_power, "min_power")?;
                finite_nonneg(*value, "value")
            }
            Self::Table { powers, values } => {
                let ascending = powers.windows(2).all(|w| w[0] < w[1]);
                let shaped =
                    powers.len() == values.len() && values.iter().all(|row| row.len() == horizon);
                let sane = powers.iter().all(|p| p.is_finite() && *p >= 0.0)
                    && values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0);
                if !(ascending && shaped && sane && !powers.is_empty()) {
                    return Err(UtilityError::BadTable { horizon });
                }
                if powers[0] == 0.0 && values[0].iter().any(|&v| v != 0.0) {
                    return Err(UtilityError::TableNonZeroAtOrigin);
                }
                Ok(())
            }
        }
    }
}

impl ServiceUtility for UtilitySpec {
    fn value(&self, power: f64, duration: usize) -> f64 {
        if power <= 0.0 || duration == 0 {
            return 0.0;
        }
        match self {
            Self::PowerLaw {
                scale,
                power_exponent,
                duration_exponent,
            } => scale * (duration as f64).powf(*duration_exponent) * power.powf(*power_exponent),
            Self::Indicator {
                min_power,
                min_duration,
                value,
            } => {
                if power >= *min_power && duration >= *min_duration {
                    *value
                } else {
                    0.0
                }
            }
            Self::Table { powers, values } => {
                let at = |i: usize| values[i].get(duration - 1).copied().unwrap_or(0.0);
                match powers.iter().position(|&p| p >= power) {
                    Some(0) => {
                        // Between the origin and the first entry.
                        if powers[0] == 0.0 {
                            at(0)
                        } else {
                            at(0) * power / powers[0]
                        }
                    }
                    Some(i) => {
                        let w = (power - powers[i - 1]) / (powers[i] - powers[i - 1]);
                        at(i - 1) + w * (at(i) - at(i - 1))
                    }
                    None => at(powers.len() - 1),
                }
            }
        }
    }

    fn marginal(&self, power: f64, duration: usize) -> f64 {
        match self {
            Self::PowerLaw {
                scale,
                power_exponent,
                duration_exponent,
            } if power > 0.0 && duration > 0 => {
                scale
                    * (duration as f64).powf(*duration_exponent)
                    * power_exponent
                    * power.powf(power_exponent - 1.0)
            }
            _ => {
                let step = 1e-6 * power.abs().max(1e-6);
                let lo = (power - step).max(0.0);
                let hi = power + step;
                (self.value(hi, duration) - self.value(lo, duration)) / (hi - lo)
            }
        }
    }
}
