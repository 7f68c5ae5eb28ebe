//! Loads, supply, demand and allocations.
//!
//! The consumer continuum `[0, 1]` is discretized into finitely many classes.
//! Each class owns a half-open position interval whose length is its mass, and
//! every operation is free to cut those intervals at arbitrary real points, so
//! a class behaves like a divisible piece of the continuum. Positions are plain
//! `f64` compared with [`POSITION_TOL`](crate::POSITION_TOL).

use serde::{Deserialize, Serialize};

use crate::{MASS_TOL, POSITION_TOL};

/// Tolerance on the total population mass.
pub const TOTAL_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("horizon must be at least one slot")]
    EmptyHorizon,
    #[error("population has no classes")]
    NoClasses,
    #[error("class {class}: mass must be positive and finite, got {mass}")]
    InvalidMass { class: usize, mass: f64 },
    #[error("class {class}: power must be non-negative and finite, got {power}")]
    InvalidPower { class: usize, power: f64 },
    #[error("class {class}: duration {duration} outside 1..={horizon}")]
    InvalidDuration {
        class: usize,
        duration: usize,
        horizon: usize,
    },
    #[error("class masses sum to {total}, expected 1")]
    MassNotNormalized { total: f64 },
    #[error("supply entry {slot} must be non-negative and finite, got {value}")]
    InvalidSupply { slot: usize, value: f64 },
    #[error("profile is not non-increasing at index {index}")]
    NotSorted { index: usize },
    #[error("horizon mismatch: expected {expected} slots, got {got}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("overlapping segments in slot {slot}")]
    OverlappingSegments { slot: usize },
    #[error("slot {slot}: segment references unknown class {class}")]
    UnknownClass { slot: usize, class: usize },
    #[error("slot {slot}: segment [{start}, {end}) lies outside class {class}")]
    SegmentOutsideClass {
        slot: usize,
        class: usize,
        start: f64,
        end: f64,
    },
    #[error("class {class}: slot selection must hold {expected} distinct slots in range")]
    InvalidSlotSelection { class: usize, expected: usize },
    #[error("slot selection covers {got} classes, population has {expected}")]
    SelectionLength { expected: usize, got: usize },
    #[error("no load")]
    NoLoad,
}

/// Half-open sub-interval `[start, end)` of the consumer continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= POSITION_TOL
    }

    pub fn contains(&self, x: f64) -> bool {
        self.start <= x && x < self.end
    }

    /// True when `other` lies inside `self` up to [`POSITION_TOL`].
    pub fn covers(&self, other: &Interval) -> bool {
        other.start >= self.start - POSITION_TOL && other.end <= self.end + POSITION_TOL
    }
}

/// User-facing description of a class before positions are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mass: f64,
    pub power: f64,
    pub duration: usize,
}

impl ClassSpec {
    pub fn new(mass: f64, power: f64, duration: usize) -> Self {
        Self {
            name: None,
            mass,
            power,
            duration,
        }
    }
}

/// A divisible block of identical consumers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsumerClass {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mass: f64,
    /// Per-capita power in kW.
    pub power: f64,
    /// Required number of slots.
    pub duration: usize,
    pub position: Interval,
}

impl ConsumerClass {
    /// Aggregate power of the whole class.
    pub fn load(&self) -> f64 {
        self.mass * self.power
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    horizon: usize,
    classes: Vec<ConsumerClass>,
}

impl Population {
    /// Builds a population whose masses already sum to one.
    pub fn new(horizon: usize, specs: Vec<ClassSpec>) -> Result<Self, ModelError> {
        Self::check_specs(horizon, &specs)?;
        let total: f64 = specs.iter().map(|s| s.mass).sum();
        if (total - 1.0).abs() > TOTAL_MASS_TOL {
            return Err(ModelError::MassNotNormalized { total });
        }
        Ok(Self::assign_positions(horizon, specs))
    }

    /// Builds a population after rescaling masses to sum to one.
    pub fn normalized(horizon: usize, mut specs: Vec<ClassSpec>) -> Result<Self, ModelError> {
        Self::check_specs(horizon, &specs)?;
        let total: f64 = specs.iter().map(|s| s.mass).sum();
        for spec in &mut specs {
            spec.mass /= total;
        }
        Ok(Self::assign_positions(horizon, specs))
    }

    fn check_specs(horizon: usize, specs: &[ClassSpec]) -> Result<(), ModelError> {
        if horizon == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        if specs.is_empty() {
            return Err(ModelError::NoClasses);
        }
        for (class, spec) in specs.iter().enumerate() {
            if !(spec.mass.is_finite() && spec.mass > 0.0) {
                return Err(ModelError::InvalidMass {
                    class,
                    mass: spec.mass,
                });
            }
            if !(spec.power.is_finite() && spec.power >= 0.0) {
                return Err(ModelError::InvalidPower {
                    class,
                    power: spec.power,
                });
            }
            if spec.duration == 0 || spec.duration > horizon {
                return Err(ModelError::InvalidDuration {
                    class,
                    duration: spec.duration,
                    horizon,
                });
            }
        }
        Ok(())
    }

    fn assign_positions(horizon: usize, specs: Vec<ClassSpec>) -> Self {
        let n = specs.len();
        let mut cursor = 0.0;
        let classes = specs
            .into_iter()
            .enumerate()
            .map(|(id, spec)| {
                let start = cursor;
                // The last class closes the tiling exactly.
                let end = if id + 1 == n { 1.0 } else { cursor + spec.mass };
                cursor = end;
                ConsumerClass {
                    id,
                    name: spec.name,
                    mass: spec.mass,
                    power: spec.power,
                    duration: spec.duration,
                    position: Interval::new(start, end),
                }
            })
            .collect();
        Self { horizon, classes }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn classes(&self) -> &[ConsumerClass] {
        &self.classes
    }

    pub fn class(&self, id: usize) -> Option<&ConsumerClass> {
        self.classes.get(id)
    }

    /// Total energy `Σ mass·power·duration`.
    pub fn energy(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.load() * c.duration as f64)
            .sum()
    }
}

/// Available power per slot in real time order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyTimeProfile(Vec<f64>);

impl SupplyTimeProfile {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyHorizon);
        }
        if let Some((slot, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ModelError::InvalidSupply { slot, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }
}

/// Supply sorted non-increasing (the generation duration curve).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyProfile {
    values: Vec<f64>,
    /// `permutation[i]` is the time slot holding the `i`-th largest supply.
    permutation: Vec<usize>,
}

impl SupplyProfile {
    /// Wraps an already sorted profile with the identity permutation.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self, ModelError> {
        let time = SupplyTimeProfile::new(values)?;
        if let Some(index) = first_increase(time.values()) {
            return Err(ModelError::NotSorted { index });
        }
        let permutation = (0..time.horizon()).collect();
        Ok(Self {
            values: time.0,
            permutation,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// Maps a vector indexed by sorted position back to time order.
    pub fn to_time_order(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (i, &slot) in self.permutation.iter().enumerate() {
            out[slot] = sorted[i];
        }
        out
    }

    pub fn to_time_profile(&self) -> SupplyTimeProfile {
        SupplyTimeProfile(self.to_time_order(&self.values))
    }
}

/// Aggregate demand duration curve, `d_t` = power of loads needing at least `t` slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandProfile(Vec<f64>);

impl DemandProfile {
    /// Wraps a non-increasing, non-negative vector.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self, ModelError> {
        let checked = SupplyTimeProfile::new(values)?;
        if let Some(index) = first_increase(checked.values()) {
            return Err(ModelError::NotSorted { index });
        }
        Ok(Self(checked.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn first_increase(values: &[f64]) -> Option<usize> {
    values
        .windows(2)
        .position(|w| w[1] > w[0] + MASS_TOL)
        .map(|i| i + 1)
}

/// Sorts supply non-increasing; equal values keep their time order.
pub fn sort_supply(q: &SupplyTimeProfile) -> SupplyProfile {
    let mut permutation: Vec<usize> = (0..q.horizon()).collect();
    permutation.sort_by(|&a, &b| q.0[b].total_cmp(&q.0[a]));
    let values = permutation.iter().map(|&t| q.0[t]).collect();
    SupplyProfile {
        values,
        permutation,
    }
}

pub fn demand_profile(pop: &Population) -> DemandProfile {
    let mut d = vec![0.0; pop.horizon];
    for class in &pop.classes {
        let load = class.load();
        for slot in d.iter_mut().take(class.duration) {
            *slot += load;
        }
    }
    DemandProfile(d)
}

/// Reserve ratio `(peak − average) / average` of a day-ahead demand where
/// class `c` fixes its slots to `selection[c]` (zero-based slot indices).
pub fn reserve_ratio(pop: &Population, selection: &[Vec<usize>]) -> Result<f64, ModelError> {
    if selection.len() != pop.classes.len() {
        return Err(ModelError::SelectionLength {
            expected: pop.classes.len(),
            got: selection.len(),
        });
    }
    let mut delta = vec![0.0; pop.horizon];
    for (class, slots) in pop.classes.iter().zip(selection) {
        let mut seen = vec![false; pop.horizon];
        let valid = slots.len() == class.duration
            && slots.iter().all(|&t| {
                let fresh = t < pop.horizon && !seen[t];
                if fresh {
                    seen[t] = true;
                }
                fresh
            });
        if !valid {
            return Err(ModelError::InvalidSlotSelection {
                class: class.id,
                expected: class.duration,
            });
        }
        for &t in slots {
            delta[t] += class.load();
        }
    }
    let avg = delta.iter().sum::<f64>() / pop.horizon as f64;
    if avg <= MASS_TOL {
        return Err(ModelError::NoLoad);
    }
    let peak = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((peak - avg) / avg)
}

/// A served piece of one class in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub class: usize,
    pub interval: Interval,
}

/// Per-slot served segments; `slots[t]` lists who is on in slot `t` (time order).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub slots: Vec<Vec<Segment>>,
}

impl Allocation {
    pub fn empty(horizon: usize) -> Self {
        Self {
            slots: vec![Vec::new(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.slots.len()
    }

    /// Power drawn in each slot.
    pub fn served_power(&self, pop: &Population) -> Vec<f64> {
        self.slots
            .iter()
            .map(|segs| {
                segs.iter()
                    .filter_map(|s| pop.class(s.class).map(|c| c.power * s.interval.len()))
                    .sum()
            })
            .collect()
    }

    /// Number of slots serving point `x` of class `class`.
    pub fn count_at(&self, class: usize, x: f64) -> usize {
        self.slots
            .iter()
            .filter(|segs| {
                segs.iter()
                    .any(|s| s.class == class && s.interval.contains(x))
            })
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Every slot's power is used up exactly.
    Exact,
    /// Served power never exceeds the slot's supply.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    PowerExceeded {
        slot: usize,
        served: f64,
        available: f64,
    },
    PowerNotUsedUp {
        slot: usize,
        served: f64,
        available: f64,
    },
    DurationMismatch {
        class: usize,
        at: f64,
        served_slots: usize,
        required: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violation: Option<Violation>,
    pub served_power: Vec<f64>,
}

/// Checks per-slot power against `q` and per-consumer slot counts against the
/// required durations.
///
/// Slot counts are checked on every elementary piece between segment
/// breakpoints. Classes with zero power carry no load and are exempt from the
/// duration check.
pub fn validate_allocation(
    pop: &Population,
    alloc: &Allocation,
    q: &SupplyTimeProfile,
    mode: ValidationMode,
) -> Result<ValidationReport, ModelError> {
    if q.horizon() != pop.horizon {
        return Err(ModelError::HorizonMismatch {
            expected: pop.horizon,
            got: q.horizon(),
        });
    }
    if alloc.horizon() != pop.horizon {
        return Err(ModelError::HorizonMismatch {
            expected: pop.horizon,
            got: alloc.horizon(),
        });
    }
    for (slot, segs) in alloc.slots.iter().enumerate() {
        for seg in segs {
            let class = pop.class(seg.class).ok_or(ModelError::UnknownClass {
                slot,
                class: seg.class,
            })?;
            if !class.position.covers(&seg.interval) || seg.interval.end < seg.interval.start {
                return Err(ModelError::SegmentOutsideClass {
                    slot,
                    class: seg.class,
                    start: seg.interval.start,
                    end: seg.interval.end,
                });
            }
        }
        let mut sorted: Vec<&Segment> = segs.iter().collect();
        sorted.sort_by(|a, b| a.interval.start.total_cmp(&b.interval.start));
        if sorted
            .windows(2)
            .any(|w| w[1].interval.start < w[0].interval.end - POSITION_TOL)
        {
            return Err(ModelError::OverlappingSegments { slot });
        }
    }

    let served_power = alloc.served_power(pop);
    let fail = |violation| ValidationReport {
        passed: false,
        violation: Some(violation),
        served_power: served_power.clone(),
    };

    for (slot, (&served, &available)) in served_power.iter().zip(q.values()).enumerate() {
        if served > available + MASS_TOL {
            return Ok(fail(Violation::PowerExceeded {
                slot,
                served,
                available,
            }));
        }
        if mode == ValidationMode::Exact && (served - available).abs() > MASS_TOL {
            return Ok(fail(Violation::PowerNotUsedUp {
                slot,
                served,
                available,
            }));
        }
    }

    for class in pop.classes.iter().filter(|c| c.power > 0.0) {
        for piece in elementary_pieces(class, alloc) {
            let mid = 0.5 * (piece.start + piece.end);
            let served_slots = alloc.count_at(class.id, mid);
            if served_slots != class.duration {
                return Ok(fail(Violation::DurationMismatch {
                    class: class.id,
                    at: mid,
                    served_slots,
                    required: class.duration,
                }));
            }
        }
    }

    Ok(ValidationReport {
        passed: true,
        violation: None,
        served_power,
    })
}

/// Splits a class position at every segment endpoint that falls inside it.
fn elementary_pieces(class: &ConsumerClass, alloc: &Allocation) -> Vec<Interval> {
    let mut cuts = vec![class.position.start, class.position.end];
    for seg in alloc.slots.iter().flatten().filter(|s| s.class == class.id) {
        cuts.push(seg.interval.start);
        cuts.push(seg.interval.end);
    }
    cuts.retain(|&x| x >= class.position.start && x <= class.position.end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= POSITION_TOL);
    cuts.windows(2)
        .map(|w| Interval::new(w[0], w[1]))
        .filter(|i| !i.is_empty())
        .collect()
}
