//! Duration-differentiated (DD) energy services.
//!
//! A DD load needs a constant power `ℓ` for `h` time slots out of a horizon of
//! `T`, and does not care which slots. This crate covers the full pipeline for
//! a (discretized) continuum of such loads:
//!
//! * [`model`]: consumer classes, supply and demand duration curves, allocations
//!   and their validation.
//! * [`adequacy`]: majorization tests for exact and simple adequacy, Robin Hood
//!   transfers.
//! * [`scheduler`]: the causal Longest-Leftover-Duration-First allocator.
//! * [`procurement`]: minimum supplemental power when supply is inadequate.
//! * [`market`]: welfare maximization over mixed contract assignments and
//!   competitive-equilibrium prices.
//! * [`identical`]: closed-form equilibria for a population sharing one utility.
//! * [`spot`]: zero-profit prices in a spot market versus a DD forward market.
//! * [`scenario`]: JSON scenario ingestion.

pub mod adequacy;
pub mod identical;
pub mod lp;
pub mod market;
pub mod model;
pub mod numeric;
pub mod procurement;
pub mod scenario;
pub mod scheduler;
pub mod spot;
pub mod utility;

pub use model::{
    demand_profile, reserve_ratio, sort_supply, validate_allocation, Allocation, ClassSpec,
    ConsumerClass, DemandProfile, Interval, Population, Segment, SupplyProfile, SupplyTimeProfile,
    ValidationMode, ValidationReport,
};

/// Absolute tolerance for mass and power comparisons.
pub const MASS_TOL: f64 = 1e-9;

/// Tolerance on interval endpoints within `[0, 1]`.
pub const POSITION_TOL: f64 = 1e-12;

/// Crate-wide error, wrapping the per-module errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Adequacy(#[from] adequacy::AdequacyError),
    #[error(transparent)]
    Procurement(#[from] procurement::ProcurementError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Market(#[from] market::MarketError),
    #[error(transparent)]
    Identical(#[from] identical::IdenticalError),
    #[error(transparent)]
    Spot(#[from] spot::SpotError),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
}
