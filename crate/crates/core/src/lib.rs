//! Desk-scale laboratory for fast growth sequences, forged random graph
//! levels, lazy tree parameters and the Boolean-algebra constructions built
//! on top of them.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`] - exact arithmetic for fast sequences, including
//!   exponent-form numbers whose exponents are themselves too large to
//!   materialize.
//! * [`graphforge`] - seeded sampling and exhaustive verification of the
//!   covering / degree properties a good graph level must satisfy.
//! * [`parameter`] - lazy tree pairs with a level relation driven by the
//!   forged graphs, plus the small worked fixture used as golden data.
//! * [`typecheck`] - consistency of type queries over a parameter, in
//!   greedy and exhaustive modes.
//! * [`setcomb`] - sunflower extraction, independent families of level
//!   functions, and ideal membership at desk scale.
//! * [`boolalg`] - finite Boolean algebras with partition structure,
//!   possibility patterns, free extensions and the collapse-system
//!   extension.

pub mod boolalg;
pub mod graphforge;
pub mod numerics;
pub mod parameter;
pub mod setcomb;
pub mod typecheck;

use thiserror::Error;

/// Crate-wide error type.
///
/// `Capacity` is reserved for inputs that exceed a documented desk-scale
/// budget; it is never used to mask a verified negative answer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("universe mismatch: {0}")]
    UniverseMismatch(String),
    #[error("forge exhausted after {retries} retries at level {level}")]
    ForgeExhausted { level: usize, retries: usize },
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
