//! Storage-cost analysis for multi-version coded storage with local side
//! information.
//!
//! Servers on a ring each hold a subset of `nu` versions and see the states
//! of their `h` neighbours on either side. An allocation rule decides, from
//! that view alone, how many MDS-coded symbols of each version to store, and
//! any `c_R` servers must be able to decode a version at least as new as the
//! latest one that reached `c_W` servers.

pub mod allocation;
pub mod bounds;
pub mod codec;
pub mod error;
pub mod model;
pub mod verifier;

pub use allocation::{Allocation, AllocationRule, Scheme};
pub use error::{DecodeError, Error, Result};
pub use model::{Params, SideView, SystemState, VersionId, VersionSet};
