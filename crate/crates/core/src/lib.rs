//! Order-of-addition experimental designs.
//!
//! Orderings of `m` components are expanded to pair-wise ordering (PWO)
//! factors, scored by balance and efficiency measures against a candidate
//! set, and searched for D- or χ²-optimal fractions.

pub mod analysis;
pub mod candidates;
pub mod criteria;
pub mod error;
pub mod io;
pub mod isomorph;
pub mod linalg;
pub mod perm;
pub mod reference;
pub mod search;

pub use candidates::{CandidateSet, Constraint, ProcessFactor, ProcessSpec};
pub use criteria::{evaluate, CriteriaReport};
pub use error::{Error, Result};
pub use perm::{Design, Permutation, PwoMatrix, Run};
