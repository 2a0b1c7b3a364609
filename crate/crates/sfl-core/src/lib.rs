//! Submodular facility location toolkit.
//!
//! Clients must each be assigned to a facility; the objective is the sum of
//! metric connection costs and, per facility, a monotone submodular opening
//! cost over the set of clients it serves. This crate provides:
//!
//! * submodular oracle families and Lovasz extensions ([`oracle`]),
//! * dense validated metrics and instance generators/reductions ([`instance`], [`metric`]),
//! * the configuration LP with explicit columns or column generation ([`lp`]),
//! * sampling-based partial rounding ([`sampling`]),
//! * randomized low-stretch hierarchical tree embedding ([`embed`]),
//! * descendant-leaf assignment rounding on trees ([`dla`]),
//! * greedy/exact baselines ([`baselines`]),
//! * and the end-to-end solve pipeline plus benchmarking ([`pipeline`]).
//!
//! All randomized components take explicit 64-bit seeds and are bit-for-bit
//! reproducible for a fixed seed.

pub mod audit;
pub mod baselines;
pub mod dla;
pub mod embed;
pub mod error;
pub mod instance;
pub mod lp;
pub mod metric;
pub mod oracle;
pub mod pipeline;
pub mod sampling;
pub mod set;
pub mod tol;

pub use error::{Error, Result};
pub use set::ClientSet;
