//! Review-incentive mechanism rewarding ratings that are both informative
//! (they move the consensus) and accurate (later ratings agree with them),
//! together with the agent-based simulator and equilibrium checks used to
//! study it.

pub mod belief;
pub mod error;
pub mod experiment;
pub mod incentive;
pub mod metrics;
pub mod nash;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
