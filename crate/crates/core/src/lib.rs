pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod netsim;
pub mod planner;
pub mod swarm;

pub use error::{Error, Result};
