//! Robot illusions: one multi-robot system reproducing what another's robots
//! would observe, plus the example systems that exercise the idea.

pub mod caravan;
pub mod disks;
pub mod error;
pub mod illusion;
pub mod rng;
pub mod squeeze;
pub mod system;

pub use error::{Error, Result};
