//! Cache placement and robust secure delivery for layered video over
//! cooperative small cells with untrusted relays.

pub mod builder;
pub mod config;
pub mod delivery;
pub mod error;
pub mod gbd;
pub mod greedy;
pub mod harness;
pub mod milp;
pub mod placement;
pub mod scenario;

pub use error::{Error, Result};
