//! Energy-optimal periodic spectrum sensing for remote Kalman state
//! estimation over a shared wireless channel.

pub mod channel;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod optimizer;
pub mod sensing;
pub mod simkit;

pub use error::{Error, Result};
