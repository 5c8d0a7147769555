//! Network split analysis for Raft leader election under packet loss.
//!
//! - [`numerics`]: dense matrix helpers and transience checks
//! - [`split_model`]: the absorbing chain of a follower's election counter and
//!   the split-time distribution it implies
//! - [`raft_sim`]: a discrete-event heartbeat simulator producing split samples
//! - [`stats`]: empirical CDFs, KS distance and summaries

pub mod error;
pub mod numerics;
pub mod raft_sim;
pub mod split_model;
pub mod stats;

pub use error::{Error, Result};
