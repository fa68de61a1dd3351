//! Anchor-based Byzantine ordered consensus.
//!
//! Nodes certify their own partial orders of client commands in a
//! hash-chained mempool, agree on which partial-order logs are final through
//! a consensus layer, and derive one total order deterministically from the
//! agreed logs with the anchor executor.

pub mod auth;
pub mod consensus;
pub mod encoding;
pub mod executor;
pub mod golden;
pub mod mempool;
pub mod metrics;
pub mod node;
pub mod simnet;
pub mod trace;
pub mod ts_order;
pub mod types;
pub mod wire;

pub use types::*;
