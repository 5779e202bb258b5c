//! Aircraft conflict resolution by speed, heading and flight-level control.
//!
//! The crate covers the separation geometry ([`geometry`]), model containers
//! ([`model`]), a self-contained convex QP and branch-and-bound engine
//! ([`solver`]), the flight-level decomposition ([`fl`]), benchmark instance
//! generators ([`instances`]) and the experiment harness ([`bench`]).

pub mod geometry;
pub mod bench;
pub mod fl;
pub mod instances;
pub mod model;
pub mod solver;
