//! Coordinated forward and real-time multi-period electricity market clearing.
//!
//! The forward market clears the whole operating day once and publishes
//! schedules, prices and the shadow prices of its intertemporal constraints.
//! The real-time market then rolls a short window across the day: each
//! window is scheduled against realized conditions with the forward schedule
//! as a terminal anchor, and priced with the forward shadow prices standing
//! in for the constraints that cross the window edges.
//!
//! Module map:
//! - [`lp`]: LP representation and a simplex solver that returns duals.
//! - [`model`]: resources, horizons and the program assembler.
//! - [`forward`]: forward clearing and its equilibrium checks.
//! - [`realtime`]: the rolling scheduling/pricing engine.
//! - [`schemes`]: the comparison pricing schemes behind one interface.
//! - [`settlement`]: multi-settlement ledger, surpluses, LOC, value-function cuts.
//! - [`scenario`], [`experiment`], [`verify`]: scenario files, batch runs and
//!   the property suite.

pub mod experiment;
pub mod forward;
pub mod lp;
pub mod model;
pub mod realtime;
pub mod scenario;
pub mod schemes;
pub mod settlement;
pub mod verify;
