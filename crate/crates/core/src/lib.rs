//! Spike-traffic network-on-chip toolkit.
//!
//! * [`analytics`]: closed-form routing-memory and bandwidth bounds.
//! * [`topology`]: mesh, torus and tree router graphs.
//! * [`routing`]: XY and tree-multicast paths, routing-table accounting.
//! * [`traffic`]: Poisson, synchronized-burst and replayed spike workloads.
//! * [`engine`]: deterministic discrete-event simulation of spike packets.
//! * [`power`]: first-order compute/communication/static power breakdowns.
//! * [`config`]: the run configuration file consumed by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cli;
pub mod config;
pub mod engine;
pub mod power;
pub mod routing;
pub mod topology;
pub mod traffic;
