//! Temporal-waypoint navigation for a multi-UAV slung-payload system.
//!
//! The library simulates a rigid payload carried by N UAVs through stiff rods
//! and drives it through timed waypoint missions expressed in a fragment of
//! signal temporal logic. Mission formulas are compiled into time-varying
//! control barrier functions, composed smoothly, and enforced at 50 Hz by a
//! small convex QP that filters a desired payload acceleration; exact feedback
//! linearization turns that acceleration into per-UAV lift forces.
//!
//! Module layout mirrors the pipeline:
//! - [`rigid_body`]: multi-body dynamics, RK4 integration, rotation utilities
//! - [`linearize`]: payload-acceleration feedback linearization and force allocation
//! - [`stl`]: mission formula AST, parser, and offline monitor
//! - [`barrier`]: time-varying barrier synthesis and smooth composition
//! - [`qp`]: high-order barrier constraint assembly and the convex QP filter
//! - [`scenario`] / [`sim`] / [`output`]: config loading, the closed loop, and artifacts

pub mod barrier;
pub mod linearize;
pub mod output;
pub mod qp;
pub mod rigid_body;
pub mod scenario;
pub mod sim;
pub mod stl;

pub use rigid_body::{Mat3, Vec3};
