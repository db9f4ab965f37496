//! Behavioral simulator and numerical library for an FPGA rate-estimation
//! core driven by interferometric ToF phase-shift measurements.
//!
//! The crate covers the full loop the embedded system runs:
//!
//! - [`fixed`] — bit-exact 32-bit fixed-point scalars and matrices with
//!   saturating, round-to-nearest-even arithmetic;
//! - [`sensor`] — synthesis of phase-difference measurement frames from
//!   rigid-body trajectories over the bench beacon geometry;
//! - [`estimator`] — the double-precision weighted least-squares
//!   reference solution;
//! - [`datapath`] — behavioral models of the fabric compute blocks
//!   (transpose, systolic multiply, single-precision LDU inversion,
//!   MAC matrix-vector multiply) with per-block cycle accounting;
//! - [`bus`] — the software-accessible register file and the four-state
//!   control machine in front of the pipeline;
//! - [`harness`] — scenario configs, the hardware-vs-software comparison
//!   runner and CSV/JSON report emission.

pub mod bus;
pub mod datapath;
pub mod estimator;
pub mod fixed;
pub mod harness;
pub mod sensor;
