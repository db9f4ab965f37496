//! Behavioral models of the programmable-logic compute blocks — matrix
//! transpose, systolic-array multiply, single-precision LDU inversion and
//! MAC matrix-vector multiply — composed into the weighted least-squares
//! pipeline, with per-block cycle accounting.

mod blocks;
mod ldu;
mod pipeline;

pub use blocks::{matvec, systolic_matmul, transpose};
pub use ldu::{ldu_decompose, ldu_invert, LduFactors, DEFAULT_PIVOT_EPSILON};
pub(crate) use pipeline::run_blocks;
pub use pipeline::{
    descale_estimate, hw_wls_pipeline, hw_wls_pipeline_traced, FixedProblem, PipelineOutput,
    ScalingScheme, StageDump, DEFAULT_CLOCK_HZ, DEFAULT_Y_SCALE,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Extra cycles charged per systolic pass for input skew registers and
/// output drain.
pub const SYSTOLIC_PIPELINE_FILL: u64 = 4;

/// Cycles charged per single-precision division in the inversion block.
pub const DIV_CYCLES: u64 = 16;

#[derive(Debug, Error)]
pub enum DatapathError {
    #[error("dimension mismatch: {left_rows}x{left_cols} against {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix is singular at pivot {index}: |{value:e}| < {epsilon:e}")]
    SingularMatrix {
        index: usize,
        value: f64,
        epsilon: f64,
    },
    #[error("hardware pipeline requires a {expected}x{expected} system, got {rows}x{cols}")]
    WrongProblemShape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
}

/// Deterministic cycle accounting for one pipeline invocation. Counts
/// depend only on matrix dimensions, never on data values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    per_block: BTreeMap<String, u64>,
    total: u64,
    /// Assumed PL clock used when converting counts to wall time.
    clock_hz: f64,
}

impl CycleReport {
    pub fn new(clock_hz: f64) -> Self {
        CycleReport {
            per_block: BTreeMap::new(),
            total: 0,
            clock_hz,
        }
    }

    pub fn charge(&mut self, block: &str, cycles: u64) {
        *self.per_block.entry(block.to_owned()).or_insert(0) += cycles;
        self.total += cycles;
    }

    pub fn per_block(&self) -> &BTreeMap<String, u64> {
        &self.per_block
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_hz
    }

    /// Wall-time estimate at the assumed clock, in microseconds.
    pub fn micros(&self) -> f64 {
        self.total as f64 / self.clock_hz * 1e6
    }
}

impl Default for CycleReport {
    fn default() -> Self {
        CycleReport::new(DEFAULT_CLOCK_HZ)
    }
}
