//! The least-squares pipeline: transpose, two systolic multiplies, the
//! single-precision inversion bracketed by format conversions, one more
//! multiply and the final matrix-vector product, then the analytic
//! de-scale back to physical rates.

use std::fmt;

use nalgebra::DMatrix;

use crate::estimator::{EstimationProblem, RateEstimate, SensorConstants, CHANNELS};
use crate::fixed::{FixedMatrix, OverflowFlags, QFormat};

use super::blocks::{matvec, systolic_matmul, transpose};
use super::ldu::ldu_invert_counted;
use super::{CycleReport, DatapathError, DEFAULT_PIVOT_EPSILON};

/// Assumed programmable-logic clock for wall-time conversion (Hz).
pub const DEFAULT_CLOCK_HZ: f64 = 100e6;

/// Default pre-scale applied to the measurement vector before
/// quantization; 2^10 lifts millirad-per-second phase rates well above
/// the Q15.16 resolution floor.
pub const DEFAULT_Y_SCALE: f64 = 1024.0;

/// Diagonal pre-scales for the measurement matrix columns and the
/// measurement vector, with the matching analytic de-scale. Scaling the
/// data into the 32 available bits is what keeps quantization error
/// small, so the scheme is explicit and configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingScheme {
    h_scales: [f64; CHANNELS],
    y_scale: f64,
}

impl ScalingScheme {
    /// No-op scaling.
    pub fn identity() -> Self {
        ScalingScheme {
            h_scales: [1.0; CHANNELS],
            y_scale: 1.0,
        }
    }

    pub fn explicit(h_scales: [f64; CHANNELS], y_scale: f64) -> Self {
        ScalingScheme { h_scales, y_scale }
    }

    /// Default policy: normalize each column of `H` to unit norm and
    /// scale the measurement vector by `y_scale`.
    pub fn unit_columns(problem: &EstimationProblem, y_scale: f64) -> Self {
        let mut h_scales = [1.0; CHANNELS];
        for (j, scale) in h_scales.iter_mut().enumerate() {
            let norm = problem.h.column(j).norm();
            if norm > f64::MIN_POSITIVE {
                *scale = 1.0 / norm;
            }
        }
        ScalingScheme { h_scales, y_scale }
    }

    pub fn h_scales(&self) -> &[f64; CHANNELS] {
        &self.h_scales
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    /// Per-channel gain that maps the scaled fixed-point solution back to
    /// physical rates: `lambda/4pi * h_scale_j / y_scale`.
    pub fn descale_gains(&self, constants: &SensorConstants) -> [f64; CHANNELS] {
        std::array::from_fn(|j| constants.lambda_over_4pi() * self.h_scales[j] / self.y_scale)
    }
}

impl Default for ScalingScheme {
    fn default() -> Self {
        ScalingScheme {
            h_scales: [1.0; CHANNELS],
            y_scale: DEFAULT_Y_SCALE,
        }
    }
}

/// The stacked system quantized for the hardware path: pre-scaled `H`,
/// weight `W` and measurement vector, all in one Q-format.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedProblem {
    pub h: FixedMatrix,
    pub w: FixedMatrix,
    pub y: FixedMatrix,
}

impl FixedProblem {
    /// Apply the scaling scheme and quantize. The hardware core is a
    /// fixed 6x6 implementation, so larger stacked systems are rejected.
    pub fn encode(
        problem: &EstimationProblem,
        scheme: &ScalingScheme,
        fmt: QFormat,
    ) -> Result<(FixedProblem, OverflowFlags), DatapathError> {
        let n = problem.h.nrows();
        if n != CHANNELS || problem.h.ncols() != CHANNELS {
            return Err(DatapathError::WrongProblemShape {
                expected: CHANNELS,
                rows: n,
                cols: problem.h.ncols(),
            });
        }
        let mut flags = OverflowFlags::default();
        let scaled_h: Vec<f64> = (0..n)
            .flat_map(|i| (0..CHANNELS).map(move |j| problem.h[(i, j)] * scheme.h_scales[j]))
            .collect();
        let h = FixedMatrix::from_reals(n, CHANNELS, &scaled_h, fmt, &mut flags);
        let w_vals: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| problem.w[(i, j)]))
            .collect();
        let w = FixedMatrix::from_reals(n, n, &w_vals, fmt, &mut flags);
        let scaled_y: Vec<f64> = problem.y_tilde.iter().map(|v| v * scheme.y_scale).collect();
        let y = FixedMatrix::col_from_reals(&scaled_y, fmt, &mut flags);
        Ok((FixedProblem { h, w, y }, flags))
    }

    pub fn fmt(&self) -> QFormat {
        self.h.fmt()
    }
}

/// Raw words of one pipeline stage output, for RTL cross-validation.
/// Fixed-point stages carry two's-complement words, the inversion stage
/// carries IEEE 754 single-precision bit patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDump {
    pub stage: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub words: Vec<u32>,
}

impl StageDump {
    fn from_matrix(stage: &'static str, m: &FixedMatrix) -> Self {
        StageDump {
            stage,
            rows: m.rows(),
            cols: m.cols(),
            words: m.raw_data().iter().map(|&w| w as u32).collect(),
        }
    }

    fn from_f32(stage: &'static str, m: &DMatrix<f32>) -> Self {
        StageDump {
            stage,
            rows: m.nrows(),
            cols: m.ncols(),
            words: m
                .transpose()
                .as_slice()
                .iter()
                .map(|x| x.to_bits())
                .collect(),
        }
    }
}

impl fmt::Display for StageDump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage {} {}x{}", self.stage, self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:08x}", self.words[i * self.cols + j]))
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Everything one pipeline pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// De-scaled estimate in physical units.
    pub estimate: RateEstimate,
    /// Fixed-point solution words as they sit in the result registers.
    pub raw_estimate: [i32; CHANNELS],
    pub cycles: CycleReport,
    pub overflow: OverflowFlags,
}

/// The programmable-logic portion: everything between the register file
/// and the result window, in fixed point except the inversion core.
pub(crate) fn run_blocks(
    problem: &FixedProblem,
    mut trace: Option<&mut Vec<StageDump>>,
) -> Result<([i32; CHANNELS], CycleReport, OverflowFlags), DatapathError> {
    let fmt = problem.fmt();
    let mut flags = OverflowFlags::default();
    let mut cycles = CycleReport::new(DEFAULT_CLOCK_HZ);
    let record = |dump: StageDump, trace: &mut Option<&mut Vec<StageDump>>| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(dump);
        }
    };

    record(StageDump::from_matrix("input_h", &problem.h), &mut trace);
    record(StageDump::from_matrix("input_w", &problem.w), &mut trace);
    record(StageDump::from_matrix("input_y", &problem.y), &mut trace);

    let (ht, c) = transpose(&problem.h);
    cycles.charge("transpose", c);
    record(StageDump::from_matrix("h_transpose", &ht), &mut trace);

    let (htw, c) = systolic_matmul(&ht, &problem.w, &mut flags)?;
    cycles.charge("matmul_ht_w", c);
    record(StageDump::from_matrix("matmul_ht_w", &htw), &mut trace);

    let (normal, c) = systolic_matmul(&htw, &problem.h, &mut flags)?;
    cycles.charge("matmul_htw_h", c);
    record(StageDump::from_matrix("matmul_htw_h", &normal), &mut trace);

    // fixed -> single precision at the inversion module input port
    let n = normal.rows();
    let reals = normal.to_reals();
    let normal_f32 = DMatrix::<f32>::from_fn(n, n, |i, j| reals[i * n + j] as f32);
    cycles.charge("fixed_to_float", (n * n) as u64);

    let (inverse, ops) = ldu_invert_counted(&normal_f32, DEFAULT_PIVOT_EPSILON)?;
    cycles.charge("ldu_invert", ops.cycles());
    record(StageDump::from_f32("ldu_invert", &inverse), &mut trace);

    // single precision -> fixed at the output port
    let mut inv_vals = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            inv_vals.push(inverse[(i, j)] as f64);
        }
    }
    let inverse_fx = FixedMatrix::from_reals(n, n, &inv_vals, fmt, &mut flags);
    cycles.charge("float_to_fixed", (n * n) as u64);
    record(
        StageDump::from_matrix("float_to_fixed", &inverse_fx),
        &mut trace,
    );

    let (gain, c) = systolic_matmul(&inverse_fx, &htw, &mut flags)?;
    cycles.charge("matmul_inv_htw", c);
    record(StageDump::from_matrix("matmul_inv_htw", &gain), &mut trace);

    let (solution, c) = matvec(&gain, &problem.y, &mut flags)?;
    cycles.charge("matvec_estimate", c);
    record(
        StageDump::from_matrix("matvec_estimate", &solution),
        &mut trace,
    );

    let raw: [i32; CHANNELS] = std::array::from_fn(|i| solution.raw_at(i, 0));
    Ok((raw, cycles, flags))
}

/// Conversion-layer de-scale: raw solution words back to physical rates.
pub fn descale_estimate(
    raw: &[i32; CHANNELS],
    fmt: QFormat,
    scheme: &ScalingScheme,
    constants: &SensorConstants,
) -> RateEstimate {
    let gains = scheme.descale_gains(constants);
    let x: Vec<f64> = raw
        .iter()
        .zip(gains)
        .map(|(&r, g)| r as f64 * fmt.resolution() * g)
        .collect();
    RateEstimate::from_vector(&nalgebra::Vector6::from_column_slice(&x))
}

/// Run the full hardware-emulated weighted least-squares pass.
pub fn hw_wls_pipeline(
    problem: &FixedProblem,
    scheme: &ScalingScheme,
    constants: &SensorConstants,
) -> Result<PipelineOutput, DatapathError> {
    let (raw, cycles, overflow) = run_blocks(problem, None)?;
    Ok(PipelineOutput {
        estimate: descale_estimate(&raw, problem.fmt(), scheme, constants),
        raw_estimate: raw,
        cycles,
        overflow,
    })
}

/// As [`hw_wls_pipeline`], also collecting per-stage raw dumps.
pub fn hw_wls_pipeline_traced(
    problem: &FixedProblem,
    scheme: &ScalingScheme,
    constants: &SensorConstants,
) -> Result<(PipelineOutput, Vec<StageDump>), DatapathError> {
    let mut trace = Vec::new();
    let (raw, cycles, overflow) = run_blocks(problem, Some(&mut trace))?;
    Ok((
        PipelineOutput {
            estimate: descale_estimate(&raw, problem.fmt(), scheme, constants),
            raw_estimate: raw,
            cycles,
            overflow,
        },
        trace,
    ))
}
