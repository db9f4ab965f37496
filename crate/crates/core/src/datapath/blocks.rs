//! Fixed-point compute blocks: streaming transpose, systolic-array
//! matrix multiply and MAC matrix-vector multiply.
//!
//! All multiplies share one MAC discipline: exact 64-bit raw products
//! accumulated full-width, a single round-to-nearest-even shift at
//! writeback, then saturation. The systolic model is therefore
//! bit-identical to a naive triple loop with the same discipline.

use crate::fixed::{mac_writeback, FixedMatrix, OverflowFlags};

use super::{DatapathError, SYSTOLIC_PIPELINE_FILL};

/// Streaming transpose: one element per cycle through the reshuffle
/// buffer, so `rows * cols` cycles.
pub fn transpose(m: &FixedMatrix) -> (FixedMatrix, u64) {
    (m.transposed(), (m.rows() * m.cols()) as u64)
}

/// Wavefront latency of an `rows x cols` systolic pass over an inner
/// dimension, plus pipeline fill.
fn systolic_cycles(rows: usize, cols: usize, inner: usize) -> u64 {
    (rows + cols + inner - 2) as u64 + SYSTOLIC_PIPELINE_FILL
}

/// Systolic-array matrix multiply.
///
/// Emulates the 2-D mesh of processing elements: operand rows stream in
/// from the left and operand columns from the top, skewed one cycle per
/// mesh index, while each element multiplies and accumulates what flows
/// past. Accumulators hold exact products; the single writeback rounding
/// happens when results drain.
#[track_caller]
pub fn systolic_matmul(
    a: &FixedMatrix,
    b: &FixedMatrix,
    flags: &mut OverflowFlags,
) -> Result<(FixedMatrix, u64), DatapathError> {
    assert_eq!(a.fmt(), b.fmt(), "fixed-point format mismatch");
    if a.cols() != b.rows() {
        return Err(DatapathError::DimensionMismatch {
            left_rows: a.rows(),
            left_cols: a.cols(),
            right_rows: b.rows(),
            right_cols: b.cols(),
        });
    }
    let (rows, inner, cols) = (a.rows(), a.cols(), b.cols());

    let mut acc = vec![0i128; rows * cols];
    let mut a_reg = vec![0i32; rows * cols];
    let mut b_reg = vec![0i32; rows * cols];
    let wavefront = rows + cols + inner - 2;
    for t in 0..wavefront {
        let mut a_next = vec![0i32; rows * cols];
        let mut b_next = vec![0i32; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                a_next[i * cols + j] = if j == 0 {
                    // row i of A enters its lane skewed by i cycles
                    if t >= i && t - i < inner {
                        a.raw_at(i, t - i)
                    } else {
                        0
                    }
                } else {
                    a_reg[i * cols + j - 1]
                };
                b_next[i * cols + j] = if i == 0 {
                    if t >= j && t - j < inner {
                        b.raw_at(t - j, j)
                    } else {
                        0
                    }
                } else {
                    b_reg[(i - 1) * cols + j]
                };
            }
        }
        for idx in 0..rows * cols {
            acc[idx] += a_next[idx] as i128 * b_next[idx] as i128;
        }
        a_reg = a_next;
        b_reg = b_next;
    }

    let mut out = FixedMatrix::zeros(rows, cols, a.fmt());
    for i in 0..rows {
        for j in 0..cols {
            out.set_raw(i, j, mac_writeback(acc[i * cols + j], a.fmt(), flags));
        }
    }
    Ok((out, systolic_cycles(rows, cols, inner)))
}

/// MAC matrix-vector multiply over time-aligned streams; same writeback
/// discipline as the systolic block, so it matches one column of a
/// systolic pass bit for bit.
#[track_caller]
pub fn matvec(
    m: &FixedMatrix,
    y: &FixedMatrix,
    flags: &mut OverflowFlags,
) -> Result<(FixedMatrix, u64), DatapathError> {
    assert_eq!(m.fmt(), y.fmt(), "fixed-point format mismatch");
    if y.cols() != 1 || m.cols() != y.rows() {
        return Err(DatapathError::DimensionMismatch {
            left_rows: m.rows(),
            left_cols: m.cols(),
            right_rows: y.rows(),
            right_cols: y.cols(),
        });
    }
    let mut out = FixedMatrix::zeros(m.rows(), 1, m.fmt());
    for i in 0..m.rows() {
        let mut acc = 0i128;
        for k in 0..m.cols() {
            acc += m.raw_at(i, k) as i128 * y.raw_at(k, 0) as i128;
        }
        out.set_raw(i, 0, mac_writeback(acc, m.fmt(), flags));
    }
    Ok((out, systolic_cycles(m.rows(), 1, m.cols())))
}
