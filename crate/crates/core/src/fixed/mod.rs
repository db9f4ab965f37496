//! Bit-exact 32-bit two's-complement fixed-point arithmetic with a
//! configurable Q-format, plus dense matrices of such values.
//!
//! Every precision-losing step (real-to-fixed conversion, multiply
//! writeback, MAC writeback) rounds to nearest even and saturates to the
//! 32-bit range instead of wrapping. Saturation is recorded in a
//! caller-owned [`OverflowFlags`] so that scaling failures are observable
//! rather than silent.

mod matrix;
mod scalar;

pub use matrix::FixedMatrix;
pub use scalar::{Fixed32, OverflowFlags, QFormat, QFormatError};

/// Round-to-nearest-even right shift of a wide accumulator.
///
/// Interprets `value` as a two's-complement integer scaled by `2^shift`
/// and returns the nearest integer, ties to even. `shift` must be > 0.
pub(crate) fn rne_shift(value: i128, shift: u32) -> i128 {
    debug_assert!(shift > 0 && shift < 127);
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && (floor & 1) == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Clamp a wide value to the signed 32-bit range, flagging saturation.
pub(crate) fn saturate_i32(value: i128, flags: &mut OverflowFlags) -> i32 {
    if value > i32::MAX as i128 {
        flags.record_saturation();
        i32::MAX
    } else if value < i32::MIN as i128 {
        flags.record_saturation();
        i32::MIN
    } else {
        value as i32
    }
}

/// Single MAC writeback: scale a raw `2^(2f)` accumulator back to `2^f`
/// with one round-to-nearest-even, then saturate to 32 bits.
pub(crate) fn mac_writeback(acc: i128, fmt: QFormat, flags: &mut OverflowFlags) -> i32 {
    saturate_i32(rne_shift(acc, fmt.frac_bits() as u32), flags)
}
