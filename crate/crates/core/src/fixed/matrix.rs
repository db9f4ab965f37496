use std::fmt;

use super::{Fixed32, OverflowFlags, QFormat};

/// Dense row-major matrix of fixed-point words sharing one Q-format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedMatrix {
    rows: usize,
    cols: usize,
    fmt: QFormat,
    data: Vec<i32>,
}

impl FixedMatrix {
    pub fn zeros(rows: usize, cols: usize, fmt: QFormat) -> Self {
        FixedMatrix {
            rows,
            cols,
            fmt,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, fmt: QFormat, flags: &mut OverflowFlags) -> Self {
        let one = Fixed32::from_real(1.0, fmt, flags).raw();
        let mut m = FixedMatrix::zeros(n, n, fmt);
        for i in 0..n {
            m.set_raw(i, i, one);
        }
        m
    }

    /// Quantize a row-major slice of reals.
    ///
    /// Panics if `values.len() != rows * cols`.
    pub fn from_reals(
        rows: usize,
        cols: usize,
        values: &[f64],
        fmt: QFormat,
        flags: &mut OverflowFlags,
    ) -> Self {
        assert_eq!(values.len(), rows * cols, "element count mismatch");
        let data = values
            .iter()
            .map(|&x| Fixed32::from_real(x, fmt, flags).raw())
            .collect();
        FixedMatrix {
            rows,
            cols,
            fmt,
            data,
        }
    }

    /// Wrap raw words directly. Panics if `data.len() != rows * cols`.
    pub fn from_raw(rows: usize, cols: usize, fmt: QFormat, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), rows * cols, "element count mismatch");
        FixedMatrix {
            rows,
            cols,
            fmt,
            data,
        }
    }

    /// Column vector constructor.
    pub fn col_from_reals(values: &[f64], fmt: QFormat, flags: &mut OverflowFlags) -> Self {
        FixedMatrix::from_reals(values.len(), 1, values, fmt, flags)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fmt(&self) -> QFormat {
        self.fmt
    }

    pub fn raw_data(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Fixed32 {
        Fixed32::from_raw(self.raw_at(row, col), self.fmt)
    }

    pub fn raw_at(&self, row: usize, col: usize) -> i32 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.data[row * self.cols + col]
    }

    pub fn set_raw(&mut self, row: usize, col: usize, raw: i32) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.data[row * self.cols + col] = raw;
    }

    /// Exact conversion of every element to double precision, row-major.
    pub fn to_reals(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&raw| Fixed32::from_raw(raw, self.fmt).to_real())
            .collect()
    }

    /// Bit-exact transpose of the stored words.
    pub fn transposed(&self) -> FixedMatrix {
        let mut out = FixedMatrix::zeros(self.cols, self.rows, self.fmt);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set_raw(j, i, self.raw_at(i, j));
            }
        }
        out
    }
}

impl fmt::Display for FixedMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:08x}", self.raw_at(i, j) as u32)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: QFormat = QFormat::Q15_16;

    #[test]
    fn identity_has_unit_diagonal() {
        let mut flags = OverflowFlags::default();
        let m = FixedMatrix::identity(3, Q, &mut flags);
        assert_eq!(m.raw_at(0, 0), 65536);
        assert_eq!(m.raw_at(0, 1), 0);
        assert!(!flags.saturated());
    }

    #[test]
    fn transpose_definition() {
        let mut flags = OverflowFlags::default();
        let m = FixedMatrix::from_reals(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Q, &mut flags);
        let t = m.transposed();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        assert_eq!(t.to_reals(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn round_trips_through_reals() {
        let mut flags = OverflowFlags::default();
        let vals = [0.5, -0.25, 1.0, -1.0, 0.0, 3.75];
        let m = FixedMatrix::from_reals(2, 3, &vals, Q, &mut flags);
        assert_eq!(m.to_reals(), vals);
    }

    #[test]
    #[should_panic(expected = "element count mismatch")]
    fn from_raw_checks_length() {
        let _ = FixedMatrix::from_raw(2, 2, Q, vec![1, 2, 3]);
    }
}
