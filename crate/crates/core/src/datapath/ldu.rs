//! Single-precision LDU factorization and inversion without pivoting,
//! mirroring the staged hardware algorithm: decompose `A = L D U`, invert
//! the structured factors cheaply, multiply back `A^-1 = U^-1 D^-1 L^-1`.
//!
//! Every arithmetic step is explicit `f32`, matching the IEEE 754
//! single-precision datapath of the inversion block.

use nalgebra::{DMatrix, DVector};

use super::{DatapathError, DIV_CYCLES};

/// Pivot magnitude below which decomposition reports a singular matrix.
pub const DEFAULT_PIVOT_EPSILON: f32 = 1e-12;

/// Unit-triangular and diagonal factors of `A = L D U`.
#[derive(Debug, Clone, PartialEq)]
pub struct LduFactors {
    /// Unit lower-triangular factor.
    pub l: DMatrix<f32>,
    /// Diagonal of the middle factor.
    pub d: DVector<f32>,
    /// Unit upper-triangular factor.
    pub u: DMatrix<f32>,
}

impl LduFactors {
    /// `L * D * U` evaluated in double precision, for residual checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.l.map(|x| x as f64);
        let u = self.u.map(|x| x as f64);
        let d = DMatrix::from_diagonal(&self.d.map(|x| x as f64));
        l * d * u
    }
}

/// Sequential operation tally; cycle cost is `macs + DIV_CYCLES * divs`.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct OpCount {
    pub macs: u64,
    pub divs: u64,
}

impl OpCount {
    pub fn cycles(&self) -> u64 {
        self.macs + DIV_CYCLES * self.divs
    }
}

fn decompose_counted(
    a: &DMatrix<f32>,
    eps_pivot: f32,
    ops: &mut OpCount,
) -> Result<LduFactors, DatapathError> {
    assert_eq!(a.nrows(), a.ncols(), "LDU requires a square matrix");
    let n = a.nrows();
    let mut l = DMatrix::<f32>::identity(n, n);
    let mut u = DMatrix::<f32>::identity(n, n);
    let mut d = DVector::<f32>::zeros(n);

    for k in 0..n {
        let mut s: f32 = 0.0;
        for m in 0..k {
            s += l[(k, m)] * d[m] * u[(m, k)];
            ops.macs += 2;
        }
        d[k] = a[(k, k)] - s;
        if d[k].abs() < eps_pivot {
            return Err(DatapathError::SingularMatrix {
                index: k,
                value: d[k] as f64,
                epsilon: eps_pivot as f64,
            });
        }
        for j in (k + 1)..n {
            let mut s: f32 = 0.0;
            for m in 0..k {
                s += l[(k, m)] * d[m] * u[(m, j)];
                ops.macs += 2;
            }
            u[(k, j)] = (a[(k, j)] - s) / d[k];
            ops.divs += 1;
        }
        for i in (k + 1)..n {
            let mut s: f32 = 0.0;
            for m in 0..k {
                s += l[(i, m)] * d[m] * u[(m, k)];
                ops.macs += 2;
            }
            l[(i, k)] = (a[(i, k)] - s) / d[k];
            ops.divs += 1;
        }
    }
    Ok(LduFactors { l, d, u })
}

/// Factor a full-rank square matrix as `A = L D U` without row
/// exchanges. Fails with the offending pivot index on (near-)singular
/// input rather than producing garbage.
pub fn ldu_decompose(a: &DMatrix<f32>, eps_pivot: f32) -> Result<LduFactors, DatapathError> {
    decompose_counted(a, eps_pivot, &mut OpCount::default())
}

pub(crate) fn ldu_invert_counted(
    a: &DMatrix<f32>,
    eps_pivot: f32,
) -> Result<(DMatrix<f32>, OpCount), DatapathError> {
    let mut ops = OpCount::default();
    let n = a.nrows();
    let factors = decompose_counted(a, eps_pivot, &mut ops)?;

    // Unit-triangular inverses by substitution: only the strict triangle
    // needs computing, the diagonal stays one.
    let mut l_inv = DMatrix::<f32>::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s: f32 = 0.0;
            for m in j..i {
                s += factors.l[(i, m)] * l_inv[(m, j)];
                ops.macs += 1;
            }
            l_inv[(i, j)] = -s;
        }
    }
    let mut u_inv = DMatrix::<f32>::identity(n, n);
    for j in (0..n).rev() {
        for i in (0..j).rev() {
            let mut s: f32 = 0.0;
            for m in (i + 1)..=j {
                s += factors.u[(i, m)] * u_inv[(m, j)];
                ops.macs += 1;
            }
            u_inv[(i, j)] = -s;
        }
    }
    let mut d_inv = DVector::<f32>::zeros(n);
    for k in 0..n {
        d_inv[k] = 1.0f32 / factors.d[k];
        ops.divs += 1;
    }

    // A^-1 = U^-1 (D^-1 L^-1): diagonal scaling then a full multiply.
    let mut dl = DMatrix::<f32>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            dl[(i, j)] = d_inv[i] * l_inv[(i, j)];
            ops.macs += 1;
        }
    }
    let mut inv = DMatrix::<f32>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s: f32 = 0.0;
            for m in 0..n {
                s += u_inv[(i, m)] * dl[(m, j)];
                ops.macs += 1;
            }
            inv[(i, j)] = s;
        }
    }
    Ok((inv, ops))
}

/// Invert a full-rank square matrix in single precision via the staged
/// LDU route. Propagates [`DatapathError::SingularMatrix`] from
/// decomposition.
pub fn ldu_invert(a: &DMatrix<f32>, eps_pivot: f32) -> Result<DMatrix<f32>, DatapathError> {
    ldu_invert_counted(a, eps_pivot).map(|(inv, _)| inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(n: usize, vals: &[f32]) -> DMatrix<f32> {
        DMatrix::from_row_slice(n, n, vals)
    }

    /// Random SPD matrix with a prescribed condition number.
    fn random_spd(seed: u64, cond: f64) -> DMatrix<f32> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let qr = g.qr();
        let q = qr.q();
        let eigs = DVector::from_fn(6, |i, _| (-(i as f64) / 5.0 * cond.ln()).exp());
        let a = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        ((&a + a.transpose()) * 0.5).map(|x| x as f32)
    }

    #[test]
    fn identity_factors_trivially() {
        let eye = DMatrix::<f32>::identity(6, 6);
        let f = ldu_decompose(&eye, DEFAULT_PIVOT_EPSILON).unwrap();
        assert_eq!(f.l, eye);
        assert_eq!(f.u, eye);
        assert!(f.d.iter().all(|&x| x == 1.0));
        let inv = ldu_invert(&eye, DEFAULT_PIVOT_EPSILON).unwrap();
        assert_eq!(inv, eye);
    }

    #[test]
    fn two_by_two_hand_factorization() {
        // [[4,3],[6,3]] eliminates exactly to dyadic factors
        let a = mat(2, &[4.0, 3.0, 6.0, 3.0]);
        let f = ldu_decompose(&a, DEFAULT_PIVOT_EPSILON).unwrap();
        assert_eq!(f.l, mat(2, &[1.0, 0.0, 1.5, 1.0]));
        assert_eq!(f.d, DVector::from_row_slice(&[4.0, -1.5]));
        assert_eq!(f.u, mat(2, &[1.0, 0.75, 0.0, 1.0]));
        let rec = f.reconstruct();
        assert!((rec - a.map(|x| x as f64)).amax() < 1e-12);
    }

    #[test]
    fn two_by_two_inverse_matches_adjugate() {
        let a = mat(2, &[4.0, 3.0, 6.0, 3.0]);
        let inv = ldu_invert(&a, DEFAULT_PIVOT_EPSILON).unwrap();
        assert!((inv[(0, 0)] - -0.5).abs() < 1e-6);
        assert!((inv[(0, 1)] - 0.5).abs() < 1e-6);
        assert!((inv[(1, 0)] - 1.0).abs() < 1e-6);
        assert!((inv[(1, 1)] - (-2.0 / 3.0)).abs() < 1e-6);
        let prod = a.map(|x| x as f64) * inv.map(|x| x as f64);
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-6);
    }

    #[test]
    fn singular_matrix_names_failing_pivot() {
        let a = mat(2, &[0.0, 1.0, 1.0, 0.0]); // zero leading pivot
        match ldu_decompose(&a, DEFAULT_PIVOT_EPSILON) {
            Err(DatapathError::SingularMatrix { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
        // rank-1 outer product fails deeper in
        let v = DVector::from_row_slice(&[1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let rank1 = &v * v.transpose();
        assert!(matches!(
            ldu_invert(&rank1, DEFAULT_PIVOT_EPSILON),
            Err(DatapathError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn op_count_depends_only_on_dimension() {
        let (_, ops_a) = ldu_invert_counted(&random_spd(1, 10.0), DEFAULT_PIVOT_EPSILON).unwrap();
        let (_, ops_b) = ldu_invert_counted(&random_spd(2, 900.0), DEFAULT_PIVOT_EPSILON).unwrap();
        assert_eq!(ops_a.macs, ops_b.macs);
        assert_eq!(ops_a.divs, ops_b.divs);
        assert!(ops_a.cycles() > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spd_reconstruction_residual(seed in 0u64..5000, log_cond in 0.0f64..3.0) {
            let a = random_spd(seed, 10f64.powf(log_cond));
            let f = ldu_decompose(&a, DEFAULT_PIVOT_EPSILON).unwrap();
            let a64 = a.map(|x| x as f64);
            let rel = (f.reconstruct() - &a64).amax() / a64.amax();
            prop_assert!(rel < 1e-5, "relative reconstruction error {rel}");
        }

        #[test]
        fn spd_inversion_residual(seed in 0u64..5000, log_cond in 0.0f64..3.0) {
            let a = random_spd(seed, 10f64.powf(log_cond));
            let inv = ldu_invert(&a, DEFAULT_PIVOT_EPSILON).unwrap();
            let resid = (a.map(|x| x as f64) * inv.map(|x| x as f64)
                - DMatrix::<f64>::identity(6, 6))
            .amax();
            prop_assert!(resid < 1e-4, "inversion residual {resid}");
        }
    }
}
