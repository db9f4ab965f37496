//! Double-precision reference implementation of the measurement model and
//! the weighted least-squares rate solution. This is the golden path the
//! fixed-point hardware model is judged against, so it uses numerically
//! robust double-precision factorizations throughout.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of velocity + angular-velocity channels being estimated.
pub const CHANNELS: usize = 6;

/// Condition-number ceiling beyond which the normal matrix is treated as
/// numerically singular.
const CONDITION_LIMIT: f64 = 1e14;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("direction vector {index} is not unit length (norm {norm})")]
    NonUnitDirection { index: usize, norm: f64 },
    #[error("normal matrix is singular or near-singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("covariance matrix is not positive definite")]
    BadCovariance,
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("invalid sensor constants: {0}")]
    BadConstants(&'static str),
}

/// Modulation and timing constants of the ToF ranging sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConstants {
    /// Modulation frequency of the laser source (Hz).
    pub f0: f64,
    /// Speed of light (m/s).
    pub c: f64,
    /// Sampling interval between consecutive phase measurements (s).
    pub dt: f64,
}

impl SensorConstants {
    pub fn new(f0: f64, c: f64, dt: f64) -> Result<Self, EstimatorError> {
        if f0.is_nan() || f0 <= 0.0 {
            return Err(EstimatorError::BadConstants("f0 must be positive"));
        }
        if c.is_nan() || c <= 0.0 {
            return Err(EstimatorError::BadConstants("c must be positive"));
        }
        if dt.is_nan() || dt <= 0.0 {
            return Err(EstimatorError::BadConstants("dt must be positive"));
        }
        Ok(SensorConstants { f0, c, dt })
    }

    /// Wavelength of the modulated carrier, `c / f0`.
    pub fn lambda(&self) -> f64 {
        self.c / self.f0
    }

    /// The `lambda / 4pi` gain that maps phase rate to radial velocity.
    pub fn lambda_over_4pi(&self) -> f64 {
        self.lambda() / (4.0 * std::f64::consts::PI)
    }
}

impl Default for SensorConstants {
    /// 10 MHz modulation, the speed of light rounded to 2.99e8 m/s, and a
    /// 1 kHz sampling rate.
    fn default() -> Self {
        SensorConstants {
            f0: 1.0e7,
            c: 2.99e8,
            dt: 1.0e-3,
        }
    }
}

/// The stacked weighted least-squares system: measurement matrix `H`
/// (n x 6, n >= 6), symmetric weight `W` (n x n) and the phase-rate
/// vector `y_tilde` (rad/s per measurement channel).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub h: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub y_tilde: DVector<f64>,
}

impl EstimationProblem {
    pub fn new(
        h: DMatrix<f64>,
        w: DMatrix<f64>,
        y_tilde: DVector<f64>,
    ) -> Result<Self, EstimatorError> {
        let n = h.nrows();
        if h.ncols() != CHANNELS {
            return Err(EstimatorError::DimensionMismatch(format!(
                "H must have {CHANNELS} columns, got {}",
                h.ncols()
            )));
        }
        if n < CHANNELS {
            return Err(EstimatorError::DimensionMismatch(format!(
                "H needs at least {CHANNELS} rows, got {n}"
            )));
        }
        if w.nrows() != n || w.ncols() != n {
            return Err(EstimatorError::DimensionMismatch(format!(
                "W must be {n}x{n}, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if y_tilde.len() != n {
            return Err(EstimatorError::DimensionMismatch(format!(
                "y_tilde must have length {n}, got {}",
                y_tilde.len()
            )));
        }
        let scale = w.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-9 * scale {
                    return Err(EstimatorError::DimensionMismatch(
                        "W must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(EstimationProblem { h, w, y_tilde })
    }

    /// Identity-weighted problem.
    pub fn unweighted(h: DMatrix<f64>, y_tilde: DVector<f64>) -> Result<Self, EstimatorError> {
        let n = h.nrows();
        EstimationProblem::new(h, DMatrix::identity(n, n), y_tilde)
    }

    /// Build the weight from a measurement error covariance, `W = Sigma^-1`.
    pub fn from_covariance(
        h: DMatrix<f64>,
        sigma: &DMatrix<f64>,
        y_tilde: DVector<f64>,
    ) -> Result<Self, EstimatorError> {
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(EstimatorError::BadCovariance)?;
        EstimationProblem::new(h, chol.inverse(), y_tilde)
    }
}

/// Estimated translational and angular velocity of the tracked base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Translational velocity (m/s).
    pub v_c: Vector3<f64>,
    /// Angular velocity (rad/s).
    pub omega: Vector3<f64>,
}

impl RateEstimate {
    pub fn zero() -> Self {
        RateEstimate {
            v_c: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        RateEstimate {
            v_c: Vector3::new(x[0], x[1], x[2]),
            omega: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn as_array(&self) -> [f64; CHANNELS] {
        [
            self.v_c.x,
            self.v_c.y,
            self.v_c.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
        ]
    }

    /// Channel label used in reports; order matches [`Self::as_array`].
    pub fn channel_name(channel: usize) -> &'static str {
        ["vx", "vy", "vz", "wx", "wy", "wz"][channel]
    }
}

/// Skew-symmetric cross-product matrix: `skew(v) * u == v x u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Calibrated direction vectors can carry a few percent of norm error;
/// anything past this is a data problem, not calibration slack.
pub(crate) const DIRECTION_NORM_TOLERANCE: f64 = 0.05;

/// Stack the measurement matrix: row i is `[r_i^T, -r_i^T skew(rho_i)]`.
///
/// Directions must be unit vectors within calibration slack; the slices
/// must have equal length of at least six entries.
pub fn build_h(
    directions: &[Vector3<f64>],
    displacements: &[Vector3<f64>],
) -> Result<DMatrix<f64>, EstimatorError> {
    if directions.len() != displacements.len() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "{} directions vs {} displacements",
            directions.len(),
            displacements.len()
        )));
    }
    if directions.len() < CHANNELS {
        return Err(EstimatorError::DimensionMismatch(format!(
            "need at least {CHANNELS} beacons, got {}",
            directions.len()
        )));
    }
    let mut h = DMatrix::zeros(directions.len(), CHANNELS);
    for (i, (r, rho)) in directions.iter().zip(displacements).enumerate() {
        let norm = r.norm();
        if (norm - 1.0).abs() > DIRECTION_NORM_TOLERANCE {
            return Err(EstimatorError::NonUnitDirection { index: i, norm });
        }
        let rot = -(r.transpose() * skew(rho));
        for j in 0..3 {
            h[(i, j)] = r[j];
            h[(i, 3 + j)] = rot[j];
        }
    }
    Ok(h)
}

/// Solve the weighted normal equations
/// `x = (lambda/4pi) (H^T W H)^-1 H^T W y_tilde` in double precision.
///
/// The normal matrix is factored with a pivoted-free Cholesky (it is
/// symmetric positive definite for any full-rank geometry); singular and
/// near-singular systems are rejected with a condition estimate rather
/// than solved.
pub fn wls_solve(
    problem: &EstimationProblem,
    constants: &SensorConstants,
) -> Result<RateEstimate, EstimatorError> {
    let htw = problem.h.transpose() * &problem.w;
    let normal = &htw * &problem.h;
    let rhs = &htw * &problem.y_tilde;

    let svd = normal.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(EstimatorError::SingularSystem { condition });
    }

    let chol = normal
        .cholesky()
        .ok_or(EstimatorError::SingularSystem { condition })?;
    let x = chol.solve(&rhs) * constants.lambda_over_4pi();
    Ok(RateEstimate::from_vector(&Vector6::from_column_slice(
        x.as_slice(),
    )))
}

/// Discrete range rate from one phase difference over one sampling
/// interval: `v_r = c / (4 pi f0) * dphi / dt`.
pub fn range_rate(dphi: f64, constants: &SensorConstants) -> f64 {
    constants.lambda_over_4pi() * dphi / constants.dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_directions() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.87264, 0.4977, 0.1367),
            Vector3::new(0.8927, -0.5082, 0.1304),
            Vector3::new(-0.0007, -0.9915, 0.1372),
            Vector3::new(-0.8586, -0.4957, 0.1391),
            Vector3::new(-0.8168, 0.4957, 0.1412),
            Vector3::new(0.0001, 0.9999, 0.1249),
        ]
    }

    fn grid_displacements() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(-0.5, -0.5, 0.0),
            Vector3::new(0.5, -0.5, 0.0),
            Vector3::new(0.5, 0.5, 0.0),
            Vector3::new(-0.5, 0.5, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ]
    }

    /// Forward model: phase rates for a known state over a geometry.
    fn forward_y(
        dirs: &[Vector3<f64>],
        rhos: &[Vector3<f64>],
        v: &Vector3<f64>,
        w: &Vector3<f64>,
        constants: &SensorConstants,
    ) -> DVector<f64> {
        let gain = 1.0 / constants.lambda_over_4pi();
        DVector::from_iterator(
            dirs.len(),
            dirs.iter()
                .zip(rhos)
                .map(|(r, rho)| gain * (v + w.cross(rho)).dot(r)),
        )
    }

    #[test]
    fn skew_definition() {
        let m = skew(&Vector3::new(1.0, 2.0, 3.0));
        let expect = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expect);
    }

    #[test]
    fn skew_cross_product_identity() {
        let e1 = Vector3::new(1.0, 0.0, 0.0);
        let e2 = Vector3::new(0.0, 1.0, 0.0);
        let e3 = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(skew(&e3) * e1, e2);
        let v = Vector3::new(0.3, -1.2, 2.5);
        assert_relative_eq!(skew(&v) * v, Vector3::zeros());
    }

    #[test]
    fn build_h_zero_displacement_row() {
        let dirs = vec![Vector3::new(0.0, 0.0, 1.0); 6];
        let rhos = vec![Vector3::zeros(); 6];
        let h = build_h(&dirs, &rhos).unwrap();
        assert_eq!(
            h.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn build_h_unit_displacement_row() {
        let mut dirs = vec![Vector3::new(0.0, 0.0, 1.0); 6];
        dirs[0] = Vector3::new(0.0, 0.0, 1.0);
        let mut rhos = vec![Vector3::zeros(); 6];
        rhos[0] = Vector3::new(1.0, 0.0, 0.0);
        let h = build_h(&dirs, &rhos).unwrap();
        assert_eq!(
            h.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0]
        );
    }

    #[test]
    fn build_h_table_geometry_full_rank() {
        let h = build_h(&table_directions(), &grid_displacements()).unwrap();
        let svd = h.svd(false, false);
        let cond = svd.singular_values.max() / svd.singular_values.min();
        assert!(cond.is_finite() && cond < 1e6, "condition {cond}");
    }

    #[test]
    fn build_h_rejects_non_unit_direction() {
        let mut dirs = table_directions();
        dirs[2] = Vector3::new(0.5, 0.5, 0.5);
        let err = build_h(&dirs, &grid_displacements()).unwrap_err();
        match err {
            EstimatorError::NonUnitDirection { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wls_zero_measurements_give_zero_estimate() {
        let h = build_h(&table_directions(), &grid_displacements()).unwrap();
        let problem = EstimationProblem::unweighted(h, DVector::zeros(6)).unwrap();
        let est = wls_solve(&problem, &SensorConstants::default()).unwrap();
        assert_eq!(est.as_array(), [0.0; 6]);
    }

    #[test]
    fn wls_recovers_forward_constructed_state() {
        let constants = SensorConstants::default();
        let dirs = table_directions();
        let rhos = grid_displacements();
        let v = Vector3::new(0.0, 0.0, 0.1);
        let w = Vector3::zeros();
        let y = forward_y(&dirs, &rhos, &v, &w, &constants);
        let h = build_h(&dirs, &rhos).unwrap();
        let problem = EstimationProblem::unweighted(h, y).unwrap();
        let est = wls_solve(&problem, &constants).unwrap();
        assert_relative_eq!(est.v_c, v, max_relative = 1e-9);
        assert!(est.omega.norm() < 1e-9);
    }

    #[test]
    fn wls_invariant_under_weight_scaling() {
        let constants = SensorConstants::default();
        let dirs = table_directions();
        let rhos = grid_displacements();
        let v = Vector3::new(0.02, -0.01, 0.1);
        let w = Vector3::new(0.0, 0.03, 0.05);
        let y = forward_y(&dirs, &rhos, &v, &w, &constants);
        let h = build_h(&dirs, &rhos).unwrap();

        let base = EstimationProblem::unweighted(h.clone(), y.clone()).unwrap();
        let scaled = EstimationProblem::new(h, DMatrix::identity(6, 6) * 7.25, y).unwrap();
        let a = wls_solve(&base, &constants).unwrap();
        let b = wls_solve(&scaled, &constants).unwrap();
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            assert_relative_eq!(*x, y, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn covariance_weights_invert_sigma() {
        let h = build_h(&table_directions(), &grid_displacements()).unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_row_slice(&[
            4.0, 1.0, 0.25, 1.0, 4.0, 0.0625,
        ]));
        let problem = EstimationProblem::from_covariance(h, &sigma, DVector::zeros(6)).unwrap();
        for i in 0..6 {
            assert_relative_eq!(problem.w[(i, i)], 1.0 / sigma[(i, i)], max_relative = 1e-12);
        }
        // a non-positive-definite covariance is rejected
        let bad =
            DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, -1.0, 1.0, 1.0, 1.0, 1.0]));
        let h = build_h(&table_directions(), &grid_displacements()).unwrap();
        assert!(matches!(
            EstimationProblem::from_covariance(h, &bad, DVector::zeros(6)),
            Err(EstimatorError::BadCovariance)
        ));
    }

    #[test]
    fn wls_rejects_parallel_beacons() {
        let dirs = vec![Vector3::new(0.0, 0.0, 1.0); 6];
        let rhos = vec![Vector3::zeros(); 6];
        let h = build_h(&dirs, &rhos).unwrap();
        let problem = EstimationProblem::unweighted(h, DVector::zeros(6)).unwrap();
        match wls_solve(&problem, &SensorConstants::default()) {
            Err(EstimatorError::SingularSystem { condition }) => {
                assert!(condition > CONDITION_LIMIT || condition.is_infinite());
            }
            other => panic!("expected SingularSystem, got {other:?}"),
        }
    }

    #[test]
    fn wls_supports_overdetermined_systems() {
        let constants = SensorConstants::default();
        let mut dirs = table_directions();
        let mut rhos = grid_displacements();
        dirs.push(Vector3::new(0.6, 0.0, 0.8));
        rhos.push(Vector3::new(0.3, -0.2, 0.0));
        let v = Vector3::new(0.01, 0.02, 0.1);
        let w = Vector3::new(0.0, 0.0, 0.05);
        let y = forward_y(&dirs, &rhos, &v, &w, &constants);
        let h = build_h(&dirs, &rhos).unwrap();
        assert_eq!(h.nrows(), 7);
        let problem = EstimationProblem::unweighted(h, y).unwrap();
        let est = wls_solve(&problem, &constants).unwrap();
        assert_relative_eq!(est.v_c, v, max_relative = 1e-9);
        assert_relative_eq!(est.omega, w, max_relative = 1e-9);
    }

    #[test]
    fn range_rate_examples() {
        let constants = SensorConstants::default();
        assert_eq!(range_rate(0.0, &constants), 0.0);
        // dphi chosen to invert the formula to exactly 1 m/s
        let dphi = 4.0 * std::f64::consts::PI * constants.f0 * constants.dt / constants.c;
        assert_relative_eq!(range_rate(dphi, &constants), 1.0, max_relative = 1e-12);
        // direct substitution: 4.2028e-6 rad over 1 ms at 10 MHz and
        // c = 2.99e8 m/s comes out near 1.0e-2 m/s
        assert_relative_eq!(
            range_rate(4.2028e-6, &constants),
            1.0e-2,
            max_relative = 1e-4
        );
    }

    #[test]
    fn constants_validation() {
        assert!(SensorConstants::new(0.0, 2.99e8, 1e-3).is_err());
        assert!(SensorConstants::new(1e7, 2.99e8, 0.0).is_err());
        let c = SensorConstants::default();
        assert_relative_eq!(c.lambda(), 29.9);
    }

    proptest! {
        #[test]
        fn skew_is_antisymmetric(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            let m = skew(&Vector3::new(x, y, z));
            prop_assert_eq!(m.transpose(), -m);
        }

        #[test]
        fn wls_is_linear_in_measurements(scale in 0.1f64..10.0) {
            let constants = SensorConstants::default();
            let h = build_h(&table_directions(), &grid_displacements()).unwrap();
            let y1 = DVector::from_fn(6, |i, _| (i as f64 + 1.0) * 1e-3);
            let y2 = DVector::from_fn(6, |i, _| ((i * i) as f64 - 2.0) * 1e-3);
            let solve = |y: DVector<f64>| {
                let p = EstimationProblem::unweighted(h.clone(), y).unwrap();
                Vector6::from_column_slice(&wls_solve(&p, &constants).unwrap().as_array())
            };
            let combined = solve(&y1 * scale + &y2);
            let split = solve(&y1 * scale) + solve(y2.clone());
            for i in 0..6 {
                prop_assert!((combined[i] - split[i]).abs() <= 1e-9 * combined[i].abs().max(1.0));
            }
        }
    }
}
