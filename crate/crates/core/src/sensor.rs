//! Synthesis of ToF phase-shift measurement frames from a rigid-body
//! relative-motion trajectory.
//!
//! Beams are cast from per-beacon emitter positions on the sensor body
//! toward the landing base plane; the intersection yields the range and
//! the in-plane projection displacement each frame, and the transport
//! theorem turns the true rates into per-beacon phase differences.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{build_h, EstimationProblem, EstimatorError, SensorConstants};

pub const BEACON_COUNT: usize = 6;

/// Radius of the default emitter ring on the sensor body (m).
const DEFAULT_EMITTER_RADIUS: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("beam {beacon} is parallel to the base plane")]
    BeamParallel { beacon: usize },
    #[error("beam {beacon} intersects the base plane at non-positive range {range}")]
    NonPositiveRange { beacon: usize, range: f64 },
    #[error("direction {index} is not unit length (norm {norm})")]
    NonUnitDirection { index: usize, norm: f64 },
    #[error("malformed frame record: {0}")]
    MalformedFrame(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Calibrated beacon directions plus the emitter positions the beams
/// originate from, both in the body-fixed frame.
///
/// Emitter offsets matter: with every beam cast from a single point the
/// stacked measurement matrix loses rank and the spin channel becomes
/// unobservable, so the default geometry places the emitters on a ring
/// around the optical center.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconGeometry {
    directions: [Vector3<f64>; BEACON_COUNT],
    emitter_offsets: [Vector3<f64>; BEACON_COUNT],
}

impl BeaconGeometry {
    pub fn new(
        directions: [Vector3<f64>; BEACON_COUNT],
        emitter_offsets: [Vector3<f64>; BEACON_COUNT],
    ) -> Result<Self, SensorError> {
        for (i, d) in directions.iter().enumerate() {
            let norm = d.norm();
            if (norm - 1.0).abs() > crate::estimator::DIRECTION_NORM_TOLERANCE {
                return Err(SensorError::NonUnitDirection { index: i, norm });
            }
        }
        Ok(BeaconGeometry {
            directions,
            emitter_offsets,
        })
    }

    /// The bench-calibrated direction vectors.
    pub fn bench_directions() -> [Vector3<f64>; BEACON_COUNT] {
        [
            Vector3::new(0.87264, 0.4977, 0.1367),
            Vector3::new(0.8927, -0.5082, 0.1304),
            Vector3::new(-0.0007, -0.9915, 0.1372),
            Vector3::new(-0.8586, -0.4957, 0.1391),
            Vector3::new(-0.8168, 0.4957, 0.1412),
            Vector3::new(0.0001, 0.9999, 0.1249),
        ]
    }

    /// Default emitter ring: radius 0.25 m at each beacon's azimuth,
    /// offset tangentially with alternating sign so the six spin-channel
    /// coefficients stay well spread.
    pub fn default_emitter_offsets(
        directions: &[Vector3<f64>; BEACON_COUNT],
    ) -> [Vector3<f64>; BEACON_COUNT] {
        std::array::from_fn(|i| {
            let theta = directions[i].y.atan2(directions[i].x);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            DEFAULT_EMITTER_RADIUS * sign * Vector3::new(-theta.sin(), theta.cos(), 0.0)
        })
    }

    pub fn directions(&self) -> &[Vector3<f64>; BEACON_COUNT] {
        &self.directions
    }

    pub fn emitter_offsets(&self) -> &[Vector3<f64>; BEACON_COUNT] {
        &self.emitter_offsets
    }
}

impl Default for BeaconGeometry {
    fn default() -> Self {
        let directions = Self::bench_directions();
        let emitter_offsets = Self::default_emitter_offsets(&directions);
        BeaconGeometry {
            directions,
            emitter_offsets,
        }
    }
}

/// Serialized form of a geometry: six direction rows and optional
/// emitter offset rows (the default ring when omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub directions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter_offsets: Option<Vec<[f64; 3]>>,
}

impl TryFrom<GeometryConfig> for BeaconGeometry {
    type Error = SensorError;

    fn try_from(cfg: GeometryConfig) -> Result<Self, SensorError> {
        let to_array =
            |rows: &[[f64; 3]], what: &str| -> Result<[Vector3<f64>; BEACON_COUNT], SensorError> {
                if rows.len() != BEACON_COUNT {
                    return Err(SensorError::MalformedFrame(format!(
                        "expected {BEACON_COUNT} {what}, got {}",
                        rows.len()
                    )));
                }
                Ok(std::array::from_fn(|i| Vector3::from(rows[i])))
            };
        let directions = to_array(&cfg.directions, "directions")?;
        let offsets = match &cfg.emitter_offsets {
            Some(rows) => to_array(rows, "emitter offsets")?,
            None => BeaconGeometry::default_emitter_offsets(&directions),
        };
        BeaconGeometry::new(directions, offsets)
    }
}

impl From<&BeaconGeometry> for GeometryConfig {
    fn from(g: &BeaconGeometry) -> Self {
        GeometryConfig {
            directions: g.directions.iter().map(|v| [v.x, v.y, v.z]).collect(),
            emitter_offsets: Some(g.emitter_offsets.iter().map(|v| [v.x, v.y, v.z]).collect()),
        }
    }
}

/// True kinematic state of the base relative to the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueState {
    /// Displacement from the sensor to the world origin on the base (m).
    pub r_c: Vector3<f64>,
    /// True translational velocity (m/s).
    pub v_c: Vector3<f64>,
    /// True angular velocity (rad/s).
    pub omega: Vector3<f64>,
    /// Time (s).
    pub t: f64,
}

impl TrueState {
    pub fn rates(&self) -> [f64; 6] {
        [
            self.v_c.x,
            self.v_c.y,
            self.v_c.z,
            self.omega.x,
            self.omega.y,
            self.omega.z,
        ]
    }
}

/// Pose of the landing base plane: the plane through the world origin
/// (`state.r_c` from the sensor) with this normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePlane {
    pub normal: Unit<Vector3<f64>>,
}

impl Default for BasePlane {
    fn default() -> Self {
        BasePlane {
            normal: Vector3::z_axis(),
        }
    }
}

/// Additive Gaussian noise on the phase differences, reproducible from
/// the seed. `sigma_phi == 0` produces bit-identical noiseless frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_phi: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            sigma_phi: 0.0,
            seed: 0,
        }
    }

    /// Derive the per-frame noise stream: a golden-ratio stride keeps the
    /// streams distinct while staying a pure function of (seed, index).
    pub fn for_frame(&self, frame_index: u64) -> NoiseModel {
        NoiseModel {
            sigma_phi: self.sigma_phi,
            seed: self
                .seed
                .wrapping_add(frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }
}

/// One sampling interval's worth of synthesized measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    /// Phase differences over the interval (rad).
    pub dphi: [f64; BEACON_COUNT],
    /// Beam ranges (m).
    pub k: [f64; BEACON_COUNT],
    /// Projection displacements from the world origin (m).
    pub rho: [Vector3<f64>; BEACON_COUNT],
    /// Sampling interval (s).
    pub dt: f64,
}

/// Phase shift of a reflection from range `r`: `phi = 4 pi r f0 / c`.
pub fn phase_from_range(r: f64, constants: &SensorConstants) -> f64 {
    4.0 * std::f64::consts::PI * r * constants.f0 / constants.c
}

/// Cast each beam from its emitter onto the base plane.
///
/// Returns the ranges `k_i` along each beam and the in-plane projection
/// displacements `rho_i`, satisfying `offset_i + k_i * dir_i = r_c + rho_i`.
pub fn intersect_plane(
    state: &TrueState,
    geometry: &BeaconGeometry,
    plane: &BasePlane,
) -> Result<([f64; BEACON_COUNT], [Vector3<f64>; BEACON_COUNT]), SensorError> {
    let n = plane.normal.into_inner();
    let mut k = [0.0; BEACON_COUNT];
    let mut rho = [Vector3::zeros(); BEACON_COUNT];
    for i in 0..BEACON_COUNT {
        let dir = geometry.directions[i];
        let denom = n.dot(&dir);
        if denom.abs() <= 1e-6 {
            return Err(SensorError::BeamParallel { beacon: i });
        }
        let range = n.dot(&(state.r_c - geometry.emitter_offsets[i])) / denom;
        if range <= 0.0 {
            return Err(SensorError::NonPositiveRange { beacon: i, range });
        }
        let spot = geometry.emitter_offsets[i] + range * dir;
        k[i] = range;
        rho[i] = spot - state.r_c;
    }
    Ok((k, rho))
}

/// Synthesize one measurement frame from the true state.
///
/// Spot velocities follow the transport theorem, `v_i = v_c + omega x
/// rho_i`, and each phase difference is `(4 pi f0 / c) (v_i . r_i) dt`
/// plus seeded Gaussian noise.
pub fn synthesize_frame(
    state: &TrueState,
    geometry: &BeaconGeometry,
    constants: &SensorConstants,
    noise: &NoiseModel,
) -> Result<MeasurementFrame, SensorError> {
    let (k, rho) = intersect_plane(state, geometry, &BasePlane::default())?;
    let gain = 4.0 * std::f64::consts::PI * constants.f0 / constants.c;
    let mut dphi = [0.0; BEACON_COUNT];
    for i in 0..BEACON_COUNT {
        let v_i = state.v_c + state.omega.cross(&rho[i]);
        dphi[i] = gain * v_i.dot(&geometry.directions[i]) * constants.dt;
    }
    if noise.sigma_phi > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0, noise.sigma_phi).expect("sigma_phi must be finite");
        for d in dphi.iter_mut() {
            *d += normal.sample(&mut rng);
        }
    }
    Ok(MeasurementFrame {
        t: state.t,
        dphi,
        k,
        rho,
        dt: constants.dt,
    })
}

/// Constant-rate axial maneuver: translation along and rotation about
/// the boresight axis, every other channel identically zero.
///
/// Returns `round(duration / dt)` states at `t = dt, 2dt, ...`, so the
/// displacement integrated across the whole sequence relative to
/// `initial_displacement` equals `v_z * duration`.
pub fn axial_maneuver(
    initial_displacement: Vector3<f64>,
    duration: f64,
    dt: f64,
    v_z: f64,
    omega_z: f64,
) -> Vec<TrueState> {
    let steps = (duration / dt).round() as usize;
    let v_c = Vector3::new(0.0, 0.0, v_z);
    let omega = Vector3::new(0.0, 0.0, omega_z);
    (1..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            TrueState {
                r_c: initial_displacement + v_c * t,
                v_c,
                omega,
                t,
            }
        })
        .collect()
}

/// Assemble the estimation problem a frame implies: `H` from the
/// calibrated directions and the frame's displacements, `y_tilde` as
/// phase rate `dphi / dt`, and the supplied weight (identity if none).
pub fn problem_from_frame(
    frame: &MeasurementFrame,
    geometry: &BeaconGeometry,
    weight: Option<DMatrix<f64>>,
) -> Result<EstimationProblem, EstimatorError> {
    let h = build_h(geometry.directions(), &frame.rho)?;
    let y =
        nalgebra::DVector::from_iterator(BEACON_COUNT, frame.dphi.iter().map(|&d| d / frame.dt));
    match weight {
        Some(w) => EstimationProblem::new(h, w, y),
        None => EstimationProblem::unweighted(h, y),
    }
}

/// Write frames as plain text, one frame per line:
/// `t dphi1..6 k1..6 rho1x rho1y rho1z ... rho6z dt` (32 numbers).
/// Values print in shortest round-trip decimal form.
pub fn write_frames<W: Write>(frames: &[MeasurementFrame], mut out: W) -> io::Result<()> {
    for f in frames {
        let mut fields: Vec<String> = Vec::with_capacity(32);
        fields.push(format!("{}", f.t));
        fields.extend(f.dphi.iter().map(|v| format!("{v}")));
        fields.extend(f.k.iter().map(|v| format!("{v}")));
        for rho in &f.rho {
            fields.push(format!("{}", rho.x));
            fields.push(format!("{}", rho.y));
            fields.push(format!("{}", rho.z));
        }
        fields.push(format!("{}", f.dt));
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}

/// Parse frames written by [`write_frames`]. Blank lines and `#` comment
/// lines are ignored.
pub fn read_frames<R: BufRead>(input: R) -> Result<Vec<MeasurementFrame>, SensorError> {
    let mut frames = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let nums: Vec<f64> = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    SensorError::MalformedFrame(format!("line {}: bad number {tok:?}", lineno + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != 32 {
            return Err(SensorError::MalformedFrame(format!(
                "line {}: expected 32 fields, got {}",
                lineno + 1,
                nums.len()
            )));
        }
        let mut dphi = [0.0; 6];
        dphi.copy_from_slice(&nums[1..7]);
        let mut k = [0.0; 6];
        k.copy_from_slice(&nums[7..13]);
        let rho = std::array::from_fn(|i| {
            Vector3::new(nums[13 + 3 * i], nums[14 + 3 * i], nums[15 + 3 * i])
        });
        frames.push(MeasurementFrame {
            t: nums[0],
            dphi,
            k,
            rho,
            dt: nums[31],
        });
    }
    Ok(frames)
}
