use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{run_transaction, BusError, BusState};
use crate::datapath::FixedProblem;
use crate::estimator::{wls_solve, SensorConstants, CHANNELS};
use crate::sensor::{axial_maneuver, problem_from_frame, synthesize_frame, BeaconGeometry};

use super::{HarnessError, Scenario};

/// Default guard on the percent-error denominator.
pub const DEFAULT_EPS_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference magnitude {denominator:e} too small for a percent error")]
    DenominatorTooSmall { denominator: f64 },
}

/// Relative deviation of a hardware estimate from the software
/// reference, in percent: `|hw - sw| / |sw| * 100`.
pub fn percent_error_with_eps(hw: f64, sw: f64, eps: f64) -> Result<f64, MetricError> {
    if sw.abs() <= eps {
        return Err(MetricError::DenominatorTooSmall { denominator: sw });
    }
    Ok((hw - sw).abs() / sw.abs() * 100.0)
}

/// [`percent_error_with_eps`] at the default denominator guard.
pub fn percent_error(hw: f64, sw: f64) -> Result<f64, MetricError> {
    percent_error_with_eps(hw, sw, DEFAULT_EPS_DENOMINATOR)
}

/// One trajectory frame through both paths. `None` entries mean the
/// value is undefined for that frame (solver failure, or a percent
/// error whose reference is below the denominator guard); reports never
/// contain NaN or infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    /// True rates, channel order vx vy vz wx wy wz.
    pub truth: [f64; CHANNELS],
    /// Double-precision reference estimate.
    pub sw: Option<[f64; CHANNELS]>,
    /// Fixed-point hardware-path estimate.
    pub hw: Option<[f64; CHANNELS]>,
    /// Absolute hardware-vs-software deviation per channel.
    pub abs_err: Option<[f64; CHANNELS]>,
    /// Percent error per channel where defined.
    pub pct_err: [Option<f64>; CHANNELS],
    pub overflow_count: u64,
    pub cycles: u64,
    /// Per-frame failure description, if either path failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregates over a comparison run, plus the latency model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    pub failed_frames: usize,
    /// Max |hw - sw| per channel over successful frames.
    pub max_abs_err: [Option<f64>; CHANNELS],
    /// Max percent error per channel over frames where it is defined.
    pub max_pct_err: [Option<f64>; CHANNELS],
    pub mean_pct_err: [Option<f64>; CHANNELS],
    /// Frames with a defined percent error, per channel.
    pub defined_pct_frames: [usize; CHANNELS],
    pub overflow_total: u64,
    /// Deterministic cycle count of one pipeline pass.
    pub cycles_per_frame: Option<u64>,
    pub per_block_cycles: Option<std::collections::BTreeMap<String, u64>>,
    /// Assumed PL clock the latency conversion uses (Hz).
    pub clock_hz: f64,
    /// `cycles_per_frame / clock_hz`, microseconds.
    pub latency_us: Option<f64>,
    pub latency_note: String,
}

/// Full machine-readable result of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub frames: Vec<FrameRecord>,
    pub summary: Summary,
}

/// Execute a scenario: synthesize each trajectory frame, solve it with
/// the double-precision reference and through the bus-driven hardware
/// path, and record both estimates with the error metrics.
///
/// Per-frame pipeline failures are recorded and the run continues; each
/// frame is an independent batch solve, so hardware outputs never feed
/// subsequent frames.
pub fn run_comparison(scenario: &Scenario) -> Result<ComparisonReport, HarnessError> {
    let constants = SensorConstants::new(
        scenario.constants.f0,
        scenario.constants.c,
        scenario.constants.dt,
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    let geometry = match &scenario.geometry {
        Some(cfg) => BeaconGeometry::try_from(cfg.clone())?,
        None => BeaconGeometry::default(),
    };
    if scenario.maneuver.duration <= 0.0 {
        return Err(HarnessError::Config(
            "maneuver duration must be positive".into(),
        ));
    }
    let states = axial_maneuver(
        Vector3::new(0.0, 0.0, scenario.maneuver.initial_distance),
        scenario.maneuver.duration,
        constants.dt,
        scenario.maneuver.v_z,
        scenario.maneuver.omega_z,
    );

    let mut bus = BusState::reset(scenario.hardware.qformat);
    let mut frames = Vec::with_capacity(states.len());
    for (index, state) in states.iter().enumerate() {
        let frame = synthesize_frame(
            state,
            &geometry,
            &constants,
            &scenario.noise.for_frame(index as u64),
        )?;
        let problem = problem_from_frame(&frame, &geometry, None)?;

        let mut failure: Option<String> = None;
        let sw = match wls_solve(&problem, &constants) {
            Ok(est) => Some(est.as_array()),
            Err(e) => {
                failure = Some(format!("reference solve failed: {e}"));
                None
            }
        };

        let scheme = scenario.scaling.scheme_for(&problem);
        let (fixed_problem, encode_flags) =
            FixedProblem::encode(&problem, &scheme, scenario.hardware.qformat)?;
        let mut overflow_count = encode_flags.count();
        let mut cycles_total = 0u64;
        let mut per_block = None;
        let hw = match run_transaction(&mut bus, &fixed_problem, &scheme, &constants) {
            Ok(tx) => {
                overflow_count += tx.overflow_count as u64;
                cycles_total = tx.cycles.total();
                per_block = Some(tx.cycles);
                Some(tx.estimate.as_array())
            }
            Err(err @ BusError::Pipeline { .. }) => {
                let msg = format!("hardware path failed: {err}");
                failure = Some(match failure {
                    Some(prev) => format!("{prev}; {msg}"),
                    None => msg,
                });
                None
            }
            // anything else is a harness bug, not a data condition
            Err(other) => return Err(other.into()),
        };

        let abs_err = match (sw, hw) {
            (Some(sw), Some(hw)) => Some(std::array::from_fn(|ch| (hw[ch] - sw[ch]).abs())),
            _ => None,
        };
        let pct_err = std::array::from_fn(|ch| match (sw, hw) {
            (Some(sw), Some(hw)) => {
                percent_error_with_eps(hw[ch], sw[ch], scenario.metrics.eps_denominator).ok()
            }
            _ => None,
        });

        frames.push((
            FrameRecord {
                t: state.t,
                truth: state.rates(),
                sw,
                hw,
                abs_err,
                pct_err,
                overflow_count,
                cycles: cycles_total,
                error: failure,
            },
            per_block,
        ));
    }

    let summary = summarize(scenario, &frames);
    Ok(ComparisonReport {
        scenario: scenario.name.clone(),
        frames: frames.into_iter().map(|(record, _)| record).collect(),
        summary,
    })
}

fn summarize(
    scenario: &Scenario,
    frames: &[(FrameRecord, Option<crate::datapath::CycleReport>)],
) -> Summary {
    let mut max_abs_err = [None; CHANNELS];
    let mut max_pct_err = [None; CHANNELS];
    let mut pct_sum = [0.0f64; CHANNELS];
    let mut defined_pct_frames = [0usize; CHANNELS];
    let mut overflow_total = 0u64;
    let mut failed_frames = 0usize;
    let mut cycles_per_frame = None;
    let mut per_block_cycles = None;

    for (record, cycles) in frames {
        if record.error.is_some() {
            failed_frames += 1;
        }
        overflow_total += record.overflow_count;
        if let Some(abs) = record.abs_err {
            for ch in 0..CHANNELS {
                let slot: &mut Option<f64> = &mut max_abs_err[ch];
                *slot = Some(slot.map_or(abs[ch], |m: f64| m.max(abs[ch])));
            }
        }
        for ch in 0..CHANNELS {
            if let Some(pct) = record.pct_err[ch] {
                defined_pct_frames[ch] += 1;
                pct_sum[ch] += pct;
                let slot: &mut Option<f64> = &mut max_pct_err[ch];
                *slot = Some(slot.map_or(pct, |m: f64| m.max(pct)));
            }
        }
        if let Some(report) = cycles {
            if cycles_per_frame.is_none() {
                cycles_per_frame = Some(report.total());
                per_block_cycles = Some(report.per_block().clone());
            }
        }
    }

    let mean_pct_err = std::array::from_fn(|ch| {
        (defined_pct_frames[ch] > 0).then(|| pct_sum[ch] / defined_pct_frames[ch] as f64)
    });
    let clock_hz = scenario.hardware.clock_hz;
    let latency_us = cycles_per_frame.map(|c| c as f64 / clock_hz * 1e6);
    Summary {
        frames: frames.len(),
        failed_frames,
        max_abs_err,
        max_pct_err,
        mean_pct_err,
        defined_pct_frames,
        overflow_total,
        cycles_per_frame,
        per_block_cycles,
        clock_hz,
        latency_us,
        latency_note: format!(
            "latency_us = cycles / clock at an assumed {} MHz PL clock; model estimate, not a measured figure",
            clock_hz / 1e6
        ),
    }
}
