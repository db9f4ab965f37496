//! Command-line front end: run comparison scenarios, solve individual
//! measurement frames through both estimation paths, dump per-stage
//! pipeline intermediates and generate scenario templates.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ivisnav_core::datapath::{
    hw_wls_pipeline, hw_wls_pipeline_traced, FixedProblem, ScalingScheme, DEFAULT_Y_SCALE,
};
use ivisnav_core::estimator::{wls_solve, RateEstimate, SensorConstants, CHANNELS};
use ivisnav_core::fixed::QFormat;
use ivisnav_core::harness::{emit_report, run_comparison, ComparisonReport, Scenario};
use ivisnav_core::sensor::{read_frames, BeaconGeometry, GeometryConfig, MeasurementFrame};

#[derive(Parser)]
#[command(
    name = "ivisnav",
    about = "Behavioral simulator for the iVisNav FPGA rate-estimation core",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario through both estimation paths and write a report.
    Run {
        /// Scenario config (TOML).
        scenario: PathBuf,
        /// Report output path.
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        /// Report format: csv or json (default: by file extension).
        #[arg(long)]
        format: Option<String>,
    },
    /// Solve the frames in a measurement file through both paths.
    Solve {
        /// Frame records, one per line (t, dphi x6, k x6, rho x18, dt).
        frame_file: PathBuf,
        /// Beacon geometry TOML override (bench defaults otherwise).
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Fixed-point format for the hardware path.
        #[arg(long, default_value = "Q15.16")]
        qformat: String,
        /// Measurement vector pre-scale.
        #[arg(long, default_value_t = DEFAULT_Y_SCALE)]
        y_scale: f64,
    },
    /// Dump per-stage pipeline intermediates as hex words for RTL
    /// cross-validation (first frame of the file).
    InspectPipeline {
        frame_file: PathBuf,
        /// Write the dump here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, default_value = "Q15.16")]
        qformat: String,
        #[arg(long, default_value_t = DEFAULT_Y_SCALE)]
        y_scale: f64,
    },
    /// Write the default axial-maneuver scenario file.
    GenScenario {
        #[arg(long, default_value = "default.scenario.toml")]
        out: PathBuf,
    },
}

/// Errors from bad configuration (exit 2) versus runtime failures
/// (exit 1).
enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config_err<T>(result: Result<T>) -> std::result::Result<T, CliError> {
    result.map_err(CliError::Config)
}

fn runtime_err<T>(result: Result<T>) -> std::result::Result<T, CliError> {
    result.map_err(CliError::Runtime)
}

fn load_geometry(path: Option<&Path>) -> Result<BeaconGeometry> {
    match path {
        None => Ok(BeaconGeometry::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading geometry file {}", p.display()))?;
            let cfg: GeometryConfig = toml::from_str(&text)
                .with_context(|| format!("parsing geometry file {}", p.display()))?;
            BeaconGeometry::try_from(cfg).context("invalid geometry")
        }
    }
}

fn parse_qformat(text: &str) -> Result<QFormat> {
    text.parse::<QFormat>()
        .with_context(|| format!("bad --qformat value {text:?}"))
}

fn load_frames(path: &Path) -> Result<Vec<MeasurementFrame>> {
    let file =
        fs::File::open(path).with_context(|| format!("opening frame file {}", path.display()))?;
    let frames = read_frames(std::io::BufReader::new(file))
        .with_context(|| format!("parsing frame file {}", path.display()))?;
    if frames.is_empty() {
        bail!("frame file {} contains no frames", path.display());
    }
    Ok(frames)
}

fn rates_line(label: &str, estimate: &RateEstimate) -> String {
    let x = estimate.as_array();
    format!(
        "  {label}: v = ({}, {}, {}) m/s, omega = ({}, {}, {}) rad/s",
        x[0], x[1], x[2], x[3], x[4], x[5]
    )
}

fn print_summary(report: &ComparisonReport) {
    let s = &report.summary;
    println!(
        "scenario {:?}: {} frames, {} failed",
        report.scenario, s.frames, s.failed_frames
    );
    for ch in 0..CHANNELS {
        let name = RateEstimate::channel_name(ch);
        match (s.max_pct_err[ch], s.max_abs_err[ch]) {
            (Some(pct), Some(abs)) => {
                println!("  {name}: max |hw-sw| {abs:.3e}, max percent error {pct:.5}%")
            }
            (None, Some(abs)) => println!(
                "  {name}: max |hw-sw| {abs:.3e}, percent error undefined (reference near zero)"
            ),
            _ => println!("  {name}: no successful frames"),
        }
    }
    if let (Some(cycles), Some(us)) = (s.cycles_per_frame, s.latency_us) {
        println!(
            "  cycles per pass: {cycles} ({us:.2} us; {})",
            s.latency_note
        );
    }
    if s.overflow_total > 0 {
        println!("  WARNING: {} saturation events recorded", s.overflow_total);
    }
}

fn cmd_run(scenario: &Path, out: &Path, format: Option<&str>) -> std::result::Result<(), CliError> {
    let scenario =
        config_err(Scenario::load(scenario).map_err(|e| anyhow::anyhow!("loading scenario: {e}")))?;
    let format = match format {
        Some(f) => f.to_owned(),
        None => match out.extension().and_then(|e| e.to_str()) {
            Some("json") => "json".to_owned(),
            _ => "csv".to_owned(),
        },
    };
    if format != "csv" && format != "json" {
        return Err(CliError::Config(anyhow::anyhow!(
            "unknown report format {format:?}, expected csv or json"
        )));
    }
    let report = runtime_err(run_comparison(&scenario).map_err(|e| anyhow::anyhow!("{e}")))?;
    runtime_err(
        emit_report(&report, &format, out)
            .map_err(|e| anyhow::anyhow!("writing report to {}: {e}", out.display())),
    )?;
    print_summary(&report);
    println!("report written to {}", out.display());
    Ok(())
}

fn encode_frame(
    frame: &MeasurementFrame,
    geometry: &BeaconGeometry,
    fmt: QFormat,
    y_scale: f64,
) -> Result<(
    ivisnav_core::estimator::EstimationProblem,
    FixedProblem,
    ScalingScheme,
)> {
    let problem = ivisnav_core::sensor::problem_from_frame(frame, geometry, None)
        .context("assembling the estimation problem")?;
    let scheme = ScalingScheme::unit_columns(&problem, y_scale);
    let (fixed, flags) =
        FixedProblem::encode(&problem, &scheme, fmt).context("encoding to fixed point")?;
    if flags.saturated() {
        eprintln!(
            "warning: {} saturation events while encoding; consider rescaling",
            flags.count()
        );
    }
    Ok((problem, fixed, scheme))
}

fn cmd_solve(
    frame_file: &Path,
    geometry: Option<&Path>,
    qformat: &str,
    y_scale: f64,
) -> std::result::Result<(), CliError> {
    let fmt = config_err(parse_qformat(qformat))?;
    let geometry = config_err(load_geometry(geometry))?;
    let frames = runtime_err(load_frames(frame_file))?;
    let constants = SensorConstants::default();
    for frame in &frames {
        println!("frame t={} dt={}", frame.t, frame.dt);
        let constants = SensorConstants {
            dt: frame.dt,
            ..constants
        };
        let (problem, fixed, scheme) = runtime_err(encode_frame(frame, &geometry, fmt, y_scale))?;
        match wls_solve(&problem, &constants) {
            Ok(sw) => println!("{}", rates_line("sw", &sw)),
            Err(e) => println!("  sw: failed ({e})"),
        }
        match hw_wls_pipeline(&fixed, &scheme, &constants) {
            Ok(out) => {
                println!("{}", rates_line("hw", &out.estimate));
                if out.overflow.saturated() {
                    println!("  hw: {} saturation events", out.overflow.count());
                }
            }
            Err(e) => println!("  hw: failed ({e})"),
        }
    }
    Ok(())
}

fn cmd_inspect(
    frame_file: &Path,
    out: Option<&Path>,
    geometry: Option<&Path>,
    qformat: &str,
    y_scale: f64,
) -> std::result::Result<(), CliError> {
    let fmt = config_err(parse_qformat(qformat))?;
    let geometry = config_err(load_geometry(geometry))?;
    let frames = runtime_err(load_frames(frame_file))?;
    let frame = &frames[0];
    let constants = SensorConstants {
        dt: frame.dt,
        ..SensorConstants::default()
    };
    let (_, fixed, scheme) = runtime_err(encode_frame(frame, &geometry, fmt, y_scale))?;
    let (output, trace) = runtime_err(
        hw_wls_pipeline_traced(&fixed, &scheme, &constants)
            .map_err(|e| anyhow::anyhow!("pipeline failed: {e}")),
    )?;

    let mut text = String::new();
    text.push_str(&format!(
        "# pipeline intermediates, {} raw words per line, frame t={}\n",
        fmt, frame.t
    ));
    for dump in &trace {
        text.push_str(&dump.to_string());
    }
    text.push_str(&format!(
        "# total cycles {} ({:.2} us at {} MHz)\n",
        output.cycles.total(),
        output.cycles.micros(),
        output.cycles.clock_hz() / 1e6
    ));
    match out {
        Some(path) => runtime_err(
            fs::write(path, text).with_context(|| format!("writing dump to {}", path.display())),
        )?,
        None => {
            let mut stdout = std::io::stdout().lock();
            runtime_err(stdout.write_all(text.as_bytes()).context("writing dump"))?;
        }
    }
    Ok(())
}

fn cmd_gen_scenario(out: &Path) -> std::result::Result<(), CliError> {
    let scenario = Scenario::default();
    runtime_err(
        scenario
            .save(out)
            .map_err(|e| anyhow::anyhow!("writing scenario to {}: {e}", out.display())),
    )?;
    println!("scenario written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            format,
        } => cmd_run(scenario, out, format.as_deref()),
        Command::Solve {
            frame_file,
            geometry,
            qformat,
            y_scale,
        } => cmd_solve(frame_file, geometry.as_deref(), qformat, *y_scale),
        Command::InspectPipeline {
            frame_file,
            out,
            geometry,
            qformat,
            y_scale,
        } => cmd_inspect(
            frame_file,
            out.as_deref(),
            geometry.as_deref(),
            qformat,
            *y_scale,
        ),
        Command::GenScenario { out } => cmd_gen_scenario(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
