use std::io::{Read, Write};
use std::path::Path;

use super::{ComparisonReport, FrameRecord, HarnessError};
use crate::estimator::CHANNELS;

const CHANNEL_SUFFIX: [&str; CHANNELS] = ["vx", "vy", "vz", "wx", "wy", "wz"];

fn header() -> Vec<String> {
    let mut cols = Vec::with_capacity(33);
    cols.push("t".to_owned());
    for group in ["true", "sw", "hw", "abs_err", "pct_err"] {
        for ch in CHANNEL_SUFFIX {
            cols.push(format!("{group}_{ch}"));
        }
    }
    cols.push("overflow_count".to_owned());
    cols.push("cycles".to_owned());
    cols
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), fmt_f64)
}

/// Write the per-frame table as CSV: one row per frame, `NA` marking
/// undefined entries, floats in shortest round-trip decimal form.
pub fn write_csv<W: Write>(report: &ComparisonReport, out: W) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(header())?;
    for frame in &report.frames {
        let mut row = Vec::with_capacity(33);
        row.push(fmt_f64(frame.t));
        for v in frame.truth {
            row.push(fmt_f64(v));
        }
        for group in [frame.sw, frame.hw, frame.abs_err] {
            for ch in 0..CHANNELS {
                row.push(fmt_opt(group.map(|g| g[ch])));
            }
        }
        for ch in 0..CHANNELS {
            row.push(fmt_opt(frame.pct_err[ch]));
        }
        row.push(frame.overflow_count.to_string());
        row.push(frame.cycles.to_string());
        csv.write_record(row)?;
    }
    csv.flush().map_err(|e| HarnessError::Io {
        path: "<csv writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Parse frames back out of a CSV written by [`write_csv`]. The CSV
/// carries the plot data only, so per-frame error strings are not
/// recovered.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<FrameRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let expected = header();
    let got: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if got != expected {
        return Err(HarnessError::MalformedReport(format!(
            "unexpected CSV header: {got:?}"
        )));
    }
    let parse_f64 = |field: &str| -> Result<f64, HarnessError> {
        field
            .parse()
            .map_err(|_| HarnessError::MalformedReport(format!("bad number {field:?}")))
    };
    let parse_opt = |field: &str| -> Result<Option<f64>, HarnessError> {
        if field == "NA" {
            Ok(None)
        } else {
            parse_f64(field).map(Some)
        }
    };

    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 33 {
            return Err(HarnessError::MalformedReport(format!(
                "expected 33 columns, got {}",
                record.len()
            )));
        }
        let t = parse_f64(&record[0])?;
        let mut truth = [0.0; CHANNELS];
        for ch in 0..CHANNELS {
            truth[ch] = parse_f64(&record[1 + ch])?;
        }
        let group = |base: usize| -> Result<Option<[f64; CHANNELS]>, HarnessError> {
            let mut values = [0.0; CHANNELS];
            let mut any_na = false;
            for ch in 0..CHANNELS {
                match parse_opt(&record[base + ch])? {
                    Some(v) => values[ch] = v,
                    None => any_na = true,
                }
            }
            Ok(if any_na { None } else { Some(values) })
        };
        let sw = group(7)?;
        let hw = group(13)?;
        let abs_err = group(19)?;
        let mut pct_err = [None; CHANNELS];
        for ch in 0..CHANNELS {
            pct_err[ch] = parse_opt(&record[25 + ch])?;
        }
        let overflow_count = record[31]
            .parse()
            .map_err(|_| HarnessError::MalformedReport("bad overflow_count".into()))?;
        let cycles = record[32]
            .parse()
            .map_err(|_| HarnessError::MalformedReport("bad cycles".into()))?;
        frames.push(FrameRecord {
            t,
            truth,
            sw,
            hw,
            abs_err,
            pct_err,
            overflow_count,
            cycles,
            error: None,
        });
    }
    Ok(frames)
}

/// Serialize the full report, summary included, as pretty-printed JSON.
/// Emission is deterministic and round-trips byte-identically.
pub fn write_json<W: Write>(report: &ComparisonReport, mut out: W) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report)?;
    out.write_all(text.as_bytes())
        .map_err(|e| HarnessError::Io {
            path: "<json writer>".into(),
            source: e,
        })?;
    out.write_all(b"\n").map_err(|e| HarnessError::Io {
        path: "<json writer>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn read_json<R: Read>(mut input: R) -> Result<ComparisonReport, HarnessError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| HarnessError::Io {
            path: "<json reader>".into(),
            source: e,
        })?;
    Ok(serde_json::from_str(&text)?)
}

/// Write a report to `path`, picking the format from the `format`
/// argument (`"csv"` or `"json"`).
pub fn emit_report(
    report: &ComparisonReport,
    format: &str,
    path: &Path,
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let writer = std::io::BufWriter::new(file);
    match format {
        "csv" => write_csv(report, writer),
        "json" => write_json(report, writer),
        other => Err(HarnessError::Config(format!(
            "unknown report format {other:?}, expected csv or json"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{run_comparison, Scenario, Summary};
    use super::*;

    fn small_report() -> ComparisonReport {
        let mut scenario = Scenario::default();
        scenario.maneuver.duration = 0.005;
        run_comparison(&scenario).unwrap()
    }

    fn empty_report() -> ComparisonReport {
        ComparisonReport {
            scenario: "empty".into(),
            frames: Vec::new(),
            summary: Summary {
                frames: 0,
                failed_frames: 0,
                max_abs_err: [None; 6],
                max_pct_err: [None; 6],
                mean_pct_err: [None; 6],
                defined_pct_frames: [0; 6],
                overflow_total: 0,
                cycles_per_frame: None,
                per_block_cycles: None,
                clock_hz: 100e6,
                latency_us: None,
                latency_note: "n/a".into(),
            },
        }
    }

    #[test]
    fn csv_round_trips_frames() {
        let report = small_report();
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let frames = read_csv(buf.as_slice()).unwrap();
        assert_eq!(frames, report.frames);
    }

    #[test]
    fn empty_report_emits_header_only_csv_and_valid_json() {
        let report = empty_report();
        let mut csv_buf = Vec::new();
        write_csv(&report, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("t,true_vx"));
        assert_eq!(read_csv(csv_buf.as_slice()).unwrap(), vec![]);

        let mut json_buf = Vec::new();
        write_json(&report, &mut json_buf).unwrap();
        let parsed = read_json(json_buf.as_slice()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let report = small_report();
        let mut first = Vec::new();
        write_json(&report, &mut first).unwrap();
        let parsed = read_json(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_json(&parsed, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn stored_percent_errors_recompute_from_columns() {
        let report = small_report();
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let frames = read_csv(buf.as_slice()).unwrap();
        for frame in &frames {
            let (sw, hw) = (frame.sw.unwrap(), frame.hw.unwrap());
            for ch in 0..CHANNELS {
                if let Some(stored) = frame.pct_err[ch] {
                    let recomputed = (hw[ch] - sw[ch]).abs() / sw[ch].abs() * 100.0;
                    assert_eq!(recomputed.to_bits(), stored.to_bits());
                }
            }
        }
    }

    #[test]
    fn emit_report_rejects_unknown_format() {
        let report = empty_report();
        let dir = std::env::temp_dir().join("ivisnav-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.xml");
        assert!(emit_report(&report, "xml", &path).is_err());
        assert!(emit_report(&report, "csv", &dir.join("out.csv")).is_ok());
    }
}
