//! CSV and text file formats.
//!
//! | file        | header                                                  |
//! |-------------|---------------------------------------------------------|
//! | calibration | `pressure_mbar,mean_freq_hz,freq_var_hz2`               |
//! | schedule    | `start_time_s,setpoint_mbar`                            |
//! | events      | `timestamp_s`                                           |
//! | trace       | `time_s,intensity`                                      |
//! | symbols     | `symbol`                                                |
//! | decoded     | `window_index,midpoint_time_s,decision_freq_hz,symbol`  |
//!
//! Readers are strict: the header must match exactly and every value must
//! parse. Errors carry the 1-based file line.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::calibration::{CalibrationCurve, CalibrationPoint};
use crate::error::{Error, Result};
use crate::harness::{BatchSummary, ConfusionMatrix, ExperimentReport, SweepRow};
use crate::modem::WindowDiagnostic;
use crate::photodetect::IntensityTrace;
use crate::transmitter::{DropletEventSeries, EventOrigin, PressureSchedule, Segment};

pub const CALIBRATION_HEADER: &str = "pressure_mbar,mean_freq_hz,freq_var_hz2";
pub const SCHEDULE_HEADER: &str = "start_time_s,setpoint_mbar";
pub const EVENTS_HEADER: &str = "timestamp_s";
pub const TRACE_HEADER: &str = "time_s,intensity";
pub const SYMBOLS_HEADER: &str = "symbol";
pub const DECODED_HEADER: &str = "window_index,midpoint_time_s,decision_freq_hz,symbol";
pub const SWEEP_HEADER: &str =
    "symbol_interval_s,detection_window_s,tau_s,cv,jitter_sigma_s,mean_ser,std_ser,n_reps";

/// Relative tolerance on trace time steps.
pub const TRACE_STEP_TOLERANCE: f64 = 1e-6;

/// Shortest round-trip form, always with a decimal point (`2` → `2.0`).
pub fn fmt_float(x: f64) -> String {
    let s = format!("{x}");
    if s.contains(['.', 'e', 'E', 'N', 'n']) {
        s
    } else {
        s + ".0"
    }
}

fn open(path: &Path, what: &'static str) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            what,
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Parsed numeric rows with their file line numbers.
struct Rows {
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse_rows(reader: impl Read, source: &str, header: &str) -> Result<Rows> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let want: Vec<&str> = header.split(',').collect();
    let mut records = rdr.records();
    match records.next() {
        None => return Err(err(1, format!("empty file, expected header `{header}`"))),
        Some(rec) => {
            let rec = rec.map_err(|e| err(1, e.to_string()))?;
            let got: Vec<&str> = rec.iter().collect();
            if got != want {
                return Err(err(
                    1,
                    format!("expected header `{header}`, got `{}`", got.join(",")),
                ));
            }
        }
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != want.len() {
            return Err(err(
                line,
                format!("expected {} fields, got {}", want.len(), rec.len()),
            ));
        }
        let values = rec
            .iter()
            .enumerate()
            .map(|(i, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        err(
                            line,
                            format!("`{field}` is not a number (column {})", want[i]),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    Ok(Rows { rows })
}

fn in_file<T>(r: Result<T>, source: &str, line: usize) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Parse { .. } => e,
        other => Error::Parse {
            path: source.to_string(),
            line,
            message: other.to_string(),
        },
    })
}

pub fn parse_calibration(reader: impl Read, source: &str) -> Result<CalibrationCurve> {
    let rows = parse_rows(reader, source, CALIBRATION_HEADER)?;
    if rows.rows.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 2,
            message: "no calibration points".into(),
        });
    }
    for w in rows.rows.windows(2) {
        if w[1].1[0] <= w[0].1[0] {
            return Err(Error::Parse {
                path: source.to_string(),
                line: w[1].0,
                message: "pressures must be strictly increasing (unsorted or duplicate)".into(),
            });
        }
    }
    let last_line = rows.rows.last().map_or(1, |r| r.0);
    let points = rows
        .rows
        .iter()
        .map(|(_, v)| CalibrationPoint::new(v[0], v[1], v[2]))
        .collect();
    in_file(CalibrationCurve::new(points), source, last_line)
}

pub fn read_calibration(path: &Path) -> Result<CalibrationCurve> {
    parse_calibration(open(path, "calibration file")?, &path.display().to_string())
}

pub fn format_calibration(curve: &CalibrationCurve) -> String {
    let mut s = format!("{CALIBRATION_HEADER}\n");
    for p in curve.points() {
        s.push_str(&calibration_row(p));
        s.push('\n');
    }
    s
}

/// One calibration row, e.g. `225,2.0,0.0`.
pub fn calibration_row(p: &CalibrationPoint) -> String {
    format!(
        "{},{},{}",
        p.pressure,
        fmt_float(p.mean_freq),
        fmt_float(p.freq_variance)
    )
}

pub fn write_calibration(path: &Path, curve: &CalibrationCurve) -> Result<()> {
    write_file(path, &format_calibration(curve))
}

/// Reads a schedule. Without an explicit `total_duration` the last segment
/// is assumed to last as long as the one before it.
pub fn read_schedule(path: &Path, total_duration: Option<f64>) -> Result<PressureSchedule> {
    let source = path.display().to_string();
    let rows = parse_rows(open(path, "schedule file")?, &source, SCHEDULE_HEADER)?;
    let segments: Vec<Segment> = rows
        .rows
        .iter()
        .map(|(_, v)| Segment {
            start_time: v[0],
            setpoint: v[1],
        })
        .collect();
    let duration = match (total_duration, segments.as_slice()) {
        (Some(d), _) => d,
        (None, []) => 0.0,
        (None, [_]) => {
            return Err(Error::Config(format!(
                "{source}: single-segment schedule needs an explicit duration"
            )))
        }
        (None, [.., a, b]) => b.start_time + (b.start_time - a.start_time),
    };
    let last_line = rows.rows.last().map_or(1, |r| r.0);
    in_file(
        PressureSchedule::new(segments, duration),
        &source,
        last_line,
    )
}

pub fn format_schedule(schedule: &PressureSchedule) -> String {
    let mut s = format!("{SCHEDULE_HEADER}\n");
    for seg in schedule.segments() {
        let _ = writeln!(s, "{},{}", fmt_float(seg.start_time), seg.setpoint);
    }
    s
}

pub fn write_schedule(path: &Path, schedule: &PressureSchedule) -> Result<()> {
    write_file(path, &format_schedule(schedule))
}

pub fn parse_events(
    reader: impl Read,
    source: &str,
    origin: EventOrigin,
) -> Result<DropletEventSeries> {
    let rows = parse_rows(reader, source, EVENTS_HEADER)?;
    for w in rows.rows.windows(2) {
        if w[1].1[0] <= w[0].1[0] {
            return Err(Error::Parse {
                path: source.to_string(),
                line: w[1].0,
                message: "timestamps must be strictly increasing".into(),
            });
        }
    }
    let ts = rows.rows.iter().map(|(_, v)| v[0]).collect();
    in_file(DropletEventSeries::new(ts, origin), source, 0)
}

/// Raw timestamps without the ordering check, for callers that report
/// ordering problems themselves.
pub fn read_timestamps(path: &Path) -> Result<Vec<f64>> {
    let source = path.display().to_string();
    let rows = parse_rows(open(path, "events file")?, &source, EVENTS_HEADER)?;
    Ok(rows.rows.into_iter().map(|(_, v)| v[0]).collect())
}

pub fn read_events(path: &Path, origin: EventOrigin) -> Result<DropletEventSeries> {
    parse_events(
        open(path, "events file")?,
        &path.display().to_string(),
        origin,
    )
}

pub fn format_events(events: &DropletEventSeries) -> String {
    let mut s = format!("{EVENTS_HEADER}\n");
    for t in events.timestamps() {
        s.push_str(&fmt_float(*t));
        s.push('\n');
    }
    s
}

pub fn write_events(path: &Path, events: &DropletEventSeries) -> Result<()> {
    write_file(path, &format_events(events))
}

/// Parses a trace and checks that its time steps are uniform within
/// [`TRACE_STEP_TOLERANCE`] of the first step.
pub fn parse_trace(reader: impl Read, source: &str) -> Result<IntensityTrace> {
    let rows = parse_rows(reader, source, TRACE_HEADER)?;
    if rows.rows.len() < 2 {
        return Err(Error::Parse {
            path: source.to_string(),
            line: rows.rows.first().map_or(2, |r| r.0),
            message: format!(
                "need at least 2 samples to infer the sample rate, got {}",
                rows.rows.len()
            ),
        });
    }
    let times: Vec<f64> = rows.rows.iter().map(|(_, v)| v[0]).collect();
    let step = times[1] - times[0];
    if !(step > 0.0) {
        return Err(Error::NonUniformSampling { index: 1 });
    }
    for i in 2..times.len() {
        let d = times[i] - times[i - 1];
        if (d - step).abs() > TRACE_STEP_TOLERANCE * step {
            return Err(Error::NonUniformSampling { index: i });
        }
    }
    // rate from the whole span is more accurate than from one step
    let rate = (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]);
    let samples = rows.rows.iter().map(|(_, v)| v[1]).collect();
    in_file(IntensityTrace::new(rate, times[0], samples), source, 0)
}

pub fn read_trace(path: &Path) -> Result<IntensityTrace> {
    parse_trace(open(path, "trace file")?, &path.display().to_string())
}

pub fn format_trace(trace: &IntensityTrace) -> String {
    let mut s = String::with_capacity(trace.samples().len() * 24);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for (i, x) in trace.samples().iter().enumerate() {
        let _ = writeln!(s, "{},{}", fmt_float(trace.time_of(i)), fmt_float(*x));
    }
    s
}

pub fn write_trace(path: &Path, trace: &IntensityTrace) -> Result<()> {
    write_file(path, &format_trace(trace))
}

pub fn read_symbols(path: &Path) -> Result<Vec<usize>> {
    let source = path.display().to_string();
    let rows = parse_rows(open(path, "symbols file")?, &source, SYMBOLS_HEADER)?;
    rows.rows
        .iter()
        .map(|(line, v)| {
            let x = v[0];
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Parse {
                    path: source.clone(),
                    line: *line,
                    message: format!("`{x}` is not a symbol index"),
                })
            }
        })
        .collect()
}

pub fn format_symbols(symbols: &[usize]) -> String {
    let mut s = format!("{SYMBOLS_HEADER}\n");
    for x in symbols {
        let _ = writeln!(s, "{x}");
    }
    s
}

pub fn write_symbols(path: &Path, symbols: &[usize]) -> Result<()> {
    write_file(path, &format_symbols(symbols))
}

/// Decoded windows; erasures have an empty frequency and symbol `-1`.
pub fn format_decoded(windows: &[WindowDiagnostic]) -> String {
    let mut s = format!("{DECODED_HEADER}\n");
    for w in windows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            w.window_index,
            fmt_float(w.midpoint_time),
            w.decision_freq.map(fmt_float).unwrap_or_default(),
            w.decision.code()
        );
    }
    s
}

pub fn write_decoded(path: &Path, windows: &[WindowDiagnostic]) -> Result<()> {
    write_file(path, &format_decoded(windows))
}

fn join_codes(xs: impl Iterator<Item = i64>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn format_confusion(s: &mut String, c: &ConfusionMatrix) {
    let cols: Vec<String> = (0..c.m()).map(|j| format!("rx_{j}")).collect();
    let _ = writeln!(s, "tx_symbol,{},erasure", cols.join(","));
    for (i, row) in c.rows().iter().enumerate() {
        let vals: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{i},{}", vals.join(","));
    }
}

/// Key-value header followed by `[confusion]` and `[per_window]` CSV tables.
pub fn format_report(report: &ExperimentReport) -> String {
    let mut s = String::from("# dropfsk experiment report\n");
    let _ = writeln!(s, "seed_used = {}", report.seed_used);
    let _ = writeln!(s, "repetition = {}", report.repetition);
    let _ = writeln!(s, "n_symbols = {}", report.tx.len());
    let _ = writeln!(s, "m = {}", report.confusion.m());
    let _ = writeln!(s, "ser = {}", fmt_float(report.ser));
    let _ = writeln!(s, "errors = {}", report.errors());
    let _ = writeln!(s, "erasures = {}", report.erasures());
    let _ = writeln!(
        s,
        "tx = {}",
        join_codes(report.tx.iter().map(|&x| x as i64))
    );
    let _ = writeln!(s, "rx = {}", join_codes(report.rx.iter().map(|d| d.code())));
    s.push_str("\n[confusion]\n");
    format_confusion(&mut s, &report.confusion);
    s.push_str("\n[per_window]\n");
    s.push_str(
        "window_index,window_start_s,window_end_s,midpoint_time_s,estimate_time_s,decision_freq_hz,n_estimates,symbol\n",
    );
    for w in &report.per_window {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            w.window_index,
            fmt_float(w.window_start),
            fmt_float(w.window_end),
            fmt_float(w.midpoint_time),
            w.estimate_time.map(fmt_float).unwrap_or_default(),
            w.decision_freq.map(fmt_float).unwrap_or_default(),
            w.n_estimates,
            w.decision.code()
        );
    }
    s
}

/// Aggregate block for a batch of repetitions.
pub fn format_summary(summary: &BatchSummary) -> String {
    let mut s = String::from("# dropfsk batch summary\n");
    let _ = writeln!(s, "n_reps = {}", summary.n_reps);
    let _ = writeln!(s, "mean_ser = {}", fmt_float(summary.mean_ser));
    let _ = writeln!(s, "std_ser = {}", fmt_float(summary.std_ser));
    let _ = writeln!(s, "mean_errors = {}", fmt_float(summary.mean_errors));
    let _ = writeln!(
        s,
        "error_free_fraction = {}",
        fmt_float(summary.error_free_fraction)
    );
    s.push_str("\n[confusion]\n");
    format_confusion(&mut s, &summary.confusion);
    s
}

/// `rep,errors,erasures,ser` per repetition.
pub fn format_repetitions(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("repetition,errors,erasures,ser\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.repetition,
            r.errors(),
            r.erasures(),
            fmt_float(r.ser)
        );
    }
    s
}

/// Sweep table; a failed cell leaves its statistics empty.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for row in rows {
        let p = &row.point;
        let stats = match &row.outcome {
            Ok(b) => format!(
                "{},{},{}",
                fmt_float(b.mean_ser),
                fmt_float(b.std_ser),
                b.n_reps
            ),
            Err(_) => ",,0".to_string(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_float(p.timing.symbol_interval),
            fmt_float(p.timing.detection_window),
            fmt_float(p.tau),
            fmt_float(p.cv),
            fmt_float(p.jitter_sigma),
            stats
        );
    }
    s
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write_file(path, contents)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::modem::Decision;

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_float(2.0), "2.0");
        assert_eq!(fmt_float(0.0), "0.0");
        assert_eq!(fmt_float(6.468), "6.468");
        assert_eq!(fmt_float(1e-12), "0.000000000001");
        let p = CalibrationPoint::new(225.0, 2.0, 0.0);
        assert_eq!(calibration_row(&p), "225,2.0,0.0");
    }

    #[test]
    fn calibration_parse_is_strict() {
        let ok = "pressure_mbar,mean_freq_hz,freq_var_hz2\n217.5,1.7,0.01\n225,3.3,0.02\n";
        let c = parse_calibration(ok.as_bytes(), "t").unwrap();
        assert_eq!(c.points().len(), 2);

        let unsorted = "pressure_mbar,mean_freq_hz,freq_var_hz2\n225,3.3,0\n217.5,1.7,0\n";
        match parse_calibration(unsorted.as_bytes(), "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = "pressure_mbar,mean_freq_hz,freq_var_hz2\n225,3.3,0\n225,3.4,0\n";
        assert!(parse_calibration(dup.as_bytes(), "t").is_err());

        let bad_header = "pressure,mean,var\n225,3.3,0\n";
        assert!(matches!(
            parse_calibration(bad_header.as_bytes(), "t"),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_value = "pressure_mbar,mean_freq_hz,freq_var_hz2\n225,abc,0\n";
        assert!(matches!(
            parse_calibration(bad_value.as_bytes(), "t"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_trace_is_a_parse_error() {
        assert!(matches!(
            parse_trace("".as_bytes(), "t"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_trace("time_s,intensity\n".as_bytes(), "t"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn trace_gap_names_first_bad_index() {
        let text = "time_s,intensity\n0.00,0\n0.01,0\n0.02,1\n0.04,0\n0.05,0\n";
        match parse_trace(text.as_bytes(), "t") {
            Err(e @ Error::NonUniformSampling { index: 3 }) => {
                assert!(e.to_string().contains("non-uniform sampling"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_within_tolerance_is_accepted() {
        let text = "time_s,intensity\n10.0,0\n10.01,0.5\n10.02,1\n10.03,0\n";
        let tr = parse_trace(text.as_bytes(), "t").unwrap();
        assert!((tr.sample_rate() - 100.0).abs() < 1e-6);
        assert_eq!(tr.start_time(), 10.0);
        assert_eq!(tr.samples(), &[0.0, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn events_must_increase() {
        let text = "timestamp_s\n0.5\n0.4\n";
        assert!(matches!(
            parse_events(text.as_bytes(), "t", EventOrigin::Arrival),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn decoded_erasure_row() {
        let w = WindowDiagnostic {
            window_index: 2,
            window_start: 24.0,
            window_end: 36.4,
            midpoint_time: 30.2,
            decision_freq: None,
            estimate_time: None,
            n_estimates: 0,
            decision: Decision::Erasure,
        };
        assert_eq!(
            format_decoded(&[w]),
            format!("{DECODED_HEADER}\n2,30.2,,-1\n")
        );
    }

    proptest! {
        #[test]
        fn events_round_trip(gaps in prop::collection::vec(1e-6f64..10.0, 0..50)) {
            let mut t = 0.0;
            let ts: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
            let ev = DropletEventSeries::new(ts, EventOrigin::Arrival).unwrap();
            let text = format_events(&ev);
            let back = parse_events(text.as_bytes(), "rt", EventOrigin::Arrival).unwrap();
            prop_assert_eq!(back, ev);
        }

        #[test]
        fn trace_round_trip(samples in prop::collection::vec(-5.0f64..5.0, 2..200), rate in prop::sample::select(vec![50.0, 100.0, 250.0])) {
            let tr = IntensityTrace::new(rate, 0.0, samples).unwrap();
            let back = parse_trace(format_trace(&tr).as_bytes(), "rt").unwrap();
            prop_assert_eq!(back.samples(), tr.samples());
            prop_assert!((back.sample_rate() - rate).abs() < 1e-6 * rate);
        }
    }
}
