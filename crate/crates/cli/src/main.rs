//! `dropfsk` command-line tool.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dropfsk::calibration::{characterize_setpoint, fit_affine};
use dropfsk::config::{default_calibration, ExperimentConfig};
use dropfsk::harness::{self, SweepGrid, SymbolTiming};
use dropfsk::modem::{compute_thresholds, decode};
use dropfsk::photodetect::detect_spikes;
use dropfsk::seed::derive_seed;
use dropfsk::transmitter::{generate_droplets, Segment};
use dropfsk::{
    io, profiles, CalibrationCurve, CalibrationPoint, ControllerModel, Error, ExperimentSpec,
    GenJitterModel, OpticalStage, PressureSchedule, PulseModel, SpikeDetectorParams,
};

#[derive(Parser)]
#[command(
    name = "dropfsk",
    version,
    about = "Microdroplet FSK simulator and modem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean and variance of the inter-arrival frequency at one setpoint.
    Characterize(CharacterizeArgs),
    /// Midpoint decision thresholds of a calibration, or an affine fit to
    /// known thresholds.
    Thresholds(ThresholdsArgs),
    /// One run through the full chain, writing every intermediate file.
    Simulate(SimulateArgs),
    /// Detect spikes in an intensity trace and decode them.
    DecodeTrace(DecodeTraceArgs),
    /// Repeated runs with random symbols; writes a report.
    Experiment(ExperimentArgs),
    /// Experiments over a parameter grid; writes a CSV table.
    Sweep(SweepArgs),
}

/// Options shared by the commands that build an experiment.
#[derive(Args)]
struct ModelArgs {
    /// Profile name (paper-20s, paper-12s, paper-20s-optical) or TOML file.
    #[arg(long, default_value = "paper-20s")]
    config: String,
    /// Calibration CSV; overrides the config.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Symbol interval in seconds.
    #[arg(long)]
    interval: Option<f64>,
    /// Detection window in seconds; defaults to the interval when only
    /// --interval is given.
    #[arg(long)]
    window: Option<f64>,
    /// Number of symbols per run.
    #[arg(long)]
    n_symbols: Option<usize>,
    /// Zero controller lag, generation jitter, channel jitter and pulse noise.
    #[arg(long)]
    noiseless: bool,
}

impl ModelArgs {
    fn config(&self) -> dropfsk::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load_named(&self.config)?;
        if let Some(path) = &self.calibration {
            cfg.calibration = Some(path.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(interval) = self.interval {
            cfg.fsk.symbol_interval = interval;
            cfg.fsk.detection_window = interval;
        }
        if let Some(window) = self.window {
            cfg.fsk.detection_window = window;
        }
        if let Some(n) = self.n_symbols {
            cfg.n_symbols = n;
        }
        Ok(cfg)
    }

    fn spec(&self) -> dropfsk::Result<ExperimentSpec> {
        let spec = self.config()?.spec()?;
        Ok(if self.noiseless {
            profiles::noiseless(spec)
        } else {
            spec
        })
    }
}

#[derive(Args)]
struct CharacterizeArgs {
    /// Events CSV recorded at a constant setpoint.
    #[arg(long, conflicts_with = "setpoint", requires = "pressure")]
    events: Option<PathBuf>,
    /// Pressure to report for --events, in mbar.
    #[arg(long)]
    pressure: Option<f64>,
    /// Simulate droplets at this setpoint (mbar) instead of reading events.
    #[arg(long, required_unless_present = "events")]
    setpoint: Option<f64>,
    /// Droplets to use; all events in the file by default, 20 when simulating.
    #[arg(long)]
    n_droplets: Option<usize>,
    /// Calibration used for simulation; the built-in curve by default.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Interval coefficient of variation for simulation.
    #[arg(long, default_value_t = 0.0)]
    cv: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also append the row to this calibration CSV, creating it if needed.
    #[arg(long)]
    append: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdsArgs {
    /// Calibration CSV; the built-in curve by default.
    #[arg(long, conflicts_with = "fit")]
    calibration: Option<PathBuf>,
    /// Fit an affine law to these thresholds (Hz, comma separated).
    #[arg(long, value_delimiter = ',', requires = "pressures")]
    fit: Option<Vec<f64>>,
    /// Equally spaced symbol pressures for --fit (mbar, comma separated).
    #[arg(long, value_delimiter = ',')]
    pressures: Option<Vec<f64>>,
    /// Write the calibration (fitted or read) to this CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Symbols CSV to send; random symbols from the seed by default.
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Render and re-detect an intensity trace even if the config has no
    /// optical stage.
    #[arg(long)]
    optical: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DecodeTraceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Intensity trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Transmitted symbols CSV; prints the symbol error rate.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Spike threshold; half the pulse amplitude above baseline by default.
    #[arg(long)]
    threshold: Option<f64>,
    /// Refractory interval between spikes in seconds.
    #[arg(long)]
    min_separation: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Repetitions; overrides the config.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Repetitions per cell; overrides the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Symbol timings as interval:window pairs, e.g. 20:20,12:12.4.
    #[arg(long, value_delimiter = ',', value_parser = parse_timing)]
    timings: Option<Vec<SymbolTiming>>,
    /// Controller time constants in seconds.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Generation interval CVs.
    #[arg(long, value_delimiter = ',')]
    cvs: Option<Vec<f64>>,
    /// Channel jitter standard deviations in seconds.
    #[arg(long, value_delimiter = ',')]
    jitters: Option<Vec<f64>>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn parse_timing(s: &str) -> Result<SymbolTiming, String> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    match s.split_once(':') {
        Some((i, w)) => Ok(SymbolTiming::new(num(i)?, num(w)?)),
        None => num(s).map(|i| SymbolTiming::new(i, i)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Characterize(a) => characterize(a),
        Command::Thresholds(a) => thresholds(a),
        Command::Simulate(a) => simulate(a),
        Command::DecodeTrace(a) => decode_trace(a),
        Command::Experiment(a) => experiment(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err.chain().any(|e| {
                e.downcast_ref::<Error>()
                    .is_some_and(Error::is_config_error)
                    || e.is::<std::io::Error>()
            });
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn curve_from(path: Option<&Path>) -> dropfsk::Result<CalibrationCurve> {
    match path {
        Some(p) => io::read_calibration(p),
        None => Ok(default_calibration()),
    }
}

fn characterize(a: CharacterizeArgs) -> anyhow::Result<()> {
    let (pressure, mut timestamps) = match (&a.events, a.setpoint) {
        (Some(path), _) => (
            a.pressure.expect("required by clap"),
            io::read_timestamps(path)?,
        ),
        (None, Some(p)) => (p, simulate_setpoint(&a, p)?),
        (None, None) => unreachable!("required by clap"),
    };
    if let Some(n) = a.n_droplets.or(a.setpoint.map(|_| 20)) {
        timestamps.truncate(n);
    }
    let (mean, var) = characterize_setpoint(&timestamps)?;
    let point = CalibrationPoint::new(pressure, mean, var);
    println!("{}", io::calibration_row(&point));
    if let Some(path) = &a.append {
        append_calibration_row(path, point)?;
    }
    Ok(())
}

fn simulate_setpoint(a: &CharacterizeArgs, setpoint: f64) -> anyhow::Result<Vec<f64>> {
    let curve = curve_from(a.calibration.as_deref())?;
    let n = a.n_droplets.unwrap_or(20);
    let freq = curve.mean_frequency_at(setpoint)?;
    let controller = ControllerModel::new(0.0, setpoint)?;
    let jitter = if a.cv > 0.0 {
        GenJitterModel::interval_cv(a.cv, derive_seed(a.seed, harness::STAGE_GENERATION, 0))
    } else {
        GenJitterModel::none()
    };
    let mut duration = (n as f64 + 1.0) / freq;
    loop {
        let schedule = PressureSchedule::new(
            vec![Segment {
                setpoint,
                start_time: 0.0,
            }],
            duration,
        )?;
        let events = generate_droplets(&schedule, &controller, &curve, &jitter)?;
        if events.len() >= n {
            return Ok(events.into_timestamps());
        }
        duration *= 2.0;
    }
}

/// Appends `point` unless the extended curve would be invalid.
fn append_calibration_row(path: &Path, point: CalibrationPoint) -> anyhow::Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    if !fresh {
        let mut points = io::read_calibration(path)?.points().to_vec();
        points.push(point);
        CalibrationCurve::new(points)
            .with_context(|| format!("not appending to {}", path.display()))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{}", io::CALIBRATION_HEADER)?;
    }
    writeln!(f, "{}", io::calibration_row(&point))?;
    Ok(())
}

fn thresholds(a: ThresholdsArgs) -> anyhow::Result<()> {
    let curve = match (&a.fit, &a.pressures) {
        (Some(targets), Some(pressures)) => {
            let fit = fit_affine(pressures, targets)?;
            eprintln!(
                "slope = {} Hz/mbar, intercept = {} Hz, max residual = {} Hz",
                io::fmt_float(fit.slope),
                io::fmt_float(fit.intercept),
                io::fmt_float(fit.max_residual)
            );
            fit.curve(pressures)?
        }
        _ => curve_from(a.calibration.as_deref())?,
    };
    if let Some(path) = &a.out {
        io::write_calibration(path, &curve)?;
    }
    println!("threshold_index,threshold_hz");
    for (i, t) in compute_thresholds(&curve.means())?.iter().enumerate() {
        println!("{i},{}", io::fmt_float(*t));
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = a.model.config()?;
    let tx = match &a.symbols {
        Some(path) => {
            let tx = io::read_symbols(path)?;
            cfg.n_symbols = tx.len();
            tx
        }
        None => harness::random_sequence(
            cfg.fsk.m,
            cfg.n_symbols,
            derive_seed(cfg.seed, harness::STAGE_SYMBOLS, 0),
        )?,
    };
    let mut spec = cfg.spec()?;
    if a.optical && spec.optical.is_none() {
        spec.optical = Some(OpticalStage::with_defaults(PulseModel::default()));
    }
    if a.model.noiseless {
        spec = profiles::noiseless(spec);
    }
    let run = harness::run_chain(&spec, &tx, 0)?;
    let out = &a.out_dir;
    io::write_symbols(&out.join("symbols.csv"), &tx)?;
    io::write_schedule(&out.join("schedule.csv"), &run.schedule)?;
    io::write_events(&out.join("generated.csv"), &run.generated)?;
    io::write_events(&out.join("arrivals.csv"), &run.arrivals)?;
    if let Some(trace) = &run.trace {
        io::write_trace(&out.join("trace.csv"), trace)?;
        io::write_events(&out.join("detected.csv"), &run.observed)?;
    }
    io::write_decoded(&out.join("decoded.csv"), &run.decoded.windows)?;
    let report = harness::score(spec.fsk.m, tx, run.decoded, spec.master_seed, 0)?;
    io::write_text(&out.join("report.txt"), &io::format_report(&report))?;
    print_decisions(&report.rx);
    println!("ser = {}", io::fmt_float(report.ser));
    Ok(())
}

fn print_decisions(rx: &[dropfsk::Decision]) {
    let codes: Vec<String> = rx.iter().map(|d| d.code().to_string()).collect();
    println!("decoded = {}", codes.join(" "));
}

fn decode_trace(a: DecodeTraceArgs) -> anyhow::Result<()> {
    let spec = a.model.spec()?;
    let trace = io::read_trace(&a.trace)?;
    let truth = a.truth.as_deref().map(io::read_symbols).transpose()?;
    let mut detector = spec
        .optical
        .map(|o| o.detector)
        .unwrap_or_else(|| SpikeDetectorParams::for_pulse(&PulseModel::default()));
    if let Some(t) = a.threshold {
        detector.threshold = t;
    }
    if let Some(s) = a.min_separation {
        detector.min_separation = s;
    }
    let n_symbols = match (&truth, a.model.n_symbols) {
        (Some(t), _) => t.len(),
        (None, Some(n)) => n,
        // whole symbols covered by the trace
        (None, None) => {
            let end = trace.time_of(trace.samples().len() - 1);
            ((end / spec.fsk.symbol_interval).round() as usize).max(1)
        }
    };
    let arrivals = detect_spikes(&trace, &detector)?;
    let decoded = decode(&arrivals, &spec.fsk, n_symbols)?;
    io::write_decoded(&a.out_dir.join("decoded.csv"), &decoded.windows)?;
    print_decisions(&decoded.decisions);
    if let Some(tx) = truth {
        let ser = harness::symbol_error_rate(&tx, &decoded.decisions)?;
        println!("ser = {}", io::fmt_float(ser));
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let mut spec = a.model.spec()?;
    if let Some(reps) = a.reps {
        spec.repetitions = reps;
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let reports = harness::run_repetitions(&spec)?;
    let summary = harness::BatchSummary::from_reports(spec.fsk.m, &reports)?;
    let summary_text = io::format_summary(&summary);
    let text = format!("{summary_text}\n{}", io::format_report(&reports[0]));
    io::write_text(&a.out_dir.join("report.txt"), &text)?;
    io::write_text(
        &a.out_dir.join("repetitions.csv"),
        &io::format_repetitions(&reports),
    )?;
    print!("{summary_text}");
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let spec = a.model.spec()?;
    let reps = a.reps.unwrap_or(spec.repetitions);
    if reps < 1 {
        bail!(Error::Config("--reps must be ≥ 1".into()));
    }
    let base = SweepGrid::from_template(&spec);
    let grid = SweepGrid {
        timings: a.timings.unwrap_or(base.timings),
        taus: a.taus.unwrap_or(base.taus),
        cvs: a.cvs.unwrap_or(base.cvs),
        jitter_sigmas: a.jitters.unwrap_or(base.jitter_sigmas),
    };
    // check every cell before running any of them
    for timing in &grid.timings {
        let mut probe = spec.clone();
        probe.fsk.symbol_interval = timing.symbol_interval;
        probe.fsk.detection_window = timing.detection_window;
        for &tau in &grid.taus {
            probe.controller.time_constant_tau = tau;
            for &cv in &grid.cvs {
                probe.set_cv(cv);
                for &sigma in &grid.jitter_sigmas {
                    probe.channel.jitter_sigma = sigma;
                    probe.validate().map_err(|e| {
                        Error::Config(format!(
                            "sweep cell interval={} window={} tau={tau} cv={cv} jitter={sigma}: {e}",
                            timing.symbol_interval, timing.detection_window
                        ))
                    })?;
                }
            }
        }
    }
    let rows = harness::sweep(&spec, &grid, reps)?;
    let table = io::format_sweep(&rows);
    io::write_text(&a.out_dir.join("sweep.csv"), &table)?;
    print!("{table}");
    for row in &rows {
        if let Err(msg) = &row.outcome {
            eprintln!("warning: cell {:?} failed: {msg}", row.point);
        }
    }
    Ok(())
}
