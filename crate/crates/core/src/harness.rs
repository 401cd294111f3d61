//! End-to-end experiments: random symbols through the full transmitter,
//! channel and receiver chain, scored against what was sent.

use rand::Rng;
use rayon::prelude::*;

use crate::calibration::CalibrationCurve;
use crate::channel::{propagate, ChannelModel};
use crate::error::{Error, Result};
use crate::modem::{decode, encode, Decision, Decoded, FskConfig, WindowDiagnostic};
use crate::photodetect::{
    detect_spikes, synthesize_trace, IntensityTrace, PulseModel, SpikeDetectorParams,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::transmitter::{
    generate_droplets, ControllerModel, DropletEventSeries, GenJitterModel, JitterMode,
    PressureSchedule,
};

pub const STAGE_SYMBOLS: &str = "symbols";
pub const STAGE_GENERATION: &str = "generation";
pub const STAGE_CHANNEL: &str = "channel";
pub const STAGE_OPTICAL: &str = "optical";

/// Optional intensity stage: arrivals are rendered to a trace and
/// re-detected before decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalStage {
    pub pulse: PulseModel,
    pub detector: SpikeDetectorParams,
    pub sample_rate: f64,
}

impl OpticalStage {
    pub fn with_defaults(pulse: PulseModel) -> Self {
        Self {
            detector: SpikeDetectorParams::for_pulse(&pulse),
            pulse,
            sample_rate: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub fsk: FskConfig,
    pub curve: CalibrationCurve,
    pub controller: ControllerModel,
    /// `rng_seed` is replaced by a seed derived from `master_seed`.
    pub jitter: GenJitterModel,
    /// `rng_seed` is replaced by a seed derived from `master_seed`.
    pub channel: ChannelModel,
    pub optical: Option<OpticalStage>,
    pub n_symbols: usize,
    pub master_seed: u64,
    pub repetitions: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.fsk.validate()?;
        self.controller.validate()?;
        self.jitter.validate()?;
        self.channel.validate()?;
        if let Some(opt) = &self.optical {
            opt.pulse.validate()?;
            opt.detector.validate()?;
            if !(opt.sample_rate.is_finite() && opt.sample_rate > 0.0) {
                return Err(Error::invalid("sample rate must be > 0"));
            }
        }
        if self.n_symbols < 1 {
            return Err(Error::invalid("n_symbols must be ≥ 1"));
        }
        if self.repetitions < 1 {
            return Err(Error::invalid("repetitions must be ≥ 1"));
        }
        if let Some(p) = self
            .fsk
            .symbol_pressures
            .iter()
            .chain(std::iter::once(&self.controller.initial_pressure))
            .find(|p| !self.curve.contains(**p))
        {
            return Err(Error::OutOfRange {
                what: "pressure",
                value: *p,
                min: self.curve.min_pressure(),
                max: self.curve.max_pressure(),
            });
        }
        Ok(())
    }

    /// Sets the generation CV, switching the jitter mode to match.
    pub fn set_cv(&mut self, cv: f64) {
        self.jitter.coefficient_of_variation = cv;
        self.jitter.mode = if cv > 0.0 {
            JitterMode::IntervalCv
        } else {
            JitterMode::None
        };
    }
}

/// m × (m + 1) counts of transmitted symbol (row) against decision (column);
/// the last column counts erasures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    m: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            counts: vec![vec![0; m + 1]; m],
        }
    }

    pub fn from_pairs(m: usize, tx: &[usize], rx: &[Decision]) -> Result<Self> {
        if tx.len() != rx.len() {
            return Err(Error::LengthMismatch {
                left: tx.len(),
                right: rx.len(),
            });
        }
        let mut c = Self::new(m);
        for (&t, &r) in tx.iter().zip(rx) {
            c.record(t, r)?;
        }
        Ok(c)
    }

    pub fn record(&mut self, tx: usize, rx: Decision) -> Result<()> {
        let col = match rx {
            Decision::Symbol(s) => s,
            Decision::Erasure => self.m,
        };
        if tx >= self.m || col > self.m {
            return Err(Error::invalid(format!(
                "symbol pair ({tx}, {rx:?}) outside alphabet of {}",
                self.m
            )));
        }
        self.counts[tx][col] += 1;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn erasures(&self) -> u64 {
        self.counts.iter().map(|r| r[self.m]).sum()
    }

    /// Off-diagonal plus erasure counts.
    pub fn errors(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().sum::<u64>() - r[i])
            .sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.m != self.m {
            return Err(Error::invalid(
                "cannot merge confusion matrices of different sizes",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub tx: Vec<usize>,
    pub rx: Vec<Decision>,
    pub ser: f64,
    pub confusion: ConfusionMatrix,
    pub per_window: Vec<WindowDiagnostic>,
    /// Master seed of the run.
    pub seed_used: u64,
    pub repetition: u64,
}

impl ExperimentReport {
    pub fn errors(&self) -> u64 {
        self.confusion.errors()
    }

    pub fn erasures(&self) -> u64 {
        self.confusion.erasures()
    }
}

/// I.i.d. uniform symbols from `0..m`.
pub fn random_sequence(m: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 2 {
        return Err(Error::invalid("alphabet size must be ≥ 2"));
    }
    if n < 1 {
        return Err(Error::invalid("sequence length must be ≥ 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| rng.random_range(0..m)).collect())
}

/// Fraction of positions where the decision differs from the transmitted
/// symbol; erasures always count as errors.
pub fn symbol_error_rate(tx: &[usize], rx: &[Decision]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch {
            left: tx.len(),
            right: rx.len(),
        });
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    let errors = tx
        .iter()
        .zip(rx)
        .filter(|(&t, &r)| r != Decision::Symbol(t))
        .count();
    Ok(errors as f64 / tx.len() as f64)
}

/// Intermediate products of one pass through the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub schedule: PressureSchedule,
    pub generated: DropletEventSeries,
    /// Arrivals at the sampling point, before any optical stage.
    pub arrivals: DropletEventSeries,
    pub trace: Option<IntensityTrace>,
    /// Arrivals as seen by the decoder: detected spikes when an optical
    /// stage is configured, otherwise `arrivals`.
    pub observed: DropletEventSeries,
    pub decoded: Decoded,
}

/// Sends `tx` through the chain with the stage seeds of `repetition`.
pub fn run_chain(spec: &ExperimentSpec, tx: &[usize], repetition: u64) -> Result<ChainRun> {
    spec.validate()?;
    let seed = |stage| derive_seed(spec.master_seed, stage, repetition);
    let schedule = encode(tx, &spec.fsk).map_err(|e| e.in_stage("encode"))?;

    let jitter = GenJitterModel {
        rng_seed: seed(STAGE_GENERATION),
        ..spec.jitter
    };
    let generated = generate_droplets(&schedule, &spec.controller, &spec.curve, &jitter)
        .map_err(|e| e.in_stage(STAGE_GENERATION))?;

    let channel = ChannelModel {
        rng_seed: seed(STAGE_CHANNEL),
        ..spec.channel
    };
    let arrivals = propagate(&generated, &channel).map_err(|e| e.in_stage(STAGE_CHANNEL))?;

    let (trace, observed) = match &spec.optical {
        Some(opt) => {
            let pulse = PulseModel {
                rng_seed: seed(STAGE_OPTICAL),
                ..opt.pulse
            };
            let last = arrivals.timestamps().last().copied().unwrap_or(0.0);
            let duration = schedule.total_duration().max(last) + 10.0 * pulse.width_sigma;
            let trace = synthesize_trace(&arrivals, &pulse, opt.sample_rate, duration)
                .map_err(|e| e.in_stage(STAGE_OPTICAL))?;
            let detected =
                detect_spikes(&trace, &opt.detector).map_err(|e| e.in_stage(STAGE_OPTICAL))?;
            (Some(trace), detected)
        }
        None => (None, arrivals.clone()),
    };

    let decoded = decode(&observed, &spec.fsk, tx.len()).map_err(|e| e.in_stage("decode"))?;
    Ok(ChainRun {
        schedule,
        generated,
        arrivals,
        trace,
        observed,
        decoded,
    })
}

/// Scores decisions against the transmitted symbols.
pub fn score(
    m: usize,
    tx: Vec<usize>,
    decoded: Decoded,
    seed_used: u64,
    repetition: u64,
) -> Result<ExperimentReport> {
    let ser = symbol_error_rate(&tx, &decoded.decisions)?;
    let confusion = ConfusionMatrix::from_pairs(m, &tx, &decoded.decisions)?;
    Ok(ExperimentReport {
        tx,
        rx: decoded.decisions,
        ser,
        confusion,
        per_window: decoded.windows,
        seed_used,
        repetition,
    })
}

/// Runs repetition `repetition` of `spec`.
pub fn run_repetition(spec: &ExperimentSpec, repetition: u64) -> Result<ExperimentReport> {
    spec.validate()?;
    let tx = random_sequence(
        spec.fsk.m,
        spec.n_symbols,
        derive_seed(spec.master_seed, STAGE_SYMBOLS, repetition),
    )
    .map_err(|e| e.in_stage(STAGE_SYMBOLS))?;
    let run = run_chain(spec, &tx, repetition)?;
    score(spec.fsk.m, tx, run.decoded, spec.master_seed, repetition)
}

/// Single run of `spec` (repetition 0).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_repetition(spec, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub n_reps: usize,
    pub mean_ser: f64,
    /// Sample standard deviation over repetitions; 0 for a single run.
    pub std_ser: f64,
    pub mean_errors: f64,
    /// Fraction of repetitions with no errors or erasures.
    pub error_free_fraction: f64,
    pub confusion: ConfusionMatrix,
}

impl BatchSummary {
    /// Aggregates reports; the result does not depend on their order.
    pub fn from_reports(m: usize, reports: &[ExperimentReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::invalid("no reports to summarize"));
        }
        let n = reports.len() as f64;
        let mean_ser = reports.iter().map(|r| r.ser).sum::<f64>() / n;
        let std_ser = if reports.len() > 1 {
            (reports
                .iter()
                .map(|r| (r.ser - mean_ser).powi(2))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let mean_errors = reports.iter().map(|r| r.errors() as f64).sum::<f64>() / n;
        let error_free = reports.iter().filter(|r| r.errors() == 0).count() as f64 / n;
        let mut confusion = ConfusionMatrix::new(m);
        for r in reports {
            confusion.merge(&r.confusion)?;
        }
        Ok(Self {
            n_reps: reports.len(),
            mean_ser,
            std_ser,
            mean_errors,
            error_free_fraction: error_free,
            confusion,
        })
    }
}

/// All `spec.repetitions` runs, in repetition order. Runs execute in parallel.
pub fn run_repetitions(spec: &ExperimentSpec) -> Result<Vec<ExperimentReport>> {
    spec.validate()?;
    (0..spec.repetitions as u64)
        .into_par_iter()
        .map(|rep| run_repetition(spec, rep))
        .collect()
}

pub fn run_batch(spec: &ExperimentSpec) -> Result<BatchSummary> {
    let reports = run_repetitions(spec)?;
    BatchSummary::from_reports(spec.fsk.m, &reports)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolTiming {
    pub symbol_interval: f64,
    pub detection_window: f64,
}

impl SymbolTiming {
    pub fn new(symbol_interval: f64, detection_window: f64) -> Self {
        Self {
            symbol_interval,
            detection_window,
        }
    }
}

/// Cartesian grid of parameters; every combination is one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub timings: Vec<SymbolTiming>,
    pub taus: Vec<f64>,
    pub cvs: Vec<f64>,
    pub jitter_sigmas: Vec<f64>,
}

impl SweepGrid {
    /// One-point grid holding the template's own parameters.
    pub fn from_template(spec: &ExperimentSpec) -> Self {
        Self {
            timings: vec![SymbolTiming::new(
                spec.fsk.symbol_interval,
                spec.fsk.detection_window,
            )],
            taus: vec![spec.controller.time_constant_tau],
            cvs: vec![match spec.jitter.mode {
                JitterMode::None => 0.0,
                JitterMode::IntervalCv => spec.jitter.coefficient_of_variation,
            }],
            jitter_sigmas: vec![spec.channel.jitter_sigma],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.timings.is_empty()
            || self.taus.is_empty()
            || self.cvs.is_empty()
            || self.jitter_sigmas.is_empty()
    }

    fn cells(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &timing in &self.timings {
            for &tau in &self.taus {
                for &cv in &self.cvs {
                    for &jitter_sigma in &self.jitter_sigmas {
                        out.push(SweepPoint {
                            timing,
                            tau,
                            cv,
                            jitter_sigma,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub timing: SymbolTiming,
    pub tau: f64,
    pub cv: f64,
    pub jitter_sigma: f64,
}

impl SweepPoint {
    pub fn apply(&self, template: &ExperimentSpec) -> ExperimentSpec {
        let mut spec = template.clone();
        spec.fsk.symbol_interval = self.timing.symbol_interval;
        spec.fsk.detection_window = self.timing.detection_window;
        spec.controller.time_constant_tau = self.tau;
        spec.set_cv(self.cv);
        spec.channel.jitter_sigma = self.jitter_sigma;
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Cell failure is recorded as its message and does not stop the sweep.
    pub outcome: std::result::Result<BatchSummary, String>,
}

/// Runs `repetitions` experiments at every grid cell. Cells share the
/// template's master seed, so repetition `r` sees the same symbols in every
/// cell.
pub fn sweep(
    template: &ExperimentSpec,
    grid: &SweepGrid,
    repetitions: usize,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if repetitions < 1 {
        return Err(Error::invalid("repetitions must be ≥ 1"));
    }
    Ok(grid
        .cells()
        .into_iter()
        .map(|point| {
            let mut spec = point.apply(template);
            spec.repetitions = repetitions;
            SweepRow {
                point,
                outcome: run_batch(&spec).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles;

    #[test]
    fn random_sequence_range_and_determinism() {
        let a = random_sequence(4, 20, 5).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|&s| s < 4));
        assert_eq!(a, random_sequence(4, 20, 5).unwrap());
        assert_eq!(random_sequence(4, 1, 0).unwrap().len(), 1);
        assert!(random_sequence(1, 5, 0).is_err());
        assert!(random_sequence(4, 0, 0).is_err());
    }

    #[test]
    fn binary_sequence_is_balanced() {
        let n = 100_000;
        let s = random_sequence(2, n, 1234).unwrap();
        let ones = s.iter().filter(|&&x| x == 1).count() as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((ones - 0.5).abs() < 3.0 * sigma, "fraction {ones}");
    }

    #[test]
    fn ser_examples() {
        let tx: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let same: Vec<Decision> = tx.iter().map(|&s| Decision::Symbol(s)).collect();
        assert_eq!(symbol_error_rate(&tx, &same).unwrap(), 0.0);

        let mut one_off = same.clone();
        one_off[7] = Decision::Symbol(0);
        assert_eq!(symbol_error_rate(&tx, &one_off).unwrap(), 0.05);

        let erased = vec![Decision::Erasure; 20];
        assert_eq!(symbol_error_rate(&tx, &erased).unwrap(), 1.0);

        assert!(matches!(
            symbol_error_rate(&tx, &same[..3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_accounting() {
        let tx = [0, 1, 2, 3, 3];
        let rx = [
            Decision::Symbol(0),
            Decision::Symbol(2),
            Decision::Erasure,
            Decision::Symbol(3),
            Decision::Symbol(3),
        ];
        let c = ConfusionMatrix::from_pairs(4, &tx, &rx).unwrap();
        assert_eq!(c.row_sums(), vec![1, 1, 1, 2]);
        assert_eq!(c.erasures(), 1);
        assert_eq!(c.errors(), 2);
        assert_eq!(c.rows()[1][2], 1);
        assert_eq!(c.rows()[2][4], 1);
    }

    #[test]
    fn zero_noise_profile_timings_are_error_free() {
        for profile in [profiles::paper_20s(), profiles::paper_12s()] {
            let spec = profiles::noiseless(profile);
            let report = run_experiment(&spec).unwrap();
            assert_eq!(report.ser, 0.0, "{:?}", report.rx);
            assert_eq!(report.tx.len(), 20);
        }
    }

    #[test]
    fn identical_seed_identical_report() {
        let spec = profiles::paper_12s();
        assert_eq!(
            run_experiment(&spec).unwrap(),
            run_experiment(&spec).unwrap()
        );
    }

    #[test]
    fn stage_errors_carry_the_stage_name() {
        let mut spec = profiles::paper_20s();
        spec.optical = Some(OpticalStage::with_defaults(PulseModel::default()));
        spec.optical.as_mut().unwrap().sample_rate = 0.0;
        assert!(run_experiment(&spec).is_err());

        // initial pressure inside the curve but symbol map beyond it
        let mut spec = profiles::paper_20s();
        spec.fsk.symbol_pressures[3] = 260.0;
        assert!(matches!(
            run_experiment(&spec),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn single_point_sweep_matches_batch() {
        let mut spec = profiles::paper_12s();
        spec.repetitions = 8;
        let rows = sweep(&spec, &SweepGrid::from_template(&spec), 8).unwrap();
        assert_eq!(rows.len(), 1);
        let batch = run_batch(&spec).unwrap();
        assert_eq!(rows[0].outcome.as_ref().unwrap(), &batch);
    }

    #[test]
    fn failing_cell_does_not_abort_sweep() {
        let spec = profiles::paper_20s();
        let grid = SweepGrid {
            cvs: vec![0.0, 1.5],
            ..SweepGrid::from_template(&spec)
        };
        let rows = sweep(&spec, &grid, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].outcome.is_ok());
        assert!(rows[1].outcome.is_err());
        assert!(sweep(
            &spec,
            &SweepGrid {
                taus: vec![],
                ..grid
            },
            2
        )
        .is_err());
    }
}
