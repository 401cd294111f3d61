//! M-ary frequency shift keying over droplet rates.
//!
//! Each symbol holds the dispersed-phase pressure at one setpoint for a
//! symbol interval. The receiver turns arrival times into inter-arrival
//! frequencies, smooths them with a trailing average, and classifies the
//! smoothed estimate nearest each detection window's midpoint against
//! midpoint thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transmitter::{DropletEventSeries, PressureSchedule, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FskConfig {
    pub m: usize,
    /// One setpoint per symbol, mbar, strictly increasing.
    pub symbol_pressures: Vec<f64>,
    /// `m - 1` decision boundaries, Hz, strictly increasing.
    pub thresholds: Vec<f64>,
    /// Seconds each symbol is held.
    pub symbol_interval: f64,
    /// Span of each detection window, s. May exceed the symbol interval.
    pub detection_window: f64,
    /// Number of raw estimates in the trailing average.
    pub smoothing_k: usize,
}

impl Default for FskConfig {
    fn default() -> Self {
        Self {
            m: 4,
            symbol_pressures: vec![217.5, 225.0, 232.5, 240.0],
            thresholds: vec![2.51, 4.05, 5.69],
            symbol_interval: 20.0,
            detection_window: 20.0,
            smoothing_k: 3,
        }
    }
}

impl FskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("alphabet size must be ≥ 2"));
        }
        if self.symbol_pressures.len() != self.m {
            return Err(Error::invalid(format!(
                "{} symbol pressures for an alphabet of {}",
                self.symbol_pressures.len(),
                self.m
            )));
        }
        if self.thresholds.len() != self.m - 1 {
            return Err(Error::invalid(format!(
                "{} thresholds for an alphabet of {} (need {})",
                self.thresholds.len(),
                self.m,
                self.m - 1
            )));
        }
        if let Some(i) = first_non_increasing(&self.symbol_pressures) {
            return Err(Error::Ordering {
                what: "symbol pressures",
                index: i,
            });
        }
        if let Some(i) = first_non_increasing(&self.thresholds) {
            return Err(Error::Ordering {
                what: "thresholds",
                index: i,
            });
        }
        if self
            .symbol_pressures
            .iter()
            .any(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::invalid("symbol pressures must be finite and > 0"));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        if !(self.symbol_interval.is_finite() && self.symbol_interval > 0.0) {
            return Err(Error::invalid("symbol interval must be > 0"));
        }
        if !(self.detection_window.is_finite() && self.detection_window > 0.0) {
            return Err(Error::invalid("detection window must be > 0"));
        }
        if self.smoothing_k < 1 {
            return Err(Error::invalid("smoothing_k must be ≥ 1"));
        }
        Ok(())
    }
}

fn first_non_increasing(xs: &[f64]) -> Option<usize> {
    (1..xs.len()).find(|&i| !(xs[i] > xs[i - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint {
    pub time: f64,
    pub raw_freq: f64,
    pub smoothed_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencySeries {
    pub points: Vec<FrequencyPoint>,
}

impl FrequencySeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Midpoints between consecutive mean frequencies.
pub fn compute_thresholds(means: &[f64]) -> Result<Vec<f64>> {
    if means.len() < 2 {
        return Err(Error::invalid("need at least two mean frequencies"));
    }
    if let Some(i) = first_non_increasing(means) {
        return Err(Error::Ordering {
            what: "mean frequencies",
            index: i,
        });
    }
    Ok(means.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// Maps a symbol sequence onto consecutive setpoint segments.
pub fn encode(symbols: &[usize], config: &FskConfig) -> Result<PressureSchedule> {
    config.validate()?;
    if let Some((i, &s)) = symbols.iter().enumerate().find(|(_, &s)| s >= config.m) {
        return Err(Error::invalid(format!(
            "symbol {s} at position {i} outside alphabet 0..{}",
            config.m
        )));
    }
    let segments = symbols
        .iter()
        .enumerate()
        .map(|(k, &s)| Segment {
            setpoint: config.symbol_pressures[s],
            start_time: k as f64 * config.symbol_interval,
        })
        .collect();
    PressureSchedule::new(segments, symbols.len() as f64 * config.symbol_interval)
}

/// `(t_i, 1 / (t_i - t_{i-1}))` for every consecutive pair of arrivals.
pub fn instantaneous_frequencies(arrivals: &DropletEventSeries) -> Vec<(f64, f64)> {
    arrivals
        .timestamps()
        .windows(2)
        .map(|w| (w[1], 1.0 / (w[1] - w[0])))
        .collect()
}

/// Trailing moving average over the last `k` raw values; the first `k - 1`
/// points average over what is available.
pub fn smooth(series: &[(f64, f64)], k: usize) -> FrequencySeries {
    let k = k.max(1);
    let points = series
        .iter()
        .enumerate()
        .map(|(i, &(time, raw))| {
            let window = &series[(i + 1).saturating_sub(k)..=i];
            let smoothed = window.iter().map(|p| p.1).sum::<f64>() / window.len() as f64;
            FrequencyPoint {
                time,
                raw_freq: raw,
                smoothed_freq: smoothed,
            }
        })
        .collect();
    FrequencySeries { points }
}

/// Number of thresholds strictly below `freq`. A frequency equal to a
/// threshold falls in the lower symbol.
pub fn classify(freq: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().filter(|&&t| t < freq).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Symbol(usize),
    /// No frequency estimate fell inside the window.
    Erasure,
}

impl Decision {
    pub fn symbol(self) -> Option<usize> {
        match self {
            Decision::Symbol(s) => Some(s),
            Decision::Erasure => None,
        }
    }

    /// Symbol index, or -1 for an erasure.
    pub fn code(self) -> i64 {
        self.symbol().map_or(-1, |s| s as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowDiagnostic {
    pub window_index: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub midpoint_time: f64,
    /// Smoothed frequency used for the decision; `None` on erasure.
    pub decision_freq: Option<f64>,
    /// Time stamp of the chosen estimate; `None` on erasure.
    pub estimate_time: Option<f64>,
    pub n_estimates: usize,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub decisions: Vec<Decision>,
    pub windows: Vec<WindowDiagnostic>,
    pub frequencies: FrequencySeries,
}

/// Window-midpoint decoding of `n_symbols` symbols from arrival times.
pub fn decode(
    arrivals: &DropletEventSeries,
    config: &FskConfig,
    n_symbols: usize,
) -> Result<Decoded> {
    config.validate()?;
    if n_symbols < 1 {
        return Err(Error::invalid("n_symbols must be ≥ 1"));
    }
    let frequencies = smooth(&instantaneous_frequencies(arrivals), config.smoothing_k);
    let times: Vec<f64> = frequencies.points.iter().map(|p| p.time).collect();

    let mut decisions = Vec::with_capacity(n_symbols);
    let mut windows = Vec::with_capacity(n_symbols);
    for k in 0..n_symbols {
        let start = k as f64 * config.symbol_interval;
        let end = start + config.detection_window;
        let mid = start + 0.5 * config.detection_window;
        let lo = times.partition_point(|&t| t < start);
        let hi = times.partition_point(|&t| t <= end);
        // earliest estimate wins a tie in distance to the midpoint
        let chosen = (lo..hi).min_by(|&a, &b| {
            (times[a] - mid)
                .abs()
                .total_cmp(&(times[b] - mid).abs())
                .then(a.cmp(&b))
        });
        let (decision, decision_freq, estimate_time) = match chosen {
            Some(j) => {
                let f = frequencies.points[j].smoothed_freq;
                (
                    Decision::Symbol(classify(f, &config.thresholds)),
                    Some(f),
                    Some(times[j]),
                )
            }
            None => (Decision::Erasure, None, None),
        };
        decisions.push(decision);
        windows.push(WindowDiagnostic {
            window_index: k,
            window_start: start,
            window_end: end,
            midpoint_time: mid,
            decision_freq,
            estimate_time,
            n_estimates: hi - lo,
            decision,
        });
    }
    Ok(Decoded {
        decisions,
        windows,
        frequencies,
    })
}
