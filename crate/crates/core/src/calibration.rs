//! Pressure → droplet-frequency transfer characteristic.
//!
//! A [`CalibrationCurve`] is a set of knots `(pressure, mean frequency,
//! frequency variance)` with piecewise-linear interpolation between them.
//! Queries outside the knot range are refused rather than extrapolated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to range checks so that lagged pressures which land on a
/// knot up to rounding are still accepted.
const RANGE_SLACK_MBAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingRange {
    /// Continuous-phase pressure, mbar.
    pub p_cont: f64,
    pub p_disp_min: f64,
    pub p_disp_max: f64,
}

impl Default for OperatingRange {
    fn default() -> Self {
        Self {
            p_cont: 1200.0,
            p_disp_min: 205.0,
            p_disp_max: 250.0,
        }
    }
}

impl OperatingRange {
    pub fn new(p_cont: f64, p_disp_min: f64, p_disp_max: f64) -> Result<Self> {
        let all_positive = [p_cont, p_disp_min, p_disp_max]
            .iter()
            .all(|p| p.is_finite() && *p > 0.0);
        if !all_positive {
            return Err(Error::invalid("operating pressures must be finite and > 0"));
        }
        if p_disp_min >= p_disp_max {
            return Err(Error::invalid(format!(
                "dispersed-phase range [{p_disp_min}, {p_disp_max}] is empty"
            )));
        }
        Ok(Self {
            p_cont,
            p_disp_min,
            p_disp_max,
        })
    }

    pub fn contains(&self, pressure: f64) -> bool {
        (self.p_disp_min..=self.p_disp_max).contains(&pressure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    /// Dispersed-phase pressure, mbar.
    pub pressure: f64,
    /// Mean droplet frequency, Hz.
    pub mean_freq: f64,
    /// Frequency variance, Hz².
    pub freq_variance: f64,
}

impl CalibrationPoint {
    pub fn new(pressure: f64, mean_freq: f64, freq_variance: f64) -> Self {
        Self {
            pressure,
            mean_freq,
            freq_variance,
        }
    }
}

/// Monotone pressure → frequency map.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    points: Vec<CalibrationPoint>,
}

impl CalibrationCurve {
    /// Builds a curve, checking that pressures and mean frequencies are both
    /// strictly increasing, means are positive and variances non-negative.
    pub fn new(points: Vec<CalibrationPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("calibration curve needs at least one point"));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.pressure.is_finite() && p.pressure > 0.0) {
                return Err(Error::invalid(format!(
                    "calibration point {i}: pressure must be finite and > 0"
                )));
            }
            if !(p.mean_freq.is_finite() && p.mean_freq > 0.0) {
                return Err(Error::invalid(format!(
                    "calibration point {i}: mean frequency must be finite and > 0"
                )));
            }
            if !(p.freq_variance.is_finite() && p.freq_variance >= 0.0) {
                return Err(Error::invalid(format!(
                    "calibration point {i}: variance must be finite and ≥ 0"
                )));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].pressure <= w[0].pressure {
                return Err(Error::Ordering {
                    what: "calibration pressures",
                    index: i + 1,
                });
            }
            if w[1].mean_freq <= w[0].mean_freq {
                return Err(Error::Ordering {
                    what: "calibration mean frequencies",
                    index: i + 1,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CalibrationPoint] {
        &self.points
    }

    pub fn min_pressure(&self) -> f64 {
        self.points[0].pressure
    }

    pub fn max_pressure(&self) -> f64 {
        self.points[self.points.len() - 1].pressure
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_freq).collect()
    }

    pub fn contains(&self, pressure: f64) -> bool {
        pressure >= self.min_pressure() - RANGE_SLACK_MBAR
            && pressure <= self.max_pressure() + RANGE_SLACK_MBAR
    }

    fn interpolate(&self, pressure: f64, value: impl Fn(&CalibrationPoint) -> f64) -> Result<f64> {
        if !pressure.is_finite() || !self.contains(pressure) {
            return Err(Error::OutOfRange {
                what: "pressure",
                value: pressure,
                min: self.min_pressure(),
                max: self.max_pressure(),
            });
        }
        let pressure = pressure.clamp(self.min_pressure(), self.max_pressure());
        // index of the first knot strictly above the query
        let upper = self.points.partition_point(|p| p.pressure <= pressure);
        if upper == 0 {
            return Ok(value(&self.points[0]));
        }
        let lo = &self.points[upper - 1];
        if upper == self.points.len() || lo.pressure == pressure {
            return Ok(value(lo));
        }
        let hi = &self.points[upper];
        let w = (pressure - lo.pressure) / (hi.pressure - lo.pressure);
        Ok(value(lo) + w * (value(hi) - value(lo)))
    }

    /// Mean droplet frequency (Hz) at `pressure` (mbar).
    pub fn mean_frequency_at(&self, pressure: f64) -> Result<f64> {
        self.interpolate(pressure, |p| p.mean_freq)
    }

    /// Frequency variance (Hz²) at `pressure` (mbar).
    pub fn variance_at(&self, pressure: f64) -> Result<f64> {
        self.interpolate(pressure, |p| p.freq_variance)
            .map(|v| v.max(0.0))
    }
}

/// Mean and unbiased sample variance of the per-interval frequencies
/// `1 / (t[i] - t[i-1])` of a run of droplet timestamps.
pub fn characterize_setpoint(timestamps: &[f64]) -> Result<(f64, f64)> {
    if timestamps.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: timestamps.len(),
        });
    }
    let mut freqs = Vec::with_capacity(timestamps.len() - 1);
    for (i, w) in timestamps.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if !(dt > 0.0) {
            return Err(Error::Ordering {
                what: "event timestamps",
                index: i + 1,
            });
        }
        freqs.push(1.0 / dt);
    }
    let n = freqs.len() as f64;
    let mean = freqs.iter().sum::<f64>() / n;
    let var = freqs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// Result of fitting an affine frequency law to a set of decision thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    /// Hz per mbar.
    pub slope: f64,
    /// Hz.
    pub intercept: f64,
    /// Largest |f(midpoint_k) - threshold_k| over all constraints, Hz.
    pub max_residual: f64,
}

impl AffineFit {
    pub fn frequency(&self, pressure: f64) -> f64 {
        self.slope * pressure + self.intercept
    }

    /// Samples the fitted law at `pressures` with zero variance.
    pub fn curve(&self, pressures: &[f64]) -> Result<CalibrationCurve> {
        if !(self.slope > 0.0) {
            return Err(Error::invalid(format!(
                "fitted slope {} Hz/mbar is not positive",
                self.slope
            )));
        }
        let points = pressures
            .iter()
            .map(|&p| CalibrationPoint::new(p, self.frequency(p), 0.0))
            .collect();
        CalibrationCurve::new(points)
    }
}

/// Reconstructs a calibration curve from symbol pressures and the decision
/// thresholds that were placed at the midpoints of their mean frequencies.
///
/// The threshold between symbols `k` and `k+1` is `f((P_k + P_{k+1}) / 2)` for
/// an affine `f`, so an ordinary least-squares fit over the midpoint
/// constraints recovers `f`. With a single threshold the system is
/// underdetermined and `f` is taken to pass through the origin.
pub fn fit_affine(pressures: &[f64], thresholds: &[f64]) -> Result<AffineFit> {
    let m = pressures.len();
    if m < 2 {
        return Err(Error::invalid(
            "affine calibration needs at least 2 pressures",
        ));
    }
    if thresholds.len() != m - 1 {
        return Err(Error::invalid(format!(
            "{m} pressures need {} thresholds, got {}",
            m - 1,
            thresholds.len()
        )));
    }
    if let Some(i) = (1..m).find(|&i| pressures[i] <= pressures[i - 1]) {
        return Err(Error::Ordering {
            what: "pressures",
            index: i,
        });
    }
    if let Some(i) = (1..thresholds.len()).find(|&i| thresholds[i] <= thresholds[i - 1]) {
        return Err(Error::Ordering {
            what: "thresholds",
            index: i,
        });
    }
    let step = pressures[1] - pressures[0];
    let span = pressures[m - 1] - pressures[0];
    if pressures
        .windows(2)
        .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * span.abs().max(1.0))
    {
        return Err(Error::invalid("pressures must be equally spaced"));
    }

    let mids: Vec<f64> = pressures.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let (slope, intercept) = if mids.len() == 1 {
        (thresholds[0] / mids[0], 0.0)
    } else {
        let n = mids.len() as f64;
        let x_bar = mids.iter().sum::<f64>() / n;
        let y_bar = thresholds.iter().sum::<f64>() / n;
        let sxy: f64 = mids
            .iter()
            .zip(thresholds)
            .map(|(x, y)| (x - x_bar) * (y - y_bar))
            .sum();
        let sxx: f64 = mids.iter().map(|x| (x - x_bar).powi(2)).sum();
        let slope = sxy / sxx;
        (slope, y_bar - slope * x_bar)
    };
    let max_residual = mids
        .iter()
        .zip(thresholds)
        .map(|(x, t)| (slope * x + intercept - t).abs())
        .fold(0.0, f64::max);
    Ok(AffineFit {
        slope,
        intercept,
        max_residual,
    })
}

/// [`fit_affine`] followed by sampling the fitted law at `pressures`.
pub fn fit_affine_calibration(pressures: &[f64], thresholds: &[f64]) -> Result<CalibrationCurve> {
    fit_affine(pressures, thresholds)?.curve(pressures)
}
