//! Optical intensity at the sampling point: pulse synthesis from arrival
//! times, and arrival recovery from a sampled trace.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::transmitter::{DropletEventSeries, EventOrigin};

/// Pulses are evaluated out to this many widths; beyond it they are below
/// exp(-50) of the amplitude.
const PULSE_SUPPORT_SIGMAS: f64 = 10.0;

/// Uniformly sampled intensity signal.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    sample_rate: f64,
    start_time: f64,
    samples: Vec<f64>,
}

impl IntensityTrace {
    pub fn new(sample_rate: f64, start_time: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be > 0"));
        }
        if !start_time.is_finite() {
            return Err(Error::invalid("trace start time must be finite"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("trace needs at least one sample"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            sample_rate,
            start_time,
            samples,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseModel {
    pub amplitude: f64,
    /// Gaussian pulse std, s.
    pub width_sigma: f64,
    pub baseline: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for PulseModel {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            width_sigma: 0.010,
            baseline: 0.0,
            noise_sigma: 0.0,
            rng_seed: 0,
        }
    }
}

impl PulseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::invalid("pulse amplitude must be > 0"));
        }
        if !(self.width_sigma.is_finite() && self.width_sigma > 0.0) {
            return Err(Error::invalid("pulse width must be > 0"));
        }
        if !self.baseline.is_finite() {
            return Err(Error::invalid("baseline must be finite"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeDetectorParams {
    pub threshold: f64,
    /// Refractory interval after an accepted peak, s.
    pub min_separation: f64,
}

impl SpikeDetectorParams {
    /// Half-amplitude threshold with a refractory interval of three pulse
    /// widths.
    pub fn for_pulse(pulse: &PulseModel) -> Self {
        Self {
            threshold: pulse.baseline + 0.5 * pulse.amplitude,
            min_separation: 3.0 * pulse.width_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::invalid("detector threshold must be finite"));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(Error::invalid("detector min separation must be ≥ 0"));
        }
        Ok(())
    }
}

/// Renders arrivals as Gaussian pulses on `[0, duration]` sampled at
/// `sample_rate`, plus white Gaussian noise.
pub fn synthesize_trace(
    arrivals: &DropletEventSeries,
    pulse: &PulseModel,
    sample_rate: f64,
    duration: f64,
) -> Result<IntensityTrace> {
    pulse.validate()?;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be > 0"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("trace duration must be ≥ 0"));
    }
    if let Some(&last) = arrivals.timestamps().last() {
        if last > duration {
            return Err(Error::OutOfRange {
                what: "arrival time",
                value: last,
                min: 0.0,
                max: duration,
            });
        }
    }

    let n = (duration * sample_rate + 1e-9).floor() as usize + 1;
    let mut samples = vec![pulse.baseline; n];
    let support = PULSE_SUPPORT_SIGMAS * pulse.width_sigma;
    let two_var = 2.0 * pulse.width_sigma * pulse.width_sigma;
    for &ta in arrivals.timestamps() {
        let lo = ((ta - support) * sample_rate).ceil().max(0.0) as usize;
        let hi = (((ta + support) * sample_rate).floor() as usize).min(n - 1);
        for (k, s) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let dt = k as f64 / sample_rate - ta;
            *s += pulse.amplitude * (-dt * dt / two_var).exp();
        }
    }
    if pulse.noise_sigma > 0.0 {
        let mut rng = rng_from_seed(pulse.rng_seed);
        let normal =
            Normal::new(0.0, pulse.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }
    IntensityTrace::new(sample_rate, 0.0, samples)
}

/// Indices of local maxima above `threshold`. A plateau reports its first
/// sample; the trace ends count as lower neighbours.
fn local_maxima(samples: &[f64], threshold: f64) -> impl Iterator<Item = usize> + '_ {
    let n = samples.len();
    (0..n).filter(move |&i| {
        let x = samples[i];
        if !(x > threshold && (i == 0 || x > samples[i - 1])) {
            return false;
        }
        // walk a plateau to its right edge
        let mut j = i;
        while j + 1 < n && samples[j + 1] == x {
            j += 1;
        }
        j + 1 == n || x > samples[j + 1]
    })
}

/// Peak times of spikes above `params.threshold`, accepting peaks greedily in
/// time order and suppressing any within `params.min_separation` of the last
/// accepted one.
pub fn detect_spikes(
    trace: &IntensityTrace,
    params: &SpikeDetectorParams,
) -> Result<DropletEventSeries> {
    params.validate()?;
    let mut times: Vec<f64> = Vec::new();
    for i in local_maxima(trace.samples(), params.threshold) {
        let t = trace.time_of(i);
        match times.last() {
            Some(&last) if t - last < params.min_separation => {}
            _ => times.push(t),
        }
    }
    // a trace starting before 0 can yield negative peak times
    if times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::invalid("detected spike before t = 0"));
    }
    DropletEventSeries::new(times, EventOrigin::Arrival)
}
