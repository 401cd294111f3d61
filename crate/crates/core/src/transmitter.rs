//! Symbol schedule → controller pressure → droplet generation events.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationCurve, OperatingRange};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Events at or before `duration + END_SLACK_S` belong to the run; absorbs
/// rounding in the accumulated interval sum.
const END_SLACK_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub setpoint: f64,
    pub start_time: f64,
}

/// Piecewise-constant pressure setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSchedule {
    segments: Vec<Segment>,
    total_duration: f64,
}

impl PressureSchedule {
    pub fn new(segments: Vec<Segment>, total_duration: f64) -> Result<Self> {
        if !(total_duration.is_finite() && total_duration >= 0.0) {
            return Err(Error::invalid("schedule duration must be finite and ≥ 0"));
        }
        if let Some(first) = segments.first() {
            if first.start_time != 0.0 {
                return Err(Error::invalid("first schedule segment must start at 0"));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            if !(w[1].start_time > w[0].start_time) {
                return Err(Error::Ordering {
                    what: "segment start times",
                    index: i + 1,
                });
            }
        }
        if let Some(last) = segments.last() {
            if last.start_time > total_duration {
                return Err(Error::invalid(
                    "last segment starts after the schedule ends",
                ));
            }
        }
        if segments
            .iter()
            .any(|s| !(s.setpoint.is_finite() && s.setpoint > 0.0))
        {
            return Err(Error::invalid("setpoints must be finite and > 0"));
        }
        Ok(Self {
            segments,
            total_duration,
        })
    }

    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
            total_duration: 0.0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn check_range(&self, range: &OperatingRange) -> Result<()> {
        match self.segments.iter().find(|s| !range.contains(s.setpoint)) {
            Some(s) => Err(Error::OutOfRange {
                what: "setpoint",
                value: s.setpoint,
                min: range.p_disp_min,
                max: range.p_disp_max,
            }),
            None => Ok(()),
        }
    }
}

/// First-order lag between commanded setpoint and delivered pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerModel {
    /// Seconds; 0 means the setpoint is reached instantly.
    pub time_constant_tau: f64,
    /// Pressure before the first segment, mbar.
    pub initial_pressure: f64,
}

impl ControllerModel {
    pub fn new(time_constant_tau: f64, initial_pressure: f64) -> Result<Self> {
        let c = Self {
            time_constant_tau,
            initial_pressure,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_constant_tau.is_finite() && self.time_constant_tau >= 0.0) {
            return Err(Error::invalid("controller time constant must be ≥ 0"));
        }
        if !(self.initial_pressure.is_finite() && self.initial_pressure > 0.0) {
            return Err(Error::invalid("initial pressure must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterMode {
    None,
    IntervalCv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenJitterModel {
    pub mode: JitterMode,
    /// σ/μ of each inter-droplet interval.
    pub coefficient_of_variation: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl GenJitterModel {
    pub fn none() -> Self {
        Self {
            mode: JitterMode::None,
            coefficient_of_variation: 0.0,
            rng_seed: 0,
        }
    }

    pub fn interval_cv(cv: f64, seed: u64) -> Self {
        Self {
            mode: JitterMode::IntervalCv,
            coefficient_of_variation: cv,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cv = self.coefficient_of_variation;
        if !(cv.is_finite() && (0.0..1.0).contains(&cv)) {
            return Err(Error::invalid(format!(
                "coefficient of variation {cv} must lie in [0, 1)"
            )));
        }
        Ok(())
    }

    fn effective_cv(&self) -> f64 {
        match self.mode {
            JitterMode::None => 0.0,
            JitterMode::IntervalCv => self.coefficient_of_variation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventOrigin {
    Generation,
    Arrival,
}

/// Strictly increasing, non-negative droplet event times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DropletEventSeries {
    timestamps: Vec<f64>,
    origin: EventOrigin,
}

impl DropletEventSeries {
    pub fn new(timestamps: Vec<f64>, origin: EventOrigin) -> Result<Self> {
        if let Some(i) = timestamps
            .iter()
            .position(|t| !(t.is_finite() && *t >= 0.0))
        {
            return Err(Error::invalid(format!(
                "event {i} has invalid timestamp {}",
                timestamps[i]
            )));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(Error::Ordering {
                what: "event timestamps",
                index: i,
            });
        }
        Ok(Self { timestamps, origin })
    }

    pub fn empty(origin: EventOrigin) -> Self {
        Self {
            timestamps: Vec::new(),
            origin,
        }
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn origin(&self) -> EventOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn into_timestamps(self) -> Vec<f64> {
        self.timestamps
    }
}

/// Controller output over a whole schedule, with the pressure at every
/// segment entry precomputed.
#[derive(Debug, Clone)]
pub struct PressureTrajectory<'a> {
    schedule: &'a PressureSchedule,
    tau: f64,
    initial: f64,
    entry_pressures: Vec<f64>,
}

impl<'a> PressureTrajectory<'a> {
    pub fn new(schedule: &'a PressureSchedule, controller: &ControllerModel) -> Result<Self> {
        controller.validate()?;
        let tau = controller.time_constant_tau;
        let segs = schedule.segments();
        let mut entry_pressures = Vec::with_capacity(segs.len());
        let mut p = controller.initial_pressure;
        for (i, seg) in segs.iter().enumerate() {
            entry_pressures.push(p);
            let end = segs
                .get(i + 1)
                .map_or(schedule.total_duration(), |s| s.start_time);
            p = lag_response(p, seg.setpoint, end - seg.start_time, tau);
        }
        Ok(Self {
            schedule,
            tau,
            initial: controller.initial_pressure,
            entry_pressures,
        })
    }

    /// Delivered pressure at time `t` (s).
    pub fn at(&self, t: f64) -> Result<f64> {
        let duration = self.schedule.total_duration();
        if !(t >= 0.0 && t <= duration) {
            return Err(Error::OutOfRange {
                what: "time",
                value: t,
                min: 0.0,
                max: duration,
            });
        }
        let segs = self.schedule.segments();
        let idx = segs.partition_point(|s| s.start_time <= t);
        if idx == 0 {
            return Ok(self.initial);
        }
        let seg = &segs[idx - 1];
        Ok(lag_response(
            self.entry_pressures[idx - 1],
            seg.setpoint,
            t - seg.start_time,
            self.tau,
        ))
    }
}

fn lag_response(start: f64, setpoint: f64, elapsed: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        setpoint
    } else {
        setpoint + (start - setpoint) * (-elapsed / tau).exp()
    }
}

/// Delivered pressure at `t` for `schedule` driven through `controller`.
pub fn pressure_at(
    schedule: &PressureSchedule,
    controller: &ControllerModel,
    t: f64,
) -> Result<f64> {
    PressureTrajectory::new(schedule, controller)?.at(t)
}

/// Renewal-process droplet generation.
///
/// Starting from t = 0, each interval has mean `1 / f(P(t))` evaluated at the
/// interval start and is drawn from a Gamma law with the configured CV. Events
/// falling after the schedule end are discarded.
pub fn generate_droplets(
    schedule: &PressureSchedule,
    controller: &ControllerModel,
    curve: &CalibrationCurve,
    jitter: &GenJitterModel,
) -> Result<DropletEventSeries> {
    jitter.validate()?;
    let trajectory = PressureTrajectory::new(schedule, controller)?;
    let duration = schedule.total_duration();
    let cv = jitter.effective_cv();
    let mut rng = rng_from_seed(jitter.rng_seed);
    // Gamma(shape, scale) with unit mean; scaled by μ per interval
    let unit_gamma = if cv > 0.0 {
        let shape = 1.0 / (cv * cv);
        Some(Gamma::new(shape, 1.0 / shape).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };

    let mut events = Vec::new();
    let mut t: f64 = 0.0;
    if duration <= 0.0 {
        return Ok(DropletEventSeries::empty(EventOrigin::Generation));
    }
    loop {
        let pressure = trajectory.at(t.min(duration))?;
        let freq = curve
            .mean_frequency_at(pressure)
            .map_err(|_| Error::PressureExcursion {
                time: t,
                pressure,
                min: curve.min_pressure(),
                max: curve.max_pressure(),
            })?;
        let mean_interval = 1.0 / freq;
        let interval = match &unit_gamma {
            Some(g) => draw_positive(g, &mut rng) * mean_interval,
            None => mean_interval,
        };
        let next = t + interval;
        if next > duration + END_SLACK_S {
            break;
        }
        if next > t {
            events.push(next);
        }
        t = next;
    }
    DropletEventSeries::new(events, EventOrigin::Generation)
}

fn draw_positive<R: Rng>(g: &Gamma<f64>, rng: &mut R) -> f64 {
    loop {
        let x = g.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}
