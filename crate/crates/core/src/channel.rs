//! Transport of generated droplets to the sampling point.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::transmitter::{DropletEventSeries, EventOrigin};

/// Separation imposed on arrivals that would otherwise coincide, s.
pub const TIE_BREAK_S: f64 = 1e-9;

/// Assumed mean carrier flow speed, mm/s.
pub const DEFAULT_FLOW_SPEED_MM_S: f64 = 10.0;

/// Chip dimensions in µm. Carried as metadata; the dynamics do not use them
/// except to derive a default transit delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub main_width: f64,
    pub neck_width: f64,
    pub orifice_width: f64,
    pub side_width: f64,
    pub etch_depth: f64,
    pub sampling_distance: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            main_width: 250.0,
            neck_width: 100.0,
            orifice_width: 50.0,
            side_width: 80.0,
            etch_depth: 15.0,
            sampling_distance: 2850.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.main_width,
            self.neck_width,
            self.orifice_width,
            self.side_width,
            self.etch_depth,
            self.sampling_distance,
        ];
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("geometry dimensions must be positive"))
        }
    }

    /// Neck-to-sampling-point travel time at `flow_speed_mm_s`.
    pub fn transit_delay(&self, flow_speed_mm_s: f64) -> f64 {
        self.sampling_distance * 1e-3 / flow_speed_mm_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    /// Mean generation → sampling-point delay, s.
    pub transit_delay: f64,
    /// Std of the per-droplet delay perturbation, s.
    pub jitter_sigma: f64,
    pub loss_prob: f64,
    pub enforce_fifo: bool,
    pub rng_seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            transit_delay: Geometry::default().transit_delay(DEFAULT_FLOW_SPEED_MM_S),
            jitter_sigma: 0.0,
            loss_prob: 0.0,
            enforce_fifo: true,
            rng_seed: 0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.transit_delay.is_finite() && self.transit_delay >= 0.0) {
            return Err(Error::invalid("transit delay must be ≥ 0"));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::invalid("channel jitter sigma must be ≥ 0"));
        }
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(Error::invalid("loss probability must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Perturbed arrival times of the surviving droplets, in generation order.
///
/// Each droplet consumes one uniform draw (loss) and one normal draw (delay)
/// regardless of outcome, so the stream stays aligned across loss settings.
/// Normal draws are repeated while the arrival would not be positive.
pub fn perturb_arrivals(gen: &DropletEventSeries, model: &ChannelModel) -> Result<Vec<f64>> {
    model.validate()?;
    if gen.origin() != EventOrigin::Generation {
        return Err(Error::invalid("channel input must be generation events"));
    }
    let mut rng = rng_from_seed(model.rng_seed);
    let normal = Normal::new(0.0, model.jitter_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(gen.len());
    for &t in gen.timestamps() {
        let lost = rng.random::<f64>() < model.loss_prob;
        let nominal = t + model.transit_delay;
        let arrival = if model.jitter_sigma > 0.0 {
            loop {
                let a = nominal + normal.sample(&mut rng);
                if a > 0.0 {
                    break a;
                }
            }
        } else {
            nominal
        };
        if !lost {
            out.push(arrival);
        }
    }
    Ok(out)
}

/// Moves generation events to the sampling point.
///
/// Only the arrival order is observable, so perturbed times are sorted and
/// any coincident times are pushed apart by [`TIE_BREAK_S`].
pub fn propagate(gen: &DropletEventSeries, model: &ChannelModel) -> Result<DropletEventSeries> {
    let mut arrivals = perturb_arrivals(gen, model)?;
    if model.enforce_fifo {
        arrivals.sort_by(f64::total_cmp);
    }
    for i in 1..arrivals.len() {
        if arrivals[i] <= arrivals[i - 1] {
            if !model.enforce_fifo {
                return Err(Error::invalid(
                    "arrivals reordered by jitter with FIFO enforcement disabled",
                ));
            }
            arrivals[i] = arrivals[i - 1] + TIE_BREAK_S;
        }
    }
    DropletEventSeries::new(arrivals, EventOrigin::Arrival)
}
