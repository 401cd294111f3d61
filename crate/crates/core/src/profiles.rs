//! Ready-made experiment specs for the 20 s and 12 s four-symbol setups.

use crate::config::profile;
use crate::harness::ExperimentSpec;
use crate::transmitter::GenJitterModel;

fn load(name: &str) -> ExperimentSpec {
    profile(name)
        .and_then(|cfg| cfg.spec().ok())
        .expect("built-in profile is valid")
}

/// 20 s symbols, 20 s windows, τ = 1 s, CV = 0.1, channel jitter 20 ms.
pub fn paper_20s() -> ExperimentSpec {
    load("paper-20s")
}

/// 12 s symbols, 12.4 s windows, same noise as [`paper_20s`].
pub fn paper_12s() -> ExperimentSpec {
    load("paper-12s")
}

/// [`paper_20s`] with arrivals rendered to a 100 Hz intensity trace and
/// re-detected, so detector errors add to modem errors.
pub fn paper_20s_optical() -> ExperimentSpec {
    load("paper-20s-optical")
}

/// Strips controller lag, generation jitter and channel jitter.
pub fn noiseless(mut spec: ExperimentSpec) -> ExperimentSpec {
    spec.controller.time_constant_tau = 0.0;
    spec.jitter = GenJitterModel::none();
    spec.channel.jitter_sigma = 0.0;
    spec.channel.loss_prob = 0.0;
    if let Some(opt) = spec.optical.as_mut() {
        opt.pulse.noise_sigma = 0.0;
    }
    spec
}
