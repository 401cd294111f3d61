//! TOML experiment configuration and the built-in profiles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationCurve;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::harness::{ExperimentSpec, OpticalStage};
use crate::io;
use crate::modem::FskConfig;
use crate::photodetect::{PulseModel, SpikeDetectorParams};
use crate::transmitter::{ControllerModel, GenJitterModel};

const DEFAULT_CALIBRATION_CSV: &str = include_str!("../data/default_calibration.csv");
const PAPER_20S_TOML: &str = include_str!("../data/paper-20s.toml");
const PAPER_12S_TOML: &str = include_str!("../data/paper-12s.toml");
const PAPER_20S_OPTICAL_TOML: &str = include_str!("../data/paper-20s-optical.toml");

pub const PROFILE_NAMES: [&str; 3] = ["paper-20s", "paper-12s", "paper-20s-optical"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub pulse: PulseModel,
    /// Defaults to half-amplitude threshold and three pulse widths.
    pub detector: Option<SpikeDetectorParams>,
}

fn default_sample_rate() -> f64 {
    100.0
}

impl OpticalConfig {
    pub fn stage(&self) -> OpticalStage {
        OpticalStage {
            pulse: self.pulse,
            detector: self
                .detector
                .unwrap_or_else(|| SpikeDetectorParams::for_pulse(&self.pulse)),
            sample_rate: self.sample_rate,
        }
    }
}

/// On-disk experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_symbols: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Calibration CSV; relative paths resolve against the config file.
    /// The built-in reconstructed curve is used when absent.
    pub calibration: Option<PathBuf>,
    #[serde(default)]
    pub fsk: FskConfig,
    pub controller: ControllerModel,
    pub jitter: GenJitterModel,
    #[serde(default)]
    pub channel: ChannelModel,
    pub optical: Option<OpticalConfig>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file, resolving a relative calibration path against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound {
                what: "config file",
                path: path.to_path_buf(),
            },
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        if let Some(cal) = &cfg.calibration {
            if cal.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.calibration = Some(base.join(cal));
            }
        }
        Ok(cfg)
    }

    /// A built-in profile name or a path to a TOML file.
    pub fn load_named(name_or_path: &str) -> Result<Self> {
        match profile(name_or_path) {
            Some(cfg) => Ok(cfg),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn curve(&self) -> Result<CalibrationCurve> {
        match &self.calibration {
            Some(path) => io::read_calibration(path),
            None => Ok(default_calibration()),
        }
    }

    pub fn spec_with_curve(&self, curve: CalibrationCurve) -> Result<ExperimentSpec> {
        let spec = ExperimentSpec {
            fsk: self.fsk.clone(),
            curve,
            controller: self.controller,
            jitter: self.jitter,
            channel: self.channel,
            optical: self.optical.as_ref().map(OpticalConfig::stage),
            n_symbols: self.n_symbols,
            master_seed: self.seed,
            repetitions: self.repetitions,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        self.spec_with_curve(self.curve()?)
    }
}

/// The affine reconstruction of the four-symbol calibration.
pub fn default_calibration() -> CalibrationCurve {
    io::parse_calibration(DEFAULT_CALIBRATION_CSV.as_bytes(), "default calibration")
        .expect("embedded calibration is valid")
}

pub fn profile(name: &str) -> Option<ExperimentConfig> {
    let text = match name {
        "paper-20s" => PAPER_20S_TOML,
        "paper-12s" => PAPER_12S_TOML,
        "paper-20s-optical" => PAPER_20S_OPTICAL_TOML,
        _ => return None,
    };
    Some(ExperimentConfig::from_toml(text, name).expect("embedded profile is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_affine_calibration;

    #[test]
    fn embedded_calibration_matches_the_fit() {
        let fit =
            fit_affine_calibration(&[217.5, 225.0, 232.5, 240.0], &[2.51, 4.05, 5.69]).unwrap();
        let shipped = default_calibration();
        for (a, b) in fit.points().iter().zip(shipped.points()) {
            assert_eq!(a.pressure, b.pressure);
            assert!((a.mean_freq - b.mean_freq).abs() < 1e-12);
            assert_eq!(b.freq_variance, 0.0);
        }
    }

    #[test]
    fn profiles_parse_and_validate() {
        for name in PROFILE_NAMES {
            let cfg = profile(name).unwrap();
            let spec = cfg.spec().unwrap();
            assert_eq!(spec.n_symbols, 20);
            assert_eq!(spec.controller.time_constant_tau, 1.0);
            assert_eq!(spec.jitter.coefficient_of_variation, 0.1);
            assert_eq!(spec.channel.jitter_sigma, 0.02);
        }
        assert_eq!(profile("paper-12s").unwrap().fsk.detection_window, 12.4);
        assert!(profile("paper-20s").unwrap().optical.is_none());
        assert!(profile("paper-20s-optical").unwrap().optical.is_some());
        assert!(profile("nope").is_none());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = profile("paper-12s").unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text, "rt").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!(
            "{}\nbogus = 1\n",
            PAPER_20S_TOML.replace("[fsk]", "bogus_top = 2\n[fsk]")
        );
        assert!(matches!(
            ExperimentConfig::from_toml(&text, "x"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_calibration_file_is_not_found() {
        let mut cfg = profile("paper-20s").unwrap();
        cfg.calibration = Some(PathBuf::from("/nonexistent/cal.csv"));
        let err = cfg.spec().unwrap_err();
        assert!(matches!(err, Error::NotFound { .. }));
        assert!(err.to_string().contains("calibration file not found"));
    }
}
