//! Microdroplet frequency-shift-keying channel simulator and modem.
//!
//! The transmitter holds a dispersed-phase pressure per symbol; droplets are
//! generated as a renewal process whose rate follows a calibrated
//! pressure → frequency curve, carried to a sampling point, optionally
//! rendered to and recovered from an optical intensity trace, and decoded by
//! classifying smoothed inter-arrival frequencies against midpoint
//! thresholds.
//!
//! ```
//! use dropfsk::{harness, profiles};
//!
//! let spec = profiles::noiseless(profiles::paper_20s());
//! let report = harness::run_experiment(&spec).unwrap();
//! assert_eq!(report.ser, 0.0);
//! ```

// `!(x > 0.0)` style checks are there to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod modem;
pub mod photodetect;
pub mod profiles;
pub mod seed;
pub mod transmitter;

pub use calibration::{CalibrationCurve, CalibrationPoint, OperatingRange};
pub use channel::{ChannelModel, Geometry};
pub use error::{Error, Result};
pub use harness::{ExperimentReport, ExperimentSpec, OpticalStage};
pub use modem::{Decision, FskConfig};
pub use photodetect::{IntensityTrace, PulseModel, SpikeDetectorParams};
pub use transmitter::{
    ControllerModel, DropletEventSeries, EventOrigin, GenJitterModel, PressureSchedule,
};
