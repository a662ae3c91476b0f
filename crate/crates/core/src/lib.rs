//! Simulation and analysis toolkit for locking a laser to an excited-state
//! transition through cascade (ladder) electromagnetically induced
//! transparency.
//!
//! The crate is layered bottom-up:
//!
//! * [`atomic`]: laser, vapor and Rydberg-level parameters and the scaling of
//!   the coupling Rabi frequency with power, beam waist and principal
//!   quantum number.
//! * [`eit`]: weak-probe ladder susceptibility, Doppler averaging and field
//!   transmission for hot cells and cold clouds.
//! * [`fm`]: FM-spectroscopy beat amplitude, phase-sensitive demodulation,
//!   error-signal scans and zero-crossing analysis.
//! * [`servo`]: laser frequency noise, the dual-branch lock loop and its
//!   linear closed-loop prediction.
//! * [`metrology`]: rms-over-slope, beat-note and spectrum-fit linewidth
//!   estimators plus the Allan deviation.
//! * [`scenario`] and [`run`]: configuration, validation and orchestration
//!   used by the `eitlock` command-line tool.
//!
//! Internally every rate and detuning is an angular frequency in rad/s.
//! Conversion to MHz happens only in [`scenario`] and the CSV writers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod eit;
mod error;
pub mod fm;
pub mod io;
pub mod metrology;
pub mod presets;
pub mod run;
pub mod scenario;
pub mod seed;
pub mod servo;
pub mod special;
pub mod spectral;
pub mod units;

pub use atomic::{DecayRates, LaserParams, RydbergLevel, Series, VaporParams};
pub use eit::{CascadeSystem, ComplexResponse, QuadratureMethod, QuadratureSpec};
pub use error::{Error, Result};
pub use fm::{ErrorSignalTrace, FmParams, ZeroCrossing};
pub use metrology::{FitResult, LinewidthEstimate, LinewidthMethod};
pub use scenario::ScenarioConfig;
pub use servo::{ControllerConfig, Discriminant, FrequencyTimeSeries, NoiseModel};
