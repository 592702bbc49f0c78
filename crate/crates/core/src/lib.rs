//! Time-domain simulator and analysis toolkit for a coherent microwave pulse
//! scattering off a single two-level emitter strongly coupled to a 1D
//! waveguide.
//!
//! The crate is organized around the experiment's data flow:
//!
//! * [`model`] — parameter records, pulse envelopes, photon-rate and
//!   field-scale calibration formulas;
//! * [`dynamics`] — Bloch-vector integration of the driven, damped two-level
//!   system and the corresponding Lindblad superoperator;
//! * [`fields`] — reconstruction of the propagating output field from the
//!   atomic trace via input-output theory, plus the power/energy audit;
//! * [`correlations`] — the non-stationary first-order correlation function
//!   G¹(t₁,t₂) computed by quantum regression, instantaneous power spectral
//!   densities, and the steady-state spectrum;
//! * [`dressed`] — analytic dressed-state predictions for sideband positions
//!   and amplitudes;
//! * [`spectra`] — magnitude spectra of complex traces, detuning scans, and
//!   peak extraction;
//! * [`measurement`] — emulation of the heterodyne measurement chain (noise,
//!   shot averaging, IF conversion, low-pass filtering);
//! * [`estimation`] — nonlinear least-squares extraction of the system
//!   parameters from radiation traces.
//!
//! All rates and frequencies are stored internally as angular quantities in
//! rad/ns and times in ns; constructors that accept ordinary frequencies in
//! MHz convert via `2π × 10⁻³`.

pub mod correlations;
pub mod dressed;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod fields;
pub mod io;
pub mod measurement;
pub mod model;
pub mod spectra;

pub use crate::correlations::{IpsdMap, RegressionCache, TwoTimeGrid};
pub use crate::dressed::DressedPrediction;
pub use crate::dynamics::{BlochState, BlochTrace, Liouvillian};
pub use crate::error::{Error, Result};
pub use crate::estimation::{FitBounds, FitOptions, FitProblem, FitResult};
pub use crate::fields::{EnergyReport, FieldTrace};
pub use crate::measurement::ChainConfig;
pub use crate::model::{CalibrationParams, FieldPhase, ModelParams, PulseEnvelope};
pub use crate::spectra::{ScanResult, Spectrum};
