//! Propagating output fields and the power/energy audit.
//!
//! The right-moving output is the input plus the emitter's radiation,
//! `a_o(t) = α(t) + e^{iφ}·√(Γ₁/2)·⟨σ₋(t)⟩`, reported in units of
//! V₀·√(photons/ns). The drive-phase convention keeps α(t) real and
//! non-negative, so the real quadrature is in phase with the pulse.
//!
//! Directional powers, in photons/ns, follow from the same relation:
//!
//! ```text
//! P_r(t) = |α|² − α·√(Γ₁/2)·⟨σy⟩ + (Γ₁/2)·(1 − ⟨σz⟩)/2
//! P_l(t) = (Γ₁/2)·(1 − ⟨σz⟩)/2
//! ```
//!
//! and satisfy the pointwise balance Ṗ_e + P_r + P_l − |α|² = 0.

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{integrate_rates, BlochState, BlochTrace};
use crate::error::{Error, Result};
use crate::model::{FieldPhase, ModelParams, PulseEnvelope};

/// Complex output-field samples (I + iQ quadratures) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

impl FieldTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn index_of(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt).round() as usize).min(self.len().saturating_sub(1))
    }

    /// Sub-trace covering `[t_from, t_to]`, endpoints snapped to the grid.
    pub fn segment(&self, t_from: f64, t_to: f64) -> Result<FieldTrace> {
        if t_to <= t_from {
            return Err(Error::InvalidArgument(format!(
                "empty segment [{t_from}, {t_to}]"
            )));
        }
        let i0 = self.index_of(t_from);
        let i1 = self.index_of(t_to);
        if i1 <= i0 {
            return Err(Error::InvalidArgument(format!(
                "segment [{t_from}, {t_to}] contains no samples"
            )));
        }
        Ok(FieldTrace {
            t0: self.time(i0),
            dt: self.dt,
            samples: self.samples[i0..=i1].to_vec(),
        })
    }

    /// Peak instantaneous power max |V(t)|².
    pub fn peak_power(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Output field from input-output theory:
/// `V(t) = V₀·(α(t) + e^{iφ}·√(Γ₁/2)·⟨σ₋(t)⟩)`.
pub fn output_field(
    envelope_alpha: &[Complex64],
    trace: &BlochTrace,
    gamma1: f64,
    phase: FieldPhase,
    v0: f64,
) -> Result<FieldTrace> {
    if envelope_alpha.len() != trace.len() {
        return Err(Error::GridMismatch(format!(
            "alpha has {} samples, trace has {}",
            envelope_alpha.len(),
            trace.len()
        )));
    }
    let coupling = phase.phasor() * (gamma1 / 2.0).sqrt();
    let samples = envelope_alpha
        .iter()
        .zip(&trace.sigma_minus)
        .map(|(a, sm)| (a + coupling * sm) * v0)
        .collect();
    Ok(FieldTrace {
        t0: trace.t0,
        dt: trace.dt,
        samples,
    })
}

/// The emitter's own radiation, `V₀·e^{iφ}·√(Γ₁/2)·⟨σ₋(t)⟩` — the output
/// minus the bare pulse.
pub fn radiation_field(trace: &BlochTrace, gamma1: f64, phase: FieldPhase, v0: f64) -> FieldTrace {
    let coupling = phase.phasor() * (gamma1 / 2.0).sqrt() * v0;
    FieldTrace {
        t0: trace.t0,
        dt: trace.dt,
        samples: trace.sigma_minus.iter().map(|sm| coupling * sm).collect(),
    }
}

/// Average power moving right past the emitter, photons/ns. `alpha_now` is
/// the real, non-negative drive amplitude; the Bloch state is in the φ = π/2
/// frame where the coherent dipole rides on σy.
pub fn right_power(alpha_now: f64, state: &BlochState, gamma1: f64) -> f64 {
    alpha_now * alpha_now - alpha_now * (gamma1 / 2.0).sqrt() * state.sy
        + gamma1 / 2.0 * (1.0 - state.sz) / 2.0
}

/// Average power moving left (pure emission), photons/ns. Always ≥ 0.
pub fn left_power(state: &BlochState, gamma1: f64) -> f64 {
    gamma1 / 2.0 * (1.0 - state.sz) / 2.0
}

/// Photon bookkeeping over a time window.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EnergyReport {
    /// Window (start, end) in ns.
    pub window_ns: (f64, f64),
    /// Photons delivered by the drive in the window, ∫|α|².
    pub input_photons: f64,
    /// Photons transmitted to the right, ∫P_r.
    pub transmitted_photons: f64,
    /// Photons emitted to the left, ∫P_l.
    pub reflected_photons: f64,
    /// Transmission deficit N − E_r.
    pub deficit: f64,
}

/// Integrate the directional powers over `window` by the trapezoid rule on
/// the RK4 grid. The simulation always runs in the φ = π/2 frame; the audit
/// is convention-independent.
pub fn energy_audit(
    params: &ModelParams,
    envelope: &PulseEnvelope,
    window: (f64, f64),
) -> Result<EnergyReport> {
    params.validate()?;
    let (w0, w1) = window;
    if w0.is_nan() || w1.is_nan() || w0 < 0.0 || w1 <= w0 {
        return Err(Error::InvalidArgument(format!(
            "window ({w0}, {w1}) must satisfy 0 <= start < end"
        )));
    }
    let t_end = w1.max(envelope.duration);
    let trace = integrate_rates(
        params.rabi_peak,
        params.detuning,
        params.gamma1,
        params.gamma2(),
        envelope,
        t_end,
    )?;
    audit_trace(params, envelope, &trace, window)
}

/// Audit over an already-integrated trace (φ = π/2 frame).
pub fn audit_trace(
    params: &ModelParams,
    envelope: &PulseEnvelope,
    trace: &BlochTrace,
    window: (f64, f64),
) -> Result<EnergyReport> {
    let (w0, w1) = window;
    let span_end = trace.time(trace.len() - 1);
    if w0 < trace.t0 - 1e-9 || w1 > span_end + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "window ({w0}, {w1}) lies outside the simulated span [{}, {span_end}]",
            trace.t0
        )));
    }
    let i0 = trace.index_of(w0);
    let i1 = trace.index_of(w1);
    if i1 <= i0 {
        return Err(Error::InvalidArgument("window contains no grid cells".into()));
    }
    let alpha_peak = params.alpha_peak();
    let dt = trace.dt;
    let mut input = 0.0;
    let mut right = 0.0;
    let mut left = 0.0;
    let value = |i: usize| {
        let a = alpha_peak * envelope.value_at(trace.time(i));
        let s = &trace.states[i];
        (a * a, right_power(a, s, params.gamma1), left_power(s, params.gamma1))
    };
    let (mut prev_in, mut prev_r, mut prev_l) = value(i0);
    for i in i0 + 1..=i1 {
        let (cur_in, cur_r, cur_l) = value(i);
        input += 0.5 * (prev_in + cur_in) * dt;
        right += 0.5 * (prev_r + cur_r) * dt;
        left += 0.5 * (prev_l + cur_l) * dt;
        (prev_in, prev_r, prev_l) = (cur_in, cur_r, cur_l);
    }
    Ok(EnergyReport {
        window_ns: (trace.time(i0), trace.time(i1)),
        input_photons: input,
        transmitted_photons: right,
        reflected_photons: left,
        deficit: input - right,
    })
}
