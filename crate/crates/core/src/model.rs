//! Parameter records, pulse envelopes, and calibration formulas.
//!
//! Unit convention: every rate and frequency held by these types is angular,
//! in rad/ns, and every time is in ns. The `*_mhz` constructors convert
//! ordinary frequencies with [`mhz_to_angular`]; keeping a single internal
//! convention avoids stray factors of 2π between the Bloch equations and the
//! spectral axes.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// 1 MHz expressed as an angular rate in rad/ns.
pub const MHZ_TO_RAD_PER_NS: f64 = 1.0e-3 * TAU;

/// Convert an ordinary frequency in MHz to an angular rate in rad/ns.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    f_mhz * MHZ_TO_RAD_PER_NS
}

/// Convert an angular rate in rad/ns to an ordinary frequency in MHz.
pub fn angular_to_mhz(w: f64) -> f64 {
    w / MHZ_TO_RAD_PER_NS
}

/// Interaction-Hamiltonian phase convention selecting how the emitted field
/// enters the output: the emission term is `e^{iφ}·√(Γ₁/2)·⟨σ₋⟩` with
/// φ ∈ {0, π/2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldPhase {
    /// φ = 0.
    Zero,
    /// φ = π/2 (default).
    #[default]
    HalfPi,
}

impl FieldPhase {
    pub fn radians(self) -> f64 {
        match self {
            FieldPhase::Zero => 0.0,
            FieldPhase::HalfPi => FRAC_PI_2,
        }
    }

    /// `e^{iφ}`.
    pub fn phasor(self) -> Complex64 {
        match self {
            FieldPhase::Zero => Complex64::new(1.0, 0.0),
            FieldPhase::HalfPi => Complex64::new(0.0, 1.0),
        }
    }
}

impl std::str::FromStr for FieldPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(FieldPhase::Zero),
            "pi/2" | "pi_over_2" => Ok(FieldPhase::HalfPi),
            other => Err(Error::Parse(format!(
                "field_phase must be `0` or `pi/2`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for FieldPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldPhase::Zero => write!(f, "0"),
            FieldPhase::HalfPi => write!(f, "pi/2"),
        }
    }
}

/// Parameters of the driven two-level system.
///
/// `detuning` is δ = ω_d − ω_q, the drive carrier frequency minus the qubit
/// transition frequency. The qubit frequency itself is carrier bookkeeping
/// only; the dynamics live in the frame rotating at the drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Qubit transition frequency in GHz (bookkeeping only).
    pub qubit_frequency_ghz: f64,
    /// Relaxation rate Γ₁ into the waveguide, rad/ns.
    pub gamma1: f64,
    /// Pure dephasing rate γ_φ, rad/ns.
    pub gamma_phi: f64,
    /// Drive detuning δ = ω_d − ω_q, rad/ns.
    pub detuning: f64,
    /// Rabi rate Ω_R at the envelope maximum, rad/ns.
    pub rabi_peak: f64,
    /// Interaction-Hamiltonian phase convention.
    pub field_phase: FieldPhase,
}

impl ModelParams {
    pub fn new(gamma1: f64, gamma_phi: f64, detuning: f64, rabi_peak: f64) -> Result<Self> {
        let p = ModelParams {
            qubit_frequency_ghz: 4.835,
            gamma1,
            gamma_phi,
            detuning,
            rabi_peak,
            field_phase: FieldPhase::HalfPi,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from ordinary frequencies in MHz.
    pub fn from_mhz(
        omega_r_mhz: f64,
        gamma1_mhz: f64,
        gamma_phi_mhz: f64,
        detuning_mhz: f64,
    ) -> Result<Self> {
        ModelParams::new(
            mhz_to_angular(gamma1_mhz),
            mhz_to_angular(gamma_phi_mhz),
            mhz_to_angular(detuning_mhz),
            mhz_to_angular(omega_r_mhz),
        )
    }

    pub fn with_field_phase(mut self, phase: FieldPhase) -> Self {
        self.field_phase = phase;
        self
    }

    pub fn with_qubit_frequency_ghz(mut self, f_q: f64) -> Self {
        self.qubit_frequency_ghz = f_q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma1 <= 0.0 || !self.gamma1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma1 must be > 0, got {}",
                self.gamma1
            )));
        }
        if self.gamma_phi < 0.0 || !self.gamma_phi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma_phi must be >= 0, got {}",
                self.gamma_phi
            )));
        }
        if self.rabi_peak < 0.0 || !self.rabi_peak.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rabi_peak must be >= 0, got {}",
                self.rabi_peak
            )));
        }
        if !self.detuning.is_finite() {
            return Err(Error::InvalidArgument("detuning must be finite".into()));
        }
        Ok(())
    }

    /// Coherence decay rate Γ₂ = Γ₁/2 + γ_φ, rad/ns. Strictly positive for a
    /// valid parameter set.
    pub fn gamma2(&self) -> f64 {
        self.gamma1 / 2.0 + self.gamma_phi
    }

    /// Coherent drive amplitude α at the envelope maximum in √(photons/ns),
    /// from Ω_R = √(2Γ₁)·α.
    pub fn alpha_peak(&self) -> f64 {
        self.rabi_peak / (2.0 * self.gamma1).sqrt()
    }
}

/// Sampled drive envelope, normalized to a unit plateau.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEnvelope {
    /// Pulse duration in ns.
    pub duration: f64,
    /// Fraction of the duration occupied by the two cosine ramps combined.
    pub taper_fraction: f64,
    /// Sample step in ns.
    pub dt: f64,
    /// Normalized amplitude samples on the uniform grid `0, dt, 2·dt, ...`.
    pub samples: Vec<f64>,
}

impl PulseEnvelope {
    /// Envelope value at an arbitrary time, linearly interpolated between
    /// grid samples; zero outside `[0, duration]`.
    pub fn value_at(&self, t: f64) -> f64 {
        // 1e-9 ns slop absorbs float accumulation in t = i·dt sums.
        if t < 0.0 || t > self.duration + 1e-9 {
            return 0.0;
        }
        let x = (t / self.dt).min((self.samples.len() - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= self.samples.len() {
            return *self.samples.last().unwrap_or(&0.0);
        }
        let frac = x - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// Samples of the envelope on an `n`-point grid with the envelope's own
    /// step, extending past the pulse end with zeros.
    pub fn on_grid(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.value_at(i as f64 * self.dt)).collect()
    }
}

/// Build a cosine-tapered (Tukey) envelope: raised-cosine ramps of combined
/// length `taper_fraction·duration` framing a flat unit plateau.
pub fn cosine_taper(duration: f64, taper_fraction: f64, dt: f64) -> Result<PulseEnvelope> {
    if duration <= 0.0 || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be > 0 ns, got {duration}"
        )));
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0 ns, got {dt}")));
    }
    if dt > duration / 10.0 {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} ns is too coarse for a {duration} ns pulse (need dt <= duration/10)"
        )));
    }
    if !(0.0..1.0).contains(&taper_fraction) {
        return Err(Error::InvalidArgument(format!(
            "taper_fraction must lie in [0, 1), got {taper_fraction}"
        )));
    }
    let n = (duration / dt).round() as usize + 1;
    let ramp = taper_fraction * duration / 2.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            if ramp == 0.0 {
                1.0
            } else if t < ramp {
                0.5 * (1.0 - (std::f64::consts::PI * t / ramp).cos())
            } else if t > duration - ramp {
                0.5 * (1.0 - (std::f64::consts::PI * (duration - t) / ramp).cos())
            } else {
                1.0
            }
        })
        .collect();
    Ok(PulseEnvelope {
        duration,
        taper_fraction,
        dt,
        samples,
    })
}

/// Field-scale calibration. The default is normalized units, V₀ = 1, so
/// field traces are in √(photons/ns); a physical scale enters only as the
/// multiplicative factor V₀ = √(G·ħω·Z₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    /// Photon energy ħω in J (normalized default 1).
    pub hbar_omega: f64,
    /// Line impedance Z₀ in Ω (normalized default 1).
    pub z0: f64,
    /// Amplification coefficient G (default 1).
    pub gain: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            hbar_omega: 1.0,
            z0: 1.0,
            gain: 1.0,
        }
    }
}

impl CalibrationParams {
    pub fn new(hbar_omega: f64, z0: f64, gain: f64) -> Result<Self> {
        let c = CalibrationParams {
            hbar_omega,
            z0,
            gain,
        };
        if c.v0() <= 0.0 || !c.v0().is_finite() {
            return Err(Error::InvalidArgument(
                "calibration requires hbar_omega, z0, gain > 0".into(),
            ));
        }
        Ok(c)
    }

    /// Field scale V₀ = √(G·ħω·Z₀).
    pub fn v0(&self) -> f64 {
        (self.gain * self.hbar_omega * self.z0).sqrt()
    }
}

/// Photon rate of a resonant drive from its peak Rabi rate:
/// ν = Ω_R² / (2Γ₁), in photons/ns.
pub fn photon_rate_from_rabi(rabi: f64, gamma1: f64) -> Result<f64> {
    if gamma1.is_nan() || gamma1 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma1 must be > 0, got {gamma1}"
        )));
    }
    Ok(rabi * rabi / (2.0 * gamma1))
}

/// Photon rate of the drive from the measured pulse/oscillation amplitude
/// ratio: ν = (Γ₁/8)·(V_p/V_q)², in photons/ns.
pub fn photon_rate_from_amplitude_ratio(vp_over_vq: f64, gamma1: f64) -> Result<f64> {
    if gamma1.is_nan() || gamma1 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma1 must be > 0, got {gamma1}"
        )));
    }
    if vp_over_vq.is_nan() || vp_over_vq < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "amplitude ratio must be >= 0, got {vp_over_vq}"
        )));
    }
    Ok(gamma1 / 8.0 * vp_over_vq * vp_over_vq)
}

/// Magnitude of the radiation-amplitude constant κ = √(ħω_q·Z₀·Γ₁/2).
///
/// κ relates the emitter's coherence to the voltage it radiates into one
/// waveguide direction; the half-photon energy budget of symmetric decay
/// fixes the √(Γ₁/2) factor.
pub fn kappa_magnitude(hbar_omega_q: f64, z0: f64, gamma1: f64) -> Result<f64> {
    if [hbar_omega_q, z0, gamma1].iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::InvalidArgument(
            "kappa_magnitude requires hbar_omega_q, z0, gamma1 > 0".into(),
        ));
    }
    Ok((hbar_omega_q * z0 * gamma1 / 2.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn unit_conversions_round_trip() {
        let w = mhz_to_angular(19.8);
        assert_relative_eq!(w, 0.124407069, epsilon = 1e-9);
        assert_relative_eq!(angular_to_mhz(w), 19.8, epsilon = 1e-12);
    }

    #[test]
    fn taper_matches_pulse_geometry() {
        // 120 ns pulse, 2 % taper: 1.2 ns rise, plateau at exactly 1, 1.2 ns fall.
        let env = cosine_taper(120.0, 0.02, 0.1).unwrap();
        assert_eq!(env.samples.len(), 1201);
        assert_eq!(env.samples[0], 0.0);
        assert_abs_diff_eq!(env.value_at(0.6), 0.5, epsilon = 1e-12);
        assert_eq!(env.value_at(1.2), 1.0);
        assert_eq!(env.value_at(60.0), 1.0);
        assert_eq!(env.value_at(118.8), 1.0);
        assert_abs_diff_eq!(env.value_at(119.4), 0.5, epsilon = 1e-12);
        assert_eq!(env.value_at(121.0), 0.0);
    }

    #[test]
    fn zero_taper_is_rectangular() {
        let env = cosine_taper(120.0, 0.0, 0.1).unwrap();
        assert!(env.samples.iter().all(|&s| s == 1.0));
        assert_eq!(env.value_at(60.0), 1.0);
    }

    #[test]
    fn midpoint_is_plateau() {
        for tf in [0.0, 0.02, 0.5, 0.99] {
            let env = cosine_taper(80.0, tf, 0.05).unwrap();
            assert_eq!(env.value_at(40.0), 1.0, "taper_fraction {tf}");
        }
    }

    #[test]
    fn taper_rejects_bad_arguments() {
        assert!(cosine_taper(-1.0, 0.0, 0.1).is_err());
        assert!(cosine_taper(120.0, 0.0, 0.0).is_err());
        assert!(cosine_taper(120.0, 1.0, 0.1).is_err());
        assert!(cosine_taper(120.0, -0.1, 0.1).is_err());
        assert!(cosine_taper(1.0, 0.0, 0.5).is_err()); // dt > duration/10
    }

    #[test]
    fn envelope_area_is_tukey_area() {
        for (dur, tf, dt) in [(120.0, 0.02, 0.1), (200.0, 0.3, 0.05), (50.0, 0.0, 0.01)] {
            let env = cosine_taper(dur, tf, dt).unwrap();
            let area: f64 = env
                .samples
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]) * dt)
                .sum();
            assert_abs_diff_eq!(area, dur * (1.0 - tf / 2.0), epsilon = dt);
        }
    }

    #[test]
    fn photon_rate_matches_fitted_operating_point() {
        // Ω_R/2π = 19.8 MHz, Γ₁/2π = 0.9 MHz -> 1.37 photons/ns (rounds to 1.4).
        let nu = photon_rate_from_rabi(mhz_to_angular(19.8), mhz_to_angular(0.9)).unwrap();
        assert_abs_diff_eq!(nu, 1.3685, epsilon = 5e-4);
        assert!((nu / 1.4 - 1.0).abs() < 0.03);
        assert_eq!(photon_rate_from_rabi(0.0, 1.0).unwrap(), 0.0);
        assert!(photon_rate_from_rabi(1.0, 0.0).is_err());
    }

    #[test]
    fn photon_rate_is_quadratic_in_rabi() {
        let g1 = mhz_to_angular(0.9);
        for i in 1..10 {
            let w = 0.01 * i as f64;
            let nu1 = photon_rate_from_rabi(w, g1).unwrap();
            let nu2 = photon_rate_from_rabi(2.0 * w, g1).unwrap();
            assert_relative_eq!(nu2, 4.0 * nu1, epsilon = 1e-14);
        }
    }

    #[test]
    fn photon_rate_cross_check_against_alpha() {
        // ν must equal |α|² with α = Ω_R/√(2Γ₁), for arbitrary parameters.
        let pairs = [
            (0.1, 0.005),
            (0.2, 0.01),
            (0.05, 0.02),
            (0.3, 0.001),
            (0.124, 0.00565),
            (1.0, 0.5),
            (0.01, 0.04),
            (0.7, 0.003),
            (0.33, 0.11),
            (0.002, 0.0007),
        ];
        for (rabi, g1) in pairs {
            let alpha = rabi / (2.0_f64 * g1).sqrt();
            let nu = photon_rate_from_rabi(rabi, g1).unwrap();
            assert_relative_eq!(nu, alpha * alpha, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplitude_ratio_inverts_photon_rate() {
        let g1 = mhz_to_angular(0.9);
        for nu in [0.1, 1.0, 1.3685, 7.5] {
            let ratio = (8.0 * nu / g1).sqrt();
            let back = photon_rate_from_amplitude_ratio(ratio, g1).unwrap();
            assert_relative_eq!(back, nu, epsilon = 1e-12);
        }
        assert_eq!(photon_rate_from_amplitude_ratio(0.0, g1).unwrap(), 0.0);
        assert!(photon_rate_from_amplitude_ratio(-1.0, g1).is_err());
    }

    #[test]
    fn kappa_normalized_and_scaling() {
        assert_abs_diff_eq!(kappa_magnitude(1.0, 1.0, 2.0).unwrap(), 1.0);
        let g1 = mhz_to_angular(0.9);
        let k = kappa_magnitude(1.0, 1.0, g1).unwrap();
        let k2 = kappa_magnitude(1.0, 1.0, 2.0 * g1).unwrap();
        assert_relative_eq!(k2, k * 2.0_f64.sqrt(), epsilon = 1e-14);
        // κ²·(1/Γ₁)/Z₀ is the energy of half a photon, exactly.
        assert_relative_eq!(k * k / g1, 0.5, epsilon = 1e-14);
        assert!(kappa_magnitude(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::from_mhz(19.8, 0.9, 0.6, 0.0).is_ok());
        assert!(ModelParams::from_mhz(19.8, 0.0, 0.6, 0.0).is_err());
        assert!(ModelParams::from_mhz(19.8, 0.9, -0.1, 0.0).is_err());
        assert!(ModelParams::from_mhz(-19.8, 0.9, 0.6, 0.0).is_err());
        let p = ModelParams::from_mhz(19.8, 0.9, 0.6, 0.0).unwrap();
        assert_relative_eq!(p.gamma2(), mhz_to_angular(0.9 / 2.0 + 0.6), epsilon = 1e-14);
        assert!(p.gamma2() > 0.0);
    }

    #[test]
    fn field_phase_parses() {
        assert_eq!("0".parse::<FieldPhase>().unwrap(), FieldPhase::Zero);
        assert_eq!("pi/2".parse::<FieldPhase>().unwrap(), FieldPhase::HalfPi);
        assert!("1.57".parse::<FieldPhase>().is_err());
    }
}
