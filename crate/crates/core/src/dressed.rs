//! Dressed-state predictions for the driven emitter.
//!
//! With n drive photons the bare levels |g,n+1⟩ and |e,n⟩ hybridize into
//! |±n⟩ split by the generalized Rabi rate Ω = √(Ω_R² + δ²). Transitions
//! between adjacent manifolds produce sidebands at ω_d ± Ω whose signed
//! amplitudes are the matrix-element products
//!
//! ```text
//! lower (ω_d − Ω):  −Ω_R(Ω + δ) / (4Ω²)
//! upper (ω_d + Ω):  +Ω_R(Ω − δ) / (4Ω²)
//! ```
//!
//! so the sideband on the far side of the detuning dominates.

use crate::error::{Error, Result};

/// Sideband structure predicted from (Ω_R, δ) alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedPrediction {
    /// Generalized Rabi rate Ω = √(Ω_R² + δ²), rad/ns.
    pub omega_gen: f64,
    /// (|g,n+1⟩, |e,n⟩) amplitudes of |+n⟩.
    pub coeff_plus: (f64, f64),
    /// (|g,n+1⟩, |e,n⟩) amplitudes of |−n⟩.
    pub coeff_minus: (f64, f64),
    /// Signed amplitude of the ω_d − Ω sideband.
    pub amp_lower: f64,
    /// Signed amplitude of the ω_d + Ω sideband.
    pub amp_upper: f64,
}

impl DressedPrediction {
    pub fn new(rabi: f64, detuning: f64) -> Result<Self> {
        let omega_gen = generalized_rabi(rabi, detuning);
        let (amp_lower, amp_upper) = sideband_amplitudes(rabi, detuning)?;
        let cg = ((omega_gen + detuning) / (2.0 * omega_gen)).sqrt();
        let ce = ((omega_gen - detuning) / (2.0 * omega_gen)).sqrt();
        Ok(DressedPrediction {
            omega_gen,
            coeff_plus: (cg, ce),
            coeff_minus: (ce, -cg),
            amp_lower,
            amp_upper,
        })
    }
}

/// Generalized Rabi rate Ω = √(Ω_R² + δ²).
pub fn generalized_rabi(rabi: f64, detuning: f64) -> f64 {
    rabi.hypot(detuning)
}

/// Signed sideband amplitudes (lower at ω_d − Ω, upper at ω_d + Ω).
/// Undefined without a drive: (0, 0) is rejected.
pub fn sideband_amplitudes(rabi: f64, detuning: f64) -> Result<(f64, f64)> {
    let omega = generalized_rabi(rabi, detuning);
    if omega == 0.0 {
        return Err(Error::InvalidArgument(
            "sideband amplitudes are undefined at rabi = detuning = 0".into(),
        ));
    }
    let lower = -rabi * (omega + detuning) / (4.0 * omega * omega);
    let upper = rabi * (omega - detuning) / (4.0 * omega * omega);
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mhz_to_angular;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn generalized_rabi_limits() {
        let w = mhz_to_angular(19.8);
        assert_eq!(generalized_rabi(w, 0.0), w);
        assert_eq!(generalized_rabi(0.0, -w), w);
        // Off-resonant operating point: √(19.8² + 30²) = 35.945 MHz.
        let omega = generalized_rabi(w, mhz_to_angular(30.0));
        assert_abs_diff_eq!(
            crate::model::angular_to_mhz(omega),
            35.945,
            epsilon = 5e-3
        );
    }

    #[test]
    fn resonant_sidebands_are_symmetric() {
        let (lo, up) = sideband_amplitudes(mhz_to_angular(19.8), 0.0).unwrap();
        assert_relative_eq!(lo, -0.25, epsilon = 1e-14);
        assert_relative_eq!(up, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn detuning_sets_asymmetry_direction() {
        let w = mhz_to_angular(19.8);
        for f in [3.0, 14.85, 30.0, 120.0] {
            let (lo, up) = sideband_amplitudes(w, mhz_to_angular(f)).unwrap();
            assert!(lo.abs() > up.abs(), "delta > 0 must favor the lower sideband");
            let (lo2, up2) = sideband_amplitudes(w, -mhz_to_angular(f)).unwrap();
            assert!(up2.abs() > lo2.abs());
            // Reflection symmetry: δ -> −δ swaps the magnitudes exactly.
            assert_relative_eq!(lo.abs(), up2.abs(), epsilon = 1e-14);
            assert_relative_eq!(up.abs(), lo2.abs(), epsilon = 1e-14);
        }
    }

    #[test]
    fn sum_rule() {
        // amp_lower + amp_upper = −Ω_R·δ/(2Ω²), sampled over a random-ish grid.
        let mut x = 0.37_f64;
        for _ in 0..100 {
            x = (x * 997.0).fract();
            let rabi = 0.01 + 0.4 * x;
            let y = (x * 613.0).fract();
            let delta = 0.8 * (y - 0.5);
            let (lo, up) = sideband_amplitudes(rabi, delta).unwrap();
            let omega = generalized_rabi(rabi, delta);
            assert_relative_eq!(
                lo + up,
                -rabi * delta / (2.0 * omega * omega),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rejects_undriven_undetuned_input() {
        assert!(sideband_amplitudes(0.0, 0.0).is_err());
        assert!(DressedPrediction::new(0.0, 0.0).is_err());
    }

    #[test]
    fn coefficients_are_normalized() {
        for f in [-45.0, -3.0, 0.0, 12.0, 60.0] {
            let p = DressedPrediction::new(mhz_to_angular(19.8), mhz_to_angular(f)).unwrap();
            let (cg, ce) = p.coeff_plus;
            assert_relative_eq!(cg * cg + ce * ce, 1.0, epsilon = 1e-14);
            let (dg, de) = p.coeff_minus;
            assert_relative_eq!(dg * dg + de * de, 1.0, epsilon = 1e-14);
            // Orthogonality of |+n⟩ and |−n⟩.
            assert_abs_diff_eq!(cg * dg + ce * de, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn far_detuned_upper_sideband_falls_as_cube() {
        let w = mhz_to_angular(19.8);
        let mut prev = f64::NAN;
        for k in 0..6 {
            let delta = mhz_to_angular(200.0) * 2f64.powi(k);
            let (_, up) = sideband_amplitudes(w, delta).unwrap();
            if k > 0 {
                let ratio = prev / up;
                assert!(
                    (ratio / 8.0 - 1.0).abs() < 0.05,
                    "doubling delta should shrink the upper sideband ~8x, got {ratio}"
                );
            }
            prev = up;
        }
    }
}
