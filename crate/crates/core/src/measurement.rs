//! Emulation of the heterodyne measurement chain.
//!
//! Stages, in order: per-shot additive complex white Gaussian noise with
//! variance set by the single-shot SNR relative to a reference power;
//! averaging over `n_avg` shots (folded analytically into one draw with
//! variance/n_avg — shots are i.i.d.); an optional intermediate-frequency
//! stage (the complex trace becomes a real IF voltage and is digitally
//! demodulated back to baseband); and a linear-phase windowed-sinc low-pass.
//!
//! Noise is generated by a counter-keyed RNG: sample i draws from a stream
//! keyed by (seed, i), so output is bit-identical regardless of evaluation
//! order or thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::FieldTrace;

/// Heterodyne chain settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Single-shot signal-to-noise ratio in dB (negative when
    /// noise-dominated). `None` disables noise entirely.
    pub snr_db: Option<f64>,
    /// Number of averaged shots, >= 1.
    pub n_avg: u64,
    /// Low-pass cutoff in MHz; must be below the grid Nyquist frequency.
    pub lpf_mhz: f64,
    /// Intermediate frequency in MHz; 0 disables the IF stage.
    pub if_mhz: f64,
    /// RNG seed.
    pub rng_seed: u64,
    /// Reference power for the SNR definition. `None` uses the peak power
    /// of the clean input trace (the emitter-only radiation in normal use).
    pub reference_power: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            snr_db: None,
            n_avg: 1,
            lpf_mhz: 50.0,
            if_mhz: 0.0,
            rng_seed: 1,
            reference_power: None,
        }
    }
}

impl ChainConfig {
    fn validate(&self, dt: f64) -> Result<()> {
        if self.n_avg < 1 {
            return Err(Error::InvalidArgument("n_avg must be >= 1".into()));
        }
        let nyquist_mhz = 500.0 / dt;
        if self.lpf_mhz.is_nan() || self.lpf_mhz <= 0.0 || self.lpf_mhz >= nyquist_mhz {
            return Err(Error::InvalidArgument(format!(
                "lpf cutoff {} MHz must lie in (0, {nyquist_mhz}) MHz for dt = {dt} ns",
                self.lpf_mhz
            )));
        }
        if self.if_mhz < 0.0 {
            return Err(Error::InvalidArgument("if_mhz must be >= 0".into()));
        }
        if self.if_mhz > 0.0 {
            if self.if_mhz < self.lpf_mhz {
                return Err(Error::InvalidArgument(
                    "if_mhz must be at least the lpf cutoff to separate the image".into(),
                ));
            }
            if self.if_mhz + self.lpf_mhz >= nyquist_mhz {
                return Err(Error::InvalidArgument(format!(
                    "if_mhz {} MHz too close to Nyquist ({nyquist_mhz} MHz)",
                    self.if_mhz
                )));
            }
        }
        Ok(())
    }

    /// Per-sample complex noise variance after averaging.
    fn noise_variance(&self, clean: &FieldTrace) -> Result<f64> {
        let Some(snr_db) = self.snr_db else {
            return Ok(0.0);
        };
        let p_ref = match self.reference_power {
            Some(p) if p > 0.0 => p,
            Some(p) => {
                return Err(Error::InvalidArgument(format!(
                    "reference_power must be > 0, got {p}"
                )))
            }
            None => {
                let p = clean.peak_power();
                if p == 0.0 {
                    return Err(Error::InvalidArgument(
                        "cannot set SNR against an all-zero trace; give reference_power".into(),
                    ));
                }
                p
            }
        };
        Ok(p_ref * 10f64.powf(-snr_db / 10.0) / self.n_avg as f64)
    }
}

fn noise_sample(seed: u64, stream: u64, sigma_quadrature: f64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * sigma_quadrature
}

/// Noise-plus-averaging stage only: the trace after `n_avg` averaged shots,
/// before IF conversion and filtering. Exposed so the averaging law can be
/// checked independently of the filter's noise bandwidth.
pub fn averaged_noisy(clean: &FieldTrace, config: &ChainConfig) -> Result<FieldTrace> {
    config.validate(clean.dt)?;
    let var = config.noise_variance(clean)?;
    if var == 0.0 {
        return Ok(clean.clone());
    }
    let sigma_q = (var / 2.0).sqrt();
    let samples = clean
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| v + noise_sample(config.rng_seed, i as u64, sigma_q))
        .collect();
    Ok(FieldTrace {
        t0: clean.t0,
        dt: clean.dt,
        samples,
    })
}

/// Averaging by explicit simulation of up to 10⁴ independent shots; the
/// debug path validating the analytic variance/n_avg fold.
pub fn averaged_noisy_explicit(
    clean: &FieldTrace,
    config: &ChainConfig,
    shots: u64,
) -> Result<FieldTrace> {
    if shots == 0 || shots > 10_000 {
        return Err(Error::InvalidArgument(
            "explicit shot simulation supports 1..=10000 shots".into(),
        ));
    }
    config.validate(clean.dt)?;
    let mut cfg = config.clone();
    cfg.n_avg = 1;
    let var = cfg.noise_variance(clean)?;
    let sigma_q = (var / 2.0).sqrt();
    let inv = 1.0 / shots as f64;
    let samples = clean
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for shot in 0..shots {
                let stream = (shot << 32) | i as u64;
                acc += v + noise_sample(config.rng_seed, stream, sigma_q);
            }
            acc * inv
        })
        .collect();
    Ok(FieldTrace {
        t0: clean.t0,
        dt: clean.dt,
        samples,
    })
}

/// Linear-phase low-pass FIR: Blackman-windowed sinc, unit DC gain.
pub fn lowpass_taps(n_taps: usize, cutoff_mhz: f64, dt: f64) -> Vec<f64> {
    let m = (n_taps - 1) as f64 / 2.0;
    let fc = cutoff_mhz * 1e-3 * dt; // cycles per sample
    let sinc = |x: f64| {
        if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    };
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|k| {
            let x = k as f64 - m;
            let window = 0.42
                - 0.5 * (std::f64::consts::TAU * k as f64 / (n_taps - 1) as f64).cos()
                + 0.08 * (2.0 * std::f64::consts::TAU * k as f64 / (n_taps - 1) as f64).cos();
            2.0 * fc * sinc(2.0 * fc * x) * window
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= gain;
    }
    taps
}

fn convolve_reflect(samples: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let m = taps.len() / 2;
    // Reflect the trace at both ends so the filter has no startup hole.
    let at = |idx: i64| -> Complex64 {
        let j = if idx < 0 {
            (-idx) as usize % (2 * n.max(1))
        } else if idx as usize >= n {
            let over = idx as usize - (n - 1);
            n - 1 - (over % n.max(1))
        } else {
            idx as usize
        };
        samples[j.min(n - 1)]
    };
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &h) in taps.iter().enumerate() {
                acc += at(i as i64 + m as i64 - k as i64) * h;
            }
            acc
        })
        .collect()
}

const LPF_TAPS: usize = 201;

/// Run the full chain: noise + averaging, optional IF round trip, low-pass.
pub fn apply_chain(clean: &FieldTrace, config: &ChainConfig) -> Result<FieldTrace> {
    chain_impl(clean, config, None)
}

/// Full chain with the averaging stage simulated shot by shot (≤ 10⁴ shots);
/// the debug path validating the analytic variance/n_avg fold.
pub fn apply_chain_explicit_shots(
    clean: &FieldTrace,
    config: &ChainConfig,
    shots: u64,
) -> Result<FieldTrace> {
    chain_impl(clean, config, Some(shots))
}

fn chain_impl(clean: &FieldTrace, config: &ChainConfig, shots: Option<u64>) -> Result<FieldTrace> {
    if clean.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    let noisy = match shots {
        None => averaged_noisy(clean, config)?,
        Some(s) => averaged_noisy_explicit(clean, config, s)?,
    };
    let mut samples = noisy.samples;
    if config.if_mhz > 0.0 {
        // Real voltage at the IF, then digital demodulation; the image at
        // 2·f_IF is left for the low-pass to remove.
        let w = crate::model::mhz_to_angular(config.if_mhz);
        for (i, z) in samples.iter_mut().enumerate() {
            let t = clean.t0 + i as f64 * clean.dt;
            let up = Complex64::from_polar(1.0, w * t);
            let real_if = (*z * up).re * 2.0;
            *z = Complex64::new(real_if, 0.0) * up.conj();
        }
    }
    let taps = lowpass_taps(LPF_TAPS, config.lpf_mhz, clean.dt);
    let filtered = convolve_reflect(&samples, &taps);
    Ok(FieldTrace {
        t0: clean.t0,
        dt: clean.dt,
        samples: filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn smooth_trace(n: usize, dt: f64) -> FieldTrace {
        // Band-limited test signal: slow complex oscillations under a
        // Gaussian bump.
        let t_mid = n as f64 * dt / 2.0;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let envelope = (-(t - t_mid).powi(2) / (2.0 * (n as f64 * dt / 8.0).powi(2))).exp();
                Complex64::from_polar(envelope, 0.05 * t)
            })
            .collect();
        FieldTrace {
            t0: 0.0,
            dt,
            samples,
        }
    }

    fn noise_only_variance(cfg: &ChainConfig, clean: &FieldTrace) -> f64 {
        let out = averaged_noisy(clean, cfg).unwrap();
        let n = clean.len() as f64;
        out.samples
            .iter()
            .zip(&clean.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n
    }

    #[test]
    fn identity_chain_without_noise() {
        let trace = smooth_trace(2000, 0.1);
        let cfg = ChainConfig {
            snr_db: None,
            lpf_mhz: 200.0,
            ..Default::default()
        };
        let out = apply_chain(&trace, &cfg).unwrap();
        let worst = out
            .samples
            .iter()
            .zip(&trace.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "passband distortion {worst}");
    }

    #[test]
    fn if_round_trip_preserves_band_limited_signal() {
        // The demodulation image at 2·f_IF must land in the filter's deep
        // stopband: at dt = 0.5 ns the 201-tap transition is ~55 MHz wide,
        // so a 150 MHz IF puts the image at 300 MHz, far past cutoff.
        let trace = smooth_trace(2000, 0.5);
        let cfg = ChainConfig {
            snr_db: None,
            lpf_mhz: 60.0,
            if_mhz: 150.0,
            ..Default::default()
        };
        let out = apply_chain(&trace, &cfg).unwrap();
        let worst = out
            .samples
            .iter()
            .zip(&trace.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "IF round-trip distortion {worst}");
    }

    #[test]
    fn chain_is_linear_with_noise_disabled() {
        let x = smooth_trace(1024, 0.1);
        let y = FieldTrace {
            t0: 0.0,
            dt: 0.1,
            samples: x
                .samples
                .iter()
                .enumerate()
                .map(|(i, z)| z * Complex64::new(0.3, 0.1 * (i as f64 * 0.01).sin()))
                .collect(),
        };
        let cfg = ChainConfig {
            snr_db: None,
            lpf_mhz: 80.0,
            ..Default::default()
        };
        let (a, b) = (Complex64::new(1.7, -0.4), Complex64::new(-0.6, 0.9));
        let combo = FieldTrace {
            t0: 0.0,
            dt: 0.1,
            samples: x
                .samples
                .iter()
                .zip(&y.samples)
                .map(|(xa, ya)| a * xa + b * ya)
                .collect(),
        };
        let fx = apply_chain(&x, &cfg).unwrap();
        let fy = apply_chain(&y, &cfg).unwrap();
        let fc = apply_chain(&combo, &cfg).unwrap();
        for i in 0..combo.len() {
            let lin = a * fx.samples[i] + b * fy.samples[i];
            assert_abs_diff_eq!(lin.re, fc.samples[i].re, epsilon = 1e-12);
            assert_abs_diff_eq!(lin.im, fc.samples[i].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn determinism_per_seed() {
        let trace = smooth_trace(512, 0.1);
        let cfg = ChainConfig {
            snr_db: Some(-20.0),
            n_avg: 10,
            rng_seed: 42,
            ..Default::default()
        };
        let a = apply_chain(&trace, &cfg).unwrap();
        let b = apply_chain(&trace, &cfg).unwrap();
        assert_eq!(a, b);
        let cfg2 = ChainConfig {
            rng_seed: 43,
            ..cfg
        };
        let c = apply_chain(&trace, &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn averaging_folds_like_explicit_shots() {
        let trace = smooth_trace(400, 0.1);
        let shots = 400u64;
        let cfg = ChainConfig {
            snr_db: Some(0.0),
            n_avg: shots,
            rng_seed: 7,
            ..Default::default()
        };
        // Folded: variance/n_avg in one draw.
        let folded_var = noise_only_variance(&cfg, &trace);
        // Explicit: average of `shots` single-shot traces.
        let explicit = averaged_noisy_explicit(&trace, &cfg, shots).unwrap();
        let explicit_var = explicit
            .samples
            .iter()
            .zip(&trace.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / trace.len() as f64;
        let ratio = folded_var / explicit_var;
        assert!(
            (0.7..1.4).contains(&ratio),
            "fold {folded_var:.3e} vs explicit {explicit_var:.3e}"
        );
        assert!(averaged_noisy_explicit(&trace, &cfg, 20_000).is_err());
    }

    #[test]
    fn variance_scales_inversely_with_averages() {
        let trace = smooth_trace(4000, 0.1);
        let mut points = Vec::new();
        for n_avg in [100u64, 10_000, 1_000_000, 17_000_000] {
            let cfg = ChainConfig {
                snr_db: Some(-40.0),
                n_avg,
                rng_seed: 11,
                ..Default::default()
            };
            points.push(((n_avg as f64).ln(), noise_only_variance(&cfg, &trace).ln()));
        }
        // Least-squares slope on the log-log points.
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope + 1.0).abs() < 0.02,
            "variance scaling slope {slope}, expected -1"
        );
    }

    #[test]
    fn filtered_white_noise_variance_matches_parseval() {
        // var_out / var_in through an FIR equals Σh² exactly (white input);
        // measure it on generated noise.
        let dt = 0.1;
        let n = 20_000;
        let zero = FieldTrace {
            t0: 0.0,
            dt,
            samples: vec![Complex64::new(0.0, 0.0); n],
        };
        let cfg = ChainConfig {
            snr_db: Some(0.0),
            reference_power: Some(1.0),
            rng_seed: 5,
            lpf_mhz: 50.0,
            ..Default::default()
        };
        let noisy = averaged_noisy(&zero, &cfg).unwrap();
        let taps = lowpass_taps(LPF_TAPS, cfg.lpf_mhz, dt);
        let filtered = convolve_reflect(&noisy.samples, &taps);
        let var_in: f64 =
            noisy.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let var_out: f64 = filtered.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let expected: f64 = taps.iter().map(|h| h * h).sum();
        let ratio = var_out / var_in;
        assert!(
            (ratio / expected - 1.0).abs() < 0.05,
            "measured {ratio:.4e}, Parseval {expected:.4e}"
        );
    }

    #[test]
    fn cutoff_validation() {
        let trace = smooth_trace(100, 0.1);
        for bad in [0.0, -5.0, 5000.0, 6000.0] {
            let cfg = ChainConfig {
                lpf_mhz: bad,
                ..Default::default()
            };
            assert!(apply_chain(&trace, &cfg).is_err(), "cutoff {bad} accepted");
        }
        let cfg = ChainConfig {
            if_mhz: 20.0,
            lpf_mhz: 50.0,
            ..Default::default()
        };
        assert!(apply_chain(&trace, &cfg).is_err());
    }

    #[test]
    fn snr_against_zero_trace_needs_reference() {
        let zero = FieldTrace {
            t0: 0.0,
            dt: 0.1,
            samples: vec![Complex64::new(0.0, 0.0); 64],
        };
        let cfg = ChainConfig {
            snr_db: Some(-40.0),
            ..Default::default()
        };
        assert!(averaged_noisy(&zero, &cfg).is_err());
    }
}
