//! Magnitude spectra of complex traces, detuning scans, and peak extraction.
//!
//! Frequency axes are physical offsets from the carrier: a baseband
//! component `e^{−i2πft}` of the complex trace appears at +f. Concretely the
//! spectrum is `S(f) = |dt·Σₙ V(tₙ)·e^{+i2πf·tₙ}|`, evaluated by an
//! (unnormalized) inverse FFT. With this convention the post-pulse emission
//! of an emitter detuned by δ = ω_d − ω_q lands at −δ — the emitter's own
//! frequency — and the drive-period sidebands land at ±Ω = ±√(Ω_R² + δ²).
//!
//! No window function is applied: truncation of the raw trace is part of
//! what the spectra are meant to show (drive-period peaks are pulse-length
//! limited). Zero-padding (default 4×) smooths peak interpolation only.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dynamics::integrate;
use crate::error::{Error, Result};
use crate::fields::{radiation_field, FieldTrace};
use crate::model::{ModelParams, PulseEnvelope};

/// One-dimensional magnitude spectrum on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequency relative to the carrier, MHz, ascending.
    pub freq_mhz: Vec<f64>,
    /// Non-negative magnitudes, units of trace · ns.
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freq_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_mhz.is_empty()
    }

    /// Frequency bin width in MHz.
    pub fn bin_mhz(&self) -> f64 {
        if self.freq_mhz.len() < 2 {
            0.0
        } else {
            self.freq_mhz[1] - self.freq_mhz[0]
        }
    }

    /// Magnitude at the grid point nearest to `f_mhz`.
    pub fn magnitude_at(&self, f_mhz: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let bin = self.bin_mhz();
        if bin == 0.0 {
            return self.magnitude[0];
        }
        let i = ((f_mhz - self.freq_mhz[0]) / bin).round();
        let i = i.clamp(0.0, (self.len() - 1) as f64) as usize;
        self.magnitude[i]
    }

    /// Largest magnitude within `f_mhz ± half_width`, parabolically refined.
    pub fn local_peak(&self, f_mhz: f64, half_width: f64) -> Option<(f64, f64)> {
        let bin = self.bin_mhz();
        if bin == 0.0 {
            return None;
        }
        let lo = (((f_mhz - half_width) - self.freq_mhz[0]) / bin).ceil().max(1.0) as usize;
        let hi = ((((f_mhz + half_width) - self.freq_mhz[0]) / bin).floor() as usize)
            .min(self.len().saturating_sub(2));
        if lo > hi {
            return None;
        }
        let k = (lo..=hi).max_by(|&a, &b| {
            self.magnitude[a]
                .partial_cmp(&self.magnitude[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        Some(refine_peak(&self.freq_mhz, &self.magnitude, k))
    }
}

/// Discrete spectrum of a complex trace, zero-padded by `zero_pad_factor`.
pub fn trace_spectrum(trace: &FieldTrace, zero_pad_factor: usize) -> Result<Spectrum> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("empty trace has no spectrum".into()));
    }
    if zero_pad_factor < 1 {
        return Err(Error::InvalidArgument("zero_pad_factor must be >= 1".into()));
    }
    let n = trace.len();
    let n_fft = n * zero_pad_factor;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    buf[..n].copy_from_slice(&trace.samples);
    // Inverse kernel e^{+2πi·jk/N}: components e^{−i2πft} land at +f.
    FftPlanner::new()
        .plan_fft_inverse(n_fft)
        .process(&mut buf);
    let dt = trace.dt;
    let df_mhz = 1000.0 / (n_fft as f64 * dt);
    let half = n_fft / 2;
    let mut freq_mhz = Vec::with_capacity(n_fft);
    let mut magnitude = Vec::with_capacity(n_fft);
    for k in 0..n_fft {
        // fftshift: bins [half..) are negative frequencies.
        let idx = (k + half) % n_fft;
        let f = (k as i64 - half as i64) as f64 * df_mhz;
        freq_mhz.push(f);
        magnitude.push(buf[idx].norm() * dt);
    }
    Ok(Spectrum { freq_mhz, magnitude })
}

fn refine_peak(freq: &[f64], mag: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= mag.len() {
        return (freq[k], mag[k]);
    }
    let (ym, y0, yp) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-300 {
        return (freq[k], mag[k]);
    }
    let p = (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
    let df = freq[1] - freq[0];
    (freq[k] + p * df, y0 - 0.25 * (ym - yp) * p)
}

/// Local maxima above 5% of the global maximum, refined by 3-point parabolic
/// interpolation and sorted by magnitude (descending). At most
/// `expected_count` peaks are returned; fewer if fewer exist.
pub fn find_peaks(spectrum: &Spectrum, expected_count: usize) -> Vec<(f64, f64)> {
    if spectrum.len() < 3 || expected_count == 0 {
        return Vec::new();
    }
    let mag = &spectrum.magnitude;
    let threshold = 0.05 * mag.iter().cloned().fold(0.0, f64::max);
    if threshold == 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for k in 1..mag.len() - 1 {
        if mag[k] >= threshold && mag[k] >= mag[k - 1] && mag[k] > mag[k + 1] {
            peaks.push(refine_peak(&spectrum.freq_mhz, mag, k));
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    peaks.truncate(expected_count);
    peaks
}

/// Scan settings shared by the CLI and the fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    /// End of the simulated span (>= envelope duration).
    pub t_end: f64,
    /// Zero-padding factor for the per-row spectra.
    pub zero_pad: usize,
    /// Truncate traces at the pulse end before transforming.
    pub cut_at_pulse_end: bool,
    /// Field scale V₀.
    pub v0: f64,
}

/// Radiation traces and spectra versus drive detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Detuning grid, MHz, strictly increasing.
    pub detuning_mhz: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
    /// Per-detuning radiation trace (output minus bare pulse).
    pub traces: Vec<FieldTrace>,
    /// Per-detuning magnitude spectrum of the radiation trace.
    pub spectra: Vec<Spectrum>,
}

impl ScanResult {
    pub fn rows(&self) -> usize {
        self.detuning_mhz.len()
    }
}

/// Simulate the radiation trace and its spectrum for every detuning in the
/// grid. Rows are independent and run in parallel; the result is assembled
/// in grid order and is bit-identical for any thread count.
pub fn detuning_scan(
    params: &ModelParams,
    envelope: &PulseEnvelope,
    detuning_mhz: &[f64],
    opts: &ScanOptions,
) -> Result<ScanResult> {
    if detuning_mhz.is_empty() {
        return Err(Error::InvalidArgument("empty detuning grid".into()));
    }
    if !detuning_mhz.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument(
            "detuning grid must be strictly increasing".into(),
        ));
    }
    let rows: Vec<(FieldTrace, Spectrum)> = detuning_mhz
        .par_iter()
        .map(|&f| {
            let mut p = params.clone();
            p.detuning = crate::model::mhz_to_angular(f);
            let trace = integrate(&p, envelope, opts.t_end).map_err(|e| {
                Error::InvalidArgument(format!("detuning {f} MHz: {e}"))
            })?;
            let rad = radiation_field(&trace, p.gamma1, p.field_phase, opts.v0);
            let for_spectrum = if opts.cut_at_pulse_end {
                rad.segment(0.0, envelope.duration)?
            } else {
                rad.clone()
            };
            let spec = trace_spectrum(&for_spectrum, opts.zero_pad)?;
            Ok((rad, spec))
        })
        .collect::<Result<_>>()?;
    let (traces, spectra) = rows.into_iter().unzip();
    Ok(ScanResult {
        detuning_mhz: detuning_mhz.to_vec(),
        t0: 0.0,
        dt: envelope.dt,
        traces,
        spectra,
    })
}
