//! Delimiter-separated and JSON export/import of traces, grids, and reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! read-then-rewrite reproduces files byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::correlations::{IpsdMap, TwoTimeGrid};
use crate::dynamics::BlochTrace;
use crate::error::{Error, Result};
use crate::estimation::{FitResult, FitUncertainty};
use crate::fields::{EnergyReport, FieldTrace};
use crate::model::angular_to_mhz;
use crate::spectra::{ScanResult, Spectrum};

pub fn bloch_csv(trace: &BlochTrace) -> String {
    let mut out = String::from("t_ns,sx,sy,sz,re_sm,im_sm\n");
    for (i, s) in trace.states.iter().enumerate() {
        let sm = trace.sigma_minus[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            trace.time(i),
            s.sx,
            s.sy,
            s.sz,
            sm.re,
            sm.im
        );
    }
    out
}

pub fn field_csv(trace: &FieldTrace) -> String {
    let mut out = String::from("t_ns,re_v,im_v\n");
    for (i, v) in trace.samples.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", trace.time(i), v.re, v.im);
    }
    out
}

pub fn read_field_csv(text: &str) -> Result<FieldTrace> {
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 columns, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        times.push(parse_f64(cols[0], lineno)?);
        samples.push(Complex64::new(
            parse_f64(cols[1], lineno)?,
            parse_f64(cols[2], lineno)?,
        ));
    }
    grid_from_times(&times).map(|(t0, dt)| FieldTrace { t0, dt, samples })
}

pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("freq_mhz,magnitude\n");
    for (f, m) in spectrum.freq_mhz.iter().zip(&spectrum.magnitude) {
        let _ = writeln!(out, "{f},{m}");
    }
    out
}

pub fn scan_time_csv(scan: &ScanResult) -> String {
    let mut out = String::from("detuning_mhz,t_ns,re_v,im_v\n");
    for (d, trace) in scan.detuning_mhz.iter().zip(&scan.traces) {
        for (i, v) in trace.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", d, trace.time(i), v.re, v.im);
        }
    }
    out
}

/// Detuning rows and traces from a long-format scan export. Spectra are not
/// stored in the file; the result carries empty spectra.
pub fn read_scan_time_csv(text: &str) -> Result<ScanResult> {
    let mut detuning = Vec::new();
    let mut rows: Vec<(Vec<f64>, Vec<Complex64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected 4 columns, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        let d = parse_f64(cols[0], lineno)?;
        let t = parse_f64(cols[1], lineno)?;
        let v = Complex64::new(parse_f64(cols[2], lineno)?, parse_f64(cols[3], lineno)?);
        if detuning.last() != Some(&d) {
            detuning.push(d);
            rows.push((Vec::new(), Vec::new()));
        }
        let row = rows.last_mut().unwrap();
        row.0.push(t);
        row.1.push(v);
    }
    if rows.is_empty() {
        return Err(Error::Parse("scan file has no data rows".into()));
    }
    let (t0, dt) = grid_from_times(&rows[0].0)?;
    let n = rows[0].1.len();
    let mut traces = Vec::with_capacity(rows.len());
    for (times, samples) in rows {
        if samples.len() != n {
            return Err(Error::Parse("rows have unequal lengths".into()));
        }
        let (row_t0, row_dt) = grid_from_times(&times)?;
        if (row_t0 - t0).abs() > 1e-9 || (row_dt - dt).abs() > 1e-12 {
            return Err(Error::Parse("rows disagree on the time grid".into()));
        }
        traces.push(FieldTrace { t0, dt, samples });
    }
    Ok(ScanResult {
        detuning_mhz: detuning,
        t0,
        dt,
        traces,
        spectra: Vec::new(),
    })
}

pub fn scan_spec_csv(scan: &ScanResult) -> String {
    let mut out = String::from("detuning_mhz,freq_mhz,magnitude\n");
    for (d, spec) in scan.detuning_mhz.iter().zip(&scan.spectra) {
        for (f, m) in spec.freq_mhz.iter().zip(&spec.magnitude) {
            let _ = writeln!(out, "{d},{f},{m}");
        }
    }
    out
}

/// Stream the long-format two-time grid, optionally strided. The full grid
/// runs to N² lines, so it is written incrementally rather than built in
/// memory.
pub fn write_g1_long<W: std::io::Write>(
    out: &mut W,
    grid: &TwoTimeGrid,
    stride: usize,
) -> Result<()> {
    let stride = stride.max(1);
    out.write_all(b"t1_ns,t2_ns,re_g,im_g\n")?;
    let n = grid.len();
    let mut line = String::new();
    for i in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let g = grid.values[[i, j]];
            line.clear();
            let _ = writeln!(line, "{},{},{},{}", grid.time(i), grid.time(j), g.re, g.im);
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

/// Long-format two-time grid as a string (small grids, tests).
pub fn g1_long_csv(grid: &TwoTimeGrid, stride: usize) -> String {
    let mut buf = Vec::new();
    write_g1_long(&mut buf, grid, stride).expect("in-memory write");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Compact matrix form: header row/column of times, cells `re+imj`.
pub fn g1_matrix_csv(grid: &TwoTimeGrid, stride: usize) -> String {
    let stride = stride.max(1);
    let n = grid.len();
    let mut out = String::from("t1_ns\\t2_ns");
    for j in (0..n).step_by(stride) {
        let _ = write!(out, ",{}", grid.time(j));
    }
    out.push('\n');
    for i in (0..n).step_by(stride) {
        let _ = write!(out, "{}", grid.time(i));
        for j in (0..n).step_by(stride) {
            let g = grid.values[[i, j]];
            let sign = if g.im.is_sign_negative() { "" } else { "+" };
            let _ = write!(out, ",{}{sign}{}j", g.re, g.im);
        }
        out.push('\n');
    }
    out
}

pub fn ipsd_csv(map: &IpsdMap) -> String {
    let mut out = String::from("t_ns,freq_mhz,magnitude\n");
    for i in 0..map.magnitudes.nrows() {
        let t = map.t0 + i as f64 * map.dt;
        for (k, &w) in map.omega.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", t, angular_to_mhz(w), map.magnitudes[[i, k]]);
        }
    }
    out
}

pub fn psd_csv(omega: &[f64], psd: &[f64]) -> String {
    let mut out = String::from("freq_mhz,magnitude\n");
    for (&w, &m) in omega.iter().zip(psd) {
        let _ = writeln!(out, "{},{}", angular_to_mhz(w), m);
    }
    out
}

/// Dressed-state sweep table.
pub fn dressed_sweep_csv(rabi: f64, detuning_mhz: &[f64]) -> Result<String> {
    let mut out = String::from("detuning_mhz,omega_mhz,amp_lower,amp_upper\n");
    for &f in detuning_mhz {
        let d = crate::model::mhz_to_angular(f);
        let omega = crate::dressed::generalized_rabi(rabi, d);
        let (lo, up) = crate::dressed::sideband_amplitudes(rabi, d)?;
        let _ = writeln!(out, "{},{},{},{}", f, angular_to_mhz(omega), lo, up);
    }
    Ok(out)
}

pub fn energy_report_json(report: &EnergyReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

#[derive(serde::Serialize)]
struct FitResultJson {
    omega_r_mhz: f64,
    gamma1_mhz: f64,
    gamma_phi_mhz: f64,
    detuning_offset_mhz: f64,
    f_q_ghz: f64,
    residual_norm: f64,
    uncertainty: FitUncertainty,
    iterations: usize,
    converged: bool,
}

/// Fit result as a JSON document with ordinary-frequency units. The fitted
/// qubit frequency is the bookkeeping carrier minus the fitted offset.
pub fn fit_result_json(result: &FitResult) -> String {
    let p = &result.params;
    let doc = FitResultJson {
        omega_r_mhz: angular_to_mhz(p.rabi_peak),
        gamma1_mhz: angular_to_mhz(p.gamma1),
        gamma_phi_mhz: angular_to_mhz(p.gamma_phi),
        detuning_offset_mhz: angular_to_mhz(p.detuning),
        f_q_ghz: p.qubit_frequency_ghz - angular_to_mhz(p.detuning) * 1e-3,
        residual_norm: result.residual_norm,
        uncertainty: result.uncertainty,
        iterations: result.iterations,
        converged: result.converged,
    };
    serde_json::to_string_pretty(&doc).expect("fit result serializes") + "\n"
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {}: `{s}` is not a number", lineno + 1)))
}

fn grid_from_times(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(Error::Parse("need at least two samples".into()));
    }
    let t0 = times[0];
    // First interval, not the mean: written times are t0 + i·dt, so this
    // recovers dt bit-exactly and re-exports reproduce the bytes.
    let dt = times[1] - times[0];
    for (i, &t) in times.iter().enumerate() {
        if (t - (t0 + i as f64 * dt)).abs() > 1e-6 {
            return Err(Error::Parse(format!("non-uniform time grid near t = {t}")));
        }
    }
    Ok((t0, dt))
}
