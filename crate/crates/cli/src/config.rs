//! Flat key-value configuration with CLI overrides.
//!
//! Precedence: built-in defaults < config file < command-line flags.
//! Frequencies in the file and on the command line are ordinary (MHz, GHz),
//! never angular.

use serde::Serialize;
use wqed_core::model::{cosine_taper, FieldPhase, ModelParams, PulseEnvelope};

/// Resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub omega_r_mhz: f64,
    pub gamma1_mhz: f64,
    pub gamma_phi_mhz: f64,
    pub detuning_mhz: f64,
    pub duration_ns: f64,
    pub taper_fraction: f64,
    pub dt_ns: f64,
    pub field_phase: String,
    pub f_q_ghz: f64,
    pub v0: f64,
    pub hbar_omega: f64,
    pub z0: f64,
    pub gain: f64,
    pub t_end_ns: Option<f64>,
    pub zero_pad: usize,
    pub cut_at_pulse_end: bool,
    pub ipsd_fmin_mhz: f64,
    pub ipsd_fmax_mhz: f64,
    pub ipsd_df_mhz: f64,
    pub steady_window_ns: Option<(f64, f64)>,
    pub snr_db: Option<f64>,
    pub n_avg: u64,
    pub lpf_mhz: f64,
    pub if_mhz: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub max_mem_mb: usize,
    pub g1_stride: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            omega_r_mhz: 19.8,
            gamma1_mhz: 0.9,
            gamma_phi_mhz: 0.6,
            detuning_mhz: 0.0,
            duration_ns: 120.0,
            taper_fraction: 0.02,
            dt_ns: 0.1,
            field_phase: "pi/2".into(),
            f_q_ghz: 4.835,
            v0: 1.0,
            hbar_omega: 1.0,
            z0: 1.0,
            gain: 1.0,
            t_end_ns: None,
            zero_pad: 4,
            cut_at_pulse_end: false,
            ipsd_fmin_mhz: -40.0,
            ipsd_fmax_mhz: 40.0,
            ipsd_df_mhz: 0.5,
            steady_window_ns: None,
            snr_db: None,
            n_avg: 1,
            lpf_mhz: 50.0,
            if_mhz: 0.0,
            seed: 1,
            threads: None,
            max_mem_mb: 3072,
            g1_stride: 1,
        }
    }
}

pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(format!("window `{s}` must be start:end"));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("window start `{}` is not a number", parts[0]))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("window end `{}` is not a number", parts[1]))?;
    Ok((a, b))
}

/// `lo:hi:n` inclusive grid in MHz.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("range `{s}` must be lo:hi:n"));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("range lo `{}` is not a number", parts[0]))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("range hi `{}` is not a number", parts[1]))?;
    let n: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| format!("range count `{}` is not an integer", parts[2]))?;
    if n == 0 {
        return Err("range count must be >= 1".into());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if hi <= lo {
        return Err(format!("range `{s}` needs hi > lo"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

impl Config {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let bad = |what: &str| format!("key `{key}`: `{v}` is not a valid {what}");
        let f = |what: &str| v.parse::<f64>().map_err(|_| bad(what));
        match key {
            "omega_r_mhz" => self.omega_r_mhz = f("number")?,
            "gamma1_mhz" => self.gamma1_mhz = f("number")?,
            "gamma_phi_mhz" => self.gamma_phi_mhz = f("number")?,
            "detuning_mhz" => self.detuning_mhz = f("number")?,
            "duration_ns" => self.duration_ns = f("number")?,
            "taper_fraction" => self.taper_fraction = f("number")?,
            "dt_ns" => self.dt_ns = f("number")?,
            "field_phase" => {
                v.parse::<FieldPhase>().map_err(|e| e.to_string())?;
                self.field_phase = v.to_string();
            }
            "f_q_ghz" => self.f_q_ghz = f("number")?,
            "v0" => self.v0 = f("number")?,
            "hbar_omega" => self.hbar_omega = f("number")?,
            "z0" => self.z0 = f("number")?,
            "gain" => self.gain = f("number")?,
            "t_end_ns" => self.t_end_ns = Some(f("number")?),
            "zero_pad" => self.zero_pad = v.parse().map_err(|_| bad("integer"))?,
            "cut_at_pulse_end" => {
                self.cut_at_pulse_end = v.parse().map_err(|_| bad("boolean"))?
            }
            "ipsd_fmin_mhz" => self.ipsd_fmin_mhz = f("number")?,
            "ipsd_fmax_mhz" => self.ipsd_fmax_mhz = f("number")?,
            "ipsd_df_mhz" => self.ipsd_df_mhz = f("number")?,
            "steady_window_ns" => self.steady_window_ns = Some(parse_window(v)?),
            "snr_db" => self.snr_db = Some(f("number")?),
            "n_avg" => self.n_avg = v.parse().map_err(|_| bad("integer"))?,
            "lpf_mhz" => self.lpf_mhz = f("number")?,
            "if_mhz" => self.if_mhz = f("number")?,
            "seed" => self.seed = v.parse().map_err(|_| bad("integer"))?,
            "threads" => self.threads = Some(v.parse().map_err(|_| bad("integer"))?),
            "max_mem_mb" => self.max_mem_mb = v.parse().map_err(|_| bad("integer"))?,
            "g1_stride" => self.g1_stride = v.parse().map_err(|_| bad("integer"))?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Parse a config file body (`key = value` lines, `#` comments).
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`", lineno + 1));
            };
            self.set(key.trim(), value)
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        let phase: FieldPhase = self.field_phase.parse().map_err(|e| format!("{e}"))?;
        ModelParams::from_mhz(
            self.omega_r_mhz,
            self.gamma1_mhz,
            self.gamma_phi_mhz,
            self.detuning_mhz,
        )
        .map(|p| {
            p.with_field_phase(phase)
                .with_qubit_frequency_ghz(self.f_q_ghz)
        })
        .map_err(|e| format!("{e} (keys omega_r_mhz/gamma1_mhz/gamma_phi_mhz/detuning_mhz)"))
    }

    pub fn envelope(&self) -> Result<PulseEnvelope, String> {
        cosine_taper(self.duration_ns, self.taper_fraction, self.dt_ns)
            .map_err(|e| format!("{e} (keys duration_ns/taper_fraction/dt_ns)"))
    }

    pub fn t_end(&self) -> f64 {
        self.t_end_ns.unwrap_or(self.duration_ns + 300.0)
    }
}
