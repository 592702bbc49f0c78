//! `wqed` — command-line pipelines for pulse scattering off a waveguide-
//! coupled two-level emitter.
//!
//! Subcommands: `simulate`, `scan`, `correlate`, `audit`, `fit`, `calibrate`.
//! Configuration precedence is defaults < `--config` file < flags; every
//! frequency on this surface is an ordinary frequency (MHz, GHz), never
//! angular. Exit codes: 0 success, 2 usage/config error, 3 numerical
//! failure.

mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use config::{parse_range, parse_window, Config};
use manifest::RunManifest;
use wqed_core::correlations::{g1_incoherent, ipsd, omega_grid_mhz, steady_psd, RegressionCache};
use wqed_core::dynamics::integrate;
use wqed_core::error::Error as CoreError;
use wqed_core::estimation::{fit, synthesize_scan, FitBounds, FitOptions, FitProblem};
use wqed_core::fields::{energy_audit, output_field, radiation_field, FieldTrace};
use wqed_core::io;
use wqed_core::measurement::{apply_chain, apply_chain_explicit_shots, ChainConfig};
use wqed_core::model::CalibrationParams;
use wqed_core::spectra::{detuning_scan, ScanOptions};

#[derive(Parser)]
#[command(name = "wqed", version, about = "Waveguide-QED pulse scattering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value config file (`key = value` lines, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (also via WQED_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Rabi rate at the envelope peak, MHz.
    #[arg(long)]
    omega_r_mhz: Option<f64>,
    /// Relaxation rate Γ₁/2π, MHz.
    #[arg(long)]
    gamma1_mhz: Option<f64>,
    /// Pure dephasing rate γ_φ/2π, MHz.
    #[arg(long)]
    gamma_phi_mhz: Option<f64>,
    /// Drive detuning (f_d − f_q), MHz.
    #[arg(long, allow_negative_numbers = true)]
    detuning_mhz: Option<f64>,
    /// Pulse duration, ns.
    #[arg(long)]
    duration_ns: Option<f64>,
    /// Tapered fraction of the pulse, [0, 1).
    #[arg(long)]
    taper_fraction: Option<f64>,
    /// Sample step, ns.
    #[arg(long)]
    dt_ns: Option<f64>,
    /// Interaction-phase convention: `0` or `pi/2`.
    #[arg(long)]
    field_phase: Option<String>,
    /// End of the simulated span, ns (default: duration + 300).
    #[arg(long)]
    t_end_ns: Option<f64>,
    /// RNG seed for the measurement chain.
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, as key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the dynamics and write bloch/field/radiation traces.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Route the output through the measurement chain.
        #[arg(long)]
        noise: bool,
        /// Debug: simulate this many real shots instead of the analytic fold.
        #[arg(long)]
        explicit_shots: Option<u64>,
    },
    /// Sweep the detuning and write time/spectral maps.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Detuning grid lo:hi:n, MHz.
        #[arg(long, default_value = "-60:60:121", allow_hyphen_values = true)]
        detunings: String,
    },
    /// Two-time correlation grid, IPSD map, and steady PSD.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Also write the compact matrix form of the grid.
        #[arg(long)]
        matrix: bool,
    },
    /// Photon bookkeeping over a window.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Integration window start:end, ns (default 0:duration).
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Extract (offset, Ω_R, Γ₁, γ_φ) from a scan.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Long-format scan file (detuning_mhz,t_ns,re_v,im_v).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generate the data internally from the resolved config instead.
        #[arg(long)]
        synth: bool,
        /// Detuning grid for --synth, lo:hi:n in MHz.
        #[arg(long, default_value = "-40:40:9", allow_hyphen_values = true)]
        detunings: String,
        /// Route synthetic data through the measurement chain.
        #[arg(long)]
        noise: bool,
        /// Config file with the starting guess (defaults to the main config).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Config file with `<param>_bounds = lo:hi` lines.
        #[arg(long)]
        bounds: Option<PathBuf>,
        /// Output path (default `<out-dir>/fit.json`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Polish the simplex result with Gauss–Newton steps.
        #[arg(long)]
        polish: bool,
    },
    /// Photon-rate and field-scale calibration utilities.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Measured pulse/oscillation amplitude ratio V_p/V_q.
        #[arg(long)]
        vp_over_vq: Option<f64>,
        /// Also write a dressed-state sweep table for lo:hi:n MHz.
        #[arg(long, allow_hyphen_values = true)]
        dressed_range: Option<String>,
    },
}

enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numerical(m) => CliError::Numerical(m),
            CoreError::Io(m) => CliError::Io(m.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Io(m)) => {
            eprintln!("io error: {m}");
            ExitCode::from(1)
        }
    }
}

struct Run {
    cfg: Config,
    manifest: RunManifest,
    out_dir: PathBuf,
    started: Instant,
}

impl Run {
    fn new(command: &str, common: &Common) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        let mut manifest_inputs = Vec::new();
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_file(&text).map_err(|e| {
                usage(format!("config {}: {e}", path.display()))
            })?;
            manifest_inputs.push(path.clone());
        }
        if let Some(v) = common.omega_r_mhz {
            cfg.omega_r_mhz = v;
        }
        if let Some(v) = common.gamma1_mhz {
            cfg.gamma1_mhz = v;
        }
        if let Some(v) = common.gamma_phi_mhz {
            cfg.gamma_phi_mhz = v;
        }
        if let Some(v) = common.detuning_mhz {
            cfg.detuning_mhz = v;
        }
        if let Some(v) = common.duration_ns {
            cfg.duration_ns = v;
        }
        if let Some(v) = common.taper_fraction {
            cfg.taper_fraction = v;
        }
        if let Some(v) = common.dt_ns {
            cfg.dt_ns = v;
        }
        if let Some(v) = &common.field_phase {
            cfg.set("field_phase", v).map_err(usage)?;
        }
        if let Some(v) = common.t_end_ns {
            cfg.t_end_ns = Some(v);
        }
        if let Some(v) = common.seed {
            cfg.seed = v;
        }
        if let Some(v) = common.threads {
            cfg.threads = Some(v);
        }
        for kv in &common.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v).map_err(usage)?;
        }

        let threads = cfg.threads.or_else(|| {
            std::env::var("WQED_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        });
        if let Some(n) = threads {
            // Ignore the error when a pool already exists (tests, repeats).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }

        std::fs::create_dir_all(&common.out_dir)?;
        let mut manifest = RunManifest::new(
            command,
            serde_json::to_value(&cfg).expect("config serializes"),
        );
        for p in manifest_inputs {
            manifest.add_input(&p)?;
        }
        Ok(Run {
            cfg,
            manifest,
            out_dir: common.out_dir.clone(),
            started: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        io::write_text(&path, text)?;
        self.manifest.add_output(&path);
        Ok(path)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.manifest.wall_time_ms = self.started.elapsed().as_millis() as u64;
        self.manifest.write(&self.out_dir)?;
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            common,
            noise,
            explicit_shots,
        } => cmd_simulate(&common, noise, explicit_shots),
        Command::Scan { common, detunings } => cmd_scan(&common, &detunings),
        Command::Correlate { common, matrix } => cmd_correlate(&common, matrix),
        Command::Audit { common, window } => cmd_audit(&common, window.as_deref()),
        Command::Fit {
            common,
            data,
            synth,
            detunings,
            noise,
            init,
            bounds,
            out,
            polish,
        } => cmd_fit(&common, data, synth, &detunings, noise, init, bounds, out, polish),
        Command::Calibrate {
            common,
            vp_over_vq,
            dressed_range,
        } => cmd_calibrate(&common, vp_over_vq, dressed_range.as_deref()),
    }
}

fn alpha_on_grid(run: &Run, n: usize) -> Result<Vec<Complex64>, CliError> {
    let params = run.cfg.params().map_err(usage)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let alpha = params.alpha_peak();
    Ok(envelope
        .on_grid(n)
        .into_iter()
        .map(|e| Complex64::new(alpha * e, 0.0))
        .collect())
}

fn chain_config(cfg: &Config, reference_power: Option<f64>) -> ChainConfig {
    ChainConfig {
        snr_db: cfg.snr_db,
        n_avg: cfg.n_avg,
        lpf_mhz: cfg.lpf_mhz,
        if_mhz: cfg.if_mhz,
        rng_seed: cfg.seed,
        reference_power,
    }
}

fn cmd_simulate(
    common: &Common,
    noise: bool,
    explicit_shots: Option<u64>,
) -> Result<(), CliError> {
    let mut run = Run::new("simulate", common)?;
    let params = run.cfg.params().map_err(usage)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let t_end = run.cfg.t_end();
    let v0 = run.cfg.v0;

    let trace = integrate(&params, &envelope, t_end)?;
    let alpha = alpha_on_grid(&run, trace.len())?;
    let clean_radiation = radiation_field(&trace, params.gamma1, params.field_phase, v0);
    let mut field = output_field(&alpha, &trace, params.gamma1, params.field_phase, v0)?;
    let mut radiation = clean_radiation.clone();

    if noise {
        let cfg = chain_config(&run.cfg, Some(clean_radiation.peak_power()));
        field = match explicit_shots {
            None => apply_chain(&field, &cfg)?,
            Some(shots) => apply_chain_explicit_shots(&field, &cfg, shots)?,
        };
        // Radiation is the measured output minus the bare pulse measured
        // through the same chain (noise-free reference), as in the
        // far-detuned subtraction; otherwise the filter's edge response
        // would dominate the difference.
        let bare = FieldTrace {
            t0: field.t0,
            dt: field.dt,
            samples: alpha.iter().map(|a| a * v0).collect(),
        };
        let bare_cfg = ChainConfig {
            snr_db: None,
            ..cfg.clone()
        };
        let bare_measured = apply_chain(&bare, &bare_cfg)?;
        radiation = FieldTrace {
            t0: field.t0,
            dt: field.dt,
            samples: field
                .samples
                .iter()
                .zip(&bare_measured.samples)
                .map(|(f, b)| f - b)
                .collect(),
        };
    }

    run.write("bloch.csv", &io::bloch_csv(&trace))?;
    run.write("field.csv", &io::field_csv(&field))?;
    run.write("radiation.csv", &io::field_csv(&radiation))?;
    run.finish()
}

fn cmd_scan(common: &Common, detunings: &str) -> Result<(), CliError> {
    let mut run = Run::new("scan", common)?;
    let params = run.cfg.params().map_err(usage)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let grid = parse_range(detunings).map_err(usage)?;
    let opts = ScanOptions {
        t_end: run.cfg.t_end(),
        zero_pad: run.cfg.zero_pad,
        cut_at_pulse_end: run.cfg.cut_at_pulse_end,
        v0: run.cfg.v0,
    };
    let scan = detuning_scan(&params, &envelope, &grid, &opts)?;
    run.write("scan_time.csv", &io::scan_time_csv(&scan))?;
    run.write("scan_spec.csv", &io::scan_spec_csv(&scan))?;
    run.finish()
}

fn cmd_correlate(common: &Common, matrix: bool) -> Result<(), CliError> {
    let mut run = Run::new("correlate", common)?;
    let params = run.cfg.params().map_err(usage)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let t_end = run.cfg.t_end();
    let n = (t_end / envelope.dt).round() as usize + 1;
    if n > 4000 {
        eprintln!(
            "warning: {n}×{n} correlation grid; consider a larger dt_ns or smaller t_end_ns"
        );
    }
    let need_mb = 2 * 16 * n * n / (1024 * 1024);
    if need_mb > run.cfg.max_mem_mb {
        return Err(usage(format!(
            "correlation grid needs ~{need_mb} MB but max_mem_mb = {}; \
             raise max_mem_mb or coarsen the grid",
            run.cfg.max_mem_mb
        )));
    }
    let cache = RegressionCache::build(&params, &envelope, t_end)?;
    let trace = cache.bloch_trace();
    let grid = g1_incoherent(cache.correlator_matrix(), &trace, run.cfg.v0, params.gamma1)?;
    {
        let path = run.out_dir.join("g1.csv");
        let file = std::fs::File::create(&path)?;
        let mut writer = std::io::BufWriter::new(file);
        io::write_g1_long(&mut writer, &grid, run.cfg.g1_stride)?;
        use std::io::Write as _;
        writer.flush()?;
        run.manifest.add_output(&path);
    }
    if matrix {
        run.write("g1_matrix.csv", &io::g1_matrix_csv(&grid, run.cfg.g1_stride))?;
    }
    let omega = omega_grid_mhz(
        run.cfg.ipsd_fmin_mhz,
        run.cfg.ipsd_fmax_mhz,
        run.cfg.ipsd_df_mhz,
    )?;
    let map = ipsd(&grid, &omega);
    run.write("ipsd.csv", &io::ipsd_csv(&map))?;
    if let Some(window) = run.cfg.steady_window_ns {
        let psd = steady_psd(&grid, &omega, window)?;
        run.write("psd.csv", &io::psd_csv(&omega, &psd))?;
    }
    run.finish()
}

fn cmd_audit(common: &Common, window: Option<&str>) -> Result<(), CliError> {
    let mut run = Run::new("audit", common)?;
    let params = run.cfg.params().map_err(usage)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let window = match window {
        Some(s) => parse_window(s).map_err(usage)?,
        None => (0.0, envelope.duration),
    };
    let report = energy_audit(&params, &envelope, window)?;
    run.write("energy.json", &io::energy_report_json(&report))?;
    run.finish()
}

fn parse_bounds_file(text: &str) -> Result<FitBounds, String> {
    let mut bounds = FitBounds::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = lo:hi`", lineno + 1));
        };
        let window = parse_window(value.trim()).map_err(|e| format!("line {}: {e}", lineno + 1))?;
        match key.trim() {
            "omega_r_mhz_bounds" => bounds.omega_r_mhz = window,
            "gamma1_mhz_bounds" => bounds.gamma1_mhz = window,
            "gamma_phi_mhz_bounds" => bounds.gamma_phi_mhz = window,
            "offset_mhz_bounds" => bounds.offset_mhz = window,
            other => return Err(format!("line {}: unknown bounds key `{other}`", lineno + 1)),
        }
    }
    Ok(bounds)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    common: &Common,
    data: Option<PathBuf>,
    synth: bool,
    detunings: &str,
    noise: bool,
    init: Option<PathBuf>,
    bounds: Option<PathBuf>,
    out: Option<PathBuf>,
    polish: bool,
) -> Result<(), CliError> {
    let mut run = Run::new("fit", common)?;
    let envelope = run.cfg.envelope().map_err(usage)?;
    let v0 = run.cfg.v0;

    let scan = match (&data, synth) {
        (Some(path), false) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read data {}: {e}", path.display())))?;
            run.manifest.add_input(path)?;
            io::read_scan_time_csv(&text)?
        }
        (None, true) => {
            let truth = run.cfg.params().map_err(usage)?;
            let grid = parse_range(detunings).map_err(usage)?;
            let mut scan = synthesize_scan(&truth, &envelope, &grid, run.cfg.t_end(), v0)?;
            if noise {
                let p_ref = scan
                    .traces
                    .iter()
                    .map(FieldTrace::peak_power)
                    .fold(0.0, f64::max);
                for (r, tr) in scan.traces.iter_mut().enumerate() {
                    let mut cfg = chain_config(&run.cfg, Some(p_ref));
                    cfg.rng_seed = run.cfg.seed.wrapping_add(1009 * r as u64);
                    *tr = apply_chain(tr, &cfg)?;
                }
            }
            scan
        }
        (Some(_), true) => return Err(usage("choose either --data or --synth")),
        (None, false) => return Err(usage("fit needs --data FILE or --synth")),
    };

    let initial = match &init {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read init {}: {e}", path.display())))?;
            run.manifest.add_input(path)?;
            let mut icfg = run.cfg.clone();
            icfg.apply_file(&text)
                .map_err(|e| usage(format!("init {}: {e}", path.display())))?;
            icfg.params().map_err(usage)?
        }
        None => run.cfg.params().map_err(usage)?,
    };
    let fit_bounds = match &bounds {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read bounds {}: {e}", path.display())))?;
            run.manifest.add_input(path)?;
            parse_bounds_file(&text).map_err(usage)?
        }
        None => FitBounds::default(),
    };

    let problem = FitProblem {
        data: scan,
        envelope,
        initial,
        bounds: fit_bounds,
        weights: Vec::new(),
        v0,
    };
    let options = FitOptions {
        gauss_newton_polish: polish,
        ..Default::default()
    };
    let result = fit(&problem, &options)?;
    let out_path = out.unwrap_or_else(|| run.out_dir.join("fit.json"));
    io::write_text(&out_path, &io::fit_result_json(&result))?;
    run.manifest.add_output(&out_path);
    run.finish()
}

fn cmd_calibrate(
    common: &Common,
    vp_over_vq: Option<f64>,
    dressed_range: Option<&str>,
) -> Result<(), CliError> {
    let mut run = Run::new("calibrate", common)?;
    let params = run.cfg.params().map_err(usage)?;
    let calib = CalibrationParams::new(run.cfg.hbar_omega, run.cfg.z0, run.cfg.gain)?;
    let nu = wqed_core::model::photon_rate_from_rabi(params.rabi_peak, params.gamma1)?;
    let kappa =
        wqed_core::model::kappa_magnitude(run.cfg.hbar_omega, run.cfg.z0, params.gamma1)?;
    let mut doc = serde_json::json!({
        "photon_rate_per_ns": nu,
        "alpha": params.alpha_peak(),
        "vp_over_vq_expected": (8.0 * nu / params.gamma1).sqrt(),
        "kappa": kappa,
        "v0": calib.v0(),
    });
    if let Some(ratio) = vp_over_vq {
        let nu_ratio =
            wqed_core::model::photon_rate_from_amplitude_ratio(ratio, params.gamma1)?;
        doc["photon_rate_from_ratio_per_ns"] = serde_json::json!(nu_ratio);
    }
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    run.write("calibration.json", &text)?;
    if let Some(range) = dressed_range {
        let grid = parse_range(range).map_err(usage)?;
        let table = io::dressed_sweep_csv(params.rabi_peak, &grid)?;
        run.write("dressed.csv", &table)?;
    }
    run.finish()
}
