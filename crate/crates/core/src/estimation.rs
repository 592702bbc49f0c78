//! Nonlinear least-squares extraction of (frequency offset, Ω_R, Γ₁, γ_φ)
//! from complex radiation traces versus detuning.
//!
//! The objective is the time-domain misfit
//! Σ_rows w_r · Σ_t |model(t; δ_r + offset, Ω_R, Γ₁, γ_φ) − data(t)|²,
//! fitted in both quadratures: the phase of the trace constrains the
//! parameters far more tightly than magnitude spectra would. Rates are
//! optimized in log-space (positivity and conditioning); the frequency
//! offset stays linear. The optimizer is a bounded Nelder–Mead simplex
//! (projection onto the box), optionally polished by a finite-difference
//! Gauss–Newton step.

use rayon::prelude::*;

use crate::dynamics::integrate;
use crate::error::{Error, Result};
use crate::fields::{radiation_field, FieldTrace};
use crate::model::{angular_to_mhz, mhz_to_angular, ModelParams, PulseEnvelope};
use crate::spectra::{trace_spectrum, ScanResult, Spectrum};

/// Per-parameter box constraints, ordinary frequencies in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    pub omega_r_mhz: (f64, f64),
    pub gamma1_mhz: (f64, f64),
    pub gamma_phi_mhz: (f64, f64),
    pub offset_mhz: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        FitBounds {
            omega_r_mhz: (1.0, 100.0),
            gamma1_mhz: (0.05, 10.0),
            gamma_phi_mhz: (1e-4, 10.0),
            offset_mhz: (-10.0, 10.0),
        }
    }
}

/// A fit instance: data, drive description, starting point, constraints.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: ScanResult,
    pub envelope: PulseEnvelope,
    pub initial: ModelParams,
    pub bounds: FitBounds,
    /// Per-row weights; empty means uniform.
    pub weights: Vec<f64>,
    /// Field scale of the data.
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative objective-spread tolerance across the simplex.
    pub rel_tol: f64,
    /// Simplex diameter tolerance relative to the parameter scale.
    pub simplex_tol: f64,
    /// Run a finite-difference Gauss–Newton refinement after the simplex.
    pub gauss_newton_polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 2000,
            rel_tol: 1e-9,
            simplex_tol: 1e-6,
            gauss_newton_polish: false,
        }
    }
}

/// Reported 1σ scales from the local quadratic model at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FitUncertainty {
    pub omega_r_mhz: f64,
    pub gamma1_mhz: f64,
    pub gamma_phi_mhz: f64,
    pub offset_mhz: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted parameters; `detuning` holds the fitted global offset.
    pub params: ModelParams,
    /// √(objective) at the optimum.
    pub residual_norm: f64,
    pub uncertainty: FitUncertainty,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each simplex iteration.
    pub history: Vec<f64>,
}

impl FitProblem {
    fn validate(&self) -> Result<()> {
        if self.data.rows() == 0 {
            return Err(Error::InvalidArgument("no detuning rows".into()));
        }
        if (self.data.dt - self.envelope.dt).abs() > 1e-12 {
            return Err(Error::GridMismatch(format!(
                "data dt {} differs from envelope dt {}",
                self.data.dt, self.envelope.dt
            )));
        }
        if self.data.t0.abs() > 1e-12 {
            return Err(Error::GridMismatch("scan traces must start at t = 0".into()));
        }
        let n = self.data.traces.first().map_or(0, FieldTrace::len);
        if n < 2 || self.data.traces.iter().any(|t| t.len() != n) {
            return Err(Error::GridMismatch(
                "all rows must share one non-trivial time grid".into(),
            ));
        }
        if !self.weights.is_empty() && self.weights.len() != self.data.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} rows",
                self.weights.len(),
                self.data.rows()
            )));
        }
        let t_end = (n - 1) as f64 * self.data.dt;
        if t_end + 1e-9 < self.envelope.duration {
            return Err(Error::InvalidArgument(
                "data traces end before the pulse does".into(),
            ));
        }
        Ok(())
    }

    fn t_end(&self) -> f64 {
        let n = self.data.traces[0].len();
        (n - 1) as f64 * self.data.dt
    }

    fn weight(&self, row: usize) -> f64 {
        if self.weights.is_empty() {
            1.0
        } else {
            self.weights[row]
        }
    }
}

/// The exact objective minimized by [`fit`]: weighted squared misfit between
/// the model radiation traces at `params` (with `params.detuning` acting as
/// a global offset added to each row's nominal detuning) and the data.
pub fn residual(params: &ModelParams, problem: &FitProblem) -> Result<f64> {
    problem.validate()?;
    let t_end = problem.t_end();
    let rows: Vec<f64> = problem
        .data
        .detuning_mhz
        .par_iter()
        .enumerate()
        .map(|(r, &f)| {
            let mut p = params.clone();
            p.detuning = mhz_to_angular(f) + params.detuning;
            let trace = integrate(&p, &problem.envelope, t_end)?;
            let model = radiation_field(&trace, p.gamma1, p.field_phase, problem.v0);
            let data = &problem.data.traces[r];
            let sum: f64 = model
                .samples
                .iter()
                .zip(&data.samples)
                .map(|(m, d)| (m - d).norm_sqr())
                .sum();
            Ok(problem.weight(r) * sum)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

// Internal coordinates: [offset rad/ns, ln Ω, ln Γ₁, ln γ_φ].
type X = [f64; 4];

fn params_to_x(p: &ModelParams) -> X {
    [
        p.detuning,
        p.rabi_peak.ln(),
        p.gamma1.ln(),
        p.gamma_phi.max(1e-12).ln(),
    ]
}

fn x_to_params(x: &X, template: &ModelParams) -> ModelParams {
    let mut p = template.clone();
    p.detuning = x[0];
    p.rabi_peak = x[1].exp();
    p.gamma1 = x[2].exp();
    p.gamma_phi = x[3].exp();
    p
}

fn bounds_to_x(b: &FitBounds) -> ([f64; 4], [f64; 4]) {
    let lo = [
        mhz_to_angular(b.offset_mhz.0),
        mhz_to_angular(b.omega_r_mhz.0.max(1e-9)).ln(),
        mhz_to_angular(b.gamma1_mhz.0.max(1e-9)).ln(),
        mhz_to_angular(b.gamma_phi_mhz.0.max(1e-9)).ln(),
    ];
    let hi = [
        mhz_to_angular(b.offset_mhz.1),
        mhz_to_angular(b.omega_r_mhz.1).ln(),
        mhz_to_angular(b.gamma1_mhz.1).ln(),
        mhz_to_angular(b.gamma_phi_mhz.1).ln(),
    ];
    (lo, hi)
}

fn project(x: &mut X, lo: &X, hi: &X) {
    for i in 0..4 {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Gradient of the objective in internal coordinates by central differences.
pub fn objective_gradient_fd(params: &ModelParams, problem: &FitProblem) -> Result<X> {
    let x0 = params_to_x(params);
    let mut g = [0.0; 4];
    let h = 1e-5;
    for i in 0..4 {
        let mut xp = x0;
        xp[i] += h;
        let mut xm = x0;
        xm[i] -= h;
        let fp = residual(&x_to_params(&xp, params), problem)?;
        let fm = residual(&x_to_params(&xm, params), problem)?;
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Residual vector (stacked real and imaginary misfits, √weighted).
fn residual_vector(params: &ModelParams, problem: &FitProblem) -> Result<Vec<f64>> {
    let t_end = problem.t_end();
    let rows: Vec<Vec<f64>> = problem
        .data
        .detuning_mhz
        .par_iter()
        .enumerate()
        .map(|(r, &f)| {
            let mut p = params.clone();
            p.detuning = mhz_to_angular(f) + params.detuning;
            let trace = integrate(&p, &problem.envelope, t_end)?;
            let model = radiation_field(&trace, p.gamma1, p.field_phase, problem.v0);
            let w = problem.weight(r).sqrt();
            let mut v = Vec::with_capacity(2 * model.len());
            for (m, d) in model.samples.iter().zip(&problem.data.traces[r].samples) {
                v.push(w * (m - d).re);
                v.push(w * (m - d).im);
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// The Gauss–Newton model gradient 2·Jᵀr at `params`, internal coordinates.
pub fn gauss_newton_gradient(params: &ModelParams, problem: &FitProblem) -> Result<X> {
    let (jt_r, _) = jacobian_products(params, problem)?;
    Ok(jt_r.map(|v| 2.0 * v))
}

/// Forward-difference Jacobian products: returns (Jᵀr, JᵀJ).
fn jacobian_products(params: &ModelParams, problem: &FitProblem) -> Result<(X, [[f64; 4]; 4])> {
    let x0 = params_to_x(params);
    let r0 = residual_vector(params, problem)?;
    let h = 1e-6;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(4);
    for i in 0..4 {
        let mut xp = x0;
        xp[i] += h;
        let rp = residual_vector(&x_to_params(&xp, params), problem)?;
        cols.push(rp.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect());
    }
    let mut jt_r = [0.0; 4];
    let mut jt_j = [[0.0; 4]; 4];
    for i in 0..4 {
        jt_r[i] = cols[i].iter().zip(&r0).map(|(a, b)| a * b).sum();
        for j in i..4 {
            let v = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            jt_j[i][j] = v;
            jt_j[j][i] = v;
        }
    }
    Ok((jt_r, jt_j))
}

fn solve4(a: &[[f64; 4]; 4], b: &X) -> Option<X> {
    let m = nalgebra::Matrix4::from_fn(|i, j| a[i][j]);
    let v = nalgebra::Vector4::new(b[0], b[1], b[2], b[3]);
    m.lu().solve(&v).map(|s| [s[0], s[1], s[2], s[3]])
}

/// Minimize the scan misfit. Derivative-free Nelder–Mead with projection
/// onto the bounds; non-convergence is reported in the result, not as an
/// error.
pub fn fit(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    if problem.data.rows() < 4 {
        return Err(Error::InvalidArgument(format!(
            "{} detuning rows cannot constrain a 4-parameter fit",
            problem.data.rows()
        )));
    }
    let data_power: f64 = problem
        .data
        .traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .map(|z| z.norm_sqr())
        .sum();
    if data_power == 0.0 {
        return Err(Error::InvalidArgument("data is identically zero".into()));
    }
    let (lo, hi) = bounds_to_x(&problem.bounds);
    let mut x0 = params_to_x(&problem.initial);
    project(&mut x0, &lo, &hi);
    let eval = |x: &X| -> Result<f64> { residual(&x_to_params(x, &problem.initial), problem) };

    // "Numerically zero" for this data: the ln/exp coordinate round-trip
    // alone perturbs a perfect model by ~1 ulp per parameter, which the
    // dynamics amplify to ~1e-26·‖data‖² in the objective.
    let floor = 1e-22 * data_power;
    let f0 = eval(&x0)?;
    let mut history = vec![f0];
    if f0 <= floor {
        // Already at the optimum (typically a noiseless self-consistency run).
        return finish(problem, x0, f0, 0, true, history);
    }

    // Initial simplex: one vertex per coordinate step.
    let steps = [mhz_to_angular(0.5), 0.05, 0.05, 0.10];
    let mut simplex: Vec<(X, f64)> = Vec::with_capacity(5);
    simplex.push((x0, f0));
    for i in 0..4 {
        let mut xi = x0;
        xi[i] += if xi[i] + steps[i] <= hi[i] { steps[i] } else { -steps[i] };
        project(&mut xi, &lo, &hi);
        let fi = eval(&xi)?;
        simplex.push((xi, fi));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[4].1;
        history.push(best);
        let scale = 1.0 + simplex[0].0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if best <= floor
            || (worst - best) <= options.rel_tol * (best.abs() + 1e-300)
            || diameter <= options.simplex_tol * scale
        {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = [0.0; 4];
        for (x, _) in &simplex[..4] {
            for i in 0..4 {
                centroid[i] += x[i] / 4.0;
            }
        }
        let xw = simplex[4].0;
        let mut xr = [0.0; 4];
        for i in 0..4 {
            xr[i] = centroid[i] + alpha * (centroid[i] - xw[i]);
        }
        project(&mut xr, &lo, &hi);
        let fr = eval(&xr)?;
        if fr < simplex[0].1 {
            let mut xe = [0.0; 4];
            for i in 0..4 {
                xe[i] = centroid[i] + gamma * (xr[i] - centroid[i]);
            }
            project(&mut xe, &lo, &hi);
            let fe = eval(&xe)?;
            simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[3].1 {
            simplex[4] = (xr, fr);
            continue;
        }
        // Contraction (outside if the reflection helped at all).
        let (xc, fc) = if fr < simplex[4].1 {
            let mut xc = [0.0; 4];
            for i in 0..4 {
                xc[i] = centroid[i] + rho * (xr[i] - centroid[i]);
            }
            project(&mut xc, &lo, &hi);
            let fc = eval(&xc)?;
            (xc, fc)
        } else {
            let mut xc = [0.0; 4];
            for i in 0..4 {
                xc[i] = centroid[i] - rho * (centroid[i] - xw[i]);
            }
            project(&mut xc, &lo, &hi);
            let fc = eval(&xc)?;
            (xc, fc)
        };
        if fc < simplex[4].1.min(fr) {
            simplex[4] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let xb = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            for (vi, &bi) in v.0.iter_mut().zip(&xb) {
                *vi = bi + sigma * (*vi - bi);
            }
            project(&mut v.0, &lo, &hi);
            v.1 = eval(&v.0)?;
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (mut x_best, mut f_best) = simplex[0];
    history.push(f_best);

    if options.gauss_newton_polish {
        for _ in 0..5 {
            let p = x_to_params(&x_best, &problem.initial);
            let (jt_r, mut jt_j) = jacobian_products(&p, problem)?;
            for (i, row) in jt_j.iter_mut().enumerate() {
                row[i] *= 1.0 + 1e-10;
            }
            let Some(step) = solve4(&jt_j, &jt_r) else { break };
            let mut improved = false;
            let mut damping = 1.0;
            for _ in 0..4 {
                let mut xt = x_best;
                for i in 0..4 {
                    xt[i] -= damping * step[i];
                }
                project(&mut xt, &lo, &hi);
                let ft = eval(&xt)?;
                if ft < f_best {
                    x_best = xt;
                    f_best = ft;
                    improved = true;
                    break;
                }
                damping *= 0.25;
            }
            if !improved {
                break;
            }
            history.push(f_best);
        }
    }

    finish(problem, x_best, f_best, iterations, converged, history)
}

fn finish(
    problem: &FitProblem,
    x: X,
    f: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
) -> Result<FitResult> {
    let params = x_to_params(&x, &problem.initial);
    let uncertainty = local_uncertainty(problem, &x, f).unwrap_or(FitUncertainty {
        omega_r_mhz: 0.0,
        gamma1_mhz: 0.0,
        gamma_phi_mhz: 0.0,
        offset_mhz: 0.0,
    });
    Ok(FitResult {
        residual_norm: f.max(0.0).sqrt(),
        params,
        uncertainty,
        iterations,
        converged,
        history,
    })
}

fn local_uncertainty(problem: &FitProblem, x: &X, f_min: f64) -> Option<FitUncertainty> {
    let params = x_to_params(x, &problem.initial);
    let n_data: usize = 2 * problem.data.traces.iter().map(FieldTrace::len).sum::<usize>();
    let dof = n_data.saturating_sub(4).max(1) as f64;
    let s2 = f_min / dof;
    // FD Hessian diagonal of the objective; σ_i = √(2 s² / H_ii) per
    // coordinate under the local quadratic model.
    let h = 1e-4;
    let mut sigma = [0.0; 4];
    for i in 0..4 {
        let mut xp = *x;
        xp[i] += h;
        let mut xm = *x;
        xm[i] -= h;
        let fp = residual(&x_to_params(&xp, &problem.initial), problem).ok()?;
        let fm = residual(&x_to_params(&xm, &problem.initial), problem).ok()?;
        let hii = (fp - 2.0 * f_min + fm) / (h * h);
        sigma[i] = if hii > 0.0 { (2.0 * s2 / hii).sqrt() } else { f64::NAN };
    }
    let fin = |v: f64| if v.is_finite() { v } else { 0.0 };
    Some(FitUncertainty {
        offset_mhz: fin(angular_to_mhz(sigma[0])),
        omega_r_mhz: fin(params.rabi_peak * sigma[1] / mhz_to_angular(1.0)),
        gamma1_mhz: fin(params.gamma1 * sigma[2] / mhz_to_angular(1.0)),
        gamma_phi_mhz: fin(params.gamma_phi * sigma[3] / mhz_to_angular(1.0)),
    })
}

/// Synthetic scan generated by the fit's own forward model: row detunings
/// are the nominal grid plus `truth.detuning` as a global offset.
pub fn synthesize_scan(
    truth: &ModelParams,
    envelope: &PulseEnvelope,
    detuning_mhz: &[f64],
    t_end: f64,
    v0: f64,
) -> Result<ScanResult> {
    if detuning_mhz.is_empty() {
        return Err(Error::InvalidArgument("empty detuning grid".into()));
    }
    let rows: Vec<(FieldTrace, Spectrum)> = detuning_mhz
        .par_iter()
        .map(|&f| {
            let mut p = truth.clone();
            p.detuning = mhz_to_angular(f) + truth.detuning;
            let trace = integrate(&p, envelope, t_end)?;
            let rad = radiation_field(&trace, p.gamma1, p.field_phase, v0);
            let spec = trace_spectrum(&rad, 4)?;
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
