//! Non-stationary first-order correlations by quantum regression.
//!
//! For t₂ ≥ t₁ the two-time correlator is
//! ⟨σ₊(t₁)σ₋(t₂)⟩ = Tr[σ₋ · Λ_{t₁→t₂}(ρ(t₁)σ₊)], where Λ is the same
//! (time-dependent) Lindblad propagator that evolves ρ itself; t₂ < t₁
//! follows from Hermitian symmetry. The incoherent part of the field
//! correlation is
//!
//! ```text
//! G(t₁,t₂) = (V₀²Γ₁/2)·(⟨σ₊(t₁)σ₋(t₂)⟩ − ⟨σ₊(t₁)⟩⟨σ₋(t₂)⟩)
//! ```
//!
//! The drive envelope is frozen per dt slice (midpoint value), giving one
//! exact 4×4 propagator per slice; the cache of N propagators is built once
//! and shared read-only by every row of the O(N²) grid, which is filled in
//! parallel row-by-row.
//!
//! Frequency axes follow the trace-spectrum convention: a component
//! `e^{−iωτ}` of G(t, t+τ) appears at offset +ω from the carrier, so the
//! instantaneous spectra are magnitudes of `∫G(t,t+τ)·e^{+iωτ}dτ` and an
//! undriven emitter at detuning δ shows up at −δ, the physical emission
//! frequency.

use nalgebra::{Matrix4, Vector4};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{bloch_from_vec, propagator, BlochTrace, Liouvillian};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PulseEnvelope};

/// Per-slice exact propagators of the piecewise-constant generator, plus the
/// state trajectory they induce from the ground state.
#[derive(Debug, Clone)]
pub struct RegressionCache {
    pub t0: f64,
    pub dt: f64,
    props: Vec<Matrix4<Complex64>>,
    states: Vec<Vector4<Complex64>>,
}

impl RegressionCache {
    /// Build the cache for `[0, t_end]` on the envelope's grid.
    pub fn build(params: &ModelParams, envelope: &PulseEnvelope, t_end: f64) -> Result<Self> {
        params.validate()?;
        if t_end + 1e-9 < envelope.duration {
            return Err(Error::InvalidArgument(format!(
                "t_end = {t_end} ns must cover the {} ns envelope",
                envelope.duration
            )));
        }
        let dt = envelope.dt;
        let n = (t_end / dt).round() as usize + 1;
        let gamma2 = params.gamma2();
        let props: Vec<Matrix4<Complex64>> = (0..n - 1)
            .into_par_iter()
            .map(|k| {
                let env_mid = envelope.value_at((k as f64 + 0.5) * dt);
                let l = Liouvillian::new(
                    params.rabi_peak * env_mid,
                    params.detuning,
                    params.gamma1,
                    gamma2,
                )?;
                propagator(&l, dt)
            })
            .collect::<Result<_>>()?;
        let mut states = Vec::with_capacity(n);
        let mut v = crate::dynamics::vec_ground();
        states.push(v);
        for p in &props {
            v = p * v;
            states.push(v);
        }
        Ok(RegressionCache {
            t0: 0.0,
            dt,
            props,
            states,
        })
    }

    /// Cache with explicit slice propagators and initial state; the
    /// propagator list must be one shorter than the trajectory it generates.
    pub fn from_parts(
        t0: f64,
        dt: f64,
        props: Vec<Matrix4<Complex64>>,
        initial: Vector4<Complex64>,
    ) -> Self {
        let mut states = Vec::with_capacity(props.len() + 1);
        let mut v = initial;
        states.push(v);
        for p in &props {
            v = p * v;
            states.push(v);
        }
        RegressionCache {
            t0,
            dt,
            props,
            states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// ⟨σ₋(t_i)⟩ of the propagated trajectory.
    pub fn sigma_minus(&self, i: usize) -> Complex64 {
        self.states[i][2]
    }

    /// Excited population of the propagated trajectory.
    pub fn population(&self, i: usize) -> f64 {
        self.states[i][3].re
    }

    /// Bloch trace reconstructed from the propagated trajectory (same grid
    /// as the propagators; matches RK4 integration to discretization error).
    pub fn bloch_trace(&self) -> BlochTrace {
        let states: Vec<_> = self.states.iter().map(bloch_from_vec).collect();
        let sigma_minus = self.states.iter().map(|v| v[2]).collect();
        BlochTrace {
            t0: self.t0,
            dt: self.dt,
            states,
            sigma_minus,
        }
    }

    /// One row of ⟨σ₊(t_i)σ₋(t_j)⟩ for j ≥ i: seed X = ρ(t_i)·σ₊, push it
    /// through the slice propagators, and read off Tr[σ₋·X] = X_eg.
    fn correlator_row_upper(&self, i: usize) -> Vec<Complex64> {
        let v = &self.states[i];
        // ρσ₊ in vectorized form: (ρ_ge, 0, ρ_ee, 0).
        let mut x = Vector4::new(v[1], Complex64::new(0.0, 0.0), v[3], Complex64::new(0.0, 0.0));
        let mut row = Vec::with_capacity(self.len() - i);
        row.push(x[2]);
        for p in &self.props[i..] {
            x = p * x;
            row.push(x[2]);
        }
        row
    }

    /// Full square matrix ⟨σ₊(t_i)σ₋(t_j)⟩; the lower triangle is the
    /// Hermitian mirror of the upper.
    pub fn correlator_matrix(&self) -> Array2<Complex64> {
        let n = self.len();
        let mut m = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| self.correlator_row_upper(i))
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (k, &g) in row.iter().enumerate() {
                m[[i, i + k]] = g;
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[[i, j]] = m[[j, i]].conj();
            }
        }
        m
    }
}

/// ⟨σ₊(t₁)σ₋(t₂)⟩ over the square grid `[0, t_end]²` on the envelope's step.
pub fn two_time_correlator(
    params: &ModelParams,
    envelope: &PulseEnvelope,
    t_end: f64,
) -> Result<Array2<Complex64>> {
    Ok(RegressionCache::build(params, envelope, t_end)?.correlator_matrix())
}

/// Incoherent first-order correlation grid, scaled by V₀²Γ₁/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub values: Array2<Complex64>,
}

impl TwoTimeGrid {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn index_of(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt).round() as usize).min(self.len().saturating_sub(1))
    }

    /// Largest |G| over the grid.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Subtract the mean-field product from a two-time correlator and scale:
/// `G(t₁,t₂) = (V₀²Γ₁/2)·(corr(t₁,t₂) − ⟨σ₊(t₁)⟩⟨σ₋(t₂)⟩)`.
pub fn g1_incoherent(
    mut two_time: Array2<Complex64>,
    trace: &BlochTrace,
    v0: f64,
    gamma1: f64,
) -> Result<TwoTimeGrid> {
    let n = trace.len();
    if two_time.nrows() != n || two_time.ncols() != n {
        return Err(Error::GridMismatch(format!(
            "correlator is {}×{}, trace has {} samples",
            two_time.nrows(),
            two_time.ncols(),
            n
        )));
    }
    let scale = Complex64::new(v0 * v0 * gamma1 / 2.0, 0.0);
    let sm = trace.sigma_minus.clone();
    two_time
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let sp = sm[i].conj();
            for (j, g) in row.iter_mut().enumerate() {
                *g = (*g - sp * sm[j]) * scale;
            }
        });
    Ok(TwoTimeGrid {
        t0: trace.t0,
        dt: trace.dt,
        values: two_time,
    })
}

/// Instantaneous power spectral density map: per start time t, the magnitude
/// of the one-sided transform of G(t, t+τ) over the available τ span.
#[derive(Debug, Clone, PartialEq)]
pub struct IpsdMap {
    pub t0: f64,
    pub dt: f64,
    /// Angular frequency grid, rad/ns, relative to the carrier.
    pub omega: Vec<f64>,
    /// `magnitudes[[i, k]]` is the IPSD at (t_i, ω_k).
    pub magnitudes: Array2<f64>,
}

fn ipsd_row(row: ndarray::ArrayView1<'_, Complex64>, i: usize, omega: &[f64], dt: f64) -> Vec<f64> {
    // One-sided rectangle rule in τ = t₂ − t₁ ≥ 0 with half weight at τ = 0;
    // phase factors advance by e^{iω·dt} per sample instead of per-cell exp().
    let nw = omega.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); nw];
    let mut phase: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); nw];
    let step: Vec<Complex64> = omega
        .iter()
        .map(|&w| Complex64::from_polar(1.0, w * dt))
        .collect();
    for (k, &g) in row.iter().enumerate().skip(i) {
        let weight = if k == i { 0.5 } else { 1.0 };
        let gv = g * weight;
        for w in 0..nw {
            acc[w] += gv * phase[w];
            phase[w] *= step[w];
        }
    }
    acc.iter().map(|z| z.norm() * dt).collect()
}

/// IPSD for every start time on the grid.
pub fn ipsd(grid: &TwoTimeGrid, omega: &[f64]) -> IpsdMap {
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ipsd_row(grid.values.row(i), i, omega, grid.dt))
        .collect();
    let mut magnitudes = Array2::zeros((n, omega.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            magnitudes[[i, k]] = v;
        }
    }
    IpsdMap {
        t0: grid.t0,
        dt: grid.dt,
        omega: omega.to_vec(),
        magnitudes,
    }
}

/// IPSD averaged over start times within `window` — the steady-state power
/// spectral density when the window sits in the stationary regime.
pub fn steady_psd(grid: &TwoTimeGrid, omega: &[f64], window: (f64, f64)) -> Result<Vec<f64>> {
    let (w0, w1) = window;
    let last = grid.time(grid.len() - 1);
    if w0.is_nan() || w1.is_nan() || w1 <= w0 || w0 < grid.t0 - 1e-9 || w1 > last + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "steady window ({w0}, {w1}) must be non-empty and inside [{}, {last}]",
            grid.t0
        )));
    }
    let i0 = grid.index_of(w0);
    let i1 = grid.index_of(w1);
    if i1 <= i0 {
        return Err(Error::InvalidArgument("steady window contains no rows".into()));
    }
    let rows: Vec<Vec<f64>> = (i0..=i1)
        .into_par_iter()
        .map(|i| ipsd_row(grid.values.row(i), i, omega, grid.dt))
        .collect();
    let count = rows.len() as f64;
    let mut avg = vec![0.0; omega.len()];
    for row in rows {
        for (a, v) in avg.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut avg {
        *a /= count;
    }
    Ok(avg)
}

/// Uniform angular-frequency grid from ordinary frequencies in MHz.
pub fn omega_grid_mhz(f_min_mhz: f64, f_max_mhz: f64, df_mhz: f64) -> Result<Vec<f64>> {
    if df_mhz.is_nan() || df_mhz <= 0.0 || f_max_mhz.is_nan() || f_max_mhz <= f_min_mhz {
        return Err(Error::InvalidArgument(
            "frequency grid requires f_max > f_min and df > 0".into(),
        ));
    }
    let n = ((f_max_mhz - f_min_mhz) / df_mhz).round() as usize + 1;
    Ok((0..n)
        .map(|k| crate::model::mhz_to_angular(f_min_mhz + k as f64 * df_mhz))
        .collect())
}
