//! Probe/FWM cross-correlation G⁽²⁾(τ_d), its normalized form and the
//! coincidence rate.
//!
//! With a single-photon probe of spectral amplitude P(ω) and vacuum FWM
//! input, the cross-correlation is
//!
//! G⁽²⁾(τ) = (P_R1 + N_S1)·N_R2 + P_R2·N_S1 + |Y(τ)|² + 2 Re[X(τ)Y(τ)],
//!
//! where P_Rj = ∫|P|²|R_j|² dω and X(τ) = ∫e^{−iωτ}|P|²R₁*R₂ dω are taken over
//! the normalized pulse spectrum (∫|P|²dω = 1), while the vacuum terms
//! N_S1 = ∫|S₁|² dω/2π, N_R2 = ∫|R₂|² dω/2π and Y(τ) = ∫e^{−iωτ}S₁S₂* dω/2π
//! use the inverse-transform measure dω/2π. The single-mode intensities are
//! G⁽¹⁾_E1 = P_R1 + N_S1 and G⁽¹⁾_E2 = P_R2 + N_R2.
//!
//! The pulse-weighted integrals live on a narrow grid around the carrier;
//! the vacuum integrals need a wide grid that resolves the Autler–Townes
//! resonances of the medium.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::linspace;
use crate::error::{Error, Result};
use crate::model::{CompositeDetunings, ModelParams};
use crate::propagation::{transfer, TransferMatrix};

/// Allowed relative change of any G⁽²⁾ value under grid doubling.
pub const DOUBLING_TOLERANCE: f64 = 1e-4;

/// Spectral shape of the probe photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PulseShape {
    /// P(t) = exp(−t²/τ_p²).
    Gaussian,
}

/// |P(ω)|² sampled on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct PulseSpectrum {
    pub shape: PulseShape,
    pub tau_p: f64,
    pub omega: Vec<f64>,
    /// |P(ω)|², normalized to unit integral over ω.
    pub weight: Vec<f64>,
}

impl PulseSpectrum {
    /// Gaussian spectrum τ_p/√(2π)·exp(−ω²τ_p²/2) on `n` points over
    /// ωτ_p ∈ [−half_width, half_width].
    pub fn gaussian(tau_p: f64, half_width: f64, n: usize) -> Self {
        let omega = linspace(-half_width / tau_p, half_width / tau_p, n);
        let weight = omega
            .iter()
            .map(|w| tau_p / (2.0 * PI).sqrt() * (-(w * tau_p).powi(2) / 2.0).exp())
            .collect();
        PulseSpectrum { shape: PulseShape::Gaussian, tau_p, omega, weight }
    }

    /// ∫|P(ω)|² dω by the trapezoid rule.
    pub fn norm(&self) -> f64 {
        trapezoid(&self.weight, step(&self.omega))
    }
}

fn step(x: &[f64]) -> f64 {
    if x.len() < 2 {
        0.0
    } else {
        x[1] - x[0]
    }
}

fn trapezoid<T>(f: &[T], h: f64) -> T
where
    T: Copy + std::iter::Sum<T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    if f.len() < 2 {
        return T::default();
    }
    let inner: T = f.iter().copied().sum();
    (inner - f[0] * 0.5 - f[f.len() - 1] * 0.5) * h
}

/// Quadrature settings. Widths are in units of 1/τ_p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct G2Grid {
    pub signal_points: usize,
    pub signal_half_width: f64,
    pub vacuum_points: usize,
    pub vacuum_half_width: f64,
    /// Re-run at doubled densities and enforce [`DOUBLING_TOLERANCE`].
    pub check_doubling: bool,
}

impl Default for G2Grid {
    fn default() -> Self {
        G2Grid {
            signal_points: 4097,
            signal_half_width: 40.0,
            vacuum_points: 32_001,
            vacuum_half_width: 4000.0,
            check_doubling: true,
        }
    }
}

impl G2Grid {
    fn doubled(&self) -> Self {
        G2Grid {
            signal_points: 2 * self.signal_points - 1,
            vacuum_points: 2 * self.vacuum_points - 1,
            check_doubling: false,
            ..*self
        }
    }
}

/// G⁽²⁾ over a τ_d grid plus everything needed to normalize it.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationSeries {
    pub tau_d: Vec<f64>,
    pub g2_raw: Vec<f64>,
    /// Filled by [`normalize_g2`].
    pub g2_norm: Vec<f64>,
    /// Filled by [`coincidence_rate`].
    pub rc: Vec<f64>,
    pub epsilon: f64,
    pub delta_t: f64,
    pub g1_e1: f64,
    pub g1_e2: f64,
    /// Largest |Im| of the interference term relative to max |G⁽²⁾|.
    pub imag_residual: f64,
    /// Largest relative change under grid doubling, when checked.
    pub doubling_change: Option<f64>,
    pub grid: G2Grid,
}

struct Moments {
    pr1: f64,
    pr2: f64,
    ns1: f64,
    nr2: f64,
}

fn sample_grid<F>(omegas: &[f64], f: &F) -> Result<Vec<TransferMatrix>>
where
    F: Fn(f64) -> Result<TransferMatrix> + Sync,
{
    omegas.par_iter().map(|&w| f(w)).collect()
}

/// ∫ e^{∓iωτ} g(ω) dω on a uniform grid, phases by recurrence.
fn fourier(omegas: &[f64], g: &[Complex64], tau: f64, sign: f64) -> Complex64 {
    let h = step(omegas);
    let mut phase = Complex64::from_polar(1.0, -sign * omegas[0] * tau);
    let rot = Complex64::from_polar(1.0, -sign * h * tau);
    let mut acc = Complex64::new(0.0, 0.0);
    let last = g.len() - 1;
    for (k, x) in g.iter().enumerate() {
        if k % 256 == 0 {
            phase = Complex64::from_polar(1.0, -sign * omegas[k] * tau);
        }
        let w = if k == 0 || k == last { 0.5 } else { 1.0 };
        acc += phase * x * w;
        phase *= rot;
    }
    acc * h
}

fn evaluate<F>(tau_grid: &[f64], spectrum_tau_p: f64, grid: &G2Grid, transfer_at: &F) -> Result<(Vec<f64>, f64, Moments)>
where
    F: Fn(f64) -> Result<TransferMatrix> + Sync,
{
    let spec = PulseSpectrum::gaussian(spectrum_tau_p, grid.signal_half_width, grid.signal_points);
    let ws = &spec.omega;
    let wv = linspace(
        -grid.vacuum_half_width / spectrum_tau_p,
        grid.vacuum_half_width / spectrum_tau_p,
        grid.vacuum_points,
    );
    let ts = sample_grid(ws, transfer_at)?;
    let tv = sample_grid(&wv, transfer_at)?;
    let (hs, hv) = (step(ws), step(&wv));

    let p_r1: Vec<f64> = ts.iter().zip(&spec.weight).map(|(t, p)| p * t.r1.norm_sqr()).collect();
    let p_r2: Vec<f64> = ts.iter().zip(&spec.weight).map(|(t, p)| p * t.r2.norm_sqr()).collect();
    let n_s1: Vec<f64> = tv.iter().map(|t| t.s1.norm_sqr()).collect();
    let n_r2: Vec<f64> = tv.iter().map(|t| t.r2.norm_sqr()).collect();
    let m = Moments {
        pr1: trapezoid(&p_r1, hs),
        pr2: trapezoid(&p_r2, hs),
        ns1: trapezoid(&n_s1, hv) / (2.0 * PI),
        nr2: trapezoid(&n_r2, hv) / (2.0 * PI),
    };
    let x_int: Vec<Complex64> = ts.iter().zip(&spec.weight).map(|(t, p)| t.r1.conj() * t.r2 * *p).collect();
    let x_conj: Vec<Complex64> = ts.iter().zip(&spec.weight).map(|(t, p)| t.r1 * t.r2.conj() * *p).collect();
    let y_int: Vec<Complex64> = tv.iter().map(|t| t.s1 * t.s2.conj()).collect();
    let y_conj: Vec<Complex64> = tv.iter().map(|t| t.s1.conj() * t.s2).collect();
    let background = (m.pr1 + m.ns1) * m.nr2 + m.pr2 * m.ns1;

    let rows: Vec<(f64, f64)> = tau_grid
        .par_iter()
        .map(|&tau| {
            let x = fourier(ws, &x_int, tau, 1.0);
            let y = fourier(&wv, &y_int, tau, 1.0) / (2.0 * PI);
            let xc = fourier(ws, &x_conj, tau, -1.0);
            let yc = fourier(&wv, &y_conj, tau, -1.0) / (2.0 * PI);
            let cross = x * y + xc * yc;
            (background + y.norm_sqr() + cross.re, cross.im)
        })
        .collect();
    let g2: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let peak = g2.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let imag = rows.iter().fold(0.0f64, |a, r| a.max(r.1.abs()));
    let imag_rel = if peak > 0.0 { imag / peak } else { imag };
    Ok((g2, imag_rel, m))
}

/// G⁽²⁾(τ_d) with the transfer matrix supplied by `transfer_at(ω)`.
pub fn g2_cross_with<F>(tau_grid: &[f64], tau_p: f64, grid: &G2Grid, transfer_at: F) -> Result<CorrelationSeries>
where
    F: Fn(f64) -> Result<TransferMatrix> + Sync,
{
    let (g2, imag, m) = evaluate(tau_grid, tau_p, grid, &transfer_at)?;
    let doubling_change = if grid.check_doubling {
        let (fine, _, _) = evaluate(tau_grid, tau_p, &grid.doubled(), &transfer_at)?;
        let change = g2
            .iter()
            .zip(&fine)
            .map(|(a, b)| {
                let s = a.abs().max(b.abs());
                if s == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / s
                }
            })
            .fold(0.0, f64::max);
        if change > DOUBLING_TOLERANCE {
            return Err(Error::NonConvergence(format!(
                "G2 quadrature changed by {change:e} under grid doubling (tolerance {DOUBLING_TOLERANCE:e})"
            )));
        }
        Some(change)
    } else {
        None
    };
    Ok(CorrelationSeries {
        tau_d: tau_grid.to_vec(),
        g2_raw: g2,
        g2_norm: Vec::new(),
        rc: Vec::new(),
        epsilon: 1.0,
        delta_t: 0.0,
        g1_e1: m.pr1 + m.ns1,
        g1_e2: m.pr2 + m.nr2,
        imag_residual: imag,
        doubling_change,
        grid: *grid,
    })
}

/// G⁽²⁾(τ_d) for a medium of length L.
pub fn g2_cross(
    tau_grid: &[f64],
    length: f64,
    ds: &CompositeDetunings,
    p: &ModelParams,
    grid: &G2Grid,
) -> Result<CorrelationSeries> {
    g2_cross_with(tau_grid, p.tau_p, grid, |w| transfer(length, w, ds, p))
}

/// g⁽²⁾ = G⁽²⁾/(G⁽¹⁾_E1 G⁽¹⁾_E2).
pub fn normalize_g2(mut s: CorrelationSeries) -> Result<CorrelationSeries> {
    if s.g1_e1 < 1e-30 || s.g1_e2 < 1e-30 {
        return Err(Error::Degenerate(format!(
            "single-mode intensities too small to normalize: G1_E1 = {:e}, G1_E2 = {:e}",
            s.g1_e1, s.g1_e2
        )));
    }
    let d = s.g1_e1 * s.g1_e2;
    s.g2_norm = s.g2_raw.iter().map(|g| g / d).collect();
    Ok(s)
}

/// R_c = ε²·ΔT·G⁽²⁾ per bin.
pub fn coincidence_rate(mut s: CorrelationSeries, epsilon: f64, delta_t: f64) -> Result<CorrelationSeries> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidParams(format!("bin size must be > 0, got {delta_t}")));
    }
    s.epsilon = epsilon;
    s.delta_t = delta_t;
    s.rc = s.g2_raw.iter().map(|g| epsilon * epsilon * delta_t * g).collect();
    Ok(s)
}

/// Last delay at which g⁽²⁾ − 1 still exceeds (peak − 1)/e.
pub fn correlation_time(s: &CorrelationSeries) -> Option<f64> {
    let peak = s.g2_norm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 1.0) {
        return None;
    }
    let level = (peak - 1.0) / std::f64::consts::E;
    s.tau_d.iter().zip(&s.g2_norm).filter(|(_, g)| **g - 1.0 >= level).map(|(t, _)| *t).last()
}

/// Indices of strict interior local maxima of `v`.
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
}

/// Default delay grid: 0 to 3 μs in 1 ns steps.
pub fn default_tau_grid() -> Vec<f64> {
    linspace(0.0, 3e-6, 3001)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_ds, reference_defaults};

    fn coarse() -> G2Grid {
        G2Grid { signal_points: 1025, vacuum_points: 4001, check_doubling: false, ..G2Grid::default() }
    }

    #[test]
    fn spectrum_is_normalized() {
        let s = PulseSpectrum::gaussian(10e-6, 40.0, 4097);
        assert!((s.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn trapezoid_integrates_polynomials() {
        let x = linspace(0.0, 2.0, 2001);
        let f: Vec<f64> = x.iter().map(|t| t * t).collect();
        assert!((trapezoid(&f, step(&x)) - 8.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn fourier_of_gaussian() {
        let w = linspace(-20.0, 20.0, 4001);
        let g: Vec<Complex64> = w.iter().map(|x| Complex64::new((-x * x / 2.0).exp(), 0.0)).collect();
        for tau in [0.0, 0.7, 2.5] {
            let f = fourier(&w, &g, tau, 1.0);
            let expect = (2.0 * PI).sqrt() * (-tau * tau / 2.0).exp();
            assert!((f - Complex64::new(expect, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_length_has_no_correlation() {
        let p = reference_defaults();
        let ds = derive_ds(&p);
        let s = g2_cross(&[0.0, 1e-7, 1e-6], 0.0, &ds, &p, &coarse()).unwrap();
        assert!(s.g2_raw.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn coincidences_scale_g2() {
        let s = CorrelationSeries {
            tau_d: vec![0.0, 1.0],
            g2_raw: vec![2.0, 3.0],
            g2_norm: vec![],
            rc: vec![],
            epsilon: 1.0,
            delta_t: 0.0,
            g1_e1: 1.0,
            g1_e2: 1.0,
            imag_residual: 0.0,
            doubling_change: None,
            grid: G2Grid::default(),
        };
        let r = coincidence_rate(s.clone(), 1.0, 1e-9).unwrap();
        assert!((r.rc[0] - 2e-9).abs() < 1e-24 && (r.rc[1] - 3e-9).abs() < 1e-24);
        let r = coincidence_rate(s.clone(), 0.0, 1e-9).unwrap();
        assert!(r.rc.iter().all(|x| *x == 0.0));
        assert!(coincidence_rate(s, 1.0, 0.0).is_err());
    }

    #[test]
    fn normalization_is_scale_free() {
        let mk = |k: f64| CorrelationSeries {
            tau_d: vec![0.0, 1.0],
            g2_raw: vec![5.0 * k * k, 1.0 * k * k],
            g2_norm: vec![],
            rc: vec![],
            epsilon: 1.0,
            delta_t: 0.0,
            g1_e1: 2.0 * k,
            g1_e2: 0.5 * k,
            imag_residual: 0.0,
            doubling_change: None,
            grid: G2Grid::default(),
        };
        let a = normalize_g2(mk(1.0)).unwrap();
        let b = normalize_g2(mk(37.0)).unwrap();
        for (x, y) in a.g2_norm.iter().zip(&b.g2_norm) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(normalize_g2(mk(0.0)).is_err());
    }

    #[test]
    fn correlation_time_of_exponential() {
        let tau = linspace(0.0, 10.0, 10_001);
        let s = CorrelationSeries {
            g2_norm: tau.iter().map(|t| 1.0 + 4.0 * (-t / 2.0).exp()).collect(),
            tau_d: tau,
            g2_raw: vec![],
            rc: vec![],
            epsilon: 1.0,
            delta_t: 0.0,
            g1_e1: 1.0,
            g1_e2: 1.0,
            imag_residual: 0.0,
            doubling_change: None,
            grid: G2Grid::default(),
        };
        assert!((correlation_time(&s).unwrap() - 2.0).abs() < 2e-3);
    }

    #[test]
    fn maxima_detection() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.0, 2.0, 1.0, 3.0]), vec![1, 3]);
    }
}
