//! Photon-number amplitudes of the output probe/FWM state.
//!
//! Two routes: the closed-form weak-gain expressions built from the
//! zero-frequency constants, and a truncated two-mode Fock-space evolution
//! under the quadratic generator
//!
//! M = i(D₁a†a − D₄b†b + D₂a†b† − D₃ab),
//!
//! whose Heisenberg action a(L) = e^{−LM} a e^{LM} reproduces the coupled
//! mode equations at ω = 0. The state evolves as |out⟩ = e^{LM}|in⟩.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::{coeffs, DCoeffs, ZeroFreqConstants};
use crate::error::{Error, Result};
use crate::model::{derive_ds, CompositeDetunings, ModelParams};

pub const DEFAULT_CUTOFF: usize = 8;
/// Allowed amplitude change when the cutoff is raised by two.
pub const CUTOFF_TOLERANCE: f64 = 1e-8;
/// Allowed relative mismatch of the commutators [a, M], [b†, M].
pub const GENERATOR_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Amplitudes α_nm for n, m ∈ 0..=cutoff (n probe photons, m FWM photons).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoModeAmplitudes {
    pub cutoff: usize,
    /// Row-major, index n·(cutoff+1) + m.
    pub amps: Vec<Complex64>,
    pub normalized: bool,
}

impl TwoModeAmplitudes {
    fn dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        if n > self.cutoff || m > self.cutoff {
            ZERO
        } else {
            self.amps[n * self.dim() + m]
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&self) -> TwoModeAmplitudes {
        let s = self.norm_sqr().sqrt();
        TwoModeAmplitudes {
            cutoff: self.cutoff,
            amps: self.amps.iter().map(|a| a / s).collect(),
            normalized: true,
        }
    }

    /// (n, m, α_nm) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        let d = self.dim();
        self.amps.iter().enumerate().map(move |(k, a)| (k / d, k % d, *a))
    }

    /// Total |α_nm|² over states with more than `n` probe photons.
    pub fn population_above(&self, n: usize) -> f64 {
        self.iter().filter(|(a, _, _)| *a > n).map(|(_, _, x)| x.norm_sqr()).sum()
    }
}

/// Matrix exponential by Taylor series with scaling and squaring.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.map(|x| x / 2f64.powi(s));
    let mut result = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=40 {
        term = (&term * &scaled).map(|x| x / k as f64);
        result += &term;
        if one_norm(&term) <= 1e-18 * one_norm(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Annihilation operators a ⊗ 1 and 1 ⊗ b on the truncated space.
fn ladder_ops(cutoff: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let d = cutoff + 1;
    let mut a = DMatrix::zeros(d * d, d * d);
    let mut b = DMatrix::zeros(d * d, d * d);
    for n in 0..d {
        for m in 0..d {
            let col = n * d + m;
            if n > 0 {
                a[((n - 1) * d + m, col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
            if m > 0 {
                b[(n * d + m - 1, col)] = Complex64::new((m as f64).sqrt(), 0.0);
            }
        }
    }
    (a, b)
}

/// The generator M on the truncated space.
pub fn generator(c: &DCoeffs, cutoff: usize) -> DMatrix<Complex64> {
    let (a, b) = ladder_ops(cutoff);
    let ad = a.adjoint();
    let bd = b.adjoint();
    let m = (&ad * &a).map(|x| x * c.d1) - (&bd * &b).map(|x| x * c.d4) + (&ad * &bd).map(|x| x * c.d2)
        - (&a * &b).map(|x| x * c.d3);
    m.map(|x| I * x)
}

/// Largest deviation of [a, M] − i(D₁a + D₂b†) and [b†, M] − i(D₄b† + D₃a)
/// on states away from the truncation edge, relative to max |D_j|.
pub fn generator_mismatch(c: &DCoeffs, cutoff: usize) -> f64 {
    let (a, b) = ladder_ops(cutoff);
    let bd = b.adjoint();
    let m = generator(c, cutoff);
    let lhs_a = &a * &m - &m * &a;
    let rhs_a = (a.map(|x| x * c.d1) + bd.map(|x| x * c.d2)).map(|x| I * x);
    let lhs_b = &bd * &m - &m * &bd;
    let rhs_b = (bd.map(|x| x * c.d4) + a.map(|x| x * c.d3)).map(|x| I * x);
    let d = cutoff + 1;
    let scale = [c.d1, c.d2, c.d3, c.d4].iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for n in 0..cutoff.saturating_sub(1) {
        for mm in 0..cutoff.saturating_sub(1) {
            let col = n * d + mm;
            for row in 0..d * d {
                worst = worst.max((lhs_a[(row, col)] - rhs_a[(row, col)]).norm());
                worst = worst.max((lhs_b[(row, col)] - rhs_b[(row, col)]).norm());
            }
        }
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Applies e^{LM} to `input` on the truncated space.
pub fn evolve(c: &DCoeffs, length: f64, cutoff: usize, input: &[Complex64]) -> Vec<Complex64> {
    let m = generator(c, cutoff).map(|x| x * length);
    let u = expm(&m);
    let v = nalgebra::DVector::from_column_slice(input);
    (u * v).iter().copied().collect()
}

fn fock_input(cutoff: usize, f: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
    let d = cutoff + 1;
    (0..d * d).map(|k| f(k / d, k % d)).collect()
}

/// Raw and normalized oracle amplitudes.
#[derive(Clone, Debug, Serialize)]
pub struct FockResult {
    pub raw: TwoModeAmplitudes,
    pub normalized: TwoModeAmplitudes,
    /// Largest normalized amplitude change at cutoff + 2.
    pub cutoff_change: f64,
    pub generator_mismatch: f64,
}

/// Evolves |1, 0⟩ over length L with the ω = 0 coefficients.
pub fn amplitudes_fock_oracle(
    length: f64,
    ds: &CompositeDetunings,
    p: &ModelParams,
    cutoff: usize,
) -> Result<FockResult> {
    let c = coeffs(0.0, ds, p)?;
    fock_from_coeffs(&c, length, cutoff, |n, m| if (n, m) == (1, 0) { 1.0.into() } else { ZERO })
}

/// Oracle run for arbitrary coefficients and input state.
pub fn fock_from_coeffs<F>(c: &DCoeffs, length: f64, cutoff: usize, input: F) -> Result<FockResult>
where
    F: Fn(usize, usize) -> Complex64,
{
    if cutoff < 4 {
        return Err(Error::InvalidParams(format!("Fock cutoff must be >= 4, got {cutoff}")));
    }
    let mismatch = generator_mismatch(c, cutoff);
    if mismatch > GENERATOR_TOLERANCE {
        return Err(Error::GeneratorMismatch { deviation: mismatch });
    }
    let run = |k: usize| -> TwoModeAmplitudes {
        let psi = evolve(c, length, k, &fock_input(k, &input));
        TwoModeAmplitudes { cutoff: k, amps: psi, normalized: false }
    };
    let raw = run(cutoff);
    let big = run(cutoff + 2);
    let normalized = raw.normalize();
    let big_n = big.normalize();
    let mut change: f64 = 0.0;
    for (n, m, a) in normalized.iter() {
        change = change.max((a - big_n.get(n, m)).norm());
    }
    if change >= CUTOFF_TOLERANCE {
        return Err(Error::CutoffInadequate { cutoff, change });
    }
    Ok(FockResult { raw, normalized, cutoff_change: change, generator_mismatch: mismatch })
}

/// Weak-gain pair-state quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairStateSummary {
    pub a10_sq_raw: f64,
    pub a21_sq_raw: f64,
    /// Normalized so that a10_sq + a21_sq = 1.
    pub a10_sq: f64,
    pub a21_sq: f64,
    pub phi: f64,
    pub heralded_pair_prob: f64,
    /// The raw |α₁₀|² expression came out negative (outside weak gain).
    pub negative: bool,
}

/// |α₁₀|², |α₂₁|² and φ from the zero-frequency constants at length L.
pub fn amplitudes_closed_form(length: f64, k: &ZeroFreqConstants, pulse_peak_sq: f64) -> PairStateSummary {
    let ep = (k.beta_plus * length).exp();
    let em = (k.beta_minus * length).exp();
    let lead = k.a1 * ep - k.a3 * em;
    let diff = ep - em;
    let a_sq = k.a.norm_sqr();
    let a10 = (lead.norm_sqr() + k.a2.norm_sqr() * diff.norm_sqr() - 4.0 * a_sq * diff.norm_sqr()) * pulse_peak_sq;
    let a21 = 2.0 * a_sq * diff.norm_sqr() * pulse_peak_sq;
    let phi = (lead * diff.conj() * k.a.conj()).arg();
    let negative = a10 < 0.0;
    let total = a10.max(0.0) + a21;
    let (n10, n21) = if total > 0.0 { (a10.max(0.0) / total, a21 / total) } else { (0.0, 0.0) };
    PairStateSummary {
        a10_sq_raw: a10,
        a21_sq_raw: a21,
        a10_sq: n10,
        a21_sq: n21,
        phi,
        heralded_pair_prob: n21 / 2.0,
        negative,
    }
}

/// One point of the multiphoton-ratio curve; `None` marks a log-domain gap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MultiphotonPoint {
    pub z: f64,
    pub ratio_normalized: Option<f64>,
    pub ratio_raw: Option<f64>,
    pub a21: f64,
    pub a32: f64,
}

/// SPDC reference value of ln|α₃₂|/ln|α₂₁|.
pub const SPDC_REFERENCE: f64 = 2.0;

fn log_ratio(num: f64, den: f64) -> Option<f64> {
    if num > 0.0 && den > 0.0 && num < 1.0 && den < 1.0 {
        Some(num.ln() / den.ln())
    } else {
        None
    }
}

/// ln|α₃₂|/ln|α₂₁| along `z_grid` from the oracle, raw and normalized.
pub fn multiphoton_ratio(
    z_grid: &[f64],
    ds: &CompositeDetunings,
    p: &ModelParams,
    cutoff: usize,
) -> Result<Vec<MultiphotonPoint>> {
    z_grid
        .par_iter()
        .map(|&z| {
            let r = amplitudes_fock_oracle(z, ds, p, cutoff)?;
            let (n21, n32) = (r.normalized.get(2, 1).norm(), r.normalized.get(3, 2).norm());
            let (w21, w32) = (r.raw.get(2, 1).norm(), r.raw.get(3, 2).norm());
            let ratio_normalized = log_ratio(n32, n21);
            if ratio_normalized.is_none() {
                log::warn!("{}", Error::LogDomain { z });
            }
            Ok(MultiphotonPoint { z, ratio_normalized, ratio_raw: log_ratio(w32, w21), a21: n21, a32: n32 })
        })
        .collect()
}

/// Applies Σ_{k≤order} (LM)^k/k! to |1, 0⟩ using the ladder actions
/// directly, without forming M. Returns amplitudes up to `cutoff`.
pub fn perturbative_amplitudes(c: &DCoeffs, length: f64, order: usize, cutoff: usize) -> TwoModeAmplitudes {
    let d = cutoff + 1;
    let apply = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![ZERO; d * d];
        for n in 0..d {
            for m in 0..d {
                let x = v[n * d + m];
                if x == ZERO {
                    continue;
                }
                let (nf, mf) = (n as f64, m as f64);
                out[n * d + m] += I * (c.d1 * nf - c.d4 * mf) * x;
                if n + 1 < d && m + 1 < d {
                    out[(n + 1) * d + m + 1] += I * c.d2 * ((nf + 1.0) * (mf + 1.0)).sqrt() * x;
                }
                if n > 0 && m > 0 {
                    out[(n - 1) * d + m - 1] -= I * c.d3 * (nf * mf).sqrt() * x;
                }
            }
        }
        out
    };
    let mut term = vec![ZERO; d * d];
    term[d] = Complex64::new(1.0, 0.0);
    let mut sum = term.clone();
    for k in 1..=order {
        term = apply(&term).into_iter().map(|x| x * length / k as f64).collect();
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }
    TwoModeAmplitudes { cutoff, amps: sum, normalized: false }
}

/// Two-mode squeezer control: D₁ = D₄ = 0, D₃ = D₂*, vacuum input.
/// Returns ln|α_nn/α₀₀| / ln|α₁₁/α₀₀| for n = 1..=n_max.
pub fn squeezer_ladder_ratios(d2: Complex64, length: f64, cutoff: usize, n_max: usize) -> Result<Vec<f64>> {
    let c = DCoeffs { d1: ZERO, d2, d3: d2.conj(), d4: ZERO };
    let r = fock_from_coeffs(&c, length, cutoff, |n, m| if (n, m) == (0, 0) { 1.0.into() } else { ZERO })?;
    let a00 = r.raw.get(0, 0);
    let base = (r.raw.get(1, 1) / a00).norm().ln();
    Ok((1..=n_max).map(|n| (r.raw.get(n, n) / a00).norm().ln() / base).collect())
}

/// |α₂₀|²/|α₂₁|² from the oracle.
pub fn alpha20_ratio(length: f64, p: &ModelParams, cutoff: usize) -> Result<f64> {
    let ds = derive_ds(p);
    let r = amplitudes_fock_oracle(length, &ds, p, cutoff)?;
    let a21 = r.raw.get(2, 1).norm_sqr();
    if a21 == 0.0 {
        return Err(Error::LogDomain { z: length });
    }
    Ok(r.raw.get(2, 0).norm_sqr() / a21)
}

/// State after a trigger photon: |α₁₀||0,0⟩ + e^{iφ}|α₂₁||1,1⟩, φ = arg(α₂₁/α₁₀).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeraldedState {
    pub vacuum_weight: f64,
    pub pair_weight: f64,
    pub relative_phase: f64,
    pub pair_probability: f64,
}

pub fn herald_pair(s: &PairStateSummary) -> HeraldedState {
    HeraldedState {
        vacuum_weight: s.a10_sq,
        pair_weight: s.a21_sq,
        relative_phase: s.phi,
        pair_probability: s.a21_sq / 2.0,
    }
}

/// Output for a coherent probe input.
#[derive(Clone, Debug, Serialize)]
pub struct SpacsResult {
    pub amplitudes: TwoModeAmplitudes,
    /// Probability of exactly one FWM photon in the normalized output.
    pub herald_probability: f64,
    /// Normalized probe state conditioned on one FWM photon; empty when the
    /// FWM mode is never populated.
    pub conditioned: Vec<Complex64>,
    /// Overlap |⟨ideal|conditioned⟩|² with a†|α⟩/√(1+|α|²).
    pub fidelity: Option<f64>,
}

fn coherent(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(cutoff + 1);
    let mut fact = 1.0f64;
    for n in 0..=cutoff {
        if n > 0 {
            fact *= n as f64;
        }
        v.push(alpha.powu(n as u32) / fact.sqrt());
    }
    let s: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / s).collect()
}

/// Coherent probe |α⟩ and vacuum FWM mode through length L, conditioned
/// on one FWM photon.
pub fn spacs_output(
    alpha: Complex64,
    length: f64,
    ds: &CompositeDetunings,
    p: &ModelParams,
    cutoff: usize,
) -> Result<SpacsResult> {
    if alpha.norm_sqr() > cutoff as f64 / 4.0 {
        return Err(Error::CutoffInadequate { cutoff, change: alpha.norm_sqr() });
    }
    let c = coeffs(0.0, ds, p)?;
    let input = coherent(alpha, cutoff + 2);
    let r = fock_from_coeffs(&c, length, cutoff, |n, m| {
        if m == 0 {
            input.get(n).copied().unwrap_or(ZERO)
        } else {
            ZERO
        }
    })?;
    let amps = r.normalized;
    let slice: Vec<Complex64> = (0..=cutoff).map(|n| amps.get(n, 1)).collect();
    let prob: f64 = slice.iter().map(|x| x.norm_sqr()).sum();
    if prob == 0.0 {
        return Ok(SpacsResult { amplitudes: amps, herald_probability: 0.0, conditioned: Vec::new(), fidelity: None });
    }
    let conditioned: Vec<Complex64> = slice.iter().map(|x| x / prob.sqrt()).collect();
    // a†|α⟩ has components √n·α_{n−1}
    let coh = coherent(alpha, cutoff);
    let mut ideal: Vec<Complex64> =
        (0..=cutoff).map(|n| if n == 0 { ZERO } else { coh[n - 1] * (n as f64).sqrt() }).collect();
    let s = ideal.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    ideal.iter_mut().for_each(|x| *x /= s);
    let overlap: Complex64 = ideal.iter().zip(&conditioned).map(|(a, b)| a.conj() * b).sum();
    Ok(SpacsResult {
        amplitudes: amps,
        herald_probability: prob,
        conditioned,
        fidelity: Some(overlap.norm_sqr()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::zero_freq_constants;
    use crate::model::reference_defaults;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reference() -> (ModelParams, CompositeDetunings) {
        let p = reference_defaults();
        let ds = derive_ds(&p);
        (p, ds)
    }

    #[test]
    fn expm_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0)]));
        let e = expm(&a);
        for k in 0..3 {
            assert!((e[(k, k)] - a[(k, k)].exp()).norm() < 1e-13 * a[(k, k)].exp().norm().max(1.0));
        }
        assert_eq!(e[(0, 1)], ZERO);
    }

    #[test]
    fn expm_of_rotation() {
        let t = 7.3;
        let a = DMatrix::from_row_slice(2, 2, &[ZERO, c(-t, 0.0), c(t, 0.0), ZERO]);
        let e = expm(&a);
        assert!((e[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-12);
        assert!((e[(1, 0)] - c(t.sin(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn expm_inverse() {
        let (p, ds) = reference();
        let cf = coeffs(0.0, &ds, &p).unwrap();
        let m = generator(&cf, 6).map(|x| x * 3.0);
        let prod = expm(&m) * expm(&m.map(|x| -x));
        let id = DMatrix::<Complex64>::identity(49, 49);
        assert!(one_norm(&(prod - id)) < 1e-10);
    }

    #[test]
    fn zero_length_is_input() {
        let (p, ds) = reference();
        let r = amplitudes_fock_oracle(0.0, &ds, &p, 8).unwrap();
        for (n, m, a) in r.raw.iter() {
            let expect = if (n, m) == (1, 0) { 1.0 } else { 0.0 };
            assert!((a - c(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn empty_medium_keeps_state() {
        let (p, ds) = reference();
        let q = p.empty_medium();
        let r = amplitudes_fock_oracle(0.05, &ds, &q, 8).unwrap();
        assert!((r.raw.get(1, 0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!(r.raw.population_above(1) == 0.0);
    }

    #[test]
    fn generator_reproduces_mode_equations() {
        let (p, ds) = reference();
        let cf = coeffs(0.0, &ds, &p).unwrap();
        assert!(generator_mismatch(&cf, 8) < 1e-12);
    }

    #[test]
    fn photon_difference_is_conserved() {
        let (p, ds) = reference();
        let r = amplitudes_fock_oracle(0.05, &ds, &p, 8).unwrap();
        for (n, m, a) in r.raw.iter() {
            if n != m + 1 {
                assert!(a.norm() < 1e-12, "({n},{m}) = {a}");
            }
        }
        assert_eq!(r.raw.get(2, 0), ZERO);
    }

    #[test]
    fn normalization() {
        let (p, ds) = reference();
        let r = amplitudes_fock_oracle(0.05, &ds, &p, 8).unwrap();
        assert!((r.normalized.norm_sqr() - 1.0).abs() < 1e-10);
        assert!(r.normalized.normalized);
    }

    #[test]
    fn small_cutoff_rejected() {
        let (p, ds) = reference();
        assert!(matches!(amplitudes_fock_oracle(0.05, &ds, &p, 3), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn inadequate_cutoff_detected() {
        let cf = DCoeffs { d1: ZERO, d2: c(1.0, 0.0), d3: c(1.0, 0.0), d4: ZERO };
        let r = fock_from_coeffs(&cf, 0.8, 4, |n, m| if (n, m) == (1, 0) { 1.0.into() } else { ZERO });
        assert!(matches!(r, Err(Error::CutoffInadequate { .. })));
    }

    #[test]
    fn closed_form_at_zero_length() {
        let (p, ds) = reference();
        let k = zero_freq_constants(&ds, &p).unwrap();
        let s = amplitudes_closed_form(0.0, &k, 1.0);
        assert!((s.a10_sq_raw - 1.0).abs() < 1e-12);
        assert_eq!(s.a21_sq_raw, 0.0);
        assert_eq!(s.heralded_pair_prob, 0.0);
    }

    #[test]
    fn closed_form_quadratic_onset() {
        let (p, ds) = reference();
        let k = zero_freq_constants(&ds, &p).unwrap();
        let l = 1e-6;
        let s = amplitudes_closed_form(l, &k, 1.0);
        let lead = 2.0 * k.a.norm_sqr() * (k.beta_plus - k.beta_minus).norm_sqr() * l * l;
        assert!((s.a21_sq_raw - lead).abs() / lead < 1e-5);
    }

    #[test]
    fn perturbation_matches_oracle_at_small_length() {
        let (p, ds) = reference();
        let cf = coeffs(0.0, &ds, &p).unwrap();
        let l = 1e-3;
        let pert = perturbative_amplitudes(&cf, l, 3, 8);
        let exact = amplitudes_fock_oracle(l, &ds, &p, 8).unwrap().raw;
        for (n, m) in [(1, 0), (2, 1), (3, 2)] {
            let (a, b) = (pert.get(n, m), exact.get(n, m));
            assert!((a - b).norm() / b.norm() < 1e-3, "({n},{m}) {a} {b}");
        }
    }

    #[test]
    fn squeezer_ladder_is_geometric() {
        let r = squeezer_ladder_ratios(c(0.3, 1.1), 0.05, 8, 4).unwrap();
        for (k, x) in r.iter().enumerate() {
            assert!((x - (k + 1) as f64).abs() < 1e-8, "{k}: {x}");
        }
    }

    #[test]
    fn herald_limits() {
        let vac = PairStateSummary {
            a10_sq_raw: 1.0,
            a21_sq_raw: 0.0,
            a10_sq: 1.0,
            a21_sq: 0.0,
            phi: 0.0,
            heralded_pair_prob: 0.0,
            negative: false,
        };
        let h = herald_pair(&vac);
        assert_eq!((h.vacuum_weight, h.pair_weight), (1.0, 0.0));
        let pair = PairStateSummary { a10_sq: 0.0, a21_sq: 1.0, heralded_pair_prob: 0.5, ..vac };
        let h = herald_pair(&pair);
        assert_eq!((h.vacuum_weight, h.pair_weight, h.pair_probability), (0.0, 1.0, 0.5));
    }

    #[test]
    fn spacs_vacuum_input_gives_single_photon() {
        let (p, ds) = reference();
        let r = spacs_output(ZERO, 0.05, &ds, &p, 8).unwrap();
        assert!((r.fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.conditioned[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spacs_zero_length_never_heralds() {
        let (p, ds) = reference();
        let r = spacs_output(c(0.5, 0.0), 0.0, &ds, &p, 8).unwrap();
        assert_eq!(r.herald_probability, 0.0);
        assert!(r.fidelity.is_none());
    }

    #[test]
    fn spacs_rejects_bright_input() {
        let (p, ds) = reference();
        assert!(spacs_output(c(3.0, 0.0), 0.01, &ds, &p, 8).is_err());
    }
}
