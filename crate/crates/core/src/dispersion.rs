//! Frequency-domain response of the medium: D(ω), the propagation
//! coefficients D₁..D₄, the two eigenmodes λ±/U±, zero-frequency constants,
//! group velocities and the derived spectra.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive_ds, AngularConvention, CompositeDetunings, ModelParams};

/// Below this magnitude a denominator counts as zero.
pub const TINY: f64 = 1e-30;

/// |D(ω)| below this fraction of the sum of its term magnitudes is a pole.
const POLE_RELATIVE: f64 = 1e-14;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Propagation coefficients D₁..D₄ at one frequency [1/m].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DCoeffs {
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
    pub d4: Complex64,
}

/// Everything known about the two eigenmodes at one frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionSample {
    pub omega: f64,
    pub zeta: f64,
    pub big_d: Complex64,
    pub d_coeffs: DCoeffs,
    pub d5: Complex64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub u_plus: Complex64,
    pub u_minus: Complex64,
    /// Set when a U± denominator fell below [`TINY`]; U± is then infinite.
    pub u_overflow: bool,
}

impl DispersionSample {
    /// The same physical solution with the D₅ branch flipped.
    pub fn swapped(&self) -> Self {
        DispersionSample {
            d5: -self.d5,
            lambda_plus: self.lambda_minus,
            lambda_minus: self.lambda_plus,
            u_plus: self.u_minus,
            u_minus: self.u_plus,
            ..*self
        }
    }
}

/// Constants of the adiabatic (ω → 0) solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZeroFreqConstants {
    pub w_plus: Complex64,
    pub w_minus: Complex64,
    pub beta_plus: Complex64,
    pub beta_minus: Complex64,
    pub a: Complex64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub a3: Complex64,
    pub vg_plus: Complex64,
    pub vg_minus: Complex64,
}

/// Which of the two zero-frequency modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    Plus,
    Minus,
}

impl ZeroFreqConstants {
    /// The mode with the larger Re β, i.e. the amplified one.
    pub fn gain_mode(&self) -> Mode {
        if self.beta_plus.re >= self.beta_minus.re {
            Mode::Plus
        } else {
            Mode::Minus
        }
    }

    pub fn beta(&self, m: Mode) -> Complex64 {
        match m {
            Mode::Plus => self.beta_plus,
            Mode::Minus => self.beta_minus,
        }
    }

    pub fn vg(&self, m: Mode) -> Complex64 {
        match m {
            Mode::Plus => self.vg_plus,
            Mode::Minus => self.vg_minus,
        }
    }
}

fn term_sum(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<(Complex64, f64)> {
    if ds.d5 == ZERO {
        return Err(Error::Degenerate("d5 = 0".into()));
    }
    let w = Complex64::new(omega, 0.0);
    let a1 = p.omega1_rabi.norm_sqr();
    let a2 = p.omega2_rabi.norm_sqr();
    let t = [
        (w + ds.d2) * (ds.d3 - w) * (w + ds.d4),
        a1 * (w + ds.d4),
        a2 * (w - ds.d3),
        a1 * a2 * (w + 2.0 * ds.d5) / (ds.d5 * ds.d5),
    ];
    let scale = t.iter().map(|x| x.norm()).sum();
    Ok((t[0] + t[1] + t[2] + t[3], scale))
}

/// D(ω) = (ω+d₂)(d₃−ω)(ω+d₄) + |Ω₁|²(ω+d₄) + |Ω₂|²(ω−d₃) + |Ω₁Ω₂|²(ω+2d₅)/d₅².
pub fn big_d(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<Complex64> {
    term_sum(omega, ds, p).map(|(d, _)| d)
}

/// D₁..D₄ at frequency ω.
pub fn coeffs(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<DCoeffs> {
    coeffs_with_d(omega, ds, p).map(|(c, _)| c)
}

fn coeffs_with_d(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<(DCoeffs, Complex64)> {
    if ds.d1 == ZERO {
        return Err(Error::Degenerate("d1 = 0".into()));
    }
    let (d, scale) = term_sum(omega, ds, p)?;
    if d.norm() <= POLE_RELATIVE * scale || d == ZERO {
        return Err(Error::Pole { omega, magnitude: d.norm() });
    }
    let w = Complex64::new(omega, 0.0);
    let (o1, o2) = (p.omega1_rabi, p.omega2_rabi);
    let a1 = o1.norm_sqr();
    let a2 = o2.norm_sqr();
    let c = DCoeffs {
        d1: p.k1 * a1 * ((w + ds.d4) * ds.d5 + a2 - a1) / (ds.d1 * ds.d5 * d),
        d2: p.k12 * o1 * o2 * (w + ds.d5) / (d * ds.d5),
        d3: p.k12 * o1.conj() * o2.conj() * (w - ds.d3) / (d * ds.d1),
        d4: p.k2 * ((w + ds.d2) * (w - ds.d3) - a1) / d,
    };
    Ok((c, d))
}

/// Principal square root of the discriminant, or D₁ − D₄ when the modes
/// are uncoupled (D₂D₃ = 0) so that λ₋ stays attached to the probe.
fn d5_of(c: &DCoeffs) -> Complex64 {
    let diff = c.d1 - c.d4;
    let coupling = c.d2 * c.d3;
    if coupling == ZERO {
        return diff;
    }
    let s = (diff * diff + 4.0 * coupling).sqrt();
    if s.re < 0.0 {
        -s
    } else {
        s
    }
}

/// λ±, U± and the intermediate coefficients at frequency ω.
pub fn eigen(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<DispersionSample> {
    let (c, d) = coeffs_with_d(omega, ds, p)?;
    let d5 = d5_of(&c);
    let k0 = Complex64::new(omega / p.c, 0.0);
    let lp = k0 + 0.5 * (c.d1 + c.d4 - d5);
    let lm = k0 + 0.5 * (c.d1 + c.d4 + d5);
    let mut overflow = false;
    let mut u = |den: Complex64| -> Complex64 {
        if c.d2 == ZERO {
            ZERO
        } else if den.norm() < TINY {
            overflow = true;
            Complex64::new(f64::INFINITY, 0.0)
        } else {
            2.0 * c.d2 / den
        }
    };
    let up = u(c.d4 - c.d1 - d5);
    let um = u(c.d4 - c.d1 + d5);
    Ok(DispersionSample {
        omega,
        zeta: omega * p.tau_p,
        big_d: d,
        d_coeffs: c,
        d5,
        lambda_plus: lp,
        lambda_minus: lm,
        u_plus: up,
        u_minus: um,
        u_overflow: overflow,
    })
}

/// W±, β±, A, A₁..A₃ and finite-difference group velocities.
pub fn zero_freq_constants(ds: &CompositeDetunings, p: &ModelParams) -> Result<ZeroFreqConstants> {
    let s = eigen(0.0, ds, p)?;
    let (wp, wm) = (s.u_plus, s.u_minus);
    let diff = wp - wm;
    if s.u_overflow || !diff.is_finite() || diff.norm() < TINY {
        return Err(Error::Degenerate(format!("|W+ - W-| = {:e}", diff.norm())));
    }
    let a = 1.0 / diff;
    let (vg_plus, vg_minus) = group_velocities_fd(ds, p, None)?;
    let i = Complex64::new(0.0, 1.0);
    Ok(ZeroFreqConstants {
        w_plus: wp,
        w_minus: wm,
        beta_plus: i * s.lambda_plus,
        beta_minus: i * s.lambda_minus,
        a,
        a1: wp * a,
        a2: wp * wm * a,
        a3: wm * a,
        vg_plus,
        vg_minus,
    })
}

/// Pairs a sample's modes with reference eigenvalues by proximity.
fn paired(s: &DispersionSample, lp0: Complex64, lm0: Complex64) -> Result<(Complex64, Complex64)> {
    let (a, b) = (s.lambda_plus, s.lambda_minus);
    let keep = (a - lp0).norm() + (b - lm0).norm();
    let swap = (b - lp0).norm() + (a - lm0).norm();
    let (x, y) = if keep <= swap { (a, b) } else { (b, a) };
    let gap = (lp0 - lm0).norm();
    let moved = (x - lp0).norm().max((y - lm0).norm());
    if gap > 0.0 && moved > 0.25 * gap {
        return Err(Error::BranchFlip { omega: s.omega });
    }
    Ok((x, y))
}

/// Group velocities as 1/(dλ±/dω) at ω = 0 by central differences with one
/// Richardson step over {h, h/2}. `h` defaults to 10⁻⁶/τ_p.
pub fn group_velocities_fd(
    ds: &CompositeDetunings,
    p: &ModelParams,
    h: Option<f64>,
) -> Result<(Complex64, Complex64)> {
    let h = h.unwrap_or(1e-6 / p.tau_p);
    let s0 = eigen(0.0, ds, p)?;
    let (lp0, lm0) = (s0.lambda_plus, s0.lambda_minus);
    let central = |h: f64| -> Result<(Complex64, Complex64)> {
        let (pp, mp) = paired(&eigen(h, ds, p)?, lp0, lm0)?;
        let (pm, mm) = paired(&eigen(-h, ds, p)?, lp0, lm0)?;
        Ok(((pp - pm) / (2.0 * h), (mp - mm) / (2.0 * h)))
    };
    let (p1, m1) = central(h)?;
    let (p2, m2) = central(0.5 * h)?;
    let sp = (4.0 * p2 - p1) / 3.0;
    let sm = (4.0 * m2 - m1) / 3.0;
    Ok((1.0 / sp, 1.0 / sm))
}

/// ω-derivatives of D and D₁..D₄ at ω = 0, by the chain rule.
#[derive(Clone, Copy, Debug)]
pub struct Derivatives {
    pub dp: Complex64,
    pub d1p: Complex64,
    pub d2p: Complex64,
    pub d3p: Complex64,
    pub d4p: Complex64,
    /// D₁..D₄ at ω = 0, and D₅ on the same branch as [`eigen`].
    pub at_zero: DCoeffs,
    pub d5: Complex64,
    /// The bracket (D₁−D₄)(D₁ₚ−D₄ₚ) + 2D₂ₚD₃ + 2D₂D₃ₚ, i.e. D₅·D₅ₚ.
    pub d5_bracket: Complex64,
}

pub fn derivatives_at_zero(ds: &CompositeDetunings, p: &ModelParams) -> Result<Derivatives> {
    let (c, d) = coeffs_with_d(0.0, ds, p)?;
    let (o1, o2) = (p.omega1_rabi, p.omega2_rabi);
    let a1 = o1.norm_sqr();
    let a2 = o2.norm_sqr();
    let CompositeDetunings { d1, d2, d3, d4, d5 } = *ds;
    let dp = a1 + a2 + d3 * d4 - d2 * d4 + d2 * d3 + a1 * a2 / (d5 * d5);
    let d1p = p.k1 * a1 / (d1 * d5 * d) * (d5 - (d4 * d5 + a2 - a1) * dp / d);
    let d2p = p.k12 * o1 * o2 * (d - d5 * dp) / (d5 * d * d);
    let d3p = p.k12 * o1.conj() * o2.conj() * (d + d3 * dp) / (d1 * d * d);
    let d4p = p.k2 * ((d2 - d3) * d + dp * (d2 * d3 + a1)) / (d * d);
    let bracket = (c.d1 - c.d4) * (d1p - d4p) + 2.0 * d2p * c.d3 + 2.0 * c.d2 * d3p;
    Ok(Derivatives { dp, d1p, d2p, d3p, d4p, at_zero: c, d5: d5_of(&c), d5_bracket: bracket })
}

/// Group velocities from the analytic derivatives, with D₅ₚ = bracket/D₅.
pub fn group_velocities_analytic(ds: &CompositeDetunings, p: &ModelParams) -> Result<(Complex64, Complex64)> {
    let dv = derivatives_at_zero(ds, p)?;
    let d5p = if dv.d5 == ZERO {
        if dv.d5_bracket.norm() == 0.0 {
            ZERO
        } else {
            return Err(Error::Degenerate("D5(0) = 0".into()));
        }
    } else {
        dv.d5_bracket / dv.d5
    };
    Ok(vg_from(p, &dv, d5p))
}

/// Group velocities with the bracket divided by √D₅ instead of D₅, as in
/// the commonly quoted closed form. Kept only for comparison; see
/// [`VgRoute::Printed`].
pub fn group_velocities_printed(ds: &CompositeDetunings, p: &ModelParams) -> Result<(Complex64, Complex64)> {
    let dv = derivatives_at_zero(ds, p)?;
    if dv.d5 == ZERO {
        return Err(Error::Degenerate("D5(0) = 0".into()));
    }
    let d5p = dv.d5_bracket / dv.d5.sqrt();
    Ok(vg_from(p, &dv, d5p))
}

fn vg_from(p: &ModelParams, dv: &Derivatives, d5p: Complex64) -> (Complex64, Complex64) {
    let base = Complex64::new(1.0 / p.c, 0.0) + 0.5 * (dv.d1p + dv.d4p);
    (1.0 / (base - 0.5 * d5p), 1.0 / (base + 0.5 * d5p))
}

/// How group velocities are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VgRoute {
    /// Central difference of λ±(ω); authoritative.
    FiniteDifference,
    /// Chain-rule derivatives with D₅ₚ = bracket/D₅.
    ChainRule,
    /// Chain-rule derivatives with D₅ₚ = bracket/√D₅.
    Printed,
}

pub fn group_velocities(route: VgRoute, ds: &CompositeDetunings, p: &ModelParams) -> Result<(Complex64, Complex64)> {
    match route {
        VgRoute::FiniteDifference => group_velocities_fd(ds, p, None),
        VgRoute::ChainRule => group_velocities_analytic(ds, p),
        VgRoute::Printed => group_velocities_printed(ds, p),
    }
}

/// Single-Λ group velocity, exact and large-gain forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingleLambdaVg {
    pub exact: Complex64,
    pub approx: Complex64,
    /// cK₁|Ω₁|²/(d₁²d₂²); the approximation needs |ratio| ≫ 1.
    pub ratio: Complex64,
}

/// Vg₀ = c/(1 − cK₁|Ω₁|²/(d₁²d₂²)) and its large-gain limit −d₁²d₂²/(K₁|Ω₁|²).
pub fn single_lambda_vg(ds: &CompositeDetunings, p: &ModelParams) -> SingleLambdaVg {
    let a1 = p.omega1_rabi.norm_sqr();
    let dd = ds.d1 * ds.d1 * ds.d2 * ds.d2;
    let ratio = p.c * p.k1 * a1 / dd;
    SingleLambdaVg {
        exact: p.c / (1.0 - ratio),
        approx: -dd / (p.k1 * a1),
        ratio,
    }
}

/// Δk = Re[D₁(ω) − D₄(ω)], the Stark-shift phase mismatch [1/m].
pub fn stark_phase_mismatch(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<f64> {
    let c = coeffs(omega, ds, p)?;
    Ok((c.d1 - c.d4).re)
}

/// Mode gains −Im λ± and the single-Λ probe gain −Im D₁ [1/m].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainSample {
    pub omega: f64,
    pub g_plus: f64,
    pub g_minus: f64,
    pub g_probe_only: f64,
}

pub fn gain_spectrum(omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<GainSample> {
    let s = eigen(omega, ds, p)?;
    Ok(GainSample {
        omega,
        g_plus: -s.lambda_plus.im,
        g_minus: -s.lambda_minus.im,
        g_probe_only: -s.d_coeffs.d1.im,
    })
}

/// Relabels a sequence of (λ₊, λ₋) pairs by nearest-neighbour continuation
/// so that each curve is continuous. Returns the relabelled pairs and, per
/// point, whether the labels were exchanged relative to the input.
pub fn track_modes(pairs: &[(Complex64, Complex64)]) -> Vec<(Complex64, Complex64, bool)> {
    let mut out: Vec<(Complex64, Complex64, bool)> = Vec::with_capacity(pairs.len());
    for (k, &(a, b)) in pairs.iter().enumerate() {
        if k == 0 {
            out.push((a, b, false));
            continue;
        }
        let (pa, pb, _) = out[k - 1];
        let keep = (a - pa).norm() + (b - pb).norm();
        let swap = (b - pa).norm() + (a - pb).norm();
        if swap < keep {
            out.push((b, a, true));
        } else {
            out.push((a, b, false));
        }
    }
    out
}

/// Evaluates `f` at every Δτ_p in `xs` in parallel; output order follows `xs`.
pub fn sweep_detuning<T, F>(base: &ModelParams, xs: &[f64], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(&ModelParams, &CompositeDetunings) -> Result<T> + Sync,
{
    xs.par_iter()
        .map(|&x| {
            let p = base.clone().with_detuning_tau(x);
            let ds = derive_ds(&p);
            f(&p, &ds)
        })
        .collect()
}

/// Evaluates `f` at every ω in parallel; output order follows `omegas`.
pub fn sweep_omega<T, F>(omegas: &[f64], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    omegas.par_iter().map(|&w| f(w)).collect()
}

/// Uniform grid of `n` points over [a, b].
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + step * i as f64 }).collect()
        }
    }
}

/// Locations where a sampled scalar changes sign, refined by bisection on
/// the underlying function. Points where `f` fails are skipped.
pub fn sign_changes<F>(xs: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let vals: Vec<Option<f64>> = xs.par_iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for k in 1..xs.len() {
        let (Some(va), Some(vb)) = (vals[k - 1], vals[k]) else { continue };
        if va == 0.0 {
            if k == 1 {
                out.push(xs[0]);
            }
            continue;
        }
        if va.signum() == vb.signum() && vb != 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (xs[k - 1], xs[k], va);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match f(mid) {
                Some(fm) if fm.signum() == flo.signum() && fm != 0.0 => {
                    lo = mid;
                    flo = fm;
                }
                Some(_) => hi = mid,
                None => break,
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out
}

/// Δτ_p values where Re Vg₊ or Re Vg₋ changes sign, per route.
#[derive(Clone, Debug, Serialize)]
pub struct VgSignChanges {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl VgSignChanges {
    fn all(&self) -> impl Iterator<Item = f64> + '_ {
        self.plus.iter().chain(self.minus.iter()).copied()
    }

    /// Largest positive sign change.
    pub fn upper_threshold(&self) -> Option<f64> {
        self.all().filter(|x| *x > 0.0).reduce(f64::max)
    }

    /// Most negative sign change.
    pub fn lower_threshold(&self) -> Option<f64> {
        self.all().filter(|x| *x < 0.0).reduce(f64::min)
    }

    /// The interval around Δτ_p = 0 bounded by the nearest sign changes.
    pub fn inner_interval(&self) -> (Option<f64>, Option<f64>) {
        let lo = self.all().filter(|x| *x < 0.0).reduce(f64::max);
        let hi = self.all().filter(|x| *x > 0.0).reduce(f64::min);
        (lo, hi)
    }
}

/// Scans Re Vg± over the Δτ_p grid `xs` (sign of Re Vg equals sign of Re 1/Vg).
pub fn vg_sign_changes(base: &ModelParams, route: VgRoute, xs: &[f64]) -> VgSignChanges {
    let eval = |x: f64, plus: bool| -> Option<f64> {
        let p = base.clone().with_detuning_tau(x);
        let ds = derive_ds(&p);
        let (vp, vm) = group_velocities(route, &ds, &p).ok()?;
        let v = if plus { vp } else { vm };
        let r = (1.0 / v).re;
        r.is_finite().then_some(r)
    };
    VgSignChanges {
        plus: sign_changes(xs, |x| eval(x, true)),
        minus: sign_changes(xs, |x| eval(x, false)),
    }
}

/// Δτ_p values where Re β₊ or Re β₋ (principal branch labels) changes sign.
pub fn beta_sign_changes(base: &ModelParams, xs: &[f64]) -> VgSignChanges {
    let eval = |x: f64, plus: bool| -> Option<f64> {
        let p = base.clone().with_detuning_tau(x);
        let ds = derive_ds(&p);
        let s = eigen(0.0, &ds, &p).ok()?;
        let l = if plus { s.lambda_plus } else { s.lambda_minus };
        Some(-l.im)
    };
    VgSignChanges {
        plus: sign_changes(xs, |x| eval(x, true)),
        minus: sign_changes(xs, |x| eval(x, false)),
    }
}

/// One calibration target and what a convention produced for it.
#[derive(Clone, Debug, Serialize)]
pub struct Landmark {
    pub name: &'static str,
    pub target: f64,
    pub found: Option<f64>,
    /// |found − target|/|target|; 1 when nothing was found.
    pub rel_dev: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateReport {
    pub convention: AngularConvention,
    pub landmarks: Vec<Landmark>,
    pub total_dev: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub chosen: AngularConvention,
    pub candidates: Vec<CandidateReport>,
    /// Both conventions deviate by more than 25% on every landmark.
    pub ambiguous: bool,
}

/// Landmark values of the Δτ_p sweeps for one parameter set.
#[derive(Clone, Debug, Serialize)]
pub struct Landmarks {
    /// Outermost Re Vg sign changes from the printed closed form.
    pub printed_upper: Option<f64>,
    pub printed_lower: Option<f64>,
    /// The same from finite differences.
    pub fd_upper: Option<f64>,
    pub fd_lower: Option<f64>,
    /// Interval around 0 in which both finite-difference Re Vg± are positive.
    pub both_positive: (Option<f64>, Option<f64>),
    /// Distinct Re β± sign changes.
    pub beta_flips: Vec<f64>,
}

impl Landmarks {
    /// The Re β± sign change closest to `x`.
    pub fn beta_flip_near(&self, x: f64) -> Option<f64> {
        self.beta_flips
            .iter()
            .copied()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }
}

/// Default Δτ_p scan for landmarks: 8001 points over [−40, 40].
pub fn landmark_grid() -> Vec<f64> {
    linspace(-40.0, 40.0, 8001)
}

pub fn landmarks(base: &ModelParams, xs: &[f64]) -> Landmarks {
    let printed = vg_sign_changes(base, VgRoute::Printed, xs);
    let fd = vg_sign_changes(base, VgRoute::FiniteDifference, xs);
    let beta = beta_sign_changes(base, xs);
    let mut flips: Vec<f64> = beta.all().collect();
    flips.sort_by(f64::total_cmp);
    // Both modes flip at the same grid crossing; keep one.
    flips.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    Landmarks {
        printed_upper: printed.upper_threshold(),
        printed_lower: printed.lower_threshold(),
        fd_upper: fd.upper_threshold(),
        fd_lower: fd.lower_threshold(),
        both_positive: fd.inner_interval(),
        beta_flips: flips,
    }
}

/// Reference landmark values: Re Vg thresholds, the both-positive
/// interval and the Re β sign flip.
pub const LANDMARK_TARGETS: [(&str, f64); 5] = [
    ("vg_threshold_upper", 22.4),
    ("vg_threshold_lower", -24.3),
    ("gain_region_lower", -10.8),
    ("gain_region_upper", 8.8),
    ("beta_sign_flip", 0.305),
];

fn score(found: Option<f64>, target: f64) -> f64 {
    found.map_or(1.0, |f| (f - target).abs() / target.abs())
}

/// Runs the landmark sweeps under each convention and keeps the one with
/// the smallest summed relative deviation. `build` maps a convention to
/// the parameter set to test.
pub fn calibrate_convention<F>(build: F) -> CalibrationReport
where
    F: Fn(AngularConvention) -> ModelParams,
{
    let xs = landmark_grid();
    let candidates: Vec<CandidateReport> = AngularConvention::ALL
        .iter()
        .map(|&conv| {
            let lm = landmarks(&build(conv), &xs);
            let found = [
                lm.printed_upper,
                lm.printed_lower,
                lm.both_positive.0,
                lm.both_positive.1,
                lm.beta_flip_near(LANDMARK_TARGETS[4].1),
            ];
            let landmarks: Vec<Landmark> = LANDMARK_TARGETS
                .iter()
                .zip(found)
                .map(|(&(name, target), f)| Landmark { name, target, found: f, rel_dev: score(f, target) })
                .collect();
            let total_dev = landmarks.iter().map(|l| l.rel_dev).sum();
            CandidateReport { convention: conv, landmarks, total_dev }
        })
        .collect();
    let best = candidates
        .iter()
        .min_by(|a, b| a.total_dev.total_cmp(&b.total_dev))
        .expect("two candidates");
    let ambiguous = candidates.iter().all(|c| c.landmarks.iter().all(|l| l.rel_dev > 0.25));
    if ambiguous {
        log::warn!("convention calibration is ambiguous: every landmark deviates by more than 25%");
    }
    CalibrationReport { chosen: best.convention, candidates, ambiguous }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_defaults;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(a.norm())
    }

    fn reference() -> (ModelParams, CompositeDetunings) {
        let p = reference_defaults();
        let ds = derive_ds(&p);
        (p, ds)
    }

    #[test]
    fn big_d_without_pumps_is_constant_product() {
        let (mut p, ds) = reference();
        p.omega1_rabi = c(0.0, 0.0);
        p.omega2_rabi = c(0.0, 0.0);
        assert_eq!(big_d(0.0, &ds, &p).unwrap(), ds.d2 * ds.d3 * ds.d4);
    }

    #[test]
    fn big_d_term_by_term() {
        // expanded in a different order: collect powers of ω at ω = 0
        let (p, ds) = reference();
        let a1 = p.omega1_rabi.norm_sqr();
        let a2 = p.omega2_rabi.norm_sqr();
        let lead = a1 * a2 * 2.0 / ds.d5 - a2 * ds.d3 + a1 * ds.d4 + ds.d4 * ds.d3 * ds.d2;
        assert!(rel(big_d(0.0, &ds, &p).unwrap(), lead) < 1e-13);
    }

    #[test]
    fn big_d_cubic_dominance() {
        let (p, ds) = reference();
        let w = 1e15;
        let d = big_d(w, &ds, &p).unwrap();
        assert!(rel(d, c(-w * w * w, 0.0)) < 1e-5);
    }

    #[test]
    fn zero_d5_is_degenerate() {
        let (p, mut ds) = reference();
        ds.d5 = c(0.0, 0.0);
        assert!(matches!(big_d(0.0, &ds, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pole_is_reported() {
        let (mut p, _) = reference();
        p.omega1_rabi = c(0.0, 0.0);
        p.omega2_rabi = c(0.0, 0.0);
        p.gamma31 = 0.0;
        p.two_photon_detuning = 0.0;
        let ds = derive_ds(&p);
        // D(0) = d2 d3 d4 with d2 = 0
        assert!(matches!(coeffs(0.0, &ds, &p), Err(Error::Pole { .. })));
    }

    #[test]
    fn single_lambda_kills_cross_terms() {
        let (p, ds) = reference();
        let q = p.clone().single_lambda();
        let cf = coeffs(0.0, &ds, &q).unwrap();
        assert_eq!(cf.d2, c(0.0, 0.0));
        assert_eq!(cf.d3, c(0.0, 0.0));
        assert_eq!(cf.d4, c(0.0, 0.0));
        let s = eigen(0.0, &ds, &q).unwrap();
        assert_eq!(s.d5, cf.d1);
        assert_eq!(s.u_plus, c(0.0, 0.0));
        assert_eq!(s.u_minus, c(0.0, 0.0));
        assert!(rel(s.lambda_minus, cf.d1) < 1e-15);
    }

    #[test]
    fn k12_only_enters_cross_terms() {
        let (p, ds) = reference();
        let mut q = p.clone();
        q.k12 = 0.0;
        let a = coeffs(3e4, &ds, &p).unwrap();
        let b = coeffs(3e4, &ds, &q).unwrap();
        assert_eq!(b.d2, c(0.0, 0.0));
        assert_eq!(b.d3, c(0.0, 0.0));
        assert_eq!(a.d1, b.d1);
        assert_eq!(a.d4, b.d4);
    }

    #[test]
    fn eigenvalues_match_direct_solve() {
        // independent route: characteristic polynomial of the 2×2 generator
        let (p, ds) = reference();
        let s = eigen(0.0, &ds, &p).unwrap();
        let cf = s.d_coeffs;
        let tr = cf.d1 + cf.d4;
        let det = cf.d1 * cf.d4 - cf.d2 * cf.d3;
        let m = nalgebra::Matrix2::new(cf.d1, cf.d2, cf.d3, cf.d4);
        let ev = m.eigenvalues().expect("schur converges");
        for l in [s.lambda_plus, s.lambda_minus] {
            let resid = l * l - tr * l + det;
            assert!(resid.norm() < 1e-12 * tr.norm_sqr().max(det.norm()));
            let nearest = ev.iter().map(|e| (e - l).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9 * l.norm());
        }
    }

    #[test]
    fn degenerate_eigenvalues() {
        let cf = DCoeffs { d1: c(1.0, 0.5), d2: c(0.0, 0.0), d3: c(2.0, 0.0), d4: c(1.0, 0.5) };
        assert_eq!(d5_of(&cf), c(0.0, 0.0));
    }

    #[test]
    fn zero_freq_identities() {
        let (p, ds) = reference();
        let z = zero_freq_constants(&ds, &p).unwrap();
        assert!((z.a1 - z.a3 - c(1.0, 0.0)).norm() < 1e-12);
        let s = eigen(0.0, &ds, &p).unwrap();
        assert!(rel(z.beta_plus, c(0.0, 1.0) * s.lambda_plus) < 1e-12);
    }

    #[test]
    fn single_lambda_constants_are_degenerate() {
        let (p, ds) = reference();
        let q = p.single_lambda();
        assert!(matches!(zero_freq_constants(&ds, &q), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gain_mode_at_positive_detuning() {
        // Principal branch puts the amplified mode in the minus slot here.
        let p = reference_defaults().with_detuning_tau(3.0);
        let ds = derive_ds(&p);
        let z = zero_freq_constants(&ds, &p).unwrap();
        let g = z.gain_mode();
        assert!(z.beta(g).re > 0.0);
        assert!(z.beta_plus.re * z.beta_minus.re < 0.0);
    }

    #[test]
    fn empty_medium_is_vacuum() {
        let (p, ds) = reference();
        let q = p.empty_medium();
        let (vp, vm) = group_velocities_fd(&ds, &q, None).unwrap();
        assert!(rel(vp, c(q.c, 0.0)) < 1e-6);
        assert!(rel(vm, c(q.c, 0.0)) < 1e-6);
        assert_eq!(stark_phase_mismatch(1e4, &ds, &q).unwrap(), 0.0);
        let g = gain_spectrum(1e4, &ds, &q).unwrap();
        assert_eq!((g.g_plus, g.g_minus, g.g_probe_only), (0.0, 0.0, 0.0));
        let s = single_lambda_vg(&ds, &q);
        assert_eq!(s.exact, c(q.c, 0.0));
    }

    #[test]
    fn fd_matches_chain_rule_at_reference() {
        let (p, ds) = reference();
        let (fp, fm) = group_velocities_fd(&ds, &p, None).unwrap();
        let (ap, am) = group_velocities_analytic(&ds, &p).unwrap();
        assert!(rel(fp, ap) < 1e-6, "{fp} {ap}");
        assert!(rel(fm, am) < 1e-6, "{fm} {am}");
    }

    #[test]
    fn chain_rule_single_lambda() {
        let (p, ds) = reference();
        let q = p.single_lambda();
        let dv = derivatives_at_zero(&ds, &q).unwrap();
        let (_, vm) = group_velocities_analytic(&ds, &q).unwrap();
        let expect = 1.0 / (c(1.0 / q.c, 0.0) + dv.d1p);
        assert!(rel(vm, expect) < 1e-12);
    }

    #[test]
    fn large_gain_approximation() {
        let (mut p, _) = reference();
        p.delta1 *= 10.0;
        p = p.with_detuning_tau(0.1);
        let ds = derive_ds(&p);
        let s = single_lambda_vg(&ds, &p);
        assert!(s.ratio.norm() > 10.0);
        assert!(rel(s.approx, s.exact) < 0.1);
    }

    #[test]
    fn tracking_removes_label_swaps() {
        let pts: Vec<(Complex64, Complex64)> = (0..10)
            .map(|k| {
                let a = c(k as f64, 1.0);
                let b = c(k as f64, -1.0);
                if k % 3 == 0 { (b, a) } else { (a, b) }
            })
            .collect();
        let t = track_modes(&pts);
        for w in t.windows(2) {
            assert!((w[1].0 - w[0].0).norm() < 1.5);
        }
    }

    #[test]
    fn sign_changes_are_refined() {
        let xs = linspace(-3.0, 3.0, 13);
        let r = sign_changes(&xs, |x| Some(x * x - 2.0));
        assert_eq!(r.len(), 2);
        assert!((r[0] + 2f64.sqrt()).abs() < 1e-12);
        assert!((r[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-40.0, 40.0, 2001);
        assert_eq!(g.len(), 2001);
        assert_eq!(g[0], -40.0);
        assert_eq!(g[2000], 40.0);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn single_lambda_gain_is_probe_gain() {
        let p = reference_defaults().single_lambda();
        let ds = derive_ds(&p);
        for x in [-20.0, -3.0, 0.0, 1.5, 12.0] {
            let g = gain_spectrum(x / p.tau_p, &ds, &p).unwrap();
            assert_eq!(g.g_minus, g.g_probe_only);
        }
    }

    #[test]
    fn stark_mismatch_is_small_against_optical_wavevector() {
        let (p, ds) = reference();
        let k_opt = 2.0 * std::f64::consts::PI / 795e-9;
        for x in linspace(-40.0, 40.0, 81) {
            let dk = stark_phase_mismatch(x / p.tau_p, &ds, &p).unwrap();
            assert!(dk.abs() < 1e-4 * k_opt, "{x}: {dk}");
        }
    }

    #[test]
    fn gain_spectrum_is_flat_topped() {
        let (p, ds) = reference();
        let best = |w: f64| {
            let g = gain_spectrum(w, &ds, &p).unwrap();
            g.g_plus.max(g.g_minus)
        };
        let g0 = best(0.0);
        assert!(g0 > 0.0);
        assert!((best(0.1 / p.tau_p) - g0).abs() < 1e-2 * g0);
        // half-maximum points bracket a width of order 10⁶–10⁸ rad/s
        let xs = linspace(0.0, 200.0, 2001);
        let edge = xs.iter().find(|&&x| best(x / p.tau_p) < 0.5 * g0).copied().unwrap();
        let width = 2.0 * edge / p.tau_p;
        assert!((1e6..1e8).contains(&width), "{width}");
    }
}
