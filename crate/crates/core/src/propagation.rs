//! Field transfer through a medium of length z: the closed-form two-mode
//! solution, a Runge–Kutta oracle for the same linear system, and the
//! adiabatic time-domain envelopes.

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{eigen, DispersionSample, ZeroFreqConstants, TINY};
use crate::error::{Error, Result};
use crate::model::{CompositeDetunings, ModelParams};

/// Largest admissible growth exponent Re(iλz).
pub const OVERFLOW_LIMIT: f64 = 700.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// ε₁(z,ω) = R₁ε₁(0,ω) + S₁ε₂†(0,−ω), ε₂†(z,−ω) = R₂ε₁(0,ω) + S₂ε₂†(0,−ω).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransferMatrix {
    pub z: f64,
    pub omega: f64,
    pub r1: Complex64,
    pub s1: Complex64,
    pub r2: Complex64,
    pub s2: Complex64,
}

impl TransferMatrix {
    pub fn identity(omega: f64) -> Self {
        TransferMatrix { z: 0.0, omega, r1: ONE, s1: ZERO, r2: ZERO, s2: ONE }
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.r1, self.s1, self.r2, self.s2]
    }

    pub fn determinant(&self) -> Complex64 {
        self.r1 * self.s2 - self.s1 * self.r2
    }

    /// `self` applied after `first`: the transfer over `first.z + self.z`.
    pub fn compose(&self, first: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            z: self.z + first.z,
            omega: self.omega,
            r1: self.r1 * first.r1 + self.s1 * first.r2,
            s1: self.r1 * first.s1 + self.s1 * first.s2,
            r2: self.r2 * first.r1 + self.s2 * first.r2,
            s2: self.r2 * first.s1 + self.s2 * first.s2,
        }
    }

    /// Largest entrywise relative deviation from `other`. Entries that are
    /// both exactly zero count as equal.
    pub fn max_rel_dev(&self, other: &TransferMatrix) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| {
                let scale = a.norm().max(b.norm());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).norm() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

fn guarded_exp(lambda: Complex64, z: f64) -> Result<Complex64> {
    let exponent = -lambda.im * z;
    if exponent > OVERFLOW_LIMIT {
        return Err(Error::Overflow { exponent, limit: OVERFLOW_LIMIT });
    }
    Ok((I * lambda * z).exp())
}

/// Closed-form transfer matrix at (z, ω).
pub fn transfer(z: f64, omega: f64, ds: &CompositeDetunings, p: &ModelParams) -> Result<TransferMatrix> {
    let s = eigen(omega, ds, p)?;
    transfer_from_sample(z, &s)
}

/// Transfer matrix from an already computed eigen-solution.
pub fn transfer_from_sample(z: f64, s: &DispersionSample) -> Result<TransferMatrix> {
    let c = &s.d_coeffs;
    let ep = guarded_exp(s.lambda_plus, z)?;
    let em = guarded_exp(s.lambda_minus, z)?;
    if c.d2 == ZERO && c.d3 == ZERO {
        // uncoupled: λ₋ carries the probe, λ₊ the FWM field
        return Ok(TransferMatrix { z, omega: s.omega, r1: em, s1: ZERO, r2: ZERO, s2: ep });
    }
    let (up, um) = (s.u_plus, s.u_minus);
    let den = up - um;
    if s.u_overflow || !den.is_finite() || den.norm() < TINY {
        return Err(Error::Degenerate(format!("|U+ - U-| = {:e} at omega = {:e}", den.norm(), s.omega)));
    }
    Ok(TransferMatrix {
        z,
        omega: s.omega,
        r1: (up * ep - um * em) / den,
        s1: up * um * (em - ep) / den,
        r2: (ep - em) / den,
        s2: (up * em - um * ep) / den,
    })
}

/// Result of the numerical integration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleSolution {
    pub matrix: TransferMatrix,
    /// Step count of the accepted solution.
    pub steps: usize,
    /// Relative change between the last two step counts.
    pub change: f64,
}

pub const ORACLE_STEPS: usize = 10_000;
pub const ORACLE_TOLERANCE: f64 = 1e-8;
const ORACLE_DOUBLINGS: usize = 3;

/// Integrates dε₁/dz = i(ω/c+D₁)ε₁ + iD₂ε₂†, dε₂†/dz = iD₃ε₁ + i(ω/c+D₄)ε₂†
/// with classical RK4 from both unit initial conditions. The step count is
/// doubled until two successive results agree to 10⁻⁸.
pub fn ode_oracle(
    z: f64,
    omega: f64,
    ds: &CompositeDetunings,
    p: &ModelParams,
    steps: Option<usize>,
) -> Result<OracleSolution> {
    let c = crate::dispersion::coeffs(omega, ds, p)?;
    let k0 = omega / p.c;
    let g = [[I * (k0 + c.d1), I * c.d2], [I * c.d3, I * (k0 + c.d4)]];
    let mut n = steps.unwrap_or(ORACLE_STEPS).max(1);
    let mut prev = rk4(&g, z, n, omega);
    let mut change = f64::INFINITY;
    for _ in 0..ORACLE_DOUBLINGS {
        n *= 2;
        let next = rk4(&g, z, n, omega);
        change = next.max_rel_dev(&prev);
        prev = next;
        if change < ORACLE_TOLERANCE {
            return Ok(OracleSolution { matrix: prev, steps: n, change });
        }
    }
    Err(Error::NonConvergence(format!(
        "ODE oracle at z = {z:e} m, omega = {omega:e} rad/s: change {change:e} after {n} steps"
    )))
}

type M2 = [[Complex64; 2]; 2];

fn mul(g: &M2, y: &M2) -> M2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = g[i][0] * y[0][j] + g[i][1] * y[1][j];
        }
    }
    out
}

fn axpy(y: &M2, h: f64, k: &M2) -> M2 {
    let mut out = *y;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += h * k[i][j];
        }
    }
    out
}

fn rk4(g: &M2, z: f64, n: usize, omega: f64) -> TransferMatrix {
    let h = z / n as f64;
    let mut y: M2 = [[ONE, ZERO], [ZERO, ONE]];
    for _ in 0..n {
        let k1 = mul(g, &y);
        let k2 = mul(g, &axpy(&y, 0.5 * h, &k1));
        let k3 = mul(g, &axpy(&y, 0.5 * h, &k2));
        let k4 = mul(g, &axpy(&y, h, &k3));
        for i in 0..2 {
            for j in 0..2 {
                y[i][j] += h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
        }
    }
    TransferMatrix { z, omega, r1: y[0][0], s1: y[0][1], r2: y[1][0], s2: y[1][1] }
}

/// Adiabatic envelopes on a (z, t) grid; outer index z, inner index t.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeField {
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub e1: Vec<Vec<Complex64>>,
    pub e2: Vec<Vec<Complex64>>,
    pub eta_plus: Vec<Vec<f64>>,
    pub eta_minus: Vec<Vec<f64>>,
}

/// Unit-peak Gaussian probe exp(−t²/τ_p²).
pub fn gaussian_profile(tau_p: f64) -> impl Fn(f64) -> f64 + Copy {
    move |t: f64| (-(t / tau_p).powi(2)).exp()
}

/// e₁ = A₁P(η₊)e^{β₊z} − A₃P(η₋)e^{β₋z} and e₂ = A[P(η₊)e^{β₊z} − P(η₋)e^{β₋z}]
/// for a real probe profile P and vacuum FWM input, with η± = t − z·Re(1/Vg±).
pub fn envelope_adiabatic<P>(z_grid: &[f64], t_grid: &[f64], profile: P, k: &ZeroFreqConstants) -> EnvelopeField
where
    P: Fn(f64) -> f64,
{
    let sp = (1.0 / k.vg_plus).re;
    let sm = (1.0 / k.vg_minus).re;
    let mut f = EnvelopeField {
        z: z_grid.to_vec(),
        t: t_grid.to_vec(),
        e1: Vec::with_capacity(z_grid.len()),
        e2: Vec::with_capacity(z_grid.len()),
        eta_plus: Vec::with_capacity(z_grid.len()),
        eta_minus: Vec::with_capacity(z_grid.len()),
    };
    for &z in z_grid {
        let gp = (k.beta_plus * z).exp();
        let gm = (k.beta_minus * z).exp();
        let etp: Vec<f64> = t_grid.iter().map(|t| t - z * sp).collect();
        let etm: Vec<f64> = t_grid.iter().map(|t| t - z * sm).collect();
        let (mut r1, mut r2) = (Vec::with_capacity(t_grid.len()), Vec::with_capacity(t_grid.len()));
        for (a, b) in etp.iter().zip(&etm) {
            let (pa, pb) = (profile(*a), profile(*b));
            r1.push(k.a1 * pa * gp - k.a3 * pb * gm);
            r2.push(k.a * (pa * gp - pb * gm));
        }
        f.e1.push(r1);
        f.e2.push(r2);
        f.eta_plus.push(etp);
        f.eta_minus.push(etm);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{linspace, zero_freq_constants};
    use crate::model::{derive_ds, reference_defaults};

    fn reference() -> (ModelParams, CompositeDetunings) {
        let p = reference_defaults();
        let ds = derive_ds(&p);
        (p, ds)
    }

    #[test]
    fn identity_at_zero_length() {
        let (p, ds) = reference();
        let t = transfer(0.0, 2e4, &ds, &p).unwrap();
        assert_eq!(t.entries(), TransferMatrix::identity(2e4).entries());
        let o = ode_oracle(0.0, 2e4, &ds, &p, None).unwrap();
        assert_eq!(o.matrix.entries(), TransferMatrix::identity(2e4).entries());
    }

    #[test]
    fn single_lambda_transfer() {
        let (p, ds) = reference();
        let q = p.single_lambda();
        let t = transfer(0.05, 1e4, &ds, &q).unwrap();
        let c = crate::dispersion::coeffs(1e4, &ds, &q).unwrap();
        assert_eq!(t.s1, ZERO);
        assert_eq!(t.r2, ZERO);
        let expect = (I * (1e4 / q.c + c.d1) * 0.05).exp();
        assert!((t.r1 - expect).norm() < 1e-14);
    }

    #[test]
    fn free_propagation_oracle() {
        let (p, ds) = reference();
        let q = p.empty_medium();
        let w = 3e5;
        let o = ode_oracle(0.05, w, &ds, &q, None).unwrap().matrix;
        let e = (I * w / q.c * 0.05).exp();
        assert!((o.r1 - e).norm() < 1e-12);
        assert!((o.s2 - e).norm() < 1e-12);
        assert_eq!(o.s1, ZERO);
        assert_eq!(o.r2, ZERO);
    }

    #[test]
    fn closed_form_matches_oracle_at_reference() {
        let (p, ds) = reference();
        let t = transfer(0.05, 0.0, &ds, &p).unwrap();
        let o = ode_oracle(0.05, 0.0, &ds, &p, None).unwrap();
        assert!(t.max_rel_dev(&o.matrix) < 1e-6, "{}", t.max_rel_dev(&o.matrix));
    }

    #[test]
    fn determinant_identity() {
        let (p, ds) = reference();
        let s = eigen(1e5, &ds, &p).unwrap();
        let t = transfer_from_sample(0.03, &s).unwrap();
        let expect = (I * (s.lambda_plus + s.lambda_minus) * 0.03).exp();
        assert!((t.determinant() - expect).norm() / expect.norm() < 1e-9);
    }

    #[test]
    fn overflow_is_flagged() {
        let (p, ds) = reference();
        let p = p.with_k(1e15);
        let r = transfer(100.0, 0.0, &ds, &p);
        assert!(matches!(r, Err(Error::Overflow { .. })), "{r:?}");
    }

    #[test]
    fn envelope_starts_as_input() {
        let (p, ds) = reference();
        let k = zero_freq_constants(&ds, &p).unwrap();
        let ts = linspace(-3.0 * p.tau_p, 3.0 * p.tau_p, 61);
        let prof = gaussian_profile(p.tau_p);
        let f = envelope_adiabatic(&[0.0], &ts, prof, &k);
        for (e, t) in f.e1[0].iter().zip(&ts) {
            assert!((e - prof(*t)).norm() < 1e-12);
        }
        for e in &f.e2[0] {
            assert!(e.norm() < 1e-12 * k.a.norm().max(1.0));
        }
    }

    fn synthetic(vp: f64, vm: f64, bp: f64, bm: f64) -> ZeroFreqConstants {
        let wp = Complex64::new(2.0, 0.0);
        let wm = Complex64::new(0.5, 0.0);
        let a = 1.0 / (wp - wm);
        ZeroFreqConstants {
            w_plus: wp,
            w_minus: wm,
            beta_plus: bp.into(),
            beta_minus: bm.into(),
            a,
            a1: wp * a,
            a2: wp * wm * a,
            a3: wm * a,
            vg_plus: vp.into(),
            vg_minus: vm.into(),
        }
    }

    #[test]
    fn surviving_mode_dominates() {
        let k = synthetic(100.0, 100.0, 20.0, -20.0);
        let ts = linspace(4.9e-3, 5.1e-3, 2001);
        let f = envelope_adiabatic(&[0.5], &ts, gaussian_profile(1e-5), &k);
        let peak = f.e1[0].iter().map(|e| e.norm()).fold(0.0, f64::max);
        let expect = k.a1.norm() * (10.0f64).exp();
        assert!((peak - expect).abs() / expect < 1e-3);
    }

    #[test]
    fn packets_separate() {
        let (vp, vm, z) = (50.0, 200.0, 0.05);
        let k = synthetic(vp, vm, 0.0, 0.0);
        let tau = 1e-5;
        let ts = linspace(-5e-5, 1.5e-3, 31_001);
        let f = envelope_adiabatic(&[z], &ts, gaussian_profile(tau), &k);
        let e = &f.e1[0];
        let mut peaks = Vec::new();
        for i in 1..e.len() - 1 {
            let (a, b, c) = (e[i - 1].norm(), e[i].norm(), e[i + 1].norm());
            if b > a && b >= c && b > 0.1 {
                peaks.push(ts[i]);
            }
        }
        assert_eq!(peaks.len(), 2);
        let sep = peaks[1] - peaks[0];
        let expect = z * (1.0 / vp - 1.0 / vm);
        assert!((sep.abs() - expect.abs()).abs() < 2.0 * (ts[1] - ts[0]), "{sep} {expect}");
    }
}
