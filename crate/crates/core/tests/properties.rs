//! Randomized invariants across modules.

use argpair::dispersion::{eigen, group_velocities, linspace, VgRoute};
use argpair::efficiency::{conversion_efficiencies, OpticalConstants, UnitConvention};
use argpair::model::{derive_ds, reference_defaults, AngularConvention, ModelParams, ParamDoc};
use argpair::propagation::{transfer, transfer_from_sample};
use argpair::quantum_state::{alpha20_ratio, amplitudes_fock_oracle, DEFAULT_CUTOFF};
use num_complex::Complex64;
use proptest::prelude::*;

fn at(x: f64) -> ModelParams {
    reference_defaults().with_detuning_tau(x)
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_and_discriminant(x in -30.0..30.0f64, wt in -5.0..5.0f64) {
        let p = at(x);
        let w = wt / p.tau_p;
        let s = eigen(w, &derive_ds(&p), &p);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let c = s.d_coeffs;
        let trace = Complex64::new(2.0 * w / p.c, 0.0) + c.d1 + c.d4;
        prop_assert!(close(s.lambda_plus + s.lambda_minus, trace, 1e-12));
        let disc = (c.d1 - c.d4) * (c.d1 - c.d4) + 4.0 * c.d2 * c.d3;
        prop_assert!(close(s.d5 * s.d5, disc, 1e-10));
        prop_assert!(s.d5.re >= 0.0);
        prop_assert!(close(s.lambda_minus - s.lambda_plus, s.d5, 1e-10));
    }

    #[test]
    fn branch_swap_invariance(x in -30.0..30.0f64, wt in -5.0..5.0f64, z in 0.0..0.05f64) {
        let p = at(x);
        let s = eigen(wt / p.tau_p, &derive_ds(&p), &p);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let a = transfer_from_sample(z, &s).unwrap();
        let b = transfer_from_sample(z, &s.swapped()).unwrap();
        prop_assert!(a.max_rel_dev(&b) < 1e-9);
    }

    #[test]
    fn pump_phase_rotation(theta in 0.0..std::f64::consts::TAU, x in -10.0..10.0f64, wt in -5.0..5.0f64) {
        let p = at(x);
        let mut q = p.clone();
        q.omega1_rabi *= Complex64::from_polar(1.0, theta);
        let w = wt / p.tau_p;
        let a = eigen(w, &derive_ds(&p), &p);
        let b = eigen(w, &derive_ds(&q), &q);
        prop_assume!(a.is_ok() && b.is_ok());
        let (a, b) = (a.unwrap(), b.unwrap());
        prop_assert!(close(a.lambda_plus, b.lambda_plus, 1e-10));
        prop_assert!(close(a.lambda_minus, b.lambda_minus, 1e-10));
        prop_assert!(close(a.d_coeffs.d2 * a.d_coeffs.d3, b.d_coeffs.d2 * b.d_coeffs.d3, 1e-10));
    }

    #[test]
    fn semigroup(x in -10.0..10.0f64, wt in -5.0..5.0f64, z1 in 0.0..0.025f64, z2 in 0.0..0.025f64) {
        let p = at(x);
        let ds = derive_ds(&p);
        let w = wt / p.tau_p;
        let (a, b, ab) = (transfer(z1, w, &ds, &p), transfer(z2, w, &ds, &p), transfer(z1 + z2, w, &ds, &p));
        prop_assume!(a.is_ok() && b.is_ok() && ab.is_ok());
        prop_assert!(b.unwrap().compose(&a.unwrap()).max_rel_dev(&ab.unwrap()) < 1e-9);
    }

    #[test]
    fn determinant_identity(x in -10.0..10.0f64, wt in -5.0..5.0f64, z in 0.0..0.05f64) {
        let p = at(x);
        let ds = derive_ds(&p);
        let w = wt / p.tau_p;
        let s = eigen(w, &ds, &p);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let m = transfer_from_sample(z, &s).unwrap();
        let want = (Complex64::i() * (s.lambda_plus + s.lambda_minus) * z).exp();
        prop_assert!(close(m.determinant(), want, 1e-9));
    }

    #[test]
    fn fock_normalization(l in 0.0..0.05f64, x in -5.0..5.0f64) {
        let p = at(x);
        let r = amplitudes_fock_oracle(l, &derive_ds(&p), &p, DEFAULT_CUTOFF);
        prop_assume!(r.is_ok());
        let r = r.unwrap();
        prop_assert!((r.normalized.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(r.raw.norm_sqr() > 0.0);
    }

    #[test]
    fn model_round_trip(
        o1 in 1e6..1e8f64, o2 in 1e6..1e8f64, phase in -3.0..3.0f64,
        d1 in -1e10..1e10f64, d4 in -1e8..1e8f64, x in -40.0..40.0f64,
        g in 1e5..1e8f64, k in 1e7..1e10f64, two_pi in any::<bool>(),
    ) {
        let conv = if two_pi { AngularConvention::TwoPi } else { AngularConvention::Unit };
        let mut p = reference_defaults().with_detuning_tau(x).with_k(k);
        p.omega1_rabi = Complex64::from_polar(o1, phase);
        p.omega2_rabi = Complex64::new(o2, 0.0);
        p.delta1 = d1;
        p.delta4 = d4;
        p.gamma42 = g;
        p.angular_convention = conv;
        let text = ParamDoc::from_params(&p).to_json_string();
        let back = ParamDoc::from_json_str(&text).unwrap().resolve(None).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn efficiency_identity(eta_s in 0.001..1.0f64, l in 0.001..0.1f64) {
        let p = reference_defaults().with_detuning_tau(3.0);
        let mut oc = OpticalConstants::rb87(p.tau_p);
        oc.eta_s = eta_s;
        for units in [UnitConvention::FieldSquared, UnitConvention::Intensity] {
            let r = conversion_efficiencies(l, &p, &oc, None, units).unwrap();
            prop_assert_eq!(r.eta_tot1, r.eta1 * eta_s);
            prop_assert_eq!(r.eta_tot2, r.eta2 * eta_s);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alpha20_non_increasing_in_pump(a in 1.0..10.0f64, b in 1.0..10.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ratio = |s: f64| {
            let mut p = reference_defaults();
            p.omega2_rabi = Complex64::new(s * 1e7, 0.0);
            alpha20_ratio(0.05, &p, DEFAULT_CUTOFF).unwrap()
        };
        prop_assert!(ratio(hi) <= ratio(lo));
    }
}

#[test]
fn finite_difference_matches_chain_rule() {
    let base = reference_defaults();
    let mut compared = 0;
    for x in linspace(-40.0, 40.0, 50) {
        let p = base.clone().with_detuning_tau(x);
        let ds = derive_ds(&p);
        let s = eigen(0.0, &ds, &p).unwrap();
        if s.d5.norm() < 1e-6 * s.d_coeffs.d1.norm() {
            continue;
        }
        let (Ok(fd), Ok(cr)) = (
            group_velocities(VgRoute::FiniteDifference, &ds, &p),
            group_velocities(VgRoute::ChainRule, &ds, &p),
        ) else {
            continue;
        };
        compared += 1;
        for (a, b) in [(fd.0, cr.0), (fd.1, cr.1)] {
            assert!(close(a, b, 1e-6), "detuning_tau {x}: {a} vs {b}");
        }
    }
    assert!(compared >= 45, "only {compared} grid points compared");
}
