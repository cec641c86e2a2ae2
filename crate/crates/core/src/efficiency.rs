//! Pump intensities, generated-field peak intensities and pair conversion
//! efficiencies with ⁸⁷Rb constants.
//!
//! The peak field expression ħω/(2ε₀A_eff c τ_p)·Σ|A|²·|e^{βL}|² is the squared
//! single-photon field amplitude times the mode weight, so it carries units of
//! (V/m)². [`UnitConvention::FieldSquared`] reports it as written; the
//! [`UnitConvention::Intensity`] variant converts it with I = 2n√(ε₀/μ₀)|E|²,
//! the same rule that turns the pump Rabi frequency into W/m².

use std::f64::consts::PI;

use serde::Serialize;

use crate::dispersion::{zero_freq_constants, Mode, ZeroFreqConstants};
use crate::error::{Error, Result};
use crate::model::{derive_ds, ModelParams};

/// Vacuum permittivity [F/m], as quoted with the pump-intensity relation.
pub const EPSILON0: f64 = 8.85e-12;
/// Vacuum permeability [H/m].
pub const MU0: f64 = 4.0 * PI * 1e-7;
/// Reduced Planck constant [J·s], CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic unit of electric dipole moment e·a₀ [C·m], CODATA 2018.
pub const EA0: f64 = 8.478_353_625_5e-30;
/// ⁸⁷Rb D1 wavelength [m].
pub const RB87_D1_WAVELENGTH: f64 = 794.979e-9;
/// ⁸⁷Rb D2 wavelength [m].
pub const RB87_D2_WAVELENGTH: f64 = 780.241e-9;

/// SPDC reference: pair efficiency integrated over emission directions [mm⁻¹ sr⁻¹].
pub const SPDC_INTEGRATED_PER_MM_SR: f64 = 3e-8;
/// SPDC reference: typical detector collection solid angle [sr].
pub const SPDC_COLLECTION_SR: f64 = 3.3e-5;
/// SPDC reference: realistic collected pair efficiency [mm⁻¹].
pub const SPDC_REALISTIC_PER_MM: f64 = 1e-12;

/// Reference values the efficiency report is compared against [per cm].
pub const ETA_TOT1_TARGET: f64 = 5.919e-8;
pub const ETA_TOT2_TARGET: f64 = 4.819e-9;

/// How the beam waist maps to an effective area.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AreaConvention {
    /// A_eff = πw₀²
    PiW0Sq,
    /// A_eff = πw₀²/2
    HalfPiW0Sq,
}

impl AreaConvention {
    pub fn area(self, w0: f64) -> f64 {
        match self {
            AreaConvention::PiW0Sq => PI * w0 * w0,
            AreaConvention::HalfPiW0Sq => 0.5 * PI * w0 * w0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AreaConvention::PiW0Sq => "pi*w0^2",
            AreaConvention::HalfPiW0Sq => "pi*w0^2/2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "pi*w0^2" | "full" => Some(AreaConvention::PiW0Sq),
            "pi*w0^2/2" | "half" => Some(AreaConvention::HalfPiW0Sq),
            _ => None,
        }
    }
}

/// Units in which the generated-field peak value is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UnitConvention {
    /// The photon-energy prefactor expression as written, in (V/m)².
    FieldSquared,
    /// Converted to W/m² with I = 2n√(ε₀/μ₀)|E|².
    Intensity,
}

impl UnitConvention {
    pub fn label(self) -> &'static str {
        match self {
            UnitConvention::FieldSquared => "field-squared (V/m)^2",
            UnitConvention::Intensity => "intensity W/m^2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "field-squared" | "field" => Some(UnitConvention::FieldSquared),
            "intensity" | "si" => Some(UnitConvention::Intensity),
            _ => None,
        }
    }
}

/// Optical and atomic constants entering the efficiency estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OpticalConstants {
    pub epsilon0: f64,
    pub mu0: f64,
    pub hbar: f64,
    pub n1: f64,
    pub n2: f64,
    /// |μ₂₁| [C·m]
    pub mu1: f64,
    /// |μ₄₃| [C·m]
    pub mu2: f64,
    /// Probe carrier [rad/s]
    pub omega3: f64,
    /// FWM carrier [rad/s]
    pub omega4: f64,
    pub w0: f64,
    pub area: AreaConvention,
    pub tau_p: f64,
    pub eta_s: f64,
}

impl OpticalConstants {
    /// ⁸⁷Rb values with a 10 μm waist and a 9% single-photon source.
    pub fn rb87(tau_p: f64) -> Self {
        let c = crate::model::C_LIGHT;
        OpticalConstants {
            epsilon0: EPSILON0,
            mu0: MU0,
            hbar: HBAR,
            n1: 1.0,
            n2: 1.0,
            mu1: 2.992 * EA0 / 12f64.sqrt(),
            mu2: 4.227 * EA0 / 12f64.sqrt(),
            omega3: 2.0 * PI * c / RB87_D1_WAVELENGTH,
            omega4: 2.0 * PI * c / RB87_D2_WAVELENGTH,
            w0: 10e-6,
            area: AreaConvention::PiW0Sq,
            tau_p,
            eta_s: 0.09,
        }
    }

    pub fn a_eff(&self) -> f64 {
        self.area.area(self.w0)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("epsilon0", self.epsilon0),
            ("mu0", self.mu0),
            ("hbar", self.hbar),
            ("n1", self.n1),
            ("n2", self.n2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("omega3", self.omega3),
            ("omega4", self.omega4),
            ("w0", self.w0),
            ("tau_p", self.tau_p),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta_s > 0.0 && self.eta_s <= 1.0) {
            return Err(Error::InvalidParams(format!("eta_s must lie in (0, 1], got {}", self.eta_s)));
        }
        Ok(())
    }

    /// 2n√(ε₀/μ₀): converts |E|² [V²/m²] to intensity [W/m²].
    pub fn field_to_intensity(&self, n: f64) -> f64 {
        2.0 * n * (self.epsilon0 / self.mu0).sqrt()
    }
}

/// Pump intensity I_Pj = 8n_j√(ε₀/μ₀)|ħΩ_j/μ_j|² [W/m²] for pump j ∈ {1, 2}.
pub fn pump_intensity(j: u8, oc: &OpticalConstants, p: &ModelParams) -> Result<f64> {
    let (n, omega, mu) = match j {
        1 => (oc.n1, p.omega1_rabi.norm(), oc.mu1),
        2 => (oc.n2, p.omega2_rabi.norm(), oc.mu2),
        _ => return Err(Error::InvalidParams(format!("pump index must be 1 or 2, got {j}"))),
    };
    if mu == 0.0 {
        return Err(Error::InvalidParams(format!("dipole moment of pump {j} is zero")));
    }
    let e = oc.hbar * omega / mu;
    Ok(4.0 * oc.field_to_intensity(n) * e * e)
}

/// Peak values of the generated probe and FWM fields after length `l` in the
/// selected mode, in the requested units.
pub fn field_peak_intensity(
    mode: Mode,
    l: f64,
    k: &ZeroFreqConstants,
    oc: &OpticalConstants,
    p: &ModelParams,
    units: UnitConvention,
) -> Result<(f64, f64)> {
    if !(l >= 0.0) {
        return Err(Error::InvalidParams(format!("length must be non-negative, got {l}")));
    }
    let growth = (2.0 * k.beta(mode).re * l).exp();
    let weight1 = match mode {
        Mode::Plus => k.a1.norm_sqr() + k.a2.norm_sqr(),
        Mode::Minus => k.a3.norm_sqr() + k.a2.norm_sqr(),
    };
    let base = oc.hbar / (oc.epsilon0 * oc.a_eff() * p.c * oc.tau_p);
    let mut e1 = 0.5 * oc.omega3 * base * weight1 * growth;
    let mut e2 = oc.omega4 * base * k.a.norm_sqr() * growth;
    if units == UnitConvention::Intensity {
        e1 *= oc.field_to_intensity(oc.n1);
        e2 *= oc.field_to_intensity(oc.n2);
    }
    Ok((e1, e2))
}

/// Full efficiency estimate for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub length: f64,
    pub mode: Mode,
    pub area_convention: &'static str,
    pub unit_convention: &'static str,
    pub a_eff: f64,
    pub i_p1: f64,
    pub i_p2: f64,
    pub i_e1: f64,
    pub i_e2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta_tot1: f64,
    pub eta_tot2: f64,
    pub eta_tot1_per_cm: f64,
    pub eta_tot2_per_cm: f64,
    pub eta_s: f64,
    pub spdc_integrated_per_mm_sr: f64,
    pub spdc_collection_sr: f64,
    pub spdc_realistic_per_mm: f64,
}

impl EfficiencyReport {
    /// Human-readable table including the SPDC comparison row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("length            {:.6e} m\n", self.length));
        s.push_str(&format!("mode              {:?}\n", self.mode));
        s.push_str(&format!("A_eff             {:.6e} m^2 ({})\n", self.a_eff, self.area_convention));
        s.push_str(&format!("units             {}\n", self.unit_convention));
        s.push_str(&format!("I_P1, I_P2        {:.6e} {:.6e} W/m^2\n", self.i_p1, self.i_p2));
        s.push_str(&format!("I_E1, I_E2        {:.6e} {:.6e}\n", self.i_e1, self.i_e2));
        s.push_str(&format!("eta1, eta2        {:.6e} {:.6e}\n", self.eta1, self.eta2));
        s.push_str(&format!("eta_tot1, eta_tot2 {:.6e} {:.6e}\n", self.eta_tot1, self.eta_tot2));
        s.push_str(&format!(
            "per cm            {:.6e} {:.6e} (reference {:.3e} {:.3e})\n",
            self.eta_tot1_per_cm, self.eta_tot2_per_cm, ETA_TOT1_TARGET, ETA_TOT2_TARGET
        ));
        s.push_str(&format!(
            "SPDC              {:.1e} /mm/sr integrated, {:.1e} sr collection, {:.1e} /mm realistic\n",
            self.spdc_integrated_per_mm_sr, self.spdc_collection_sr, self.spdc_realistic_per_mm
        ));
        s
    }
}

/// Conversion efficiencies η_j = I_Ej(L)/I_Pj(0), η_tot = η·η_s, per cm of medium.
///
/// `mode` defaults to the amplified zero-frequency mode.
pub fn conversion_efficiencies(
    l: f64,
    p: &ModelParams,
    oc: &OpticalConstants,
    mode: Option<Mode>,
    units: UnitConvention,
) -> Result<EfficiencyReport> {
    oc.check()?;
    if !(l > 0.0) {
        return Err(Error::InvalidParams(format!("length must be positive, got {l}")));
    }
    let k = zero_freq_constants(&derive_ds(p), p)?;
    let mode = mode.unwrap_or_else(|| k.gain_mode());
    let i_p1 = pump_intensity(1, oc, p)?;
    let i_p2 = pump_intensity(2, oc, p)?;
    let (i_e1, i_e2) = field_peak_intensity(mode, l, &k, oc, p, units)?;
    let eta1 = i_e1 / i_p1;
    let eta2 = i_e2 / i_p2;
    let eta_tot1 = eta1 * oc.eta_s;
    let eta_tot2 = eta2 * oc.eta_s;
    let cm = l * 100.0;
    Ok(EfficiencyReport {
        length: l,
        mode,
        area_convention: oc.area.label(),
        unit_convention: units.label(),
        a_eff: oc.a_eff(),
        i_p1,
        i_p2,
        i_e1,
        i_e2,
        eta1,
        eta2,
        eta_tot1,
        eta_tot2,
        eta_tot1_per_cm: eta_tot1 / cm,
        eta_tot2_per_cm: eta_tot2 / cm,
        eta_s: oc.eta_s,
        spdc_integrated_per_mm_sr: SPDC_INTEGRATED_PER_MM_SR,
        spdc_collection_sr: SPDC_COLLECTION_SR,
        spdc_realistic_per_mm: SPDC_REALISTIC_PER_MM,
    })
}
