//! Physical parameters of the double-Λ medium and the composite detunings
//! built from them.
//!
//! Every rate is stored as an angular frequency in rad/s. Values written
//! in frequency units ("10 MHz", "gamma") are multiplied by the selected
//! [`AngularConvention`] when a config document is resolved.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Speed of light in vacuum [m/s].
pub const C_LIGHT: f64 = 299_792_458.0;

/// Nominal dephasing rate of the reference parameter set, in frequency units.
pub const GAMMA_NOMINAL: f64 = 1.0e7;

/// Relative tolerance for agreement between a supplied δ₃ and δ₁ + Δ.
pub const DELTA3_TOLERANCE: f64 = 1e-12;

/// Multiplier applied to inputs quoted in frequency units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum AngularConvention {
    /// "10 MHz" means 10⁷ rad/s.
    #[default]
    #[serde(rename = "1")]
    Unit,
    /// "10 MHz" means 2π·10⁷ rad/s.
    #[serde(rename = "2pi")]
    TwoPi,
}

impl AngularConvention {
    pub const ALL: [AngularConvention; 2] = [AngularConvention::Unit, AngularConvention::TwoPi];

    pub fn factor(self) -> f64 {
        match self {
            AngularConvention::Unit => 1.0,
            AngularConvention::TwoPi => 2.0 * PI,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AngularConvention::Unit => "1",
            AngularConvention::TwoPi => "2pi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "unit" => Some(AngularConvention::Unit),
            "2pi" | "2π" | "two_pi" => Some(AngularConvention::TwoPi),
            _ => None,
        }
    }
}

impl fmt::Display for AngularConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// All physical inputs of the model, in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ω₁, pump 1 Rabi frequency [rad/s].
    pub omega1_rabi: Complex64,
    /// Ω₂, pump 2 Rabi frequency [rad/s].
    pub omega2_rabi: Complex64,
    pub delta1: f64,
    /// δ₃; derived as δ₁ + Δ when absent.
    pub delta3: Option<f64>,
    pub delta4: f64,
    /// Δ, the two-photon detuning.
    pub two_photon_detuning: f64,
    pub gamma21: f64,
    pub gamma31: f64,
    pub gamma32: f64,
    pub gamma41: f64,
    pub gamma42: f64,
    pub gamma43: f64,
    /// K₁ [1/(m·s)].
    pub k1: f64,
    /// K₂ [1/(m·s)].
    pub k2: f64,
    /// K₁₂ [1/(m·s)].
    pub k12: f64,
    /// Probe pulse duration [s].
    pub tau_p: f64,
    /// Speed of light [m/s].
    pub c: f64,
    pub angular_convention: AngularConvention,
    /// Relative tolerance on K₁₂² = K₁K₂; `None` disables the check.
    pub k_tolerance: Option<f64>,
}

/// Composite complex detunings d₁..d₅ [rad/s].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeDetunings {
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
    pub d4: Complex64,
    pub d5: Complex64,
}

/// One broken invariant, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl ModelParams {
    /// δ₃, supplied or derived.
    pub fn delta3_resolved(&self) -> f64 {
        self.delta3.unwrap_or(self.delta1 + self.two_photon_detuning)
    }

    /// δ₂ = Δ + δ₄.
    pub fn delta2(&self) -> f64 {
        self.two_photon_detuning + self.delta4
    }

    /// Sets Δ from the dimensionless product Δτ_p and drops any explicit δ₃.
    pub fn with_detuning_tau(mut self, x: f64) -> Self {
        self.two_photon_detuning = x / self.tau_p;
        self.delta3 = None;
        self
    }

    /// Sets K₁ = K₂ = K₁₂ = k.
    pub fn with_k(mut self, k: f64) -> Self {
        self.k1 = k;
        self.k2 = k;
        self.k12 = k;
        self
    }

    /// Switches off the second Λ branch (Ω₂ = K₂ = K₁₂ = 0).
    pub fn single_lambda(mut self) -> Self {
        self.omega2_rabi = Complex64::new(0.0, 0.0);
        self.k2 = 0.0;
        self.k12 = 0.0;
        self
    }

    /// Empty medium: all coupling constants zero.
    pub fn empty_medium(self) -> Self {
        self.with_k(0.0)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Returns `Err` listing every violation, or `Ok(())`.
    pub fn check(&self) -> Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Err(Error::InvalidParams(msg.join("; ")))
        }
    }
}

/// Builds d₁..d₅ from the detunings and dephasing rates.
pub fn derive_ds(p: &ModelParams) -> CompositeDetunings {
    CompositeDetunings {
        d1: Complex64::new(p.delta1, p.gamma21),
        d2: Complex64::new(p.two_photon_detuning, p.gamma31),
        d3: Complex64::new(p.delta3_resolved(), -p.gamma32),
        d4: Complex64::new(p.delta4, p.gamma41),
        d5: Complex64::new(p.delta1, p.gamma42),
    }
}

/// Reference parameter set under the unit convention.
pub fn reference_defaults() -> ModelParams {
    reference_defaults_with(AngularConvention::Unit)
}

/// Reference parameter set: γ = 10 MHz (scaled by `conv`), |Ω₁| = γ,
/// |Ω₂| = 5γ, τ_p = 10 μs, δ₁ = 100γ, δ₄ = 0.1γ, Δτ_p = −1,
/// γ₃₁ = 3·10⁻⁵γ, γ₄₂ = 2γ, K₁ = K₂ = K₁₂ = 10⁹ /(m·s).
pub fn reference_defaults_with(conv: AngularConvention) -> ModelParams {
    defaults_for_gamma(GAMMA_NOMINAL * conv.factor(), conv)
}

fn defaults_for_gamma(g: f64, conv: AngularConvention) -> ModelParams {
    let tau_p = 10e-6;
    ModelParams {
        omega1_rabi: Complex64::new(g, 0.0),
        omega2_rabi: Complex64::new(5.0 * g, 0.0),
        delta1: 100.0 * g,
        delta3: None,
        delta4: 0.1 * g,
        two_photon_detuning: -1.0 / tau_p,
        gamma21: g,
        gamma31: 3e-5 * g,
        gamma32: g,
        gamma41: g,
        gamma42: 2.0 * g,
        gamma43: g,
        k1: 1e9,
        k2: 1e9,
        k12: 1e9,
        tau_p,
        c: C_LIGHT,
        angular_convention: conv,
        k_tolerance: Some(1e-6),
    }
}

pub fn validate(p: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let rates = [
        ("gamma21", p.gamma21),
        ("gamma31", p.gamma31),
        ("gamma32", p.gamma32),
        ("gamma41", p.gamma41),
        ("gamma42", p.gamma42),
        ("gamma43", p.gamma43),
    ];
    for (name, v) in rates {
        if !(v >= 0.0 && v.is_finite()) {
            out.push(Violation { field: name, rule: format!("dephasing rate must be finite and >= 0, got {v}") });
        }
    }
    if !(p.tau_p > 0.0 && p.tau_p.is_finite()) {
        out.push(Violation { field: "tau_p", rule: format!("must be > 0, got {}", p.tau_p) });
    }
    if !(p.c > 0.0 && p.c.is_finite()) {
        out.push(Violation { field: "c", rule: format!("must be > 0, got {}", p.c) });
    }
    let finite = [
        ("delta1", p.delta1),
        ("delta4", p.delta4),
        ("two_photon_detuning", p.two_photon_detuning),
        ("k1", p.k1),
        ("k2", p.k2),
        ("k12", p.k12),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            out.push(Violation { field: name, rule: "must be finite".into() });
        }
    }
    for (name, v) in [("omega1_rabi", p.omega1_rabi), ("omega2_rabi", p.omega2_rabi)] {
        if !v.is_finite() {
            out.push(Violation { field: name, rule: "must be finite".into() });
        }
    }
    if let Some(d3) = p.delta3 {
        let derived = p.delta1 + p.two_photon_detuning;
        let scale = d3.abs().max(derived.abs());
        if !d3.is_finite() || (d3 - derived).abs() > DELTA3_TOLERANCE * scale {
            out.push(Violation {
                field: "delta3",
                rule: format!("must equal delta1 + two_photon_detuning = {derived:e}, got {d3:e}"),
            });
        }
    }
    if let Some(tol) = p.k_tolerance {
        let lhs = p.k12 * p.k12;
        let rhs = p.k1 * p.k2;
        let scale = lhs.abs().max(rhs.abs());
        if (lhs - rhs).abs() > tol * scale {
            out.push(Violation {
                field: "k12",
                rule: format!("k12^2 = {lhs:e} inconsistent with k1*k2 = {rhs:e} (rel. tol {tol:e})"),
            });
        }
    }
    out
}

/// A parsed but unresolved JSON config document.
///
/// Grammar for every numeric field:
///
/// * a JSON number, or a string holding one: taken as SI (rad/s, s, m/s, 1/(m·s));
/// * `"x*gamma"`, `"x gamma"` or `"gamma"`: x·γ, where γ = `gamma_hz` × convention;
/// * `"x Hz"`, `"x kHz"`, `"x MHz"`, `"x GHz"`: frequency units, scaled by the convention;
/// * `"x/tau_p"`: x divided by the resolved pulse duration;
/// * `"x s"`, `"x ms"`, `"x us"`, `"x ns"`: durations.
///
/// Rabi frequencies also accept `[re, im]` pairs of the above. `delta3` and
/// `k_tolerance` accept `null`. Two extra keys are recognized:
/// `angular_convention` (`"1"` or `"2pi"`) and `gamma_hz` (default 10⁷).
/// Fields that are absent take the reference values for the chosen convention.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamDoc(pub BTreeMap<String, Value>);

const FIELDS: [&str; 21] = [
    "omega1_rabi",
    "omega2_rabi",
    "delta1",
    "delta3",
    "delta4",
    "two_photon_detuning",
    "gamma21",
    "gamma31",
    "gamma32",
    "gamma41",
    "gamma42",
    "gamma43",
    "k1",
    "k2",
    "k12",
    "tau_p",
    "c",
    "angular_convention",
    "k_tolerance",
    "gamma_hz",
    "gamma23",
];

/// Names accepted by [`ParamDoc::set`] and `--set`.
pub fn parameter_names() -> &'static [&'static str] {
    &FIELDS
}

struct Scales {
    gamma: f64,
    factor: f64,
    tau_p: f64,
}

impl ParamDoc {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("malformed JSON: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("JSON values always serialize")
    }

    /// Writes every field of `p` as plain SI numbers.
    pub fn from_params(p: &ModelParams) -> Self {
        let num = |x: f64| serde_json::json!(x);
        let cpx = |z: Complex64| serde_json::json!([z.re, z.im]);
        let mut m = BTreeMap::new();
        m.insert("omega1_rabi".into(), cpx(p.omega1_rabi));
        m.insert("omega2_rabi".into(), cpx(p.omega2_rabi));
        m.insert("delta1".into(), num(p.delta1));
        m.insert("delta3".into(), p.delta3.map_or(Value::Null, num));
        m.insert("delta4".into(), num(p.delta4));
        m.insert("two_photon_detuning".into(), num(p.two_photon_detuning));
        m.insert("gamma21".into(), num(p.gamma21));
        m.insert("gamma31".into(), num(p.gamma31));
        m.insert("gamma32".into(), num(p.gamma32));
        m.insert("gamma41".into(), num(p.gamma41));
        m.insert("gamma42".into(), num(p.gamma42));
        m.insert("gamma43".into(), num(p.gamma43));
        m.insert("k1".into(), num(p.k1));
        m.insert("k2".into(), num(p.k2));
        m.insert("k12".into(), num(p.k12));
        m.insert("tau_p".into(), num(p.tau_p));
        m.insert("c".into(), num(p.c));
        m.insert("angular_convention".into(), Value::String(p.angular_convention.label().into()));
        m.insert("k_tolerance".into(), p.k_tolerance.map_or(Value::Null, num));
        ParamDoc(m)
    }

    /// Applies a `key=value` override. The value is read as JSON when it
    /// parses as such and as a bare string otherwise.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !FIELDS.contains(&key) {
            return Err(Error::Config(format!("unknown parameter '{key}'")));
        }
        let v = serde_json::from_str::<Value>(value).unwrap_or_else(|_| Value::String(value.to_string()));
        self.0.insert(key.to_string(), v);
        Ok(())
    }

    /// Resolves the document into SI parameters. `conv_override` wins over
    /// the document's own `angular_convention`.
    pub fn resolve(&self, conv_override: Option<AngularConvention>) -> Result<ModelParams> {
        for k in self.0.keys() {
            if !FIELDS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown parameter '{k}'")));
            }
        }
        let conv = match (conv_override, self.0.get("angular_convention")) {
            (Some(c), _) => c,
            (None, None) | (None, Some(Value::Null)) => AngularConvention::Unit,
            (None, Some(Value::String(s))) => AngularConvention::parse(s)
                .ok_or_else(|| Error::Config(format!("angular_convention must be \"1\" or \"2pi\", got '{s}'")))?,
            (None, Some(Value::Number(n))) if n.as_f64() == Some(1.0) => AngularConvention::Unit,
            (None, Some(v)) => return Err(Error::Config(format!("bad angular_convention {v}"))),
        };
        let factor = conv.factor();
        let mut sc = Scales { gamma: GAMMA_NOMINAL * factor, factor, tau_p: f64::NAN };
        if let Some(v) = self.0.get("gamma_hz") {
            sc.gamma = quantity(v, &sc, "gamma_hz")? * factor;
        }
        let mut p = defaults_for_gamma(sc.gamma, conv);
        if let Some(v) = self.0.get("tau_p") {
            p.tau_p = quantity(v, &sc, "tau_p")?;
        }
        sc.tau_p = p.tau_p;
        p.two_photon_detuning = -1.0 / p.tau_p;

        for (key, v) in &self.0 {
            let k = key.as_str();
            match k {
                "angular_convention" | "gamma_hz" | "tau_p" => {}
                "omega1_rabi" => p.omega1_rabi = complex_quantity(v, &sc, k)?,
                "omega2_rabi" => p.omega2_rabi = complex_quantity(v, &sc, k)?,
                "delta3" => p.delta3 = optional(v, &sc, k)?,
                "k_tolerance" => p.k_tolerance = optional(v, &sc, k)?,
                _ => {
                    let x = quantity(v, &sc, k)?;
                    match k {
                        "delta1" => p.delta1 = x,
                        "delta4" => p.delta4 = x,
                        "two_photon_detuning" => p.two_photon_detuning = x,
                        "gamma21" => p.gamma21 = x,
                        "gamma31" => p.gamma31 = x,
                        "gamma32" | "gamma23" => p.gamma32 = x,
                        "gamma41" => p.gamma41 = x,
                        "gamma42" => p.gamma42 = x,
                        "gamma43" => p.gamma43 = x,
                        "k1" => p.k1 = x,
                        "k2" => p.k2 = x,
                        "k12" => p.k12 = x,
                        "c" => p.c = x,
                        _ => unreachable!("field list checked above"),
                    }
                }
            }
        }
        Ok(p)
    }
}

fn optional(v: &Value, sc: &Scales, field: &str) -> Result<Option<f64>> {
    match v {
        Value::Null => Ok(None),
        _ => quantity(v, sc, field).map(Some),
    }
}

fn complex_quantity(v: &Value, sc: &Scales, field: &str) -> Result<Complex64> {
    match v {
        Value::Array(xs) if xs.len() == 2 => {
            Ok(Complex64::new(quantity(&xs[0], sc, field)?, quantity(&xs[1], sc, field)?))
        }
        Value::Array(_) => Err(Error::Config(format!("{field}: complex value needs [re, im]"))),
        _ => Ok(Complex64::new(quantity(v, sc, field)?, 0.0)),
    }
}

fn quantity(v: &Value, sc: &Scales, field: &str) -> Result<f64> {
    let bad = |msg: &str| Error::Config(format!("{field}: {msg}"));
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad("number out of range")),
        Value::String(s) => parse_expr(s, sc).ok_or_else(|| bad(&format!("cannot parse '{s}'"))),
        _ => Err(bad(&format!("expected a number or a string, got {v}"))),
    }
}

fn parse_expr(s: &str, sc: &Scales) -> Option<f64> {
    let s = s.trim();
    if let Ok(x) = s.parse::<f64>() {
        return Some(x);
    }
    if s == "gamma" {
        return Some(sc.gamma);
    }
    if let Some(head) = s.strip_suffix("gamma") {
        let head = head.trim_end().trim_end_matches('*').trim_end();
        return head.parse::<f64>().ok().map(|x| x * sc.gamma);
    }
    if let Some(head) = s.strip_suffix("/tau_p") {
        if !sc.tau_p.is_finite() {
            return None;
        }
        return head.trim().parse::<f64>().ok().map(|x| x / sc.tau_p);
    }
    let (num, unit) = s.split_once(char::is_whitespace)?;
    let x = num.trim().parse::<f64>().ok()?;
    let scale = match unit.trim() {
        "Hz" => sc.factor,
        "kHz" => 1e3 * sc.factor,
        "MHz" => 1e6 * sc.factor,
        "GHz" => 1e9 * sc.factor,
        "s" => 1.0,
        "ms" => 1e-3,
        "us" | "μs" => 1e-6,
        "ns" => 1e-9,
        _ => return None,
    };
    Some(x * scale)
}
