//! Command-line jobs: figure data, oracle checks, sweeps and calibration.
//!
//! Every job writes CSV (or JSON) files into the output directory. Each file
//! starts with a `#` metadata block holding the program version, the job, the
//! resolved parameters and the grids, so identical inputs give identical bytes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::correlation::{coincidence_rate, correlation_time, g2_cross, normalize_g2, G2Grid};
use crate::dispersion::{
    calibrate_convention, eigen, gain_spectrum, group_velocities, linspace, stark_phase_mismatch, track_modes,
    zero_freq_constants, VgRoute,
};
use crate::efficiency::{conversion_efficiencies, AreaConvention, OpticalConstants, UnitConvention};
use crate::error::Error;
use crate::model::{derive_ds, parameter_names, AngularConvention, ModelParams, ParamDoc};
use crate::propagation::{ode_oracle, transfer};
use crate::quantum_state::{alpha20_ratio, multiphoton_ratio, DEFAULT_CUTOFF, SPDC_REFERENCE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Transfer-vs-ODE agreement required by `oracle-check`.
pub const ORACLE_REL_TOLERANCE: f64 = 1e-6;
/// Determinant identity tolerance required by `oracle-check`.
pub const DETERMINANT_TOLERANCE: f64 = 1e-9;

const ZM: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum JobKind {
    /// Re[Vg±/c] versus Δτ_p (grid `detuning`, default -40:40:801)
    Fig3,
    /// Re β± versus Δτ_p (grid `detuning`, default -40:40:801)
    Fig4,
    /// ln|α32|/ln|α21| versus z/z_m (grid `z` in m, default 0.001:0.05:50)
    Fig5,
    /// Normalized g2 and coincidence rate versus τ_d (grid `tau` in s, default 0:3e-6:3001)
    Fig6,
    /// Stark-shift phase mismatch versus ωτ_p (grid `omega`, default -40:40:2001)
    Fig9,
    /// Mode gains versus ωτ_p (grid `omega`, default -40:40:2001)
    Fig10,
    /// Conversion efficiencies at `--length` and `--detuning-tau` (default 3)
    Efficiency,
    /// Seeded random comparison of the closed-form transfer matrix with the ODE oracle
    OracleCheck,
    /// Evaluate `--quantity` on one or two `--grid` parameter ranges
    Sweep,
    /// Choose the angular-frequency convention from the dispersion landmarks
    Calibrate,
}

impl JobKind {
    fn name(self) -> &'static str {
        match self {
            JobKind::Fig3 => "fig3",
            JobKind::Fig4 => "fig4",
            JobKind::Fig5 => "fig5",
            JobKind::Fig6 => "fig6",
            JobKind::Fig9 => "fig9",
            JobKind::Fig10 => "fig10",
            JobKind::Efficiency => "efficiency",
            JobKind::OracleCheck => "oracle-check",
            JobKind::Sweep => "sweep",
            JobKind::Calibrate => "calibrate",
        }
    }

    fn default_grids(self) -> &'static [(&'static str, f64, f64, usize)] {
        match self {
            JobKind::Fig3 | JobKind::Fig4 => &[("detuning", -40.0, 40.0, 801)],
            JobKind::Fig5 => &[("z", 0.001, 0.05, 50)],
            JobKind::Fig6 => &[("tau", 0.0, 3e-6, 3001)],
            JobKind::Fig9 | JobKind::Fig10 => &[("omega", -40.0, 40.0, 2001)],
            _ => &[],
        }
    }
}

/// Output quantities available to `sweep`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    /// Re[Vg+/c] (finite differences)
    VgPlus,
    /// Re[Vg-/c] (finite differences)
    VgMinus,
    /// Re β+ [1/m]
    BetaPlus,
    /// Re β- [1/m]
    BetaMinus,
    /// |α20|²/|α21|² from the Fock oracle at `--length`
    Alpha20Ratio,
    /// g2 correlation time [s] at `--length`
    CorrTime,
    /// η_tot1 per cm at `--length`
    EtaTot1,
    /// η_tot2 per cm at `--length`
    EtaTot2,
}

#[derive(Debug, Parser)]
#[command(name = "argpair", version, about = "Correlated photon pairs from a double-Λ active-Raman-gain medium")]
pub struct Cli {
    /// Job to run
    #[arg(value_enum)]
    pub job: JobKind,

    /// JSON parameter file; absent fields take the reference values
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long, env = "ARGPAIR_OUT", default_value = ".")]
    pub out: PathBuf,

    /// Parameter override `key=value` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Grid override `key=start:stop:count` (repeatable)
    #[arg(long = "grid", value_name = "KEY=START:STOP:COUNT")]
    pub grids: Vec<String>,

    /// Angular-frequency convention for frequency inputs (`1` or `2pi`)
    #[arg(long)]
    pub convention: Option<String>,

    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Quantity evaluated by `sweep`
    #[arg(long, value_enum)]
    pub quantity: Option<Quantity>,

    /// Medium length [m] for fig6, efficiency and length-dependent sweeps
    #[arg(long, default_value_t = 0.05)]
    pub length: f64,

    /// Two-photon detuning in units of 1/τ_p (efficiency defaults to 3)
    #[arg(long)]
    pub detuning_tau: Option<f64>,

    /// Coupling constants K1 = K2 = K12 for fig6, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [2e8, 3e9])]
    pub k_values: Vec<f64>,

    /// Detector efficiency ε for the coincidence rate
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,

    /// Coincidence bin ΔT [s]
    #[arg(long, default_value_t = 1e-9)]
    pub delta_t: f64,

    /// Fock-space cutoff
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: usize,

    /// Effective-area convention (`full` = πw0², `half` = πw0²/2)
    #[arg(long, default_value = "full")]
    pub area: String,

    /// Units of the generated-field peak value (`field-squared` or `intensity`)
    #[arg(long, default_value = "field-squared")]
    pub units: String,

    /// Random seed for oracle-check
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Number of oracle-check samples
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

/// Failure of a job, carrying its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    /// Wraps a library error with the module, operation and sample that failed.
    fn at(e: Error, module: &str, op: &str, sample: &str) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: format!("{module}::{op} at {sample}: {e}") }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A uniform range `start:stop:count`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub key: String,
    pub start: String,
    pub stop: String,
    pub count: usize,
}

impl GridSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        let bad = || CliError::config(format!("grid '{s}' is not key=start:stop:count"));
        let (key, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(CliError::config(format!("grid '{key}' is empty")));
        }
        Ok(GridSpec { key: key.trim().into(), start: parts[0].trim().into(), stop: parts[1].trim().into(), count })
    }

    fn numeric(&self) -> CliResult<(f64, f64)> {
        let f = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::config(format!("grid '{}': '{s}' is not a number", self.key)))
        };
        Ok((f(&self.start)?, f(&self.stop)?))
    }

    fn values(&self, a: f64, b: f64) -> CliResult<Vec<f64>> {
        if self.count > 1 && a == b {
            return Err(CliError::config(format!("grid '{}' is empty: start equals stop", self.key)));
        }
        Ok(linspace(a, b, self.count))
    }

    fn describe(&self) -> String {
        format!("{}={}:{}:{}", self.key, self.start, self.stop, self.count)
    }
}

/// Parses arguments, runs the job and returns the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Runs one job and returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    match cli.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

struct Context {
    doc: ParamDoc,
    conv: Option<AngularConvention>,
    params: ModelParams,
    detuning_tau: Option<f64>,
    grids: Vec<GridSpec>,
}

impl Context {
    fn new(cli: &Cli) -> CliResult<Self> {
        let mut doc = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                ParamDoc::from_json_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => ParamDoc::default(),
        };
        for o in &cli.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("override '{o}' is not key=value")))?;
            doc.set(k.trim(), v.trim()).map_err(|e| CliError::config(e.to_string()))?;
        }
        let conv = match &cli.convention {
            Some(s) => Some(
                AngularConvention::parse(s)
                    .ok_or_else(|| CliError::config(format!("--convention must be 1 or 2pi, got '{s}'")))?,
            ),
            None => None,
        };
        let mut params = resolve(&doc, conv)?;
        let detuning_tau = match (cli.detuning_tau, cli.job) {
            (Some(x), _) => Some(x),
            (None, JobKind::Efficiency) => Some(3.0),
            _ => None,
        };
        if let Some(x) = detuning_tau {
            params = params.with_detuning_tau(x);
        }
        let mut grids: Vec<GridSpec> = cli.grids.iter().map(|g| GridSpec::parse(g)).collect::<CliResult<_>>()?;
        let defaults = cli.job.default_grids();
        if cli.job != JobKind::Sweep {
            for g in &grids {
                if !defaults.iter().any(|d| d.0 == g.key) {
                    return Err(CliError::config(format!("job {} has no grid '{}'", cli.job.name(), g.key)));
                }
            }
            for &(key, a, b, n) in defaults {
                if !grids.iter().any(|g| g.key == key) {
                    grids.push(GridSpec { key: key.into(), start: fmt_num(a), stop: fmt_num(b), count: n });
                }
            }
        }
        Ok(Context { doc, conv, params, detuning_tau, grids })
    }

    fn grid(&self, key: &str) -> CliResult<Vec<f64>> {
        let g = self.grids.iter().find(|g| g.key == key).expect("default grids are always present");
        let (a, b) = g.numeric()?;
        g.values(a, b)
    }

    fn header(&self, cli: &Cli, extra: &[String]) -> Vec<String> {
        let mut h = vec![
            format!("argpair {}", env!("CARGO_PKG_VERSION")),
            format!("job: {}", cli.job.name()),
            format!("convention: {}", self.params.angular_convention.label()),
            format!(
                "params: {}",
                serde_json::to_string(&ParamDoc::from_params(&self.params)).expect("params serialize")
            ),
        ];
        for g in &self.grids {
            h.push(format!("grid: {}", g.describe()));
        }
        h.extend_from_slice(extra);
        h
    }
}

fn resolve(doc: &ParamDoc, conv: Option<AngularConvention>) -> CliResult<ModelParams> {
    let p = doc.resolve(conv).map_err(|e| CliError::config(e.to_string()))?;
    p.check().map_err(|e| CliError::config(e.to_string()))?;
    Ok(p)
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a CSV with a `#` metadata block.
pub fn render_csv(header: &[String], columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    let _ = writeln!(s, "{}", columns.join(","));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn dispatch(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let ctx = Context::new(cli)?;
    match cli.job {
        JobKind::Fig3 => fig3(cli, &ctx),
        JobKind::Fig4 => fig4(cli, &ctx),
        JobKind::Fig5 => fig5(cli, &ctx),
        JobKind::Fig6 => fig6(cli, &ctx),
        JobKind::Fig9 | JobKind::Fig10 => fig9_10(cli, &ctx),
        JobKind::Efficiency => efficiency(cli, &ctx),
        JobKind::OracleCheck => oracle_check(cli, &ctx),
        JobKind::Sweep => sweep(cli, &ctx),
        JobKind::Calibrate => calibrate(cli, &ctx),
    }
}

/// Evaluates `f` on every grid point in parallel, keeping grid order. Samples
/// at a pole of D(ω) are dropped and counted; any other error aborts the job.
fn collect_rows<F>(xs: &[f64], what: (&str, &str), label: &str, f: F) -> CliResult<(Vec<Vec<f64>>, usize)>
where
    F: Fn(f64) -> crate::Result<Vec<f64>> + Sync,
{
    let out: Vec<Option<Vec<f64>>> = xs
        .par_iter()
        .map(|&x| match f(x) {
            Ok(r) => Ok(Some(r)),
            Err(Error::Pole { .. }) => Ok(None),
            Err(e) => Err(CliError::at(e, what.0, what.1, &format!("{label}={x}"))),
        })
        .collect::<CliResult<_>>()?;
    let excluded = out.iter().filter(|r| r.is_none()).count();
    Ok((out.into_iter().flatten().collect(), excluded))
}

fn excluded_note(n: usize) -> String {
    format!("excluded samples at poles of D(omega): {n}")
}

/// Mode-tracking flags for rows whose columns `at..at + 4` hold Re/Im of λ₊ and λ₋.
fn tracking(rows: &[Vec<f64>], at: usize) -> Vec<bool> {
    let pairs: Vec<(Complex64, Complex64)> = rows
        .iter()
        .map(|r| (Complex64::new(r[at], r[at + 1]), Complex64::new(r[at + 2], r[at + 3])))
        .collect();
    track_modes(&pairs).into_iter().map(|t| t.2).collect()
}

fn ordered(swap: bool, a: f64, b: f64) -> (f64, f64) {
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

fn fig3(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let xs = ctx.grid("detuning")?;
    let c = ctx.params.c;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let (raw, excluded) = collect_rows(&xs, ("dispersion", "group_velocities"), "detuning_tau", |x| {
        let p = ctx.params.clone().with_detuning_tau(x);
        let ds = derive_ds(&p);
        let s = eigen(0.0, &ds, &p)?;
        let (fp, fm) = group_velocities(VgRoute::FiniteDifference, &ds, &p)?;
        let (cp, cm) = group_velocities(VgRoute::ChainRule, &ds, &p).unwrap_or((nan, nan));
        let (pp, pm) = group_velocities(VgRoute::Printed, &ds, &p).unwrap_or((nan, nan));
        Ok(vec![
            x,
            s.lambda_plus.re,
            s.lambda_plus.im,
            s.lambda_minus.re,
            s.lambda_minus.im,
            fp.re,
            fp.im,
            fm.re,
            fm.im,
            cp.re,
            cm.re,
            pp.re,
            pm.re,
        ])
    })?;
    let mut printed_dev: f64 = 0.0;
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .zip(tracking(&raw, 1))
        .map(|(r, sw)| {
            let (rp, rm) = ordered(sw, r[5], r[7]);
            let (ip, im) = ordered(sw, r[6], r[8]);
            let (cp, cm) = ordered(sw, r[9], r[10]);
            let (pp, pm) = ordered(sw, r[11], r[12]);
            for (a, b) in [(pp, cp), (pm, cm)] {
                let d = (a - b).abs() / b.abs();
                if d.is_finite() {
                    printed_dev = printed_dev.max(d);
                }
            }
            vec![r[0], rp / c, ip / c, rm / c, im / c, cp / c, cm / c, pp / c, pm / c, f64::from(u8::from(sw))]
        })
        .collect();
    let note = format!(
        "printed sqrt(D5) derivative denominator deviates from the chain rule by up to {} (relative, Re Vg)",
        fmt_num(printed_dev)
    );
    log::info!("{note}");
    let columns = cols(&[
        "detuning_tau",
        "re_vg_plus_over_c",
        "im_vg_plus_over_c",
        "re_vg_minus_over_c",
        "im_vg_minus_over_c",
        "re_vg_plus_over_c_chain_rule",
        "re_vg_minus_over_c_chain_rule",
        "re_vg_plus_over_c_printed",
        "re_vg_minus_over_c_printed",
        "labels_swapped",
    ]);
    let header = ctx.header(
        cli,
        &["vg route: finite differences (authoritative); labels tracked by continuity in detuning".into(), note, excluded_note(excluded)],
    );
    Ok(vec![write_file(&cli.out, "fig3.csv", &render_csv(&header, &columns, &rows))?])
}

fn fig4(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let xs = ctx.grid("detuning")?;
    let (raw, excluded) = collect_rows(&xs, ("dispersion", "eigen"), "detuning_tau", |x| {
        let p = ctx.params.clone().with_detuning_tau(x);
        let s = eigen(0.0, &derive_ds(&p), &p)?;
        Ok(vec![x, s.lambda_plus.re, s.lambda_plus.im, s.lambda_minus.re, s.lambda_minus.im])
    })?;
    // β = iλ: Re β = −Im λ, Im β = Re λ
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .zip(tracking(&raw, 1))
        .map(|(r, sw)| {
            let (rp, rm) = ordered(sw, -r[2], -r[4]);
            let (ip, im) = ordered(sw, r[1], r[3]);
            vec![r[0], rp, ip, rm, im, f64::from(u8::from(sw))]
        })
        .collect();
    let columns =
        cols(&["detuning_tau", "re_beta_plus", "im_beta_plus", "re_beta_minus", "im_beta_minus", "labels_swapped"]);
    let header = ctx.header(cli, &["labels tracked by continuity in detuning".into(), excluded_note(excluded)]);
    Ok(vec![write_file(&cli.out, "fig4.csv", &render_csv(&header, &columns, &rows))?])
}

fn fig5(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let zs = ctx.grid("z")?;
    let ds = derive_ds(&ctx.params);
    let pts = multiphoton_ratio(&zs, &ds, &ctx.params, cli.cutoff)
        .map_err(|e| CliError::at(e, "quantum_state", "multiphoton_ratio", &format!("cutoff={}", cli.cutoff)))?;
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|q| {
            vec![
                q.z / ZM,
                q.ratio_normalized.unwrap_or(f64::NAN),
                q.ratio_raw.unwrap_or(f64::NAN),
                SPDC_REFERENCE,
            ]
        })
        .collect();
    let columns = cols(&["z_over_zm", "ratio", "ratio_unnormalized", "spdc_reference"]);
    let header = ctx.header(cli, &[format!("z_m: {}", fmt_num(ZM)), format!("cutoff: {}", cli.cutoff)]);
    Ok(vec![write_file(&cli.out, "fig5.csv", &render_csv(&header, &columns, &rows))?])
}

fn fig6(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let taus = ctx.grid("tau")?;
    if cli.k_values.is_empty() {
        return Err(CliError::config("--k-values is empty"));
    }
    let mut extra = vec![
        format!("length: {}", fmt_num(cli.length)),
        format!("epsilon: {}", fmt_num(cli.epsilon)),
        format!("delta_t: {}", fmt_num(cli.delta_t)),
    ];
    let mut columns = vec!["tau_d".to_string()];
    let mut data: Vec<Vec<f64>> = vec![taus.clone()];
    for &k in &cli.k_values {
        let p = ctx.params.clone().with_k(k);
        let ds = derive_ds(&p);
        let sample = format!("K={k:e}");
        let grid = G2Grid::default();
        let s = g2_cross(&taus, cli.length, &ds, &p, &grid)
            .and_then(normalize_g2)
            .and_then(|s| coincidence_rate(s, cli.epsilon, cli.delta_t))
            .map_err(|e| CliError::at(e, "correlation", "g2_cross", &sample))?;
        extra.push(format!(
            "K={k:e}: correlation_time={} doubling_change={} imag_residual={} g1_e1={} g1_e2={} quadrature={:?}",
            correlation_time(&s).map_or("none".into(), fmt_num),
            s.doubling_change.map_or("unchecked".into(), fmt_num),
            fmt_num(s.imag_residual),
            fmt_num(s.g1_e1),
            fmt_num(s.g1_e2),
            grid,
        ));
        columns.push(format!("g2_norm_k{k:e}"));
        columns.push(format!("rc_k{k:e}"));
        data.push(s.g2_norm);
        data.push(s.rc);
    }
    let rows: Vec<Vec<f64>> = (0..taus.len()).map(|i| data.iter().map(|c| c[i]).collect()).collect();
    let header = ctx.header(cli, &extra);
    Ok(vec![write_file(&cli.out, "fig6.csv", &render_csv(&header, &columns, &rows))?])
}

fn fig9_10(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let xs = ctx.grid("omega")?;
    let p = &ctx.params;
    let ds = derive_ds(p);
    let fig9 = cli.job == JobKind::Fig9;
    let op = if fig9 { "stark_phase_mismatch" } else { "gain_spectrum" };
    let (rows, excluded) = collect_rows(&xs, ("dispersion", op), "omega_tau", |x| {
        let w = x / p.tau_p;
        if fig9 {
            Ok(vec![x, stark_phase_mismatch(w, &ds, p)?])
        } else {
            let g = gain_spectrum(w, &ds, p)?;
            Ok(vec![x, g.g_plus, g.g_minus, g.g_probe_only])
        }
    })?;
    let (name, columns) = if fig9 {
        ("fig9.csv", cols(&["omega_tau", "delta_k_shift"]))
    } else {
        ("fig10.csv", cols(&["omega_tau", "gain_plus", "gain_minus", "gain_probe_only"]))
    };
    let header = ctx.header(cli, &[excluded_note(excluded)]);
    Ok(vec![write_file(&cli.out, name, &render_csv(&header, &columns, &rows))?])
}

fn optics(cli: &Cli, tau_p: f64) -> CliResult<(OpticalConstants, UnitConvention)> {
    let mut oc = OpticalConstants::rb87(tau_p);
    oc.area = AreaConvention::parse(&cli.area)
        .ok_or_else(|| CliError::config(format!("--area must be full or half, got '{}'", cli.area)))?;
    let units = UnitConvention::parse(&cli.units)
        .ok_or_else(|| CliError::config(format!("--units must be field-squared or intensity, got '{}'", cli.units)))?;
    Ok((oc, units))
}

fn efficiency(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let (oc, units) = optics(cli, ctx.params.tau_p)?;
    let r = conversion_efficiencies(cli.length, &ctx.params, &oc, None, units).map_err(|e| {
        CliError::at(e, "efficiency", "conversion_efficiencies", &format!("length={}", cli.length))
    })?;
    let header = ctx.header(cli, &[]);
    let doc = json!({ "metadata": header, "optics": oc, "report": r });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    let mut table = String::new();
    for h in &header {
        let _ = writeln!(table, "# {h}");
    }
    table.push_str(&r.table());
    print!("{}", r.table());
    Ok(vec![
        write_file(&cli.out, "efficiency.json", &text)?,
        write_file(&cli.out, "efficiency.txt", &table)?,
    ])
}

/// One seeded oracle comparison.
#[derive(Clone, Copy, Debug)]
pub struct OracleSample {
    pub z: f64,
    pub omega_tau: f64,
    pub rel_dev: f64,
    pub det_dev: f64,
    pub steps: usize,
}

/// Draws `n` samples z ∈ [0, 5 cm], ωτ_p ∈ [−5, 5] from `seed` and compares
/// the closed-form transfer matrix with the ODE oracle.
pub fn oracle_samples(p: &ModelParams, n: usize, seed: u64) -> crate::Result<Vec<OracleSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random_range(0.0..=0.05), rng.random_range(-5.0..=5.0))).collect();
    let ds = derive_ds(p);
    pts.par_iter()
        .map(|&(z, x)| {
            let w = x / p.tau_p;
            let m = transfer(z, w, &ds, p)?;
            let o = ode_oracle(z, w, &ds, p, None)?;
            let s = eigen(w, &ds, p)?;
            let want = (Complex64::i() * (s.lambda_plus + s.lambda_minus) * z).exp();
            let det_dev = (m.determinant() - want).norm() / want.norm();
            Ok(OracleSample { z, omega_tau: x, rel_dev: m.max_rel_dev(&o.matrix), det_dev, steps: o.steps })
        })
        .collect()
}

fn oracle_check(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    if cli.samples == 0 {
        return Err(CliError::config("--samples must be at least 1"));
    }
    let samples = oracle_samples(&ctx.params, cli.samples, cli.seed)
        .map_err(|e| CliError::at(e, "propagation", "ode_oracle", &format!("seed={}", cli.seed)))?;
    let max_rel = samples.iter().map(|s| s.rel_dev).fold(0.0, f64::max);
    let max_det = samples.iter().map(|s| s.det_dev).fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> =
        samples.iter().map(|s| vec![s.z, s.omega_tau, s.rel_dev, s.det_dev, s.steps as f64]).collect();
    let columns = cols(&["z", "omega_tau", "transfer_rel_dev", "determinant_rel_dev", "ode_steps"]);
    let header = ctx.header(
        cli,
        &[
            format!("seed: {} samples: {}", cli.seed, cli.samples),
            format!("max transfer_rel_dev: {} (tolerance {:e})", fmt_num(max_rel), ORACLE_REL_TOLERANCE),
            format!("max determinant_rel_dev: {} (tolerance {:e})", fmt_num(max_det), DETERMINANT_TOLERANCE),
        ],
    );
    let path = write_file(&cli.out, "oracle_check.csv", &render_csv(&header, &columns, &rows))?;
    println!("max transfer deviation {max_rel:.3e}, max determinant deviation {max_det:.3e}");
    if max_rel >= ORACLE_REL_TOLERANCE || max_det >= DETERMINANT_TOLERANCE {
        let worst = samples.iter().max_by(|a, b| a.rel_dev.total_cmp(&b.rel_dev)).expect("non-empty");
        return Err(CliError {
            code: EXIT_NUMERICAL,
            message: format!(
                "propagation::transfer disagrees with the oracle at z={}, omega_tau={} (rel {:e}, det {:e}); see {}",
                worst.z,
                worst.omega_tau,
                max_rel,
                max_det,
                path.display()
            ),
        });
    }
    Ok(vec![path])
}

/// Parameters that sweeps accept besides the model fields.
const SWEEP_PSEUDO: [&str; 2] = ["k", "detuning_tau"];

fn sweep_axis(ctx: &Context, g: &GridSpec) -> CliResult<Vec<f64>> {
    if SWEEP_PSEUDO.contains(&g.key.as_str()) {
        let (a, b) = g.numeric()?;
        return g.values(a, b);
    }
    if !parameter_names().contains(&g.key.as_str()) || matches!(g.key.as_str(), "angular_convention" | "gamma_hz") {
        return Err(CliError::config(format!("cannot sweep '{}'", g.key)));
    }
    let endpoint = |s: &str| -> CliResult<f64> {
        let mut d = ctx.doc.clone();
        d.set(&g.key, s).map_err(|e| CliError::config(e.to_string()))?;
        let p = d.resolve(ctx.conv).map_err(|e| CliError::config(e.to_string()))?;
        match ParamDoc::from_params(&p).0.get(&g.key) {
            Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
            Some(Value::Array(v)) => Ok(v[0].as_f64().unwrap_or(f64::NAN)),
            _ => Err(CliError::config(format!("grid '{}': endpoint '{s}' is not numeric", g.key))),
        }
    };
    g.values(endpoint(&g.start)?, endpoint(&g.stop)?)
}

fn sweep_point(ctx: &Context, keys: &[&str], values: &[f64]) -> CliResult<ModelParams> {
    let mut doc = ctx.doc.clone();
    for (k, v) in keys.iter().zip(values) {
        if !SWEEP_PSEUDO.contains(k) {
            doc.set(k, &format!("{v:e}")).map_err(|e| CliError::config(e.to_string()))?;
        }
    }
    let mut p = resolve(&doc, ctx.conv)?;
    if let Some(x) = ctx.detuning_tau {
        p = p.with_detuning_tau(x);
    }
    for (k, v) in keys.iter().zip(values) {
        match *k {
            "k" => p = p.with_k(*v),
            "detuning_tau" => p = p.with_detuning_tau(*v),
            _ => {}
        }
    }
    Ok(p)
}

fn evaluate(q: Quantity, cli: &Cli, p: &ModelParams) -> crate::Result<f64> {
    let ds = derive_ds(p);
    match q {
        Quantity::VgPlus | Quantity::VgMinus => {
            let (a, b) = group_velocities(VgRoute::FiniteDifference, &ds, p)?;
            Ok(if q == Quantity::VgPlus { a.re } else { b.re } / p.c)
        }
        Quantity::BetaPlus | Quantity::BetaMinus => {
            let k = zero_freq_constants(&ds, p)?;
            Ok(if q == Quantity::BetaPlus { k.beta_plus.re } else { k.beta_minus.re })
        }
        Quantity::Alpha20Ratio => alpha20_ratio(cli.length, p, cli.cutoff),
        Quantity::CorrTime => {
            let grid = G2Grid { check_doubling: false, ..G2Grid::default() };
            let s = normalize_g2(g2_cross(&crate::correlation::default_tau_grid(), cli.length, &ds, p, &grid)?)?;
            Ok(correlation_time(&s).unwrap_or(f64::NAN))
        }
        Quantity::EtaTot1 | Quantity::EtaTot2 => {
            let mut oc = OpticalConstants::rb87(p.tau_p);
            oc.area = AreaConvention::parse(&cli.area).ok_or_else(|| Error::Config("bad --area".into()))?;
            let units = UnitConvention::parse(&cli.units).ok_or_else(|| Error::Config("bad --units".into()))?;
            let r = conversion_efficiencies(cli.length, p, &oc, None, units)?;
            Ok(if q == Quantity::EtaTot1 { r.eta_tot1_per_cm } else { r.eta_tot2_per_cm })
        }
    }
}

fn sweep(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let q = cli.quantity.ok_or_else(|| CliError::config("sweep needs --quantity"))?;
    if ctx.grids.is_empty() || ctx.grids.len() > 2 {
        return Err(CliError::config("sweep needs one or two --grid ranges"));
    }
    if ctx.grids.len() == 2 && ctx.grids[0].key == ctx.grids[1].key {
        return Err(CliError::config("sweep grids must name different parameters"));
    }
    if matches!(q, Quantity::EtaTot1 | Quantity::EtaTot2) {
        optics(cli, ctx.params.tau_p)?;
    }
    let keys: Vec<&str> = ctx.grids.iter().map(|g| g.key.as_str()).collect();
    let axes: Vec<Vec<f64>> = ctx.grids.iter().map(|g| sweep_axis(ctx, g)).collect::<CliResult<_>>()?;
    let points: Vec<Vec<f64>> = match axes.as_slice() {
        [a] => a.iter().map(|&x| vec![x]).collect(),
        [a, b] => a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect(),
        _ => unreachable!("grid count checked above"),
    };
    let quantity = q.to_possible_value().expect("no skipped variants").get_name().to_string();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|pt| {
            let p = sweep_point(ctx, &keys, pt)?;
            let sample: Vec<String> = keys.iter().zip(pt).map(|(k, v)| format!("{k}={v:e}")).collect();
            let v = evaluate(q, cli, &p).map_err(|e| CliError::at(e, "sweep", &quantity, &sample.join(", ")))?;
            let mut row = pt.clone();
            row.push(v);
            Ok(row)
        })
        .collect::<CliResult<_>>()?;
    let mut columns: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
    columns.push(quantity.replace('-', "_"));
    let header = ctx.header(
        cli,
        &[
            format!("quantity: {quantity}"),
            format!("length: {}", fmt_num(cli.length)),
            format!("cutoff: {}", cli.cutoff),
        ],
    );
    Ok(vec![write_file(&cli.out, "sweep.csv", &render_csv(&header, &columns, &rows))?])
}

fn calibrate(cli: &Cli, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let mut built = Vec::new();
    for conv in AngularConvention::ALL {
        built.push((conv, resolve(&ctx.doc, Some(conv))?));
    }
    let report = calibrate_convention(|conv| {
        built.iter().find(|(c, _)| *c == conv).map(|(_, p)| p.clone()).expect("every convention resolved")
    });
    println!("chosen convention: {} (ambiguous: {})", report.chosen.label(), report.ambiguous);
    let doc = json!({ "metadata": ctx.header(cli, &[]), "calibration": report });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    Ok(vec![write_file(&cli.out, "calibration.json", &text)?])
}
