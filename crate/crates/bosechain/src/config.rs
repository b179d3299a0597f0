//! Plain-text `key = value` configuration.
//!
//! One assignment per line; `#` starts a comment. Keys are dotted
//! (`chain.L`, `left.gamma`, ...). Every key is optional and defaults to the
//! two-ring setup with `L = 5`, `gamma = 0.1`, `beta = 0.1`, `n_L = 1`,
//! `n_R = 0.1`, `epsilon = 0.4`. [`emit`] writes every key, so
//! `parse(emit(c)) == c`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use bosechain_core::model::{Side, SystemSpec};

/// Location and reason of a rejected configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },
    #[error("key `{key}` on line {second} repeats line {first}")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

/// Solver selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Exact,
    Langevin,
    Born,
    Markov,
    Analytic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Langevin => "langevin",
            Method::Born => "born",
            Method::Markov => "markov",
            Method::Analytic => "analytic",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "exact" => Method::Exact,
            "langevin" => Method::Langevin,
            "born" => Method::Born,
            "markov" => Method::Markov,
            "analytic" => Method::Analytic,
            _ => return Err(format!("unknown method `{s}`; expected exact, langevin, born, markov or analytic")),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinPlan {
    pub trajectories: u64,
    pub t_transient: f64,
    pub t_average: f64,
    pub dt: f64,
    pub vacuum_half: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BornPlan {
    /// Integrator step; `None` lets the solver choose.
    pub dt: Option<f64>,
    pub memory_cutoff: f64,
    /// Propagate to this time instead of solving for the fixed point.
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonancePlan {
    pub delta_min: f64,
    pub delta_max: f64,
    /// Gate values of a per-point sweep.
    pub points: usize,
    /// Ramp duration in tunneling periods `T = 2 pi / J_s`.
    pub periods: f64,
    pub bins: usize,
    pub t_transient: f64,
    /// Interaction constants `g = U n_L`, one curve each.
    pub g_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPlan {
    pub trajectories: u64,
    pub samples: usize,
    pub stride: usize,
    pub segments: usize,
    pub t_transient: f64,
    /// 1-based chain sites whose amplitude spectra are written.
    pub sites: Vec<usize>,
}

/// One swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub method: Method,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Include wall-clock seconds in grid tables (makes files run-dependent).
    pub timing: bool,
    /// Largest accepted relative residual of a stationary solve.
    pub residual_tolerance: f64,
    pub axes: Vec<SweepAxis>,
    pub langevin: LangevinPlan,
    pub born: BornPlan,
    pub markov_t_final: Option<f64>,
    pub resonance: ResonancePlan,
    pub spectrum: SpectrumPlan,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            method: Method::Exact,
            seed: 0,
            output: None,
            timing: true,
            residual_tolerance: 1e-8,
            axes: Vec::new(),
            langevin: LangevinPlan {
                trajectories: 200,
                t_transient: 200.0,
                t_average: 100.0,
                dt: 0.01,
                vacuum_half: false,
            },
            born: BornPlan {
                dt: None,
                memory_cutoff: 40.0,
                t_final: None,
            },
            markov_t_final: None,
            resonance: ResonancePlan {
                delta_min: -3.0,
                delta_max: 1.0,
                points: 81,
                periods: 1000.0,
                bins: 80,
                t_transient: 200.0,
                g_values: vec![0.0],
            },
            spectrum: SpectrumPlan {
                trajectories: 4,
                samples: 4096,
                stride: 25,
                segments: 8,
                t_transient: 200.0,
                sites: vec![1],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub system: SystemSpec,
    pub plan: ExperimentPlan,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            system: SystemSpec::two_rings(0.1, 0.1, 1.0, 0.1, 0.4),
            plan: ExperimentPlan::default(),
        }
    }
}

/// Numeric system parameters addressable by sweep axes. The aliases
/// `gamma`, `beta`, `M` and `Jr` set both rings.
pub const SWEEPABLE: &[&str] = &[
    "chain.L",
    "chain.Js",
    "chain.delta",
    "chain.U",
    "chain.g",
    "left.M",
    "left.Jr",
    "left.gamma",
    "left.beta",
    "left.nbar",
    "right.M",
    "right.Jr",
    "right.gamma",
    "right.beta",
    "right.nbar",
    "epsilon",
    "gamma",
    "beta",
    "M",
    "Jr",
];

/// Sets a numeric system parameter by key.
pub fn set_system_value(s: &mut SystemSpec, key: &str, v: f64) -> Result<(), String> {
    let count = |v: f64| -> Result<usize, String> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(format!("`{key}` needs a non-negative integer, got {v}"))
        }
    };
    match key {
        "chain.L" => s.chain.sites = count(v)?,
        "chain.Js" => s.chain.hopping = v,
        "chain.delta" => s.chain.gate = v,
        "chain.U" => s.chain.interaction = v,
        "chain.g" => s.set_macroscopic_interaction(v),
        "epsilon" => s.coupling = v,
        "gamma" => {
            s.left.relaxation = v;
            s.right.relaxation = v;
        }
        "beta" => {
            s.left.beta = v;
            s.right.beta = v;
        }
        "M" => {
            s.left.modes = count(v)?;
            s.right.modes = count(v)?;
        }
        "Jr" => {
            s.left.hopping = v;
            s.right.hopping = v;
        }
        _ => {
            let (side, field) = key.split_once('.').ok_or_else(|| format!("unknown key `{key}`"))?;
            let r = match side {
                "left" => &mut s.left,
                "right" => &mut s.right,
                _ => return Err(format!("unknown key `{key}`")),
            };
            match field {
                "M" => r.modes = count(v)?,
                "Jr" => r.hopping = v,
                "gamma" => r.relaxation = v,
                "beta" => r.beta = v,
                "nbar" => r.density = v,
                _ => return Err(format!("unknown key `{key}`")),
            }
        }
    }
    Ok(())
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    value_column: usize,
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let column = content.len() - content.trim_start().len() + 1;
            return Err(ConfigError::Parse {
                line,
                column,
                reason: "expected `key = value`".into(),
            });
        };
        let key = content[..eq].trim();
        let key_column = content.len() - content.trim_start().len() + 1;
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Parse {
                line,
                column: key_column,
                reason: format!("malformed key `{key}`"),
            });
        }
        let after = &content[eq + 1..];
        let value = after.trim();
        let value_column = eq + 2 + (after.len() - after.trim_start().len());
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                column: eq + 2,
                reason: format!("missing value for `{key}`"),
            });
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
            value_column,
        });
    }
    Ok(out)
}

/// Parses a configuration text.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Parses a configuration text, then applies `key=value` overrides (which
/// replace file values instead of counting as duplicates).
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut entries = tokenize(text)?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    for e in &entries {
        let canonical = if e.key == "chain.g" { "chain.U" } else { e.key.as_str() };
        if let Some(first) = seen.insert(canonical.to_string(), e.line) {
            return Err(ConfigError::Duplicate {
                key: e.key.clone(),
                first,
                second: e.line,
            });
        }
    }
    for (i, o) in overrides.iter().enumerate() {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: 0,
            column: 1,
            reason: format!("override #{} `{o}` is not key=value", i + 1),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let replaces = |k: &str| k == key || (key == "chain.g" && k == "chain.U") || (key == "chain.U" && k == "chain.g");
        entries.retain(|e| !replaces(&e.key));
        entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: 0,
            value_column: key.len() + 2,
        });
    }
    let mut cfg = Config::default();
    for e in &entries {
        apply(&mut cfg, e).map_err(|reason| ConfigError::Parse {
            line: e.line,
            column: e.value_column,
            reason,
        })?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, String> {
    e.value
        .parse::<T>()
        .map_err(|_| format!("`{}` is not a valid value for `{}`", e.value, e.key))
}

fn parse_optional_f64(e: &Entry) -> Result<Option<f64>, String> {
    if e.value == "auto" || e.value == "none" {
        Ok(None)
    } else {
        parse_value(e).map(Some)
    }
}

fn parse_bool(e: &Entry) -> Result<bool, String> {
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(format!("`{other}` is not a boolean for `{}`", e.key)),
    }
}

/// Value list: comma separated numbers, `linspace(a, b, n)` or
/// `logspace(a, b, n)` (exponents of ten).
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let t = text.trim();
    for (name, log) in [("linspace", false), ("logspace", true)] {
        if let Some(args) = t.strip_prefix(name) {
            let inner = args
                .trim()
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or_else(|| format!("malformed `{t}`"))?;
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("`{name}` takes (start, stop, count)"));
            }
            let a: f64 = parts[0].parse().map_err(|_| format!("bad start `{}`", parts[0]))?;
            let b: f64 = parts[1].parse().map_err(|_| format!("bad stop `{}`", parts[1]))?;
            let n: usize = parts[2].parse().map_err(|_| format!("bad count `{}`", parts[2]))?;
            if n == 0 {
                return Err(format!("`{name}` needs at least one point"));
            }
            return Ok((0..n)
                .map(|i| {
                    let x = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                    if log {
                        10f64.powf(x)
                    } else {
                        x
                    }
                })
                .collect());
        }
    }
    t.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", p.trim())))
        .collect()
}

fn parse_sites(e: &Entry) -> Result<Vec<usize>, String> {
    e.value
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("`{}` is not a site index", p.trim())))
        .collect()
}

fn apply(cfg: &mut Config, e: &Entry) -> Result<(), String> {
    let p = &mut cfg.plan;
    match e.key.as_str() {
        "method" => p.method = e.value.parse()?,
        "seed" => p.seed = parse_value(e)?,
        "output" => p.output = Some(PathBuf::from(&e.value)),
        "output.timing" => p.timing = parse_bool(e)?,
        "tolerance.residual" => p.residual_tolerance = parse_value(e)?,
        "langevin.trajectories" => p.langevin.trajectories = parse_value(e)?,
        "langevin.t_transient" => p.langevin.t_transient = parse_value(e)?,
        "langevin.t_average" => p.langevin.t_average = parse_value(e)?,
        "langevin.dt" => p.langevin.dt = parse_value(e)?,
        "langevin.vacuum_half" => p.langevin.vacuum_half = parse_bool(e)?,
        "born.dt" => p.born.dt = parse_optional_f64(e)?,
        "born.memory_cutoff" => p.born.memory_cutoff = parse_value(e)?,
        "born.t_final" => p.born.t_final = parse_optional_f64(e)?,
        "markov.t_final" => p.markov_t_final = parse_optional_f64(e)?,
        "resonance.delta_min" => p.resonance.delta_min = parse_value(e)?,
        "resonance.delta_max" => p.resonance.delta_max = parse_value(e)?,
        "resonance.points" => p.resonance.points = parse_value(e)?,
        "resonance.periods" => p.resonance.periods = parse_value(e)?,
        "resonance.bins" => p.resonance.bins = parse_value(e)?,
        "resonance.t_transient" => p.resonance.t_transient = parse_value(e)?,
        "resonance.g" => p.resonance.g_values = parse_list(&e.value)?,
        "spectrum.trajectories" => p.spectrum.trajectories = parse_value(e)?,
        "spectrum.samples" => p.spectrum.samples = parse_value(e)?,
        "spectrum.stride" => p.spectrum.stride = parse_value(e)?,
        "spectrum.segments" => p.spectrum.segments = parse_value(e)?,
        "spectrum.t_transient" => p.spectrum.t_transient = parse_value(e)?,
        "spectrum.sites" => p.spectrum.sites = parse_sites(e)?,
        key if key.starts_with("sweep.") => {
            let axis = &key["sweep.".len()..];
            if !SWEEPABLE.contains(&axis) {
                return Err(format!("`{axis}` cannot be swept; choose one of {}", SWEEPABLE.join(", ")));
            }
            let values = parse_list(&e.value)?;
            p.axes.push(SweepAxis {
                key: axis.to_string(),
                values,
            });
        }
        key if SWEEPABLE.contains(&key) && !matches!(key, "gamma" | "beta" | "M" | "Jr") => {
            let v: f64 = parse_value(e)?;
            set_system_value(&mut cfg.system, key, v)?;
        }
        key => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Validation(format!("{name} = {v} violates {name} > 0")))
    }
}

/// Checks the system invariants and method-parameter compatibility.
pub fn validate(cfg: &Config) -> Result<(), ConfigError> {
    cfg.system.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
    if !(cfg.system.coupling >= 0.0) || !cfg.system.coupling.is_finite() {
        return Err(ConfigError::Validation(format!(
            "epsilon = {} violates epsilon >= 0",
            cfg.system.coupling
        )));
    }
    let p = &cfg.plan;
    let interacting = cfg.system.chain.interaction != 0.0
        || p.axes
            .iter()
            .any(|a| (a.key == "chain.U" || a.key == "chain.g") && a.values.iter().any(|v| *v != 0.0));
    if interacting && p.method != Method::Langevin {
        return Err(ConfigError::Validation(format!(
            "a nonzero interaction requires method = langevin, not {}",
            p.method
        )));
    }
    for axis in &p.axes {
        if axis.values.is_empty() {
            return Err(ConfigError::Validation(format!("sweep axis `{}` has no values", axis.key)));
        }
        if p.axes.iter().filter(|a| a.key == axis.key).count() > 1 {
            return Err(ConfigError::Validation(format!("sweep axis `{}` given twice", axis.key)));
        }
    }
    positive("tolerance.residual", p.residual_tolerance)?;
    positive("langevin.dt", p.langevin.dt)?;
    positive("langevin.t_average", p.langevin.t_average)?;
    if !(p.langevin.t_transient >= 0.0) {
        return Err(ConfigError::Validation("langevin.t_transient must be >= 0".into()));
    }
    if p.langevin.trajectories < 2 {
        return Err(ConfigError::Validation(format!(
            "langevin.trajectories = {} violates trajectories >= 2",
            p.langevin.trajectories
        )));
    }
    if let Some(dt) = p.born.dt {
        positive("born.dt", dt)?;
    }
    positive("born.memory_cutoff", p.born.memory_cutoff)?;
    if !(p.resonance.delta_max > p.resonance.delta_min) {
        return Err(ConfigError::Validation(
            "resonance.delta_max must exceed resonance.delta_min".into(),
        ));
    }
    if p.resonance.points < 2 || p.resonance.bins == 0 {
        return Err(ConfigError::Validation(
            "resonance.points >= 2 and resonance.bins >= 1 required".into(),
        ));
    }
    positive("resonance.periods", p.resonance.periods)?;
    if p.resonance.g_values.is_empty() || p.resonance.g_values.iter().any(|g| !(*g >= 0.0)) {
        return Err(ConfigError::Validation("resonance.g needs at least one value, all >= 0".into()));
    }
    if p.resonance.g_values.iter().any(|g| *g != 0.0) && p.method != Method::Langevin {
        return Err(ConfigError::Validation(format!(
            "resonance.g != 0 requires method = langevin, not {}",
            p.method
        )));
    }
    if p.spectrum.samples < 2 * p.spectrum.segments.max(2)
        || p.spectrum.segments == 0
        || p.spectrum.stride == 0
        || p.spectrum.trajectories == 0
    {
        return Err(ConfigError::Validation(
            "spectrum needs segments >= 1, stride >= 1, trajectories >= 1 and samples >= 2 * segments".into(),
        ));
    }
    if let Some(bad) = p.spectrum.sites.iter().find(|s| **s == 0 || **s > cfg.system.chain.sites) {
        return Err(ConfigError::Validation(format!(
            "spectrum.sites entry {bad} is outside 1..={}",
            cfg.system.chain.sites
        )));
    }
    if p.method == Method::Analytic {
        let (l, r) = (
            cfg.system.effective_relaxation(Side::Left),
            cfg.system.effective_relaxation(Side::Right),
        );
        if l != r {
            return Err(ConfigError::Validation(format!(
                "method = analytic needs equal end rates epsilon^2/gamma, got {l} and {r}"
            )));
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// Writes every key of `cfg` in canonical order.
pub fn emit(cfg: &Config) -> String {
    let s = &cfg.system;
    let p = &cfg.plan;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("chain.L", s.chain.sites.to_string());
    kv("chain.Js", s.chain.hopping.to_string());
    kv("chain.delta", s.chain.gate.to_string());
    kv("chain.U", s.chain.interaction.to_string());
    for (name, r) in [("left", &s.left), ("right", &s.right)] {
        kv(&format!("{name}.M"), r.modes.to_string());
        kv(&format!("{name}.Jr"), r.hopping.to_string());
        kv(&format!("{name}.gamma"), r.relaxation.to_string());
        kv(&format!("{name}.beta"), r.beta.to_string());
        kv(&format!("{name}.nbar"), r.density.to_string());
    }
    kv("epsilon", s.coupling.to_string());
    kv("method", p.method.to_string());
    kv("seed", p.seed.to_string());
    if let Some(o) = &p.output {
        kv("output", o.display().to_string());
    }
    kv("output.timing", p.timing.to_string());
    kv("tolerance.residual", p.residual_tolerance.to_string());
    kv("langevin.trajectories", p.langevin.trajectories.to_string());
    kv("langevin.t_transient", p.langevin.t_transient.to_string());
    kv("langevin.t_average", p.langevin.t_average.to_string());
    kv("langevin.dt", p.langevin.dt.to_string());
    kv("langevin.vacuum_half", p.langevin.vacuum_half.to_string());
    kv("born.dt", opt(p.born.dt));
    kv("born.memory_cutoff", p.born.memory_cutoff.to_string());
    kv("born.t_final", opt(p.born.t_final));
    kv("markov.t_final", opt(p.markov_t_final));
    kv("resonance.delta_min", p.resonance.delta_min.to_string());
    kv("resonance.delta_max", p.resonance.delta_max.to_string());
    kv("resonance.points", p.resonance.points.to_string());
    kv("resonance.periods", p.resonance.periods.to_string());
    kv("resonance.bins", p.resonance.bins.to_string());
    kv("resonance.t_transient", p.resonance.t_transient.to_string());
    kv("resonance.g", list(&p.resonance.g_values));
    kv("spectrum.trajectories", p.spectrum.trajectories.to_string());
    kv("spectrum.samples", p.spectrum.samples.to_string());
    kv("spectrum.stride", p.spectrum.stride.to_string());
    kv("spectrum.segments", p.spectrum.segments.to_string());
    kv("spectrum.t_transient", p.spectrum.t_transient.to_string());
    kv(
        "spectrum.sites",
        p.spectrum.sites.iter().map(usize::to_string).collect::<Vec<_>>().join(", "),
    );
    for axis in &p.axes {
        kv(&format!("sweep.{}", axis.key), list(&axis.values));
    }
    out
}
