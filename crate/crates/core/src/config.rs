//! Sectioned `key = value` problem descriptions.
//!
//! ```text
//! # 2-D robot, reach the box [5,7]²
//! [state]
//! lb  = -10, -10
//! ub  = 10, 10
//! eta = 1, 1
//!
//! [dynamics]
//! f1 = x1 + 10*u1*cos(u2)
//! f2 = x2 + 10*u1*sin(u2)
//!
//! [noise]
//! type  = normal
//! sigma = sqrt(0.75), sqrt(0.75)
//! ```
//!
//! Numeric values are comma-separated constant expressions in the dynamics
//! language, so `sqrt(0.75)` or `2*pi` are accepted wherever a number is.
//! Unknown sections and keys are rejected to catch typos early.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::abstraction::AbstractionOptions;
use crate::expr::{parse_density, parse_expression, parse_predicate, Dims, DynamicsSpec, Env, Predicate};
use crate::grid::Space;
use crate::kernel::NoiseModel;
use crate::synthesis::{Horizon, Mode, SpecKind, SynthesisOptions};

/// Monte Carlo samples per integral when `samples` is not given.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// `plan` warns when the dense matrices exceed this many bytes.
pub const DEFAULT_MEMORY_WARNING: u64 = 16 << 30;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("[{section}] is missing `{key}`")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key}: {message}")]
    Invalid {
        section: String,
        key: String,
        message: String,
    },
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("state", &["lb", "ub", "eta"]),
    ("input", &["lb", "ub", "eta"]),
    ("disturb", &["lb", "ub", "eta"]),
    ("dynamics", &[]),
    ("noise", &["type", "sigma", "inv_cov", "det", "samples", "density"]),
    ("spec", &["type", "target", "avoid"]),
    (
        "synthesis",
        &[
            "policy",
            "epsilon",
            "horizon",
            "max_iterations",
            "workers",
            "seed",
            "low_cost",
            "optimizer_max_evals",
            "optimizer_tol",
            "multistart",
            "zero_cutoff",
        ],
    ),
    ("plan", &["memory_warning_gb"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// The raw `section → key → value` map.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let syntax = |message: String| ConfigError::Syntax {
                line: line_no,
                message,
            };
            let t = strip_comment(line).trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(format!("malformed section header `{t}`")))?
                    .trim()
                    .to_string();
                let known = SECTIONS.iter().any(|(s, _)| *s == name);
                if !known {
                    return Err(syntax(format!("unknown section [{name}]")));
                }
                if raw.sections.contains_key(&name) {
                    return Err(syntax(format!("duplicate section [{name}]")));
                }
                raw.sections.insert(name.clone(), (line_no, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let Some((key, value)) = t.split_once('=') else {
                return Err(syntax(format!("expected `key = value`, found `{t}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .as_ref()
                .ok_or_else(|| syntax(format!("`{key}` appears before any section")))?;
            if !key_allowed(section, key) {
                return Err(syntax(format!("unknown key `{key}` in [{section}]")));
            }
            let keys = &mut raw.sections.get_mut(section).expect("section inserted").1;
            if keys.contains_key(key) {
                return Err(syntax(format!("duplicate key `{key}` in [{section}]")));
            }
            keys.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: line_no,
                },
            );
        }
        Ok(raw)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|(_, k)| k.get(key))
    }

    fn keys(&self, section: &str) -> impl Iterator<Item = (&String, &Entry)> {
        self.sections.get(section).into_iter().flat_map(|(_, k)| k.iter())
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn key_allowed(section: &str, key: &str) -> bool {
    if section == "dynamics" {
        return key
            .strip_prefix('f')
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) && !n.starts_with('0'));
    }
    SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key))
}

/// Splits at commas that are not nested inside parentheses.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

/// Evaluates a constant expression such as `sqrt(0.75)` or `-1e-3`.
pub fn eval_constant(text: &str) -> Result<f64, String> {
    let e = parse_expression(text.trim(), Dims::new(0, 0, 0)).map_err(|e| e.to_string())?;
    let v = e.eval(&Env::default()).map_err(|e| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{}` is not finite", text.trim()))
    }
}

pub fn eval_list(text: &str) -> Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    split_top_level(text).into_iter().map(eval_constant).collect()
}

/// Specification section after validation.
#[derive(Debug, Clone)]
pub struct SpecConfig {
    pub kind: SpecKind,
    pub target: Option<Predicate>,
    pub avoid: Option<Predicate>,
}

/// `[synthesis]` options, with defaults for everything.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub synthesis: SynthesisOptions,
    pub abstraction: AbstractionOptions,
    pub workers: Option<usize>,
}

/// A validated problem description. Sections a subcommand does not need may
/// be absent; use the `require_*` accessors to demand them.
#[derive(Debug, Clone)]
pub struct Config {
    pub state: Space,
    pub input: Option<Space>,
    pub disturb: Option<Space>,
    pub dynamics: Option<DynamicsSpec>,
    pub noise: Option<NoiseModel>,
    pub spec: Option<SpecConfig>,
    pub run: RunConfig,
    pub memory_warning: u64,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let state = space(raw, "state")?.ok_or_else(|| ConfigError::MissingSection("state".into()))?;
        let input = space(raw, "input")?;
        let disturb = space(raw, "disturb")?;
        let n = state.dims();
        let dims = Dims::new(
            n,
            input.as_ref().map_or(0, Space::dims),
            disturb.as_ref().map_or(0, Space::dims),
        );
        let dynamics = dynamics(raw, dims)?;
        let noise = noise(raw, n)?;
        let spec = spec(raw, n)?;
        let run = run(raw)?;
        let memory_warning = match raw.get("plan", "memory_warning_gb") {
            Some(e) => {
                let gb = number(e, "plan", "memory_warning_gb")?;
                if !(gb > 0.0) {
                    return Err(invalid("plan", "memory_warning_gb", "must be positive"));
                }
                (gb * (1u64 << 30) as f64) as u64
            }
            None => DEFAULT_MEMORY_WARNING,
        };
        Ok(Self {
            state,
            input,
            disturb,
            dynamics,
            noise,
            spec,
            run,
            memory_warning,
        })
    }

    pub fn require_dynamics(&self) -> Result<&DynamicsSpec, ConfigError> {
        self.dynamics
            .as_ref()
            .ok_or_else(|| ConfigError::MissingSection("dynamics".into()))
    }

    pub fn require_noise(&self) -> Result<&NoiseModel, ConfigError> {
        self.noise
            .as_ref()
            .ok_or_else(|| ConfigError::MissingSection("noise".into()))
    }

    pub fn require_spec(&self) -> Result<&SpecConfig, ConfigError> {
        self.spec
            .as_ref()
            .ok_or_else(|| ConfigError::MissingSection("spec".into()))
    }
}

fn invalid(section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        section: section.into(),
        key: key.into(),
        message: message.into(),
    }
}

fn at_line(e: &Entry, message: impl std::fmt::Display) -> String {
    format!("{message} (line {})", e.line)
}

fn list(e: &Entry, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
    eval_list(&e.value).map_err(|m| invalid(section, key, at_line(e, m)))
}

fn number(e: &Entry, section: &str, key: &str) -> Result<f64, ConfigError> {
    eval_constant(&e.value).map_err(|m| invalid(section, key, at_line(e, m)))
}

fn integer(e: &Entry, section: &str, key: &str) -> Result<usize, ConfigError> {
    e.value
        .trim()
        .parse::<usize>()
        .map_err(|_| invalid(section, key, at_line(e, format!("expected a non-negative integer, found `{}`", e.value))))
}

fn flag(e: &Entry, section: &str, key: &str) -> Result<bool, ConfigError> {
    match e.value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(invalid(section, key, at_line(e, format!("expected true or false, found `{other}`")))),
    }
}

fn required<'a>(raw: &'a RawConfig, section: &str, key: &str) -> Result<&'a Entry, ConfigError> {
    raw.get(section, key).ok_or_else(|| ConfigError::MissingKey {
        section: section.into(),
        key: key.into(),
    })
}

fn space(raw: &RawConfig, section: &str) -> Result<Option<Space>, ConfigError> {
    if !raw.has_section(section) {
        return Ok(None);
    }
    let lb = list(required(raw, section, "lb")?, section, "lb")?;
    let ub = list(required(raw, section, "ub")?, section, "ub")?;
    let eta = list(required(raw, section, "eta")?, section, "eta")?;
    if lb.is_empty() {
        return Err(invalid(section, "lb", "at least one dimension is required"));
    }
    Space::new(lb, ub, eta)
        .map(Some)
        .map_err(|e| invalid(section, "lb/ub/eta", e.to_string()))
}

fn dynamics(raw: &RawConfig, dims: Dims) -> Result<Option<DynamicsSpec>, ConfigError> {
    if !raw.has_section("dynamics") {
        return Ok(None);
    }
    let n = dims.state;
    let mut texts = Vec::with_capacity(n);
    for i in 1..=n {
        let key = format!("f{i}");
        texts.push(required(raw, "dynamics", &key)?);
    }
    if let Some((key, _)) = raw
        .keys("dynamics")
        .find(|(k, _)| k[1..].parse::<usize>().map_or(true, |i| i > n))
    {
        return Err(invalid("dynamics", key, format!("the state has only {n} dimensions")));
    }
    let exprs = texts
        .iter()
        .enumerate()
        .map(|(i, e)| {
            parse_expression(&e.value, dims)
                .map_err(|err| invalid("dynamics", &format!("f{}", i + 1), at_line(e, err)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    DynamicsSpec::new(exprs, dims)
        .map(Some)
        .map_err(|e| invalid("dynamics", "f", e.to_string()))
}

fn noise(raw: &RawConfig, n: usize) -> Result<Option<NoiseModel>, ConfigError> {
    if !raw.has_section("noise") {
        return Ok(None);
    }
    const S: &str = "noise";
    let kind = required(raw, S, "type")?;
    let samples = match raw.get(S, "samples") {
        Some(e) => integer(e, S, "samples")?,
        None => DEFAULT_SAMPLES,
    };
    let forbid = |keys: &[&str]| -> Result<(), ConfigError> {
        match keys.iter().find(|k| raw.get(S, k).is_some()) {
            Some(k) => Err(invalid(S, k, format!("not used by noise type `{}`", kind.value))),
            None => Ok(()),
        }
    };
    let model = match kind.value.as_str() {
        "normal" | "diagonal" => {
            forbid(&["inv_cov", "det", "density", "samples"])?;
            let sigma = list(required(raw, S, "sigma")?, S, "sigma")?;
            if sigma.len() != n {
                return Err(invalid(S, "sigma", format!("expected {n} values, found {}", sigma.len())));
            }
            NoiseModel::diagonal(sigma)
        }
        "full_normal" => {
            forbid(&["sigma", "density"])?;
            let inv_cov = list(required(raw, S, "inv_cov")?, S, "inv_cov")?;
            if inv_cov.len() != n * n {
                return Err(invalid(
                    S,
                    "inv_cov",
                    format!("expected {} values (row-major {n}×{n}), found {}", n * n, inv_cov.len()),
                ));
            }
            let det = number(required(raw, S, "det")?, S, "det")?;
            NoiseModel::full_normal(inv_cov, det, samples)
        }
        "custom" => {
            forbid(&["sigma", "inv_cov", "det"])?;
            let e = required(raw, S, "density")?;
            let density = parse_density(&e.value, n).map_err(|err| invalid(S, "density", at_line(e, err)))?;
            NoiseModel::custom(density, n, samples)
        }
        other => {
            return Err(invalid(
                S,
                "type",
                format!("unknown noise type `{other}` (expected normal, full_normal or custom)"),
            ))
        }
    };
    model.map(Some).map_err(|e| invalid(S, "parameters", e.to_string()))
}

fn spec(raw: &RawConfig, n: usize) -> Result<Option<SpecConfig>, ConfigError> {
    if !raw.has_section("spec") {
        return Ok(None);
    }
    const S: &str = "spec";
    let kind_entry = required(raw, S, "type")?;
    let kind = SpecKind::from_name(kind_entry.value.trim()).ok_or_else(|| {
        invalid(
            S,
            "type",
            format!("unknown spec `{}` (expected safety, reach or reach-avoid)", kind_entry.value),
        )
    })?;
    let predicate = |key: &str| -> Result<Option<Predicate>, ConfigError> {
        match raw.get(S, key) {
            Some(e) if !e.value.trim().is_empty() => parse_predicate(&e.value, n)
                .map(Some)
                .map_err(|err| invalid(S, key, at_line(e, err))),
            _ => Ok(None),
        }
    };
    let target = predicate("target")?;
    let avoid = predicate("avoid")?;
    match kind {
        SpecKind::Safety if target.is_some() => {
            return Err(invalid(S, "target", "a safety specification has no target"))
        }
        SpecKind::Reach | SpecKind::ReachAvoid if target.is_none() => {
            return Err(ConfigError::MissingKey {
                section: S.into(),
                key: "target".into(),
            })
        }
        SpecKind::Reach if avoid.is_some() => {
            return Err(invalid(S, "avoid", "use type = reach-avoid to give an avoid region"))
        }
        SpecKind::ReachAvoid if avoid.is_none() => {
            return Err(ConfigError::MissingKey {
                section: S.into(),
                key: "avoid".into(),
            })
        }
        _ => {}
    }
    Ok(Some(SpecConfig { kind, target, avoid }))
}

fn run(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
    const S: &str = "synthesis";
    let mut cfg = RunConfig::default();
    let syn = &mut cfg.synthesis;
    if let Some(e) = raw.get(S, "policy") {
        syn.mode = Mode::from_name(e.value.trim()).ok_or_else(|| {
            invalid(S, "policy", format!("expected pessimistic or optimistic, found `{}`", e.value))
        })?;
    }
    if let Some(e) = raw.get(S, "epsilon") {
        syn.eps = number(e, S, "epsilon")?;
        if !(syn.eps > 0.0) {
            return Err(invalid(S, "epsilon", "must be positive"));
        }
    }
    if let Some(e) = raw.get(S, "horizon") {
        syn.horizon = match e.value.trim() {
            "infinite" => Horizon::Infinite,
            _ => Horizon::Finite(integer(e, S, "horizon")?),
        };
    }
    if let Some(e) = raw.get(S, "max_iterations") {
        syn.max_iterations = integer(e, S, "max_iterations")?;
        if syn.max_iterations == 0 {
            return Err(invalid(S, "max_iterations", "must be positive"));
        }
    }
    if let Some(e) = raw.get(S, "workers") {
        let w = integer(e, S, "workers")?;
        if w == 0 {
            return Err(invalid(S, "workers", "must be positive"));
        }
        cfg.workers = Some(w);
    }
    let opts = &mut cfg.abstraction;
    if let Some(e) = raw.get(S, "seed") {
        opts.seed = e
            .value
            .trim()
            .parse::<u64>()
            .map_err(|_| invalid(S, "seed", at_line(e, "expected an unsigned integer")))?;
    }
    if let Some(e) = raw.get(S, "low_cost") {
        opts.low_cost = flag(e, S, "low_cost")?;
    }
    if let Some(e) = raw.get(S, "optimizer_max_evals") {
        opts.optimizer_max_evals = Some(integer(e, S, "optimizer_max_evals")?);
    }
    if let Some(e) = raw.get(S, "optimizer_tol") {
        opts.optimizer_tol = number(e, S, "optimizer_tol")?;
    }
    if let Some(e) = raw.get(S, "multistart") {
        opts.multistart = Some(integer(e, S, "multistart")?);
    }
    if let Some(e) = raw.get(S, "zero_cutoff") {
        opts.zero_cutoff = number(e, S, "zero_cutoff")?;
    }
    opts.validate()
        .map_err(|e| invalid(S, "optimizer", e.to_string()))?;
    Ok(cfg)
}
