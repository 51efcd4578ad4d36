//! Run configuration: flat `key = value` files with command-line overrides.

use std::path::{Path, PathBuf};

use crate::classical::ClassicalMode;
use crate::couplings::{BathSize, CoefficientMode};
use crate::error::{param, Error, Result};
use crate::exactqm::{Estimator, DEFAULT_MAX_BATH};
use crate::heff::{Representation, DEFAULT_Z_NUCLEAR};
use crate::opbasis::DEFAULT_MAX_STATES;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Ieom,
    Classical,
    Exact,
    Frozen,
    Coeffs,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Ieom => "ieom",
            Engine::Classical => "classical",
            Engine::Exact => "exact",
            Engine::Frozen => "frozen",
            Engine::Coeffs => "coeffs",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ieom" => Ok(Engine::Ieom),
            "classical" => Ok(Engine::Classical),
            "exact" => Ok(Engine::Exact),
            "frozen" => Ok(Engine::Frozen),
            "coeffs" => Ok(Engine::Coeffs),
            other => Err(param(
                "engine",
                format!("expected ieom|classical|exact|frozen|coeffs, got `{other}`"),
            )),
        }
    }
}

/// Basis used by the iEoM engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Full constrained product space.
    Full,
    /// States connected to the seed by the enabled terms.
    Reachable,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisKind::Full => "full",
            BasisKind::Reachable => "reachable",
        })
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(BasisKind::Full),
            "reachable" => Ok(BasisKind::Reachable),
            other => Err(param("basis", format!("expected full|reachable, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub engine: Engine,
    pub gamma: Option<f64>,
    pub n_bath: Option<BathSize>,
    pub n_tr: Option<usize>,
    pub n_max: Option<Vec<u32>>,
    pub dt: f64,
    pub t_max: f64,
    pub stride: usize,
    pub h: Vec3,
    pub z_nuclear: f64,
    pub enable_nuclear_zeeman: bool,
    pub representation: Representation,
    pub samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Defaults to exact for finite baths and analytic for the infinite bath.
    pub coefficients: Option<CoefficientMode>,
    pub enable_central: bool,
    pub enable_chain: bool,
    pub basis: BasisKind,
    pub basis_cache: Option<PathBuf>,
    pub max_states: u64,
    pub mode: ClassicalMode,
    /// Random vectors of the exact engine; `0` selects the full trace and
    /// `None` picks by dimension.
    pub vectors: Option<usize>,
    pub estimator: Estimator,
    pub block: usize,
    pub max_bath: usize,
    pub deterministic: bool,
}

/// Recognized keys, in the order they are echoed into output headers.
pub const KEYS: &[&str] = &[
    "engine",
    "gamma",
    "n_bath",
    "n_tr",
    "n_max",
    "dt",
    "t_max",
    "stride",
    "h",
    "z_nuclear",
    "enable_nuclear_zeeman",
    "representation",
    "samples",
    "seed",
    "out",
    "coefficients",
    "enable_central",
    "enable_chain",
    "basis",
    "basis_cache",
    "max_states",
    "mode",
    "vectors",
    "estimator",
    "block",
    "max_bath",
    "deterministic",
];

impl RunConfig {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            gamma: None,
            n_bath: None,
            n_tr: None,
            n_max: None,
            dt: 0.01,
            t_max: 50.0,
            stride: 10,
            h: [0.0; 3],
            z_nuclear: DEFAULT_Z_NUCLEAR,
            enable_nuclear_zeeman: false,
            representation: Representation::Chain,
            samples: 1_000_000,
            seed: 1,
            out: None,
            coefficients: None,
            enable_central: true,
            enable_chain: true,
            basis: BasisKind::Full,
            basis_cache: None,
            max_states: DEFAULT_MAX_STATES,
            mode: ClassicalMode::Dynamic,
            vectors: None,
            estimator: Estimator::Pair,
            block: 16,
            max_bath: DEFAULT_MAX_BATH,
            deterministic: false,
        }
    }

    /// Applies `key=value` pairs in order; later pairs win.
    pub fn apply<K: AsRef<str>, V: AsRef<str>>(
        &mut self,
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<()> {
        for (k, v) in pairs {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let name = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| Error::Parse(format!("unknown configuration key `{key}`")))?;
        let v = value.trim();
        match name {
            "engine" => self.engine = v.parse()?,
            "gamma" => self.gamma = Some(parse_real(name, v)?),
            "n_bath" => self.n_bath = Some(v.parse()?),
            "n_tr" => self.n_tr = Some(parse_int(name, v)?),
            "n_max" => {
                self.n_max = Some(
                    split_list(v)
                        .map(|x| parse_int(name, x))
                        .collect::<Result<Vec<u32>>>()?,
                )
            }
            "dt" => self.dt = parse_real(name, v)?,
            "t_max" => self.t_max = parse_real(name, v)?,
            "stride" => self.stride = parse_int(name, v)?,
            "h" => {
                let h: Vec<f64> = split_list(v)
                    .map(|x| parse_real(name, x))
                    .collect::<Result<_>>()?;
                self.h = h
                    .try_into()
                    .map_err(|_| param(name, format!("expected three components, got `{v}`")))?;
            }
            "z_nuclear" => self.z_nuclear = parse_real(name, v)?,
            "enable_nuclear_zeeman" => self.enable_nuclear_zeeman = parse_bool(name, v)?,
            "representation" => self.representation = v.parse()?,
            "samples" => self.samples = parse_int(name, v)?,
            "seed" => self.seed = parse_int(name, v)?,
            "out" => self.out = non_empty(v).map(PathBuf::from),
            "coefficients" => {
                self.coefficients = match v {
                    "" | "auto" => None,
                    _ => Some(v.parse()?),
                }
            }
            "enable_central" => self.enable_central = parse_bool(name, v)?,
            "enable_chain" => self.enable_chain = parse_bool(name, v)?,
            "basis" => self.basis = v.parse()?,
            "basis_cache" => self.basis_cache = non_empty(v).map(PathBuf::from),
            "max_states" => self.max_states = parse_int(name, v)?,
            "mode" => self.mode = v.parse()?,
            "vectors" => {
                self.vectors = match v {
                    "" | "auto" => None,
                    "full" => Some(0),
                    _ => Some(parse_int(name, v)?),
                }
            }
            "estimator" => self.estimator = v.parse()?,
            "block" => self.block = parse_int(name, v)?,
            "max_bath" => self.max_bath = parse_int(name, v)?,
            "deterministic" => self.deterministic = parse_bool(name, v)?,
            _ => unreachable!("key list and parser disagree on `{name}`"),
        }
        Ok(())
    }

    /// Reads a configuration file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let pairs = parse_pairs(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        self.apply(pairs)
    }

    /// Checks that the fields the engine needs are present and consistent.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(param(name, format!("must be positive and finite, got {x}")))
            }
        };
        positive("dt", self.dt)?;
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(param("t_max", format!("must be non-negative, got {}", self.t_max)));
        }
        if self.stride == 0 {
            return Err(param("stride", "must be at least 1"));
        }
        if self.h.iter().any(|x| !x.is_finite()) {
            return Err(param("h", "components must be finite"));
        }
        let needs_bath = matches!(
            self.engine,
            Engine::Ieom | Engine::Classical | Engine::Exact | Engine::Coeffs
        );
        if needs_bath {
            positive("gamma", self.gamma.ok_or_else(|| missing("gamma", self.engine))?)?;
            let n_bath = self.n_bath.ok_or_else(|| missing("n_bath", self.engine))?;
            if matches!(self.engine, Engine::Classical | Engine::Exact) && n_bath == BathSize::Infinite {
                return Err(param("n_bath", format!("engine {} needs a finite bath", self.engine)));
            }
        }
        match self.engine {
            Engine::Ieom => {
                let n_max = self.n_max.as_ref().ok_or_else(|| missing("n_max", self.engine))?;
                if n_max.is_empty() {
                    return Err(param("n_max", "needs at least one entry"));
                }
                if let Some(n) = self.n_tr {
                    if n != n_max.len() {
                        return Err(param(
                            "n_tr",
                            format!("is {n} but n_max has {} entries", n_max.len()),
                        ));
                    }
                }
                if self.n_bath == Some(BathSize::Infinite) && self.coefficients == Some(CoefficientMode::Exact) {
                    return Err(param("coefficients", "exact coefficients need a finite bath"));
                }
                if !self.enable_central && !self.enable_chain && self.h == [0.0; 3] {
                    return Err(param("enable_central", "no term is enabled"));
                }
            }
            Engine::Coeffs => {
                if self.chain_length().is_none() {
                    return Err(missing("n_tr", self.engine));
                }
            }
            Engine::Classical => {
                if self.samples == 0 {
                    return Err(param("samples", "must be at least 1"));
                }
            }
            Engine::Exact => {
                if self.block == 0 {
                    return Err(param("block", "must be at least 1"));
                }
            }
            Engine::Frozen => {
                if self.h != [0.0; 3] {
                    return Err(param("h", "the frozen-field curve is a zero-field result"));
                }
            }
        }
        Ok(())
    }

    /// `n_tr`, or the length of `n_max` when only that is given.
    pub fn chain_length(&self) -> Option<usize> {
        self.n_tr.or_else(|| self.n_max.as_ref().map(Vec::len))
    }

    /// Coefficient mode after applying the bath-dependent default.
    pub fn coefficient_mode(&self) -> CoefficientMode {
        self.coefficients.unwrap_or(match self.n_bath {
            Some(BathSize::Infinite) => CoefficientMode::Analytic,
            _ => CoefficientMode::Exact,
        })
    }

    /// Canonical `key=value` form of every field, for output headers. Unset
    /// optional fields are omitted.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("engine", self.engine.to_string());
        if let Some(g) = self.gamma {
            push("gamma", fmt_real(g));
        }
        if let Some(n) = self.n_bath {
            push("n_bath", n.to_string());
        }
        if let Some(n) = self.chain_length() {
            push("n_tr", n.to_string());
        }
        if let Some(n) = &self.n_max {
            push("n_max", join(n.iter().map(|x| x.to_string())));
        }
        push("dt", fmt_real(self.dt));
        push("t_max", fmt_real(self.t_max));
        push("stride", self.stride.to_string());
        push("h", join(self.h.iter().map(|&x| fmt_real(x))));
        push("z_nuclear", fmt_real(self.z_nuclear));
        push("enable_nuclear_zeeman", self.enable_nuclear_zeeman.to_string());
        push("representation", self.representation.to_string());
        push("samples", self.samples.to_string());
        push("seed", self.seed.to_string());
        if let Some(p) = &self.out {
            push("out", p.display().to_string());
        }
        push("coefficients", self.coefficient_mode().to_string());
        push("enable_central", self.enable_central.to_string());
        push("enable_chain", self.enable_chain.to_string());
        push("basis", self.basis.to_string());
        if let Some(p) = &self.basis_cache {
            push("basis_cache", p.display().to_string());
        }
        push("max_states", self.max_states.to_string());
        push("mode", self.mode.to_string());
        push(
            "vectors",
            match self.vectors {
                None => "auto".to_string(),
                Some(0) => "full".to_string(),
                Some(n) => n.to_string(),
            },
        );
        push("estimator", self.estimator.to_string());
        push("block", self.block.to_string());
        push("max_bath", self.max_bath.to_string());
        push("deterministic", self.deterministic.to_string());
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `key=value` override given on the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Parse(format!("expected key=value, got `{s}`")))
}

/// Shortest round-trip representation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

fn missing(name: &'static str, engine: Engine) -> Error {
    param(name, format!("required by engine {engine}"))
}

fn non_empty(v: &str) -> Option<&str> {
    (!v.is_empty()).then_some(v)
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.trim_matches(|c| c == '(' || c == ')' || c == '[' || c == ']')
        .split(',')
        .map(str::trim)
}

/// Real number, optionally written as a fraction `a/b`.
fn parse_real(name: &'static str, v: &str) -> Result<f64> {
    let bad = || param(name, format!("expected a number, got `{v}`"));
    let x = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => v.parse().map_err(|_| bad())?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

fn parse_int<T: std::str::FromStr>(name: &'static str, v: &str) -> Result<T> {
    v.replace('_', "")
        .parse()
        .map_err(|_| param(name, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_bool(name: &'static str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(param(name, format!("expected true|false, got `{v}`"))),
    }
}
