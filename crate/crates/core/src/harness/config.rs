//! Line-oriented `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated; `seeds` also accepts a half-open range `a..b`.

use std::collections::HashSet;
use std::str::FromStr;

use thiserror::Error;

use crate::adaptation::AdaptationParams;
use crate::strategies::{Algorithm, ElitistParams, HeEsParams, Strategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

impl ConfigError {
    fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field,
            message: message.into(),
        }
    }

    /// The offending field of a validation error.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ConfigError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Sphere,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub d: usize,
    /// Condition number of the Hessian; 1 for the sphere.
    pub condition: f64,
    pub rotated: bool,
    pub normalize_det: bool,
    /// Seeds the random rotation shared by all runs.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanInit {
    /// Uniformly random direction at distance `radius` from the optimum,
    /// drawn per run.
    Random { radius: f64 },
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorInit {
    Identity,
    /// Row-major `d x d` matrix.
    Given(Vec<f64>),
    /// Symmetric square root of a det-1 covariance with condition `kappa`
    /// and random orientation, drawn per run.
    AdaptedTo(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub m0: MeanInit,
    pub sigma0: f64,
    pub a0: FactorInit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub problem: ProblemSpec,
    pub init: InitSpec,
    pub budget: usize,
    pub seeds: Vec<u64>,
    /// Algorithm parameters with all defaults applied.
    pub strategy: Strategy,
    pub output: Option<String>,
}

const KEYS: [&str; 21] = [
    "algorithm",
    "problem",
    "d",
    "condition",
    "rotated",
    "normalize_det",
    "problem_seed",
    "m0",
    "m0_radius",
    "sigma0",
    "A0",
    "budget",
    "seeds",
    "c_sigma",
    "eta_a",
    "kappa_trust",
    "lambda_tilde",
    "c_s",
    "d_s",
    "output",
    "aggregate",
];

struct Entry {
    line: usize,
    value: String,
}

struct Entries(Vec<(&'static str, Entry)>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, e)| e)
    }

    fn parsed<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                message: format!("cannot parse `{}` for `{key}`", e.value),
            }),
        }
    }

    fn required<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError> {
        self.parsed(key)?.ok_or_else(|| ConfigError::invalid(key, "missing required key"))
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.get(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| ConfigError::Parse {
                    line: e.line,
                    message: format!("cannot parse `{}` in `{key}`", s.trim()),
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected key=value, got `{content}`"),
        })?;
        let key = key.trim();
        let key = KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("unknown key `{key}`"),
        })?;
        if !seen.insert(*key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((
            *key,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        ));
    }
    Ok(Entries(entries))
}

fn parse_seeds(entries: &Entries) -> Result<Vec<u64>, ConfigError> {
    let e = entries
        .get("seeds")
        .ok_or_else(|| ConfigError::invalid("seeds", "missing required key"))?;
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = e.value.split_once("..") {
        let bad = || ConfigError::Parse {
            line: e.line,
            message: format!("cannot parse seed range `{}`", e.value),
        };
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    entries.list("seeds").map(Option::unwrap_or_default)
}

fn parse_bool(entries: &Entries, key: &'static str, default: bool) -> Result<bool, ConfigError> {
    match entries.get(key) {
        None => Ok(default),
        Some(e) => match e.value.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(ConfigError::Parse {
                line: e.line,
                message: format!("expected a boolean for `{key}`, got `{other}`"),
            }),
        },
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

/// Parses and validates a configuration, applying defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let entries = tokenize(text)?;
    let budget: Option<i64> = entries.parsed("budget")?;
    if let Some(b) = budget.filter(|b| *b < 1) {
        return Err(ConfigError::invalid("budget", format!("must be >= 1, got {b}")));
    }

    let algorithm: Algorithm = match entries.get("algorithm") {
        None => return Err(ConfigError::invalid("algorithm", "missing required key")),
        Some(e) => e.value.parse().map_err(|msg| ConfigError::Parse { line: e.line, message: msg })?,
    };
    let kind = match entries.get("problem").map(|e| (e.line, e.value.as_str())) {
        None | Some((_, "sphere")) => ProblemKind::Sphere,
        Some((_, "ellipsoid")) => ProblemKind::Ellipsoid,
        Some((line, other)) => {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown problem `{other}`"),
            })
        }
    };
    let d: usize = entries.required("d")?;
    if d == 0 {
        return Err(ConfigError::invalid("d", "must be positive"));
    }
    if d < 2 && algorithm != Algorithm::OnePlusOne {
        return Err(ConfigError::invalid("d", format!("{algorithm} needs d >= 2")));
    }
    let condition = match (kind, entries.parsed::<f64>("condition")?) {
        (ProblemKind::Sphere, None) => 1.0,
        (ProblemKind::Sphere, Some(_)) => {
            return Err(ConfigError::invalid("condition", "not used by the sphere"));
        }
        (ProblemKind::Ellipsoid, c) => c.unwrap_or(1e6),
    };
    if !(condition >= 1.0) || !condition.is_finite() {
        return Err(ConfigError::invalid("condition", format!("must be >= 1, got {condition}")));
    }
    let problem = ProblemSpec {
        kind,
        d,
        condition,
        rotated: parse_bool(&entries, "rotated", true)?,
        normalize_det: parse_bool(&entries, "normalize_det", true)?,
        seed: entries.parsed("problem_seed")?.unwrap_or(0),
    };

    let radius = positive("m0_radius", entries.parsed("m0_radius")?.unwrap_or(1.0))?;
    let m0 = match entries.get("m0").map(|e| e.value.as_str()) {
        None | Some("random") => MeanInit::Random { radius },
        Some("ones") => MeanInit::Given(vec![1.0; d]),
        Some(_) => {
            let v: Vec<f64> = entries.list("m0")?.unwrap_or_default();
            if v.len() != d || v.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::invalid("m0", format!("need {d} finite values, got {}", v.len())));
            }
            MeanInit::Given(v)
        }
    };
    if entries.get("m0_radius").is_some() && !matches!(m0, MeanInit::Random { .. }) {
        return Err(ConfigError::invalid("m0_radius", "only used with m0=random"));
    }
    let sigma0 = positive("sigma0", entries.parsed("sigma0")?.unwrap_or(1.0))?;
    let a0 = match entries.get("A0") {
        None => FactorInit::Identity,
        Some(e) if e.value == "identity" => FactorInit::Identity,
        Some(e) if e.value.starts_with("adapted:") => {
            let kappa: f64 = e.value["adapted:".len()..].trim().parse().map_err(|_| ConfigError::Parse {
                line: e.line,
                message: format!("cannot parse condition in `{}`", e.value),
            })?;
            if !(kappa >= 1.0) || !kappa.is_finite() {
                return Err(ConfigError::invalid("A0", format!("adapted condition must be >= 1, got {kappa}")));
            }
            FactorInit::AdaptedTo(kappa)
        }
        Some(_) => {
            let v: Vec<f64> = entries.list("A0")?.unwrap_or_default();
            if v.len() != d * d || v.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::invalid("A0", format!("need {} finite values, got {}", d * d, v.len())));
            }
            FactorInit::Given(v)
        }
    };
    if algorithm == Algorithm::OnePlusOne && a0 != FactorInit::Identity {
        let identity: Vec<f64> = (0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 }).collect();
        if a0 != FactorInit::Given(identity) {
            return Err(ConfigError::invalid("A0", "one_plus_one runs with the identity factor"));
        }
    }

    let budget = budget.ok_or_else(|| ConfigError::invalid("budget", "missing required key"))?;
    let seeds = parse_seeds(&entries)?;
    if seeds.is_empty() {
        return Err(ConfigError::invalid("seeds", "need at least one seed"));
    }

    let strategy = build_strategy(algorithm, d, &entries)?;
    if entries.get("aggregate").is_some_and(|e| e.value != "median" && e.value != "none") {
        return Err(ConfigError::invalid("aggregate", "expected `median` or `none`"));
    }

    Ok(ExperimentConfig {
        algorithm,
        problem,
        init: InitSpec { m0, sigma0, a0 },
        budget: budget as usize,
        seeds,
        strategy,
        output: entries.get("output").map(|e| e.value.clone()),
    })
}

/// Whether the config asks for median aggregation.
pub fn wants_median(text: &str) -> bool {
    tokenize(text)
        .ok()
        .and_then(|e| e.get("aggregate").map(|e| e.value == "median"))
        .unwrap_or(false)
}

fn build_strategy(algorithm: Algorithm, d: usize, entries: &Entries) -> Result<Strategy, ConfigError> {
    let mut adaptation = AdaptationParams::default();
    if let Some(eta) = entries.parsed::<f64>("eta_a")? {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(ConfigError::invalid("eta_a", format!("must be >= 0, got {eta}")));
        }
        adaptation.eta_a = eta;
    }
    if let Some(k) = entries.parsed::<f64>("kappa_trust")? {
        if !(k > 1.0) {
            return Err(ConfigError::invalid("kappa_trust", format!("must be > 1, got {k}")));
        }
        adaptation.kappa_trust = k;
    }
    if algorithm == Algorithm::OnePlusOne {
        if let Some(key) = ["eta_a", "kappa_trust"].into_iter().find(|k| entries.get(k).is_some()) {
            return Err(ConfigError::invalid(key, "one_plus_one does not adapt the factor"));
        }
    }
    match algorithm {
        Algorithm::HeEs => {
            if entries.get("c_sigma").is_some() {
                return Err(ConfigError::invalid("c_sigma", "only used by the elitist variants"));
            }
            let mut p = match entries.parsed::<usize>("lambda_tilde")? {
                Some(0) => return Err(ConfigError::invalid("lambda_tilde", "must be positive")),
                Some(l) => HeEsParams::with_lambda_tilde(d, l),
                None => HeEsParams::default_for(d),
            };
            if let Some(c) = entries.parsed::<f64>("c_s")? {
                if !(c > 0.0 && c < 1.0) {
                    return Err(ConfigError::invalid("c_s", format!("must lie in (0, 1), got {c}")));
                }
                p.c_s = c;
            }
            if let Some(ds) = entries.parsed::<f64>("d_s")? {
                p.d_s = positive("d_s", ds)?;
            }
            p.adaptation = adaptation;
            Ok(Strategy::HeEs(p))
        }
        Algorithm::OnePlusFour | Algorithm::OnePlusOne => {
            for key in ["lambda_tilde", "c_s", "d_s"] {
                if entries.get(key).is_some() {
                    return Err(ConfigError::invalid(key, "only used by he_es"));
                }
            }
            let mut p = ElitistParams::default_for(d);
            if let Some(c) = entries.parsed::<f64>("c_sigma")? {
                if !(c > 1.0) || !c.is_finite() {
                    return Err(ConfigError::invalid("c_sigma", format!("must be > 1, got {c}")));
                }
                p.c_sigma = c;
            }
            p.adaptation = adaptation;
            Ok(if algorithm == Algorithm::OnePlusFour {
                Strategy::OnePlusFour(p)
            } else {
                Strategy::OnePlusOne(p)
            })
        }
    }
}
