//! Hierarchical hyperparameter space over complete RUL pipelines.
//!
//! A space is an ordered list of hyperparameters (parents always precede their
//! children), activation conditions, and forbidden relations. Algorithm
//! choices are modelled as *selector* categoricals so the number of pipeline
//! structures can be enumerated independently of numeric settings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::catalog::STAT_FEATURES;
use crate::util::{rng, Rng};

/// Reference figures reported for the original search space.
pub const REFERENCE_STRUCTURES: usize = 624;
pub const REFERENCE_HYPERPARAMETERS: usize = 168;

const SAMPLE_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Cat(String),
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Cat(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Cat(s) => write!(f, "{s}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Cat(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kind {
    Categorical { choices: Vec<String> },
    UniformInt { lo: i64, hi: i64 },
    UniformFloat { lo: f64, hi: f64 },
    LogFloat { lo: f64, hi: f64 },
}

impl Kind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Kind::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameter {
    pub name: String,
    pub kind: Kind,
    pub default: Value,
    /// Algorithm the hyperparameter belongs to; `None` for selectors.
    pub group: Option<String>,
    /// Algorithm-choice categorical; enumerated by [`ConfigurationSpace::count_structures`].
    pub selector: bool,
}

impl Hyperparameter {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(format!("hyperparameter {}: {m}", self.name)));
        match &self.kind {
            Kind::Categorical { choices } if choices.len() < 2 => bad("needs ≥ 2 choices".into()),
            Kind::UniformInt { lo, hi } if lo >= hi => bad(format!("empty range {lo}..{hi}")),
            Kind::UniformFloat { lo, hi } if !(lo < hi) => bad(format!("empty range {lo}..{hi}")),
            Kind::LogFloat { lo, hi } if !(lo < hi) || *lo <= 0.0 => {
                bad(format!("invalid log range {lo}..{hi}"))
            }
            _ if !self.contains(&self.default) => bad(format!("default {} out of range", self.default)),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (&self.kind, v) {
            (Kind::Categorical { choices }, Value::Cat(s)) => choices.iter().any(|c| c == s),
            (Kind::UniformInt { lo, hi }, Value::Int(i)) => lo <= i && i <= hi,
            (Kind::UniformFloat { lo, hi }, Value::Float(x))
            | (Kind::LogFloat { lo, hi }, Value::Float(x)) => *lo <= *x && *x <= *hi,
            _ => false,
        }
    }

    fn sample(&self, rng: &mut Rng) -> Value {
        match &self.kind {
            Kind::Categorical { choices } => Value::Cat(choices[rng.random_range(0..choices.len())].clone()),
            Kind::UniformInt { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
            Kind::UniformFloat { lo, hi } => Value::Float(rng.random_range(*lo..=*hi)),
            Kind::LogFloat { lo, hi } => Value::Float(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi)),
        }
    }

    /// Position in `[0, 1]`; log kinds are normalised in the log domain and
    /// categoricals map to `index / (choices − 1)`.
    pub fn normalize(&self, v: &Value) -> f64 {
        match (&self.kind, v) {
            (Kind::Categorical { choices }, Value::Cat(s)) => {
                let idx = choices.iter().position(|c| c == s).unwrap_or(0);
                idx as f64 / (choices.len() - 1) as f64
            }
            (Kind::UniformInt { lo, hi }, Value::Int(i)) => (*i - lo) as f64 / (hi - lo) as f64,
            (Kind::UniformFloat { lo, hi }, Value::Float(x)) => (x - lo) / (hi - lo),
            (Kind::LogFloat { lo, hi }, Value::Float(x)) => (x.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            _ => f64::NAN,
        }
    }

    fn denormalize(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            Kind::Categorical { choices } => {
                let idx = (u * (choices.len() - 1) as f64).round() as usize;
                Value::Cat(choices[idx].clone())
            }
            Kind::UniformInt { lo, hi } => Value::Int((*lo as f64 + u * (hi - lo) as f64).round() as i64),
            Kind::UniformFloat { lo, hi } => Value::Float(lo + u * (hi - lo)),
            Kind::LogFloat { lo, hi } => Value::Float((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi)),
        }
    }
}

/// `child` is active only while `parent` is active and takes one of `active_when`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub child: String,
    pub parent: String,
    pub active_when: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Constraint {
    /// Forbids `lhs ≥ rhs` whenever both are active.
    LessThan { lhs: String, rhs: String },
    /// When the listed flags are active, at least one must be `"true"`.
    AnyTrue { flags: Vec<String> },
}

impl Constraint {
    fn satisfied(&self, config: &Configuration) -> bool {
        match self {
            Constraint::LessThan { lhs, rhs } => match (config.get(lhs), config.get(rhs)) {
                (Some(a), Some(b)) => match (a.as_f64(), b.as_f64()) {
                    (Some(a), Some(b)) => a < b,
                    _ => false,
                },
                _ => true,
            },
            Constraint::AnyTrue { flags } => {
                let active: Vec<&Value> = flags.iter().filter_map(|f| config.get(f)).collect();
                active.is_empty() || active.iter().any(|v| v.as_str() == Some("true"))
            }
        }
    }
}

/// Assignments for active hyperparameters only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub BTreeMap<String, Value>);

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, v: impl Into<Value>) {
        self.0.insert(name.into(), v.into());
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn cat(&self, name: &str) -> Result<&str> {
        self.get(name)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Contract(format!("missing categorical {name}")))
    }

    pub fn flag(&self, name: &str) -> Result<bool> {
        Ok(self.cat(name)? == "true")
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        match self.get(name) {
            Some(Value::Int(i)) => Ok(*i),
            _ => Err(Error::Contract(format!("missing integer {name}"))),
        }
    }

    pub fn float(&self, name: &str) -> Result<f64> {
        self.get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Contract(format!("missing number {name}")))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

/// Per-algorithm hyperparameter counts as `(categorical, numeric, conditional)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub categorical: usize,
    pub numeric: usize,
    pub conditional: usize,
}

impl GroupCounts {
    pub fn total(&self) -> usize {
        self.categorical + self.numeric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSpace {
    hyperparameters: Vec<Hyperparameter>,
    conditions: Vec<Condition>,
    constraints: Vec<Constraint>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ConfigurationSpace {
    pub fn new(
        hyperparameters: Vec<Hyperparameter>,
        conditions: Vec<Condition>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, hp) in hyperparameters.iter().enumerate() {
            hp.validate()?;
            if index.insert(hp.name.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate hyperparameter {}", hp.name)));
            }
        }
        for c in &conditions {
            let (Some(&ci), Some(&pi)) = (index.get(&c.child), index.get(&c.parent)) else {
                return Err(Error::Contract(format!(
                    "condition {} <- {} references an undeclared name",
                    c.child, c.parent
                )));
            };
            if pi >= ci {
                return Err(Error::Contract(format!(
                    "parent {} must precede child {}",
                    c.parent, c.child
                )));
            }
            if let Some(v) = c.active_when.iter().find(|v| !hyperparameters[pi].contains(v)) {
                return Err(Error::Contract(format!("condition value {v} outside {}", c.parent)));
            }
        }
        for k in &constraints {
            let names: Vec<&String> = match k {
                Constraint::LessThan { lhs, rhs } => vec![lhs, rhs],
                Constraint::AnyTrue { flags } => flags.iter().collect(),
            };
            if let Some(n) = names.iter().find(|n| !index.contains_key(n.as_str())) {
                return Err(Error::Contract(format!("constraint references unknown {n}")));
            }
        }
        Ok(Self {
            hyperparameters,
            conditions,
            constraints,
            index,
        })
    }

    pub fn hyperparameters(&self) -> &[Hyperparameter] {
        &self.hyperparameters
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.hyperparameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperparameters.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Hyperparameter> {
        self.position(name).map(|i| &self.hyperparameters[i])
    }

    fn position(&self, name: &str) -> Option<usize> {
        if self.index.is_empty() && !self.hyperparameters.is_empty() {
            // deserialised space: index is rebuilt lazily by linear scan
            return self.hyperparameters.iter().position(|h| h.name == name);
        }
        self.index.get(name).copied()
    }

    /// Whether `name` is active given the (partial) assignments in `config`.
    pub fn is_active(&self, name: &str, config: &Configuration) -> bool {
        self.conditions.iter().filter(|c| c.child == name).all(|c| {
            config
                .get(&c.parent)
                .is_some_and(|v| c.active_when.iter().any(|w| w == v))
        })
    }

    /// Checks every configuration invariant.
    pub fn validate(&self, config: &Configuration) -> Result<()> {
        for (name, _) in config.iter() {
            if self.get(name).is_none() {
                return Err(Error::Contract(format!("unknown hyperparameter {name}")));
            }
        }
        for hp in &self.hyperparameters {
            let active = self.is_active(&hp.name, config);
            match (active, config.get(&hp.name)) {
                (true, Some(v)) if !hp.contains(v) => {
                    return Err(Error::Contract(format!("{} = {v} out of range", hp.name)))
                }
                (true, None) => return Err(Error::Contract(format!("active {} unassigned", hp.name))),
                (false, Some(_)) => {
                    return Err(Error::Contract(format!("inactive {} is assigned", hp.name)))
                }
                _ => {}
            }
        }
        if let Some(k) = self.constraints.iter().find(|k| !k.satisfied(config)) {
            return Err(Error::Contract(format!("constraint violated: {k:?}")));
        }
        Ok(())
    }

    fn satisfies_constraints(&self, config: &Configuration) -> bool {
        self.constraints.iter().all(|k| k.satisfied(config))
    }

    pub fn default_configuration(&self) -> Configuration {
        let mut config = Configuration::default();
        for hp in &self.hyperparameters {
            if self.is_active(&hp.name, &config) {
                config.insert(hp.name.clone(), hp.default.clone());
            }
        }
        config
    }

    /// Uniform sample over active ranges; constraint violations are resampled.
    pub fn sample(&self, seed: u64) -> Result<Configuration> {
        self.sample_with(&mut rng(seed))
    }

    pub fn sample_with(&self, rng: &mut Rng) -> Result<Configuration> {
        for _ in 0..SAMPLE_RETRIES {
            let mut config = Configuration::default();
            for hp in &self.hyperparameters {
                if self.is_active(&hp.name, &config) {
                    config.insert(hp.name.clone(), hp.sample(rng));
                }
            }
            if self.satisfies_constraints(&config) {
                return Ok(config);
            }
        }
        Err(Error::Sampling(format!(
            "no configuration satisfied the constraints after {SAMPLE_RETRIES} draws"
        )))
    }

    /// Restricts a categorical hyperparameter to a single choice.
    pub fn with_fixed(mut self, name: &str, value: &str) -> Result<Self> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::Contract(format!("unknown hyperparameter {name}")))?;
        let hp = &mut self.hyperparameters[i];
        match &hp.kind {
            Kind::Categorical { choices } if choices.iter().any(|c| c == value) => {
                hp.kind = Kind::Categorical {
                    choices: vec![value.to_string()],
                };
                hp.default = Value::Cat(value.to_string());
                Ok(self)
            }
            _ => Err(Error::Contract(format!("{name} has no choice {value:?}"))),
        }
    }

    /// Keeps the given values of active hyperparameters, fills the other
    /// active ones with defaults, drops inactive ones, then validates.
    pub fn complete(&self, mut config: Configuration) -> Result<Configuration> {
        let mut out = Configuration::default();
        for hp in &self.hyperparameters {
            if self.is_active(&hp.name, &out) {
                let v = config.remove(&hp.name).unwrap_or_else(|| hp.default.clone());
                out.insert(hp.name.clone(), v);
            }
        }
        self.validate(&out)?;
        Ok(out)
    }

    /// Re-derives activity after a change: kept values stay, newly activated
    /// hyperparameters are sampled, deactivated ones dropped.
    fn repair(&self, mut config: Configuration, rng: &mut Rng) -> Configuration {
        let mut out = Configuration::default();
        for hp in &self.hyperparameters {
            if self.is_active(&hp.name, &out) {
                let v = config.remove(&hp.name).unwrap_or_else(|| hp.sample(rng));
                out.insert(hp.name.clone(), v);
            }
        }
        out
    }

    /// `k` valid configurations, each changing exactly one active hyperparameter.
    pub fn neighbors(&self, config: &Configuration, k: usize, seed: u64) -> Vec<Configuration> {
        let mut rng = rng(seed);
        let step = Normal::new(0.0, 0.2).expect("valid sd");
        let active: Vec<&Hyperparameter> = self
            .hyperparameters
            .iter()
            .filter(|hp| config.contains(&hp.name))
            .filter(|hp| !matches!(&hp.kind, Kind::Categorical { choices } if choices.len() < 2))
            .collect();
        let mut out = Vec::with_capacity(k);
        if active.is_empty() {
            return out;
        }
        let mut attempts = 0;
        while out.len() < k && attempts < k * 100 {
            attempts += 1;
            let hp = active[rng.random_range(0..active.len())];
            let current = &config.0[&hp.name];
            let proposal = match &hp.kind {
                Kind::Categorical { choices } => {
                    let others: Vec<&String> = choices.iter().filter(|c| Some(c.as_str()) != current.as_str()).collect();
                    Value::Cat(others[rng.random_range(0..others.len())].clone())
                }
                _ => hp.denormalize(hp.normalize(current) + step.sample(&mut rng)),
            };
            if &proposal == current {
                continue;
            }
            let mut changed = config.clone();
            changed.insert(hp.name.clone(), proposal);
            let repaired = self.repair(changed, &mut rng);
            if self.satisfies_constraints(&repaired) {
                out.push(repaired);
            }
        }
        out
    }

    /// Fixed-length encoding: one slot per hyperparameter, normalised to
    /// `[0, 1]`, with `-1` for inactive slots.
    pub fn vectorize(&self, config: &Configuration) -> Vec<f64> {
        self.hyperparameters
            .iter()
            .map(|hp| match config.get(&hp.name) {
                Some(v) => hp.normalize(v),
                None => -1.0,
            })
            .collect()
    }

    /// Number of distinct algorithm-choice combinations, by enumeration of
    /// the selector hyperparameters.
    pub fn count_structures(&self) -> usize {
        let selectors: Vec<&Hyperparameter> = self.hyperparameters.iter().filter(|h| h.selector).collect();
        self.count_from(&selectors, &mut Configuration::default())
    }

    fn count_from(&self, rest: &[&Hyperparameter], partial: &mut Configuration) -> usize {
        let Some((hp, tail)) = rest.split_first() else {
            return 1;
        };
        if !self.is_active(&hp.name, partial) {
            return self.count_from(tail, partial);
        }
        let Kind::Categorical { choices } = &hp.kind else {
            return self.count_from(tail, partial);
        };
        let mut total = 0;
        for c in choices {
            partial.insert(hp.name.clone(), Value::Cat(c.clone()));
            total += self.count_from(tail, partial);
        }
        partial.remove(&hp.name);
        total
    }

    /// Hyperparameter counts per algorithm group.
    pub fn group_counts(&self) -> BTreeMap<String, GroupCounts> {
        let mut out: BTreeMap<String, GroupCounts> = BTreeMap::new();
        for hp in &self.hyperparameters {
            let Some(group) = &hp.group else { continue };
            let entry = out.entry(group.clone()).or_default();
            if hp.kind.is_categorical() {
                entry.categorical += 1;
            } else {
                entry.numeric += 1;
            }
            let conditional = self.conditions.iter().any(|c| {
                c.child == hp.name && self.get(&c.parent).is_some_and(|p| p.group.as_ref() == Some(group))
            });
            if conditional {
                entry.conditional += 1;
            }
        }
        out
    }

    /// Structured description of the space for documentation and audits.
    pub fn manifest(&self) -> serde_json::Value {
        let hps: Vec<serde_json::Value> = self
            .hyperparameters
            .iter()
            .map(|hp| {
                let parents: Vec<serde_json::Value> = self
                    .conditions
                    .iter()
                    .filter(|c| c.child == hp.name)
                    .map(|c| serde_json::json!({ "parent": c.parent, "active_when": c.active_when }))
                    .collect();
                serde_json::json!({
                    "name": hp.name,
                    "kind": hp.kind,
                    "default": hp.default,
                    "group": hp.group,
                    "selector": hp.selector,
                    "conditions": parents,
                })
            })
            .collect();
        serde_json::json!({
            "hyperparameters": hps,
            "constraints": self.constraints,
            "n_hyperparameters": self.hyperparameters.len(),
            "group_counts": self.group_counts(),
            "count_structures": self.count_structures(),
            "reference_structures": REFERENCE_STRUCTURES,
            "reference_hyperparameters": REFERENCE_HYPERPARAMETERS,
        })
    }

    /// Rebuilds the name index after deserialisation.
    pub fn reindexed(self) -> Result<Self> {
        Self::new(self.hyperparameters, self.conditions, self.constraints)
    }
}

// ---------------------------------------------------------------------------
// The pipeline space
// ---------------------------------------------------------------------------

pub mod names {
    pub const TEMPLATE: &str = "template";
    pub const IMPUTATION: &str = "imputation:strategy";
    pub const SMOOTHING: &str = "smoothing";
    pub const SMOOTHING_ALPHA: &str = "exp_smoothing:alpha";
    pub const SMOOTHING_MIN_PERIODS: &str = "exp_smoothing:min_periods";
    pub const SCALER: &str = "scaler";
    pub const ROBUST_Q_LO: &str = "robust_scaler:q_lo";
    pub const ROBUST_Q_HI: &str = "robust_scaler:q_hi";
    pub const WINDOW_LENGTH: &str = "window:length";
    pub const WINDOW_STRIDE: &str = "window:stride";
    pub const FEATURES: &str = "features";
    pub const SELECTION: &str = "selection";
    pub const TABULAR_REGRESSOR: &str = "regressor:tabular";
    pub const SEQUENCE_REGRESSOR: &str = "regressor:sequence";

    pub fn stat_flag(feature: &str) -> String {
        format!("stat_catalog:{feature}")
    }
}

pub const TABULAR_KINDS: [&str; 6] = [
    "extra_trees",
    "gradient_boosting",
    "mlp",
    "passive_aggressive",
    "random_forest",
    "sgd",
];
pub const SEQUENCE_KINDS: [&str; 3] = ["gru", "lstm", "tcn"];

struct Builder {
    hps: Vec<Hyperparameter>,
    conditions: Vec<Condition>,
}

impl Builder {
    fn push(&mut self, name: &str, kind: Kind, default: Value, group: Option<&str>, selector: bool) {
        self.hps.push(Hyperparameter {
            name: name.to_string(),
            kind,
            default,
            group: group.map(str::to_string),
            selector,
        });
    }

    fn selector(&mut self, name: &str, choices: &[&str]) {
        self.push(name, cat_kind(choices), Value::Cat(choices[0].to_string()), None, true);
    }

    fn cat(&mut self, group: &str, name: &str, choices: &[&str], default: &str) {
        self.push(&format!("{group}:{name}"), cat_kind(choices), default.into(), Some(group), false);
    }

    fn int(&mut self, group: &str, name: &str, lo: i64, hi: i64, default: i64) {
        self.push(&format!("{group}:{name}"), Kind::UniformInt { lo, hi }, Value::Int(default), Some(group), false);
    }

    fn float(&mut self, group: &str, name: &str, lo: f64, hi: f64, default: f64) {
        self.push(
            &format!("{group}:{name}"),
            Kind::UniformFloat { lo, hi },
            Value::Float(default),
            Some(group),
            false,
        );
    }

    fn log(&mut self, group: &str, name: &str, lo: f64, hi: f64, default: f64) {
        self.push(&format!("{group}:{name}"), Kind::LogFloat { lo, hi }, Value::Float(default), Some(group), false);
    }

    fn when(&mut self, child: &str, parent: &str, values: &[Value]) {
        self.conditions.push(Condition {
            child: child.to_string(),
            parent: parent.to_string(),
            active_when: values.to_vec(),
        });
    }

    /// Conditions every hyperparameter of `group` declared since `from` on `parent = value`.
    fn gate_since(&mut self, from: usize, parent: &str, value: &str) {
        let names: Vec<String> = self.hps[from..].iter().map(|h| h.name.clone()).collect();
        for n in names {
            self.when(&n, parent, &[value.into()]);
        }
    }
}

fn cat_kind(choices: &[&str]) -> Kind {
    Kind::Categorical {
        choices: choices.iter().map(|c| c.to_string()).collect(),
    }
}

const BOOL: [&str; 2] = ["true", "false"];

/// The full pipeline search space.
pub fn define_space() -> ConfigurationSpace {
    use names::*;
    let mut b = Builder {
        hps: Vec::new(),
        conditions: Vec::new(),
    };

    b.selector(TEMPLATE, &["tabular", "seq2seq"]);

    // data cleaning
    b.cat("imputation", "strategy", &["neighbor", "mean", "median"], "neighbor");
    b.selector(SMOOTHING, &["none", "exp_smoothing"]);
    let at = b.hps.len();
    b.float("exp_smoothing", "alpha", 0.05, 1.0, 0.5);
    b.int("exp_smoothing", "min_periods", 1, 10, 1);
    b.gate_since(at, SMOOTHING, "exp_smoothing");

    b.selector(SCALER, &["robust", "normalizer", "minmax", "standard", "none"]);
    let at = b.hps.len();
    b.float("robust_scaler", "q_lo", 1.0, 30.0, 25.0);
    b.float("robust_scaler", "q_hi", 70.0, 99.0, 75.0);
    b.gate_since(at, SCALER, "robust");

    // feature engineering
    b.int("window", "length", 5, 30, 15);
    b.int("window", "stride", 1, 10, 1);

    b.selector(FEATURES, &["flatten", "stat_catalog"]);
    let at = b.hps.len();
    for f in STAT_FEATURES {
        b.cat("stat_catalog", f, &BOOL, "true");
    }
    b.gate_since(at, FEATURES, "stat_catalog");

    b.selector(SELECTION, &["none", "pca", "select_percentile", "select_rates"]);
    let at = b.hps.len();
    b.cat("pca", "whiten", &BOOL, "false");
    b.float("pca", "keep_variance", 0.5, 0.999, 0.95);
    b.gate_since(at, SELECTION, "pca");
    let at = b.hps.len();
    b.cat("select_percentile", "score", &["kendall", "pearson"], "pearson");
    b.float("select_percentile", "percentile", 1.0, 99.0, 50.0);
    b.gate_since(at, SELECTION, "select_percentile");
    let at = b.hps.len();
    b.cat("select_rates", "test", &["kendall", "pearson"], "pearson");
    b.cat("select_rates", "mode", &["fdr_by", "fpr", "fwe_bonferroni"], "fdr_by");
    b.float("select_rates", "alpha", 0.01, 0.5, 0.05);
    b.gate_since(at, SELECTION, "select_rates");

    // regression
    b.selector(TABULAR_REGRESSOR, &TABULAR_KINDS);
    b.when(TABULAR_REGRESSOR, TEMPLATE, &["tabular".into()]);
    b.selector(SEQUENCE_REGRESSOR, &SEQUENCE_KINDS);
    b.when(SEQUENCE_REGRESSOR, TEMPLATE, &["seq2seq".into()]);

    let at = b.hps.len();
    b.cat("extra_trees", "bootstrap", &BOOL, "false");
    b.cat("extra_trees", "criterion", &["squared_error", "poisson"], "squared_error");
    b.float("extra_trees", "max_features_fraction", 0.1, 1.0, 1.0);
    b.int("extra_trees", "min_samples_leaf", 1, 20, 1);
    b.int("extra_trees", "min_samples_split", 2, 20, 2);
    b.gate_since(at, TABULAR_REGRESSOR, "extra_trees");

    let at = b.hps.len();
    b.log("gradient_boosting", "learning_rate", 1e-3, 0.5, 0.1);
    b.int("gradient_boosting", "max_depth", 2, 10, 3);
    b.int("gradient_boosting", "min_samples_leaf", 1, 50, 5);
    b.float("gradient_boosting", "subsample", 0.5, 1.0, 1.0);
    b.float("gradient_boosting", "max_features_fraction", 0.1, 1.0, 1.0);
    b.log("gradient_boosting", "l2_reg", 1e-8, 1.0, 1e-6);
    b.gate_since(at, TABULAR_REGRESSOR, "gradient_boosting");

    let at = b.hps.len();
    b.cat("mlp", "activation", &["relu", "tanh"], "relu");
    b.cat("mlp", "hidden_layers", &["1", "2"], "1");
    b.int("mlp", "hidden_units", 16, 128, 64);
    b.int("mlp", "second_layer_units", 8, 64, 32);
    b.log("mlp", "learning_rate", 1e-4, 1e-1, 1e-3);
    b.log("mlp", "l2_penalty", 1e-7, 1e-1, 1e-4);
    b.gate_since(at, TABULAR_REGRESSOR, "mlp");
    b.when("mlp:second_layer_units", "mlp:hidden_layers", &["2".into()]);

    let at = b.hps.len();
    b.cat("passive_aggressive", "loss", &["epsilon_insensitive", "squared_epsilon_insensitive"], "epsilon_insensitive");
    b.cat("passive_aggressive", "fit_intercept", &BOOL, "true");
    b.log("passive_aggressive", "c", 1e-5, 10.0, 1.0);
    b.log("passive_aggressive", "epsilon", 1e-5, 1.0, 0.1);
    b.gate_since(at, TABULAR_REGRESSOR, "passive_aggressive");

    let at = b.hps.len();
    b.cat("random_forest", "bootstrap", &BOOL, "true");
    b.float("random_forest", "max_features_fraction", 0.1, 1.0, 1.0);
    b.int("random_forest", "min_samples_leaf", 1, 20, 1);
    b.gate_since(at, TABULAR_REGRESSOR, "random_forest");

    let at = b.hps.len();
    b.cat("sgd", "penalty", &["l1", "l2", "elasticnet"], "l2");
    b.cat("sgd", "schedule", &["invscaling", "constant"], "invscaling");
    b.log("sgd", "alpha", 1e-7, 1e-1, 1e-4);
    b.log("sgd", "eta0", 1e-5, 1e-1, 1e-2);
    b.float("sgd", "power_t", 0.05, 0.5, 0.25);
    b.float("sgd", "l1_ratio", 0.01, 1.0, 0.15);
    b.gate_since(at, TABULAR_REGRESSOR, "sgd");
    b.when("sgd:l1_ratio", "sgd:penalty", &["elasticnet".into()]);

    let at = b.hps.len();
    b.log("optimizer", "learning_rate", 1e-4, 1e-1, 1e-2);
    b.log("optimizer", "weight_decay", 1e-8, 1e-2, 1e-6);
    b.float("optimizer", "momentum_beta", 0.8, 0.999, 0.9);
    b.float("optimizer", "grad_clip", 0.1, 10.0, 1.0);
    b.int("trainer", "batch_size", 16, 256, 32);
    b.int("trainer", "patience", 5, 50, 10);
    b.gate_since(at, TEMPLATE, "seq2seq");

    for rnn in ["gru", "lstm"] {
        let at = b.hps.len();
        b.cat(rnn, "layer_norm", &BOOL, "false");
        b.int(rnn, "hidden_size", 8, 64, 32);
        b.int(rnn, "num_layers", 1, 3, 1);
        b.float(rnn, "dropout", 0.0, 0.5, 0.1);
        b.gate_since(at, SEQUENCE_REGRESSOR, rnn);
        b.when(&format!("{rnn}:dropout"), &format!("{rnn}:num_layers"), &[Value::Int(2), Value::Int(3)]);
    }

    let at = b.hps.len();
    b.cat("tcn", "norm", &["none", "layer_norm"], "none");
    b.int("tcn", "channels", 8, 64, 16);
    b.int("tcn", "kernel_size", 2, 5, 3);
    b.int("tcn", "levels", 1, 4, 2);
    b.float("tcn", "dropout", 0.0, 0.5, 0.1);
    b.gate_since(at, SEQUENCE_REGRESSOR, "tcn");
    b.when("tcn:dropout", "tcn:levels", &[Value::Int(2), Value::Int(3), Value::Int(4)]);

    let constraints = vec![
        Constraint::LessThan {
            lhs: WINDOW_STRIDE.into(),
            rhs: WINDOW_LENGTH.into(),
        },
        Constraint::AnyTrue {
            flags: STAT_FEATURES.iter().map(|f| stat_flag(f)).collect(),
        },
    ];
    ConfigurationSpace::new(b.hps, b.conditions, constraints).expect("pipeline space is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ConfigurationSpace {
        let mut b = Builder {
            hps: Vec::new(),
            conditions: Vec::new(),
        };
        b.selector("regressor", &["a", "b", "c"]);
        b.selector("features", &["flat", "stat"]);
        b.selector("smoothing", &["on", "off"]);
        b.float("a", "x", 0.0, 10.0, 5.0);
        b.when("a:x", "regressor", &["a".into()]);
        b.log("b", "lr", 1e-4, 1e-1, 1e-2);
        b.when("b:lr", "regressor", &["b".into()]);
        ConfigurationSpace::new(b.hps, b.conditions, vec![]).unwrap()
    }

    #[test]
    fn toy_structure_count() {
        assert_eq!(toy().count_structures(), 12);
    }

    #[test]
    fn single_chain_has_one_structure() {
        let s = ConfigurationSpace::new(
            vec![Hyperparameter {
                name: "x".into(),
                kind: Kind::UniformFloat { lo: 0.0, hi: 1.0 },
                default: Value::Float(0.5),
                group: Some("g".into()),
                selector: false,
            }],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(s.count_structures(), 1);
    }

    #[test]
    fn vectorize_normalises() {
        let s = toy();
        let mut c = Configuration::default();
        c.insert("regressor", "a");
        c.insert("features", "stat");
        c.insert("smoothing", "on");
        c.insert("a:x", 5.0);
        s.validate(&c).unwrap();
        let v = s.vectorize(&c);
        assert_eq!(v, vec![0.0, 1.0, 0.0, 0.5, -1.0]);

        let mut c = c.clone();
        c.remove("a:x");
        c.insert("regressor", "b");
        c.insert("b:lr", 10f64.powf(-2.5));
        let v = s.vectorize(&c);
        assert!((v[4] - 0.5).abs() < 1e-12);
        assert_eq!(v[3], -1.0);
        assert_eq!(v[0], 0.5);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let hp = Hyperparameter {
            name: "x".into(),
            kind: Kind::LogFloat { lo: 0.0, hi: 1.0 },
            default: Value::Float(0.5),
            group: None,
            selector: false,
        };
        assert!(ConfigurationSpace::new(vec![hp], vec![], vec![]).is_err());
    }

    #[test]
    fn parent_must_precede_child() {
        let mut b = Builder {
            hps: Vec::new(),
            conditions: Vec::new(),
        };
        b.float("a", "x", 0.0, 1.0, 0.5);
        b.selector("sel", &["a", "b"]);
        b.when("a:x", "sel", &["a".into()]);
        assert!(ConfigurationSpace::new(b.hps, b.conditions, vec![]).is_err());
    }

    #[test]
    fn unsatisfiable_constraint_reports_sampling_error() {
        let mut b = Builder {
            hps: Vec::new(),
            conditions: Vec::new(),
        };
        b.int("w", "a", 5, 6, 5);
        b.int("w", "b", 1, 2, 1);
        let s = ConfigurationSpace::new(
            b.hps,
            vec![],
            vec![Constraint::LessThan {
                lhs: "w:a".into(),
                rhs: "w:b".into(),
            }],
        )
        .unwrap();
        assert!(matches!(s.sample(0), Err(Error::Sampling(_))));
    }

    #[test]
    fn defaults_are_valid() {
        let s = define_space();
        s.validate(&s.default_configuration()).unwrap();
    }

    #[test]
    fn tabular_samples_have_no_trainer() {
        let s = define_space();
        let mut seen = 0;
        for seed in 0..200 {
            let c = s.sample(seed).unwrap();
            if c.cat(names::TEMPLATE).unwrap() == "tabular" {
                seen += 1;
                assert!(c.iter().all(|(k, _)| !k.starts_with("trainer:") && !k.starts_with("optimizer:")));
                assert!(!c.contains(names::SEQUENCE_REGRESSOR));
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = define_space();
        assert_eq!(s.sample(42).unwrap(), s.sample(42).unwrap());
    }

    #[test]
    fn regressor_switch_resamples_children() {
        let s = define_space();
        let base = (0..100)
            .map(|i| s.sample(i).unwrap())
            .find(|c| c.get(names::TABULAR_REGRESSOR) == Some(&"random_forest".into()))
            .unwrap();
        let mut found = false;
        for seed in 0..50 {
            for n in s.neighbors(&base, 5, seed) {
                if let Ok(kind) = n.cat(names::TABULAR_REGRESSOR) {
                    if kind != "random_forest" {
                        found = true;
                        assert!(n.iter().all(|(k, _)| !k.starts_with("random_forest:")));
                        assert!(n.iter().any(|(k, _)| k.starts_with(&format!("{kind}:"))));
                    }
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn neighbors_count() {
        let s = define_space();
        let c = s.sample(3).unwrap();
        let ns = s.neighbors(&c, 5, 1);
        assert_eq!(ns.len(), 5);
        for n in ns {
            s.validate(&n).unwrap();
        }
    }

    #[test]
    fn neighbors_leave_fixed_choices_alone() {
        let s = define_space()
            .with_fixed(names::TEMPLATE, "tabular")
            .unwrap()
            .with_fixed(names::TABULAR_REGRESSOR, "random_forest")
            .unwrap();
        for seed in 0..20 {
            let c = s.sample(seed).unwrap();
            for n in s.neighbors(&c, 5, seed) {
                assert_eq!(n.cat(names::TEMPLATE).unwrap(), "tabular");
                assert_eq!(n.cat(names::TABULAR_REGRESSOR).unwrap(), "random_forest");
            }
        }
    }
}
