//! Tabular and sequence regressors with budgeted, resumable fitting.
//!
//! Budgets count trees (forests), stages (boosting) or epochs (everything else).

pub mod autodiff;
pub mod boosting;
pub mod forest;
pub mod linear;
pub mod mlp;
pub mod optim;
pub mod recurrent;
pub mod sequence;
pub mod tcn;
pub mod tree;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{Error, Result};
use crate::util::{Deadline, Rng};

pub use boosting::{Boosting, BoostingParams};
pub use forest::{Forest, ForestParams};
pub use linear::{LinearRule, OnlineLinear, PaLoss, PaParams, Penalty, Schedule, SgdParams};
pub use mlp::{Activation, Mlp, MlpParams};
pub use recurrent::{Cell, RnnParams};
pub use sequence::{
    fit_sequence, sequence_gradient_error, FittedSequence, OptimizerParams, SeqArch, SequenceSpec, Series,
    TrainerParams,
};
pub use tcn::TcnParams;
pub use tree::{Criterion, Tree, TreeParams};

/// Uniform(−1/√fan_in, 1/√fan_in) initialization.
pub(crate) fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

/// Affine target standardization used by gradient-trained learners.
///
/// A constant target gets `std = 0`: the model then has nothing to learn and
/// `inverse` returns the constant exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn fit(y: &[f64]) -> Self {
        let mean = crate::util::mean(y);
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len().max(1) as f64;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 * (1.0 + mean.abs()) { std } else { 0.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            (y - self.mean) / self.std
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        if self.std == 0.0 {
            self.mean
        } else {
            z * self.std + self.mean
        }
    }
}

/// Per-column standardization of feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl ColumnScale {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean.view().insert_axis(Axis(0))) / &self.std.view().insert_axis(Axis(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TabularSpec {
    ExtraTrees(ForestParams),
    GradientBoosting(BoostingParams),
    Mlp(MlpParams),
    PassiveAggressive(PaParams),
    RandomForest(ForestParams),
    Sgd(SgdParams),
}

fn bool_flag(config: &Configuration, name: &str) -> Result<bool> {
    config.flag(name)
}

fn opt_float(config: &Configuration, name: &str, default: f64) -> Result<f64> {
    if config.contains(name) {
        config.float(name)
    } else {
        Ok(default)
    }
}

impl TabularSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TabularSpec::ExtraTrees(_) => "extra_trees",
            TabularSpec::GradientBoosting(_) => "gradient_boosting",
            TabularSpec::Mlp(_) => "mlp",
            TabularSpec::PassiveAggressive(_) => "passive_aggressive",
            TabularSpec::RandomForest(_) => "random_forest",
            TabularSpec::Sgd(_) => "sgd",
        }
    }

    /// Reads the active `<kind>:*` hyperparameters of a configuration.
    pub fn from_config(kind: &str, c: &Configuration) -> Result<Self> {
        let usize_of = |name: &str| -> Result<usize> { Ok(c.int(name)?.max(0) as usize) };
        Ok(match kind {
            "extra_trees" => TabularSpec::ExtraTrees(ForestParams {
                tree: TreeParams {
                    criterion: match c.cat("extra_trees:criterion")? {
                        "poisson" => Criterion::Poisson,
                        _ => Criterion::SquaredError,
                    },
                    max_features: c.float("extra_trees:max_features_fraction")?,
                    min_samples_leaf: usize_of("extra_trees:min_samples_leaf")?,
                    min_samples_split: usize_of("extra_trees:min_samples_split")?,
                    max_depth: None,
                    random_thresholds: true,
                    leaf_l2: 0.0,
                },
                bootstrap: bool_flag(c, "extra_trees:bootstrap")?,
            }),
            "random_forest" => TabularSpec::RandomForest(ForestParams {
                tree: TreeParams {
                    max_features: c.float("random_forest:max_features_fraction")?,
                    min_samples_leaf: usize_of("random_forest:min_samples_leaf")?,
                    ..TreeParams::default()
                },
                bootstrap: bool_flag(c, "random_forest:bootstrap")?,
            }),
            "gradient_boosting" => TabularSpec::GradientBoosting(BoostingParams {
                learning_rate: c.float("gradient_boosting:learning_rate")?,
                max_depth: usize_of("gradient_boosting:max_depth")?,
                min_samples_leaf: usize_of("gradient_boosting:min_samples_leaf")?,
                subsample: c.float("gradient_boosting:subsample")?,
                max_features: c.float("gradient_boosting:max_features_fraction")?,
                l2_reg: c.float("gradient_boosting:l2_reg")?,
            }),
            "mlp" => {
                let mut hidden = vec![usize_of("mlp:hidden_units")?];
                if c.cat("mlp:hidden_layers")? == "2" {
                    hidden.push(usize_of("mlp:second_layer_units")?);
                }
                TabularSpec::Mlp(MlpParams {
                    activation: match c.cat("mlp:activation")? {
                        "tanh" => Activation::Tanh,
                        _ => Activation::Relu,
                    },
                    hidden,
                    learning_rate: c.float("mlp:learning_rate")?,
                    l2_penalty: c.float("mlp:l2_penalty")?,
                })
            }
            "passive_aggressive" => TabularSpec::PassiveAggressive(PaParams {
                loss: match c.cat("passive_aggressive:loss")? {
                    "squared_epsilon_insensitive" => PaLoss::SquaredEpsilonInsensitive,
                    _ => PaLoss::EpsilonInsensitive,
                },
                fit_intercept: bool_flag(c, "passive_aggressive:fit_intercept")?,
                c: c.float("passive_aggressive:c")?,
                epsilon: c.float("passive_aggressive:epsilon")?,
            }),
            "sgd" => TabularSpec::Sgd(SgdParams {
                penalty: match c.cat("sgd:penalty")? {
                    "l1" => Penalty::L1,
                    "elasticnet" => Penalty::Elasticnet,
                    _ => Penalty::L2,
                },
                schedule: match c.cat("sgd:schedule")? {
                    "constant" => Schedule::Constant,
                    _ => Schedule::Invscaling,
                },
                alpha: c.float("sgd:alpha")?,
                eta0: c.float("sgd:eta0")?,
                power_t: c.float("sgd:power_t")?,
                l1_ratio: opt_float(c, "sgd:l1_ratio", 0.15)?,
            }),
            other => return Err(Error::Contract(format!("unknown tabular regressor {other:?}"))),
        })
    }
}

impl SequenceSpec {
    pub fn kind(&self) -> &'static str {
        match self.arch {
            SeqArch::Rnn(RnnParams { cell: Cell::Gru, .. }) => "gru",
            SeqArch::Rnn(RnnParams { cell: Cell::Lstm, .. }) => "lstm",
            SeqArch::Tcn(_) => "tcn",
        }
    }

    pub fn from_config(kind: &str, c: &Configuration) -> Result<Self> {
        let usize_of = |name: &str| -> Result<usize> { Ok(c.int(name)?.max(1) as usize) };
        let arch = match kind {
            "gru" | "lstm" => SeqArch::Rnn(RnnParams {
                cell: if kind == "gru" { Cell::Gru } else { Cell::Lstm },
                hidden_size: usize_of(&format!("{kind}:hidden_size"))?,
                num_layers: usize_of(&format!("{kind}:num_layers"))?,
                dropout: opt_float(c, &format!("{kind}:dropout"), 0.0)?,
                layer_norm: bool_flag(c, &format!("{kind}:layer_norm"))?,
            }),
            "tcn" => SeqArch::Tcn(TcnParams {
                channels: usize_of("tcn:channels")?,
                kernel_size: usize_of("tcn:kernel_size")?,
                levels: usize_of("tcn:levels")?,
                dropout: opt_float(c, "tcn:dropout", 0.0)?,
                layer_norm: c.cat("tcn:norm")? == "layer_norm",
            }),
            other => return Err(Error::Contract(format!("unknown sequence regressor {other:?}"))),
        };
        Ok(SequenceSpec {
            arch,
            optimizer: OptimizerParams {
                learning_rate: c.float("optimizer:learning_rate")?,
                weight_decay: c.float("optimizer:weight_decay")?,
                momentum_beta: c.float("optimizer:momentum_beta")?,
                grad_clip: c.float("optimizer:grad_clip")?,
            },
            trainer: TrainerParams {
                batch_size: usize_of("trainer:batch_size")?,
                patience: usize_of("trainer:patience")?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TabularModel {
    Forest(Forest),
    Boosting(Boosting),
    Mlp {
        x: ColumnScale,
        y: TargetScale,
        net: Mlp,
    },
    Linear {
        x: ColumnScale,
        y: TargetScale,
        model: OnlineLinear,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTabular {
    pub spec: TabularSpec,
    pub seed: u64,
    pub columns: Vec<String>,
    pub consumed_budget: usize,
    pub model: TabularModel,
}

fn check_tabular(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows with {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::InsufficientData(format!("need >= 2 rows, got {}", x.nrows())));
    }
    if x.ncols() == 0 {
        return Err(Error::Shape("no feature columns".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in training data".into()));
    }
    Ok(())
}

pub fn fit_tabular(
    spec: &TabularSpec,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    columns: &[String],
    budget: usize,
    seed: u64,
    deadline: &Deadline,
) -> Result<FittedTabular> {
    check_tabular(x, y)?;
    if columns.len() != x.ncols() {
        return Err(Error::Contract(format!("{} names for {} columns", columns.len(), x.ncols())));
    }
    let model = match spec {
        TabularSpec::ExtraTrees(p) | TabularSpec::RandomForest(p) => {
            if p.tree.criterion == Criterion::Poisson && y.iter().any(|v| *v < 0.0) {
                return Err(Error::Data("poisson criterion needs non-negative targets".into()));
            }
            TabularModel::Forest(Forest::new(*p, seed))
        }
        TabularSpec::GradientBoosting(p) => TabularModel::Boosting(Boosting::new(*p, seed, y)),
        TabularSpec::Mlp(p) => TabularModel::Mlp {
            x: ColumnScale::fit(x),
            y: TargetScale::fit(y),
            net: Mlp::new(p.clone(), seed, x.ncols()),
        },
        TabularSpec::PassiveAggressive(p) => TabularModel::Linear {
            x: ColumnScale::fit(x),
            y: TargetScale::fit(y),
            model: OnlineLinear::new(LinearRule::PassiveAggressive(*p), seed, x.ncols()),
        },
        TabularSpec::Sgd(p) => TabularModel::Linear {
            x: ColumnScale::fit(x),
            y: TargetScale::fit(y),
            model: OnlineLinear::new(LinearRule::Sgd(*p), seed, x.ncols()),
        },
    };
    let mut fitted = FittedTabular {
        spec: spec.clone(),
        seed,
        columns: columns.to_vec(),
        consumed_budget: 0,
        model,
    };
    fitted.continue_fit(x, y, columns, budget, deadline)?;
    Ok(fitted)
}

impl FittedTabular {
    fn check_columns(&self, columns: &[String]) -> Result<()> {
        if columns != self.columns.as_slice() {
            return Err(Error::Contract(format!(
                "column signature mismatch: fitted on {} columns, got {}",
                self.columns.len(),
                columns.len()
            )));
        }
        Ok(())
    }

    /// Adds `extra` budget units; trees and optimizer state already built are kept.
    pub fn continue_fit(
        &mut self,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        columns: &[String],
        extra: usize,
        deadline: &Deadline,
    ) -> Result<()> {
        self.check_columns(columns)?;
        check_tabular(x, y)?;
        match &mut self.model {
            TabularModel::Forest(f) => f.grow(x, y, extra, deadline)?,
            TabularModel::Boosting(b) => b.grow(x, y, extra, deadline)?,
            TabularModel::Mlp { x: xs, y: ys, net } => {
                let z: Vec<f64> = y.iter().map(|v| ys.forward(*v)).collect();
                net.train(xs.apply(x).view(), &z, extra, deadline)?
            }
            TabularModel::Linear { x: xs, y: ys, model } => {
                let z: Vec<f64> = y.iter().map(|v| ys.forward(*v)).collect();
                model.train(xs.apply(x).view(), &z, extra, deadline)?
            }
        }
        self.consumed_budget += extra;
        Ok(())
    }

    /// Predictions clipped below at 0.
    pub fn predict(&self, x: ArrayView2<'_, f64>, columns: &[String]) -> Result<Vec<f64>> {
        self.check_columns(columns)?;
        self.predict_unchecked(x)
    }

    pub fn predict_unchecked(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.columns.len() {
            return Err(Error::Contract(format!(
                "expected {} columns, got {}",
                self.columns.len(),
                x.ncols()
            )));
        }
        let raw: Vec<f64> = match &self.model {
            TabularModel::Forest(f) => x.rows().into_iter().map(|r| f.predict_row(r)).collect(),
            TabularModel::Boosting(b) => x.rows().into_iter().map(|r| b.predict_row(r)).collect(),
            TabularModel::Mlp { x: xs, y: ys, net } => {
                net.predict(xs.apply(x).view()).into_iter().map(|z| ys.inverse(z)).collect()
            }
            TabularModel::Linear { x: xs, y: ys, model } => {
                let z = xs.apply(x);
                z.rows().into_iter().map(|r| ys.inverse(model.predict_row(r))).collect()
            }
        };
        Ok(raw
            .into_iter()
            .map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 })
            .collect())
    }
}

/// Any fitted learner, as stored in pipeline bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedRegressor {
    Tabular(FittedTabular),
    Sequence(FittedSequence),
}

impl FittedRegressor {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedRegressor::Tabular(t) => t.spec.kind(),
            FittedRegressor::Sequence(s) => s.spec.kind(),
        }
    }

    pub fn consumed_budget(&self) -> usize {
        match self {
            FittedRegressor::Tabular(t) => t.consumed_budget,
            FittedRegressor::Sequence(s) => s.consumed_budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::define_space;

    fn specs() -> Vec<TabularSpec> {
        let space = define_space();
        let mut c = space.default_configuration();
        ["extra_trees", "gradient_boosting", "mlp", "passive_aggressive", "random_forest", "sgd"]
            .iter()
            .map(|k| {
                c.insert("regressor:tabular", *k);
                for hp in space.hyperparameters() {
                    if hp.name.starts_with(&format!("{k}:")) {
                        c.insert(hp.name.clone(), hp.default.clone());
                    }
                }
                TabularSpec::from_config(k, &c).unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_target_predicted_by_every_kind() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| ((i * (j + 2)) % 11) as f64);
        let y = vec![42.0; 50];
        let cols: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        for spec in specs() {
            let f = fit_tabular(&spec, x.view(), &y, &cols, 5, 1, &Deadline::none()).unwrap();
            let p = f.predict(x.view(), &cols).unwrap();
            assert!(p.iter().all(|v| (v - 42.0).abs() < 1e-6), "{}: {:?}", spec.kind(), &p[..3]);
        }
    }

    #[test]
    fn budget_accumulates_and_signature_is_enforced() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i + j) as f64);
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let cols = vec!["a".to_string(), "b".to_string()];
        for spec in specs() {
            let mut f = fit_tabular(&spec, x.view(), &y, &cols, 10, 2, &Deadline::none()).unwrap();
            f.continue_fit(x.view(), &y, &cols, 20, &Deadline::none()).unwrap();
            assert_eq!(f.consumed_budget, 30);
            let wrong = vec!["a".to_string(), "z".to_string()];
            assert!(matches!(
                f.continue_fit(x.view(), &y, &wrong, 1, &Deadline::none()),
                Err(Error::Contract(_))
            ));
            assert!(matches!(f.predict(x.view(), &wrong), Err(Error::Contract(_))));
            let neg = x.mapv(|v| -1e3 * v);
            assert!(f.predict(neg.view(), &cols).unwrap().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let mut x = Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64);
        x[[3, 1]] = f64::NAN;
        let y = vec![1.0; 10];
        let cols = vec!["a".to_string(), "b".to_string()];
        for spec in specs() {
            assert!(matches!(
                fit_tabular(&spec, x.view(), &y, &cols, 1, 0, &Deadline::none()),
                Err(Error::Data(_))
            ));
        }
    }
}
