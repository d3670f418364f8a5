//! Configuration → cleaning, windowed features, selection and regressor.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::configspace::{names, Configuration};
use crate::dataset::{RunToFailureDataset, TestInstance};
use crate::error::{Error, Result};
use crate::features::{
    fresh_select, reduce_pca, select_percentile, FeatureExtractor, FittedPca, ScoreTest, SelectionMode,
    WindowConfig, STAT_FEATURES,
};
use crate::preprocessing::{CleaningConfig, FittedCleaning, ImputeStrategy, ScalerKind, Smoothing};
use crate::regressors::{
    fit_sequence, fit_tabular, FittedRegressor, SequenceSpec, Series, TabularSpec,
};
use crate::search::rmse;
use crate::util::Deadline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Tabular,
    Seq2Seq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSelection {
    None,
    Pca { keep_variance: f64, whiten: bool },
    Percentile { percentile: f64, score: ScoreTest },
    Rates { alpha: f64, test: ScoreTest, mode: SelectionMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "spec", rename_all = "snake_case")]
pub enum RegressorSpec {
    Tabular(TabularSpec),
    Sequence(SequenceSpec),
}

impl RegressorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            RegressorSpec::Tabular(t) => t.kind(),
            RegressorSpec::Sequence(s) => s.kind(),
        }
    }
}

/// Resolved step specifications of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub template: Template,
    pub cleaning: CleaningConfig,
    pub window: WindowConfig,
    pub extractor: FeatureExtractor,
    pub selection: FeatureSelection,
    pub regressor: RegressorSpec,
}

fn score_test(name: &str) -> ScoreTest {
    match name {
        "kendall" => ScoreTest::Kendall,
        _ => ScoreTest::Pearson,
    }
}

/// Routes every active hyperparameter of `config` to its step.
pub fn instantiate(config: &Configuration) -> Result<Pipeline> {
    let template = match config.cat(names::TEMPLATE)? {
        "tabular" => Template::Tabular,
        "seq2seq" => Template::Seq2Seq,
        other => return Err(Error::Contract(format!("unknown template {other:?}"))),
    };
    let impute_strategy = match config.cat(names::IMPUTATION)? {
        "mean" => ImputeStrategy::Mean,
        "median" => ImputeStrategy::Median,
        _ => ImputeStrategy::Neighbor,
    };
    let smoothing = match config.cat(names::SMOOTHING)? {
        "exp_smoothing" => Some(Smoothing {
            alpha: config.float(names::SMOOTHING_ALPHA)?,
            min_periods: config.int(names::SMOOTHING_MIN_PERIODS)?.max(1) as usize,
        }),
        _ => None,
    };
    let scaler = match config.cat(names::SCALER)? {
        "robust" => ScalerKind::Robust {
            q_lo: config.float(names::ROBUST_Q_LO)?,
            q_hi: config.float(names::ROBUST_Q_HI)?,
        },
        "normalizer" => ScalerKind::UnitNorm,
        "minmax" => ScalerKind::MinMax,
        "standard" => ScalerKind::Standard,
        _ => ScalerKind::None,
    };
    let window = WindowConfig::new(
        config.int(names::WINDOW_LENGTH)?.max(0) as usize,
        config.int(names::WINDOW_STRIDE)?.max(0) as usize,
    )?;
    let extractor = match config.cat(names::FEATURES)? {
        "stat_catalog" => {
            let flags = STAT_FEATURES
                .iter()
                .map(|f| config.flag(&names::stat_flag(f)))
                .collect::<Result<Vec<bool>>>()?;
            FeatureExtractor::Stat(flags)
        }
        _ => FeatureExtractor::Flatten,
    };
    let selection = match config.cat(names::SELECTION)? {
        "pca" => FeatureSelection::Pca {
            keep_variance: config.float("pca:keep_variance")?,
            whiten: config.flag("pca:whiten")?,
        },
        "select_percentile" => FeatureSelection::Percentile {
            percentile: config.float("select_percentile:percentile")?,
            score: score_test(config.cat("select_percentile:score")?),
        },
        "select_rates" => FeatureSelection::Rates {
            alpha: config.float("select_rates:alpha")?,
            test: score_test(config.cat("select_rates:test")?),
            mode: match config.cat("select_rates:mode")? {
                "fpr" => SelectionMode::Fpr,
                "fwe_bonferroni" => SelectionMode::FweBonferroni,
                _ => SelectionMode::FdrBy,
            },
        },
        _ => FeatureSelection::None,
    };
    let regressor = match template {
        Template::Tabular => {
            if config.contains(names::SEQUENCE_REGRESSOR) {
                return Err(Error::Contract("tabular template with a sequence regressor".into()));
            }
            let kind = config.cat(names::TABULAR_REGRESSOR)?;
            RegressorSpec::Tabular(TabularSpec::from_config(kind, config)?)
        }
        Template::Seq2Seq => {
            if config.contains(names::TABULAR_REGRESSOR) {
                return Err(Error::Contract("seq2seq template with a tabular regressor".into()));
            }
            let kind = config.cat(names::SEQUENCE_REGRESSOR)?;
            RegressorSpec::Sequence(SequenceSpec::from_config(kind, config)?)
        }
    };
    Ok(Pipeline {
        template,
        cleaning: CleaningConfig {
            impute_strategy,
            smoothing,
            scaler,
        },
        window,
        extractor,
        selection,
        regressor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedSelection {
    None,
    Columns { columns: Vec<usize> },
    Pca(FittedPca),
}

impl FittedSelection {
    fn fit(sel: FeatureSelection, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self> {
        Ok(match sel {
            FeatureSelection::None => FittedSelection::None,
            FeatureSelection::Pca { keep_variance, whiten } => {
                FittedSelection::Pca(reduce_pca(x, keep_variance, whiten)?.0)
            }
            FeatureSelection::Percentile { percentile, score } => FittedSelection::Columns {
                columns: select_percentile(x, y, percentile, score),
            },
            FeatureSelection::Rates { alpha, test, mode } => FittedSelection::Columns {
                columns: fresh_select(x, y, alpha, test, mode)?,
            },
        })
    }

    fn apply(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        match self {
            FittedSelection::None => Ok(x),
            FittedSelection::Columns { columns } => Ok(x.select(Axis(1), columns)),
            FittedSelection::Pca(p) => p.transform(x.view()),
        }
    }

    fn names(&self, input: &[String]) -> Vec<String> {
        match self {
            FittedSelection::None => input.to_vec(),
            FittedSelection::Columns { columns } => columns.iter().map(|&c| input[c].clone()).collect(),
            FittedSelection::Pca(p) => (0..p.n_components()).map(|k| format!("pc{k}")).collect(),
        }
    }
}

/// Test-only interference with a fit call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Raise an error before training.
    Fail,
    /// Sleep until the deadline passes.
    Stall,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialHooks {
    pub fault: Option<Fault>,
}

enum TrainData {
    Tabular { x: Array2<f64>, y: Vec<f64> },
    Sequence(Vec<Series>),
}

/// Per-instance feature rows and window-end targets of cleaned training series.
fn window_rows(
    pipeline: &Pipeline,
    train: &RunToFailureDataset,
    cleaned: &[Array2<f64>],
    deadline: &Deadline,
) -> Result<(Vec<Array2<f64>>, Vec<Vec<f64>>)> {
    let window = pipeline.window;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (inst, values) in train.instances.iter().zip(cleaned) {
        let rul = inst
            .rul
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("training instance {} has no RUL labels", inst.id)))?;
        if values.ncols() < window.length {
            continue;
        }
        rows.push(pipeline.extractor.rows(values.view(), window)?);
        targets.push(window.starts(values.ncols()).map(|s| rul[s + window.length - 1]).collect());
        deadline.check()?;
    }
    if rows.is_empty() {
        return Err(Error::TooShort {
            length: cleaned.iter().map(|v| v.ncols()).min().unwrap_or(0),
            window: window.length,
        });
    }
    Ok((rows, targets))
}

fn stack(rows: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<'_, f64>> = rows.iter().map(|m| m.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

fn training_data(
    spec: &RegressorSpec,
    selection: &FittedSelection,
    rows: Vec<Array2<f64>>,
    targets: Vec<Vec<f64>>,
) -> Result<TrainData> {
    Ok(match spec {
        RegressorSpec::Tabular(_) => TrainData::Tabular {
            x: selection.apply(stack(&rows)?)?,
            y: targets.into_iter().flatten().collect(),
        },
        RegressorSpec::Sequence(_) => TrainData::Sequence(
            rows.into_iter()
                .zip(targets)
                .map(|(r, y)| Ok((selection.apply(r)?.reversed_axes().as_standard_layout().to_owned(), y)))
                .collect::<Result<_>>()?,
        ),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: Configuration,
    pub pipeline: Pipeline,
    pub cleaning: FittedCleaning,
    pub selection: FittedSelection,
    /// Regressor input columns after selection.
    pub feature_names: Vec<String>,
    pub regressor: FittedRegressor,
    pub seed: u64,
    pub consumed_budget: usize,
    pub fit_seconds: f64,
}

impl PartialEq for FittedPipeline {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.pipeline == other.pipeline
            && self.cleaning == other.cleaning
            && self.selection == other.selection
            && self.feature_names == other.feature_names
            && self.regressor == other.regressor
            && self.seed == other.seed
            && self.consumed_budget == other.consumed_budget
    }
}

/// Result of one budgeted fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub fitted: FittedPipeline,
    pub val_predictions: Vec<f64>,
    pub val_rmse: f64,
}

fn stall_until(deadline: &Deadline) -> Error {
    if deadline.remaining().is_none() {
        return Error::Timeout;
    }
    while !deadline.expired() {
        std::thread::sleep(Duration::from_millis(5).min(deadline.remaining().unwrap_or_default()));
    }
    Error::Timeout
}

pub(crate) fn apply_fault(hooks: TrialHooks, deadline: &Deadline) -> Result<()> {
    match hooks.fault {
        Some(Fault::Fail) => Err(Error::Fit("injected failure".into())),
        Some(Fault::Stall) => Err(stall_until(deadline)),
        None => Ok(()),
    }
}

/// Fits transforms on `train`, the regressor with `budget` units, and scores `val`.
pub fn fit(
    config: &Configuration,
    train: &RunToFailureDataset,
    val: &[TestInstance],
    budget: usize,
    deadline: &Deadline,
    seed: u64,
    hooks: TrialHooks,
) -> Result<FitOutcome> {
    let started = Instant::now();
    if val.is_empty() {
        return Err(Error::Contract("validation set is empty".into()));
    }
    apply_fault(hooks, deadline)?;
    let mut fitted = fit_unscored(config, train, budget, deadline, seed)?;
    let (val_predictions, val_rmse) = fitted.score(val, deadline)?;
    fitted.fit_seconds = started.elapsed().as_secs_f64();
    Ok(FitOutcome {
        fitted,
        val_predictions,
        val_rmse,
    })
}

/// Fits every step on `train` without scoring.
pub fn fit_unscored(
    config: &Configuration,
    train: &RunToFailureDataset,
    budget: usize,
    deadline: &Deadline,
    seed: u64,
) -> Result<FittedPipeline> {
    let started = Instant::now();
    if budget == 0 {
        return Err(Error::Contract("budget must be >= 1".into()));
    }
    let pipeline = instantiate(config)?;
    let (cleaning, cleaned) = FittedCleaning::fit(pipeline.cleaning, train)?;
    deadline.check()?;
    let (rows, targets) = window_rows(&pipeline, train, &cleaned, deadline)?;
    drop(cleaned);
    let stacked = stack(&rows)?;
    let y_all: Vec<f64> = targets.iter().flatten().copied().collect();
    let raw_names = pipeline.extractor.column_names(cleaning.output_names(), pipeline.window.length);
    let selection = FittedSelection::fit(pipeline.selection, stacked.view(), &y_all)?;
    drop(stacked);
    let feature_names = selection.names(&raw_names);
    deadline.check()?;

    let regressor = match (&pipeline.regressor, training_data(&pipeline.regressor, &selection, rows, targets)?) {
        (RegressorSpec::Tabular(spec), TrainData::Tabular { x, y }) => {
            FittedRegressor::Tabular(fit_tabular(spec, x.view(), &y, &feature_names, budget, seed, deadline)?)
        }
        (RegressorSpec::Sequence(spec), TrainData::Sequence(series)) => {
            let reg = fit_sequence(spec, &series, budget, seed, deadline)?;
            if reg.interrupted {
                return Err(Error::Timeout);
            }
            FittedRegressor::Sequence(reg)
        }
        _ => unreachable!("training data follows the regressor family"),
    };
    Ok(FittedPipeline {
        config: config.clone(),
        pipeline,
        cleaning,
        selection,
        feature_names,
        regressor,
        seed,
        consumed_budget: budget,
        fit_seconds: started.elapsed().as_secs_f64(),
    })
}

impl FittedPipeline {
    pub fn template(&self) -> Template {
        self.pipeline.template
    }

    fn score(&self, val: &[TestInstance], deadline: &Deadline) -> Result<(Vec<f64>, f64)> {
        let mut preds = Vec::with_capacity(val.len());
        for inst in val {
            deadline.check()?;
            preds.push(self.predict_rul(inst)?);
        }
        deadline.check()?;
        let truth: Vec<f64> = val.iter().map(|v| v.true_rul).collect();
        let score = rmse(&preds, &truth)?;
        Ok((preds, score))
    }

    /// Trains the regressor `extra` more units on `train` (the dataset it was
    /// fitted on) with the already-fitted transforms, then rescores `val`.
    pub fn continue_fit(
        &mut self,
        train: &RunToFailureDataset,
        val: &[TestInstance],
        extra: usize,
        deadline: &Deadline,
    ) -> Result<(Vec<f64>, f64)> {
        let started = Instant::now();
        let cleaned: Vec<Array2<f64>> = train
            .instances
            .iter()
            .map(|inst| self.cleaning.apply(inst.values.view(), &train.symbols))
            .collect::<Result<_>>()?;
        let (rows, targets) = window_rows(&self.pipeline, train, &cleaned, deadline)?;
        drop(cleaned);
        match (&mut self.regressor, training_data(&self.pipeline.regressor, &self.selection, rows, targets)?) {
            (FittedRegressor::Tabular(reg), TrainData::Tabular { x, y }) => {
                reg.continue_fit(x.view(), &y, &self.feature_names, extra, deadline)?
            }
            (FittedRegressor::Sequence(reg), TrainData::Sequence(series)) => {
                reg.continue_fit(&series, extra, deadline)?;
                if reg.interrupted {
                    return Err(Error::Timeout);
                }
            }
            _ => return Err(Error::Contract("regressor does not match its pipeline spec".into())),
        }
        self.consumed_budget += extra;
        let out = self.score(val, deadline)?;
        self.fit_seconds += started.elapsed().as_secs_f64();
        Ok(out)
    }

    fn clean(&self, test: &TestInstance) -> Result<Array2<f64>> {
        let expected = self.cleaning.input_dim();
        if test.values.nrows() != expected {
            return Err(Error::Contract(format!(
                "instance {} has {} channels, pipeline was trained on {expected}",
                test.id,
                test.values.nrows()
            )));
        }
        self.cleaning.apply(test.values.view(), &test.symbols)
    }

    /// Input handed to the sequence model for a prefix (`features × windows`).
    pub fn sequence_input(&self, test: &TestInstance) -> Result<Array2<f64>> {
        let cleaned = self.clean(test)?;
        let rows = self.pipeline.extractor.rows_aligned_to_end(cleaned.view(), self.pipeline.window)?;
        Ok(self.selection.apply(rows)?.reversed_axes().as_standard_layout().to_owned())
    }

    /// RUL estimate at the final observed timestep, never negative.
    pub fn predict_rul(&self, test: &TestInstance) -> Result<f64> {
        let value = match &self.regressor {
            FittedRegressor::Tabular(reg) => {
                let cleaned = self.clean(test)?;
                let row = self.pipeline.extractor.last_row(cleaned.view(), self.pipeline.window)?;
                let x = self.selection.apply(row)?;
                reg.predict(x.view(), &self.feature_names)?[0]
            }
            FittedRegressor::Sequence(reg) => reg.predict(self.sequence_input(test)?.view())?,
        };
        Ok(if value.is_finite() { value.max(0.0) } else { 0.0 })
    }

    /// Writes `manifest.json` and `model.json` into `dir`.
    pub fn save_bundle(&self, dir: &Path, metrics: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::json!({
            "config": self.config,
            "budget": self.consumed_budget,
            "seed": self.seed,
            "template": self.pipeline.template,
            "regressor": self.regressor.kind(),
            "feature_names": self.feature_names,
            "fit_seconds": self.fit_seconds,
            "metrics": metrics,
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        std::fs::write(dir.join("model.json"), serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_bundle(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("model.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::define_space;
    use crate::dataset::{generate_synthetic, split_train_val, truncate_instances};
    use proptest::prelude::*;

    fn data() -> (RunToFailureDataset, Vec<TestInstance>) {
        let ds = generate_synthetic(10, 3, 60, 0.05, 5).unwrap();
        let (train, val) = split_train_val(&ds, 0.7, 1).unwrap();
        (train, truncate_instances(&val, 0.5, 0.9, 2).unwrap())
    }

    fn tabular_config(kind: &str) -> Configuration {
        let space = define_space();
        let mut c = space.default_configuration();
        c.insert(names::WINDOW_LENGTH, 8i64);
        c.insert(names::WINDOW_STRIDE, 2i64);
        c.insert(names::FEATURES, "flatten");
        c.insert(names::TABULAR_REGRESSOR, kind);
        space.complete(c).unwrap()
    }

    fn seq_config(kind: &str) -> Configuration {
        let space = define_space();
        let mut c = space.default_configuration();
        c.insert(names::TEMPLATE, "seq2seq");
        c.remove(names::TABULAR_REGRESSOR);
        c.insert(names::WINDOW_LENGTH, 6i64);
        c.insert(names::SEQUENCE_REGRESSOR, kind);
        space.complete(c).unwrap()
    }

    #[test]
    fn smoothing_off_means_no_smoothing_step() {
        let mut c = tabular_config("random_forest");
        c.insert(names::SMOOTHING, "none");
        let c = define_space().complete(c).unwrap();
        assert!(instantiate(&c).unwrap().cleaning.smoothing.is_none());
    }

    #[test]
    fn rmse_matches_external_recomputation_and_is_deterministic() {
        let (train, val) = data();
        let c = tabular_config("extra_trees");
        let a = fit(&c, &train, &val, 5, &Deadline::none(), 3, TrialHooks::default()).unwrap();
        let b = fit(&c, &train, &val, 5, &Deadline::none(), 3, TrialHooks::default()).unwrap();
        assert_eq!(a.val_rmse, b.val_rmse);
        let n = val.len() as f64;
        let manual = (a.val_predictions.iter().zip(&val).map(|(p, v)| (p - v.true_rul).powi(2)).sum::<f64>() / n).sqrt();
        assert!((manual - a.val_rmse).abs() < 1e-9);
        assert!(a.val_predictions.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn stall_hook_times_out_and_fail_hook_errors() {
        let (train, val) = data();
        let c = tabular_config("random_forest");
        let d = Deadline::after_secs(0.05);
        let r = fit(&c, &train, &val, 1, &d, 0, TrialHooks { fault: Some(Fault::Stall) });
        assert!(matches!(r, Err(Error::Timeout)));
        let r = fit(&c, &train, &val, 1, &Deadline::none(), 0, TrialHooks { fault: Some(Fault::Fail) });
        assert!(matches!(r, Err(Error::Fit(_))));
    }

    #[test]
    fn prefix_boundaries() {
        let (train, val) = data();
        let c = tabular_config("random_forest");
        let out = fit(&c, &train, &val, 3, &Deadline::none(), 0, TrialHooks::default()).unwrap();
        let mut t = val[0].clone();
        t.values = t.values.slice(ndarray::s![.., ..8]).to_owned();
        assert!(out.fitted.predict_rul(&t).unwrap() >= 0.0);
        t.values = t.values.slice(ndarray::s![.., ..7]).to_owned();
        assert!(matches!(out.fitted.predict_rul(&t), Err(Error::TooShort { .. })));
        let mut wide = val[0].clone();
        wide.values = Array2::zeros((4, 20));
        assert!(matches!(out.fitted.predict_rul(&wide), Err(Error::Contract(_))));
    }

    #[test]
    fn seq2seq_prediction_is_last_step_of_sequence_model() {
        let (train, val) = data();
        let c = seq_config("gru");
        let out = fit(&c, &train, &val, 2, &Deadline::none(), 0, TrialHooks::default()).unwrap();
        let FittedRegressor::Sequence(model) = &out.fitted.regressor else {
            panic!("expected a sequence model");
        };
        for v in &val {
            let direct = model.predict_steps(out.fitted.sequence_input(v).unwrap().view()).unwrap();
            assert_eq!(out.fitted.predict_rul(v).unwrap(), *direct.last().unwrap());
        }
    }

    #[test]
    fn validation_order_does_not_touch_training() {
        let (train, val) = data();
        let c = tabular_config("gradient_boosting");
        let a = fit(&c, &train, &val, 4, &Deadline::none(), 9, TrialHooks::default()).unwrap();
        let mut rev = val.clone();
        rev.reverse();
        let b = fit(&c, &train, &rev, 4, &Deadline::none(), 9, TrialHooks::default()).unwrap();
        assert_eq!(a.fitted, b.fitted);
        let mut p = b.val_predictions.clone();
        p.reverse();
        assert_eq!(a.val_predictions, p);
    }

    #[test]
    fn continue_matches_single_fit_for_forests() {
        let (train, val) = data();
        let c = tabular_config("random_forest");
        let full = fit(&c, &train, &val, 6, &Deadline::none(), 4, TrialHooks::default()).unwrap();
        let mut part = fit(&c, &train, &val, 2, &Deadline::none(), 4, TrialHooks::default()).unwrap();
        let (_, score) = part.fitted.continue_fit(&train, &val, 4, &Deadline::none()).unwrap();
        assert_eq!(score, full.val_rmse);
        assert_eq!(part.fitted.consumed_budget, 6);
    }

    #[test]
    fn bundle_roundtrip_predicts_identically() {
        let (train, val) = data();
        let c = tabular_config("mlp");
        let out = fit(&c, &train, &val, 2, &Deadline::none(), 1, TrialHooks::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.fitted.save_bundle(dir.path(), serde_json::json!({"val_rmse": out.val_rmse})).unwrap();
        let back = FittedPipeline::load_bundle(dir.path()).unwrap();
        for v in &val {
            assert_eq!(back.predict_rul(v).unwrap(), out.fitted.predict_rul(v).unwrap());
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["budget"], 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn sampled_configs_respect_template(seed in any::<u64>()) {
            let space = define_space();
            let c = space.sample(seed).unwrap();
            let p = instantiate(&c).unwrap();
            match p.template {
                Template::Tabular => prop_assert!(matches!(p.regressor, RegressorSpec::Tabular(_))),
                Template::Seq2Seq => prop_assert!(matches!(p.regressor, RegressorSpec::Sequence(_))),
            }
        }
    }
}
