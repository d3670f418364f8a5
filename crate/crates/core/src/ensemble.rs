//! Greedy ensemble selection with replacement over validation predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::dataset::{RunToFailureDataset, TestInstance};
use crate::error::{Error, Result};
use crate::pipeline::{fit_unscored, FittedPipeline};
use crate::search::{rmse, RunHistory};
use crate::util::Deadline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub max_distinct: usize,
    /// Maximum bag size, the initial best model included.
    pub rounds: usize,
    pub pool_size: usize,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            max_distinct: 10,
            rounds: 25,
            pool_size: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub trial_id: usize,
    pub weight: f64,
    pub config: Configuration,
    pub budget: usize,
    pub seed: u64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    /// Distinct members in order of first selection.
    pub members: Vec<Member>,
    /// Trial ids in selection order, repeats included.
    pub bag: Vec<usize>,
    pub val_rmse: f64,
    pub best_single_rmse: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Greedy forward selection with replacement.
///
/// `preds[i]` are candidate `i`'s validation predictions; candidates are
/// assumed ordered best first. Returns the bag as candidate indices.
pub fn greedy_select(preds: &[Vec<f64>], targets: &[f64], rounds: usize, max_distinct: usize) -> Result<Vec<usize>> {
    if preds.is_empty() {
        return Err(Error::Ensemble("empty candidate pool".into()));
    }
    if preds.iter().any(|p| p.len() != targets.len()) {
        return Err(Error::Ensemble("candidates disagree on the validation set".into()));
    }
    let mut scores = Vec::with_capacity(preds.len());
    for p in preds {
        scores.push(rmse(p, targets)?);
    }
    let first = (0..preds.len())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)))
        .expect("non-empty");
    let mut bag = vec![first];
    let mut sum = preds[first].clone();
    let mut current = scores[first];
    while bag.len() < rounds.max(1) {
        let k = (bag.len() + 1) as f64;
        let distinct = {
            let mut d = bag.clone();
            d.sort_unstable();
            d.dedup();
            d
        };
        let mut best: Option<(f64, usize)> = None;
        for (c, p) in preds.iter().enumerate() {
            if distinct.len() >= max_distinct && distinct.binary_search(&c).is_err() {
                continue;
            }
            let mixed: Vec<f64> = sum.iter().zip(p).map(|(s, v)| (s + v) / k).collect();
            let score = rmse(&mixed, targets)?;
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, c));
            }
        }
        match best {
            Some((score, c)) if score < current => {
                bag.push(c);
                for (s, v) in sum.iter_mut().zip(&preds[c]) {
                    *s += v;
                }
                current = score;
            }
            _ => break,
        }
    }
    Ok(bag)
}

/// Validation RMSE of the equal-slot average of `bag`.
pub fn bag_rmse(preds: &[Vec<f64>], targets: &[f64], bag: &[usize]) -> Result<f64> {
    if bag.is_empty() {
        return Err(Error::Ensemble("empty bag".into()));
    }
    let k = bag.len() as f64;
    let mixed: Vec<f64> = (0..targets.len())
        .map(|i| bag.iter().map(|&c| preds[c][i]).sum::<f64>() / k)
        .collect();
    rmse(&mixed, targets)
}

/// Selects an ensemble from the successful trials of `history` scored against `targets`.
pub fn build_ensemble(history: &RunHistory, targets: &[f64], settings: &EnsembleSettings) -> Result<Ensemble> {
    if settings.max_distinct == 0 {
        return Err(Error::Ensemble("max_distinct must be >= 1".into()));
    }
    let mut pool: Vec<_> = history
        .successes()
        .filter(|r| r.val_predictions.as_ref().is_some_and(|p| p.len() == targets.len()))
        .collect();
    pool.sort_by(|a, b| {
        a.val_rmse
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.val_rmse.unwrap_or(f64::INFINITY))
            .then(a.trial_id.cmp(&b.trial_id))
    });
    pool.truncate(settings.pool_size.max(1));
    if pool.is_empty() {
        return Err(Error::Ensemble("no successful trial with validation predictions".into()));
    }
    let preds: Vec<Vec<f64>> = pool
        .iter()
        .map(|r| r.val_predictions.clone().expect("filtered"))
        .collect();
    let bag = greedy_select(&preds, targets, settings.rounds, settings.max_distinct)?;
    let val_rmse = bag_rmse(&preds, targets, &bag)?;
    let best_single_rmse = rmse(&preds[0], targets)?;
    if val_rmse > best_single_rmse {
        return Err(Error::Ensemble(format!(
            "bag rmse {val_rmse} exceeds best single {best_single_rmse}"
        )));
    }
    let total = bag.len() as f64;
    let mut members: Vec<Member> = Vec::new();
    for &c in &bag {
        let r = pool[c];
        match members.iter_mut().find(|m| m.trial_id == r.trial_id) {
            Some(m) => m.weight += 1.0 / total,
            None => members.push(Member {
                trial_id: r.trial_id,
                weight: 1.0 / total,
                config: r.config.clone(),
                budget: r.budget,
                seed: r.seed,
                val_rmse: r.val_rmse.expect("success"),
            }),
        }
    }
    for m in &mut members {
        let count = bag.iter().filter(|&&c| pool[c].trial_id == m.trial_id).count();
        m.weight = count as f64 / total;
    }
    Ok(Ensemble {
        members,
        bag: bag.iter().map(|&c| pool[c].trial_id).collect(),
        val_rmse,
        best_single_rmse,
        warnings: Vec::new(),
    })
}

/// An ensemble whose members hold trained pipelines.
#[derive(Debug, Clone)]
pub struct FittedEnsemble {
    pub ensemble: Ensemble,
    pub fitted: Vec<FittedPipeline>,
}

/// Retrains each distinct member on `data` at `budget` with its recorded
/// seed. Failed members are dropped and the remaining weights renormalized.
pub fn refit_final(
    ensemble: &Ensemble,
    data: &RunToFailureDataset,
    budget: usize,
    timeout_seconds: Option<f64>,
) -> Result<FittedEnsemble> {
    refit_with(ensemble, budget, |m| {
        let deadline = timeout_seconds.map_or_else(Deadline::none, Deadline::after_secs);
        fit_unscored(&m.config, data, budget, &deadline, m.seed)
    })
}

/// Refit driver with a caller-supplied member trainer.
pub fn refit_with<F>(ensemble: &Ensemble, budget: usize, mut train: F) -> Result<FittedEnsemble>
where
    F: FnMut(&Member) -> Result<FittedPipeline>,
{
    let mut kept = ensemble.clone();
    kept.members.clear();
    let mut fitted = Vec::new();
    for m in &ensemble.members {
        match train(m) {
            Ok(f) => {
                let mut member = m.clone();
                member.budget = budget;
                kept.members.push(member);
                fitted.push(f);
            }
            Err(e) => {
                let msg = format!("member {} dropped: refit failed: {e}", m.trial_id);
                log::warn!("{msg}");
                kept.warnings.push(msg);
            }
        }
    }
    if kept.members.is_empty() {
        return Err(Error::Ensemble("every member failed to refit".into()));
    }
    let total: f64 = kept.members.iter().map(|m| m.weight).sum();
    for m in &mut kept.members {
        m.weight /= total;
    }
    Ok(FittedEnsemble {
        ensemble: kept,
        fitted,
    })
}

impl FittedEnsemble {
    /// Weighted mean of member predictions.
    pub fn predict(&self, test: &TestInstance) -> Result<f64> {
        let mut total = 0.0;
        for (m, f) in self.ensemble.members.iter().zip(&self.fitted) {
            let p = f
                .predict_rul(test)
                .map_err(|e| Error::Ensemble(format!("member {} on {}: {e}", m.trial_id, test.id)))?;
            total += m.weight * p;
        }
        Ok(total.max(0.0))
    }

    /// `ensemble.json` plus one pipeline bundle per member under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ensemble.json"), serde_json::to_string_pretty(&self.ensemble)?)?;
        for (m, f) in self.ensemble.members.iter().zip(&self.fitted) {
            let metrics = serde_json::json!({ "weight": m.weight, "val_rmse": m.val_rmse });
            f.save_bundle(&dir.join(format!("member_{}", m.trial_id)), metrics)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let ensemble: Ensemble = serde_json::from_str(&std::fs::read_to_string(dir.join("ensemble.json"))?)?;
        let fitted = ensemble
            .members
            .iter()
            .map(|m| FittedPipeline::load_bundle(&dir.join(format!("member_{}", m.trial_id))))
            .collect::<Result<_>>()?;
        Ok(Self { ensemble, fitted })
    }
}

/// Weight per value of `key` over the members, e.g. per regressor kind.
pub fn weight_by<F>(ensemble: &Ensemble, key: F) -> BTreeMap<String, f64>
where
    F: Fn(&Member) -> String,
{
    let mut out = BTreeMap::new();
    for m in &ensemble.members {
        *out.entry(key(m)).or_insert(0.0) += m.weight;
    }
    out
}
