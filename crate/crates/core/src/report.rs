//! Run statistics, ensemble composition, cross-seed summaries and the
//! Wilcoxon signed-rank test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::configspace::{names, ConfigurationSpace};
use crate::dataset::{RunToFailureDataset, TestInstance};
use crate::ensemble::{build_ensemble, refit_final, weight_by, Ensemble, EnsembleSettings, FittedEnsemble, Member};
use crate::error::{Error, Result};
use crate::search::{
    rmse, run_search_with, RunHistory, SearchBudget, SearchOptions, SearchOutcome, TrialStatus,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub n_configurations: usize,
    pub n_success: usize,
    pub n_failed: usize,
    pub n_timeout: usize,
    /// Trials evaluated at the maximum budget.
    pub n_full_budget: usize,
}

pub fn run_statistics(history: &RunHistory, max_budget: usize) -> RunStatistics {
    let mut s = RunStatistics::default();
    for r in history.records() {
        s.n_configurations += 1;
        match r.status {
            TrialStatus::Success => s.n_success += 1,
            TrialStatus::Failed => s.n_failed += 1,
            TrialStatus::Timeout => s.n_timeout += 1,
        }
        if r.budget == max_budget {
            s.n_full_budget += 1;
        }
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub template: BTreeMap<String, f64>,
    pub features: BTreeMap<String, f64>,
    pub regressor: BTreeMap<String, f64>,
}

/// Weight-weighted share of each template, feature generator and regressor kind.
pub fn ensemble_composition(ensemble: &Ensemble) -> Composition {
    let cat = |name: &'static str| {
        move |m: &crate::ensemble::Member| {
            m.config
                .get(name)
                .and_then(|v| v.as_str())
                .unwrap_or("unknown")
                .to_string()
        }
    };
    Composition {
        template: weight_by(ensemble, cat(names::TEMPLATE)),
        features: weight_by(ensemble, cat(names::FEATURES)),
        regressor: weight_by(ensemble, |m| {
            m.config
                .get(names::TABULAR_REGRESSOR)
                .or_else(|| m.config.get(names::SEQUENCE_REGRESSOR))
                .and_then(|v| v.as_str())
                .unwrap_or("unknown")
                .to_string()
        }),
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean regret across runs on a shared time grid. Each run contributes its
/// step-function value at a grid point once it has one; points no run has
/// reached yet are omitted.
pub fn aggregate_regret(curves: &[Vec<(f64, f64)>], grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &t in grid {
        let vals: Vec<f64> = curves
            .iter()
            .filter_map(|c| c.iter().take_while(|(at, _)| *at <= t).last().map(|p| p.1))
            .collect();
        if !vals.is_empty() {
            out.push((t, vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// min(W+, W-) over non-zero differences.
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub exact: bool,
}

pub const EXACT_WILCOXON_MAX_N: usize = 15;
pub const MIN_WILCOXON_N: usize = 5;

/// Two-sided paired test; exact for up to 15 non-zero differences.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            significant: false,
            n: 0,
            exact: true,
        });
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite paired difference".into()));
    }
    let n = d.len();
    if n < MIN_WILCOXON_N {
        return Err(Error::InsufficientData(format!(
            "{n} non-zero differences, need at least {MIN_WILCOXON_N}"
        )));
    }
    // Average ranks of |d|, doubled so tied ranks stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut rank2 = vec![0u64; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[order[j + 1]].abs() == d[order[i]].abs() {
            j += 1;
        }
        // ranks i+1 ..= j+1, doubled average = i + j + 2
        for &k in &order[i..=j] {
            rank2[k] = (i + j + 2) as u64;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    let total2: u64 = rank2.iter().sum();
    let w_plus2: u64 = (0..n).filter(|&k| d[k] > 0.0).map(|k| rank2[k]).sum();
    let stat2 = w_plus2.min(total2 - w_plus2);
    let statistic = stat2 as f64 / 2.0;

    let (p_value, exact) = if n <= EXACT_WILCOXON_MAX_N {
        let mut extreme = 0u64;
        for mask in 0u32..(1u32 << n) {
            let w: u64 = (0..n).filter(|&k| mask & (1 << k) != 0).map(|k| rank2[k]).sum();
            if w.min(total2 - w) <= stat2 {
                extreme += 1;
            }
        }
        (extreme as f64 / (1u64 << n) as f64, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let w_plus = w_plus2 as f64 / 2.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let p = 2.0 * (1.0 - Normal::standard().cdf(z));
        (p.min(1.0), false)
    };
    Ok(WilcoxonResult {
        statistic,
        p_value,
        significant: p_value < alpha,
        n,
        exact,
    })
}

/// Normal-approximation p-value regardless of `n`, for comparing with the exact test.
pub fn wilcoxon_normal_p(a: &[f64], b: &[f64]) -> Result<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut abs: Vec<(f64, usize)> = d.iter().map(|v| v.abs()).zip(0..).collect();
    abs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[j + 1].0 == abs[i].0 {
            j += 1;
        }
        for item in &abs[i..=j] {
            ranks[item.1] = (i + j + 2) as f64 / 2.0;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    let nf = n as f64;
    let w_plus: f64 = (0..n).filter(|&k| d[k] > 0.0).map(|k| ranks[k]).sum();
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
    Ok((2.0 * (1.0 - Normal::standard().cdf(z))).min(1.0))
}

/// Everything one seed of an experiment produces.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: SearchOutcome,
    pub ensemble: FittedEnsemble,
    /// Set when the ensemble could not be built or refit and the incumbent
    /// stands in for it.
    pub fallback: Option<String>,
    pub test_predictions: Vec<f64>,
    pub test_rmse: Option<f64>,
}

/// Search, greedy ensemble, refit on all labelled data at the maximum budget,
/// then score on `test` when it has ground truth.
pub fn run_seed(
    space: &ConfigurationSpace,
    dataset: &RunToFailureDataset,
    test: &[TestInstance],
    budget: &SearchBudget,
    settings: &EnsembleSettings,
    options: &SearchOptions,
    seed: u64,
) -> Result<SeedRun> {
    let outcome = run_search_with(space, dataset, budget, seed, options)?;
    let targets: Vec<f64> = outcome.val.iter().map(|v| v.true_rul).collect();
    let refit = build_ensemble(&outcome.history, &targets, settings).and_then(|e| {
        refit_final(&e, dataset, budget.max_budget, Some(budget.per_trial_timeout_seconds))
    });
    let (ensemble, fallback) = match refit {
        Ok(e) => (e, None),
        Err(e) => {
            log::warn!("seed {seed}: falling back to the incumbent: {e}");
            (incumbent_ensemble(&outcome), Some(e.to_string()))
        }
    };
    let test_predictions = test.iter().map(|t| ensemble.predict(t)).collect::<Result<Vec<f64>>>()?;
    let test_rmse = if test.is_empty() {
        None
    } else {
        let truth: Vec<f64> = test.iter().map(|t| t.true_rul).collect();
        Some(rmse(&test_predictions, &truth)?)
    };
    Ok(SeedRun {
        seed,
        outcome,
        ensemble,
        fallback,
        test_predictions,
        test_rmse,
    })
}

fn incumbent_ensemble(outcome: &SearchOutcome) -> FittedEnsemble {
    let inc = &outcome.incumbent;
    FittedEnsemble {
        ensemble: Ensemble {
            members: vec![Member {
                trial_id: outcome.incumbent_trial,
                weight: 1.0,
                config: inc.config.clone(),
                budget: inc.consumed_budget,
                seed: inc.seed,
                val_rmse: outcome.incumbent_val_rmse,
            }],
            bag: vec![outcome.incumbent_trial],
            val_rmse: outcome.incumbent_val_rmse,
            best_single_rmse: outcome.incumbent_val_rmse,
            warnings: Vec::new(),
        },
        fitted: vec![inc.clone()],
    }
}

/// Per-seed metrics file content; derived only from persisted artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub statistics: RunStatistics,
    pub composition: Composition,
    pub incumbent_trial: Option<usize>,
    pub incumbent_val_rmse: Option<f64>,
    pub ensemble_val_rmse: f64,
    pub ensemble_members: usize,
    pub test_rmse: Option<f64>,
}

pub fn seed_metrics(
    seed: u64,
    history: &RunHistory,
    ensemble: &Ensemble,
    max_budget: usize,
    test_rmse: Option<f64>,
) -> SeedMetrics {
    let inc = history.incumbent();
    SeedMetrics {
        seed,
        statistics: run_statistics(history, max_budget),
        composition: ensemble_composition(ensemble),
        incumbent_trial: inc.map(|r| r.trial_id),
        incumbent_val_rmse: inc.and_then(|r| r.val_rmse),
        ensemble_val_rmse: ensemble.val_rmse,
        ensemble_members: ensemble.members.len(),
        test_rmse,
    }
}

/// Cross-seed summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub test_rmse_mean: Option<f64>,
    pub test_rmse_std: Option<f64>,
    pub per_seed: Vec<SeedMetrics>,
}

pub fn summarize(per_seed: Vec<SeedMetrics>, failed_seeds: Vec<u64>) -> Summary {
    let scores: Vec<f64> = per_seed.iter().filter_map(|m| m.test_rmse).collect();
    let (mean, std) = if scores.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&scores);
        (Some(m), Some(s))
    };
    Summary {
        seeds: per_seed.iter().map(|m| m.seed).collect(),
        failed_seeds,
        test_rmse_mean: mean,
        test_rmse_std: std,
        per_seed,
    }
}
