//! Hyperband over model-based proposals, executed on a pool of worker threads.

use std::collections::{BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::history::{RunHistory, TrialRecord, TrialStatus};
use super::hyperband::{hyperband_schedule, Rung};
use super::proposer::{Proposer, ProposerSettings};
use crate::configspace::{names, Configuration, ConfigurationSpace};
use crate::dataset::{split_train_val, truncate_instances, RunToFailureDataset, TestInstance};
use crate::error::{Error, Result};
use crate::pipeline::{apply_fault, fit, Fault, FitOutcome, FittedPipeline, TrialHooks};
use crate::util::{derive_seed, Deadline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub total_walltime_seconds: f64,
    pub per_trial_timeout_seconds: f64,
    /// Largest per-trial budget `R` (trees, stages or epochs).
    pub max_budget: usize,
    pub eta: usize,
    pub n_workers: usize,
    /// Optional cap on launched trials, for reproducible short runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials: Option<usize>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            total_walltime_seconds: 3600.0,
            per_trial_timeout_seconds: 300.0,
            max_budget: 81,
            eta: 3,
            n_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            max_trials: None,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.total_walltime_seconds) || !positive(self.per_trial_timeout_seconds) {
            return Err(Error::Contract("time limits must be positive".into()));
        }
        if self.eta < 2 {
            return Err(Error::Contract(format!("eta = {} must be >= 2", self.eta)));
        }
        if self.max_budget < 1 || self.n_workers < 1 || self.max_trials == Some(0) {
            return Err(Error::Contract("max_budget, n_workers and max_trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// Deliberate trial failures for robustness tests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// Regressor kinds whose every trial raises.
    pub failing_regressors: BTreeSet<String>,
    pub fail_trials: BTreeSet<usize>,
    pub stall_trials: BTreeSet<usize>,
}

impl FaultPlan {
    fn hooks(&self, trial_id: usize, config: &Configuration) -> TrialHooks {
        let kind = config
            .get(names::TABULAR_REGRESSOR)
            .or_else(|| config.get(names::SEQUENCE_REGRESSOR))
            .and_then(|v| v.as_str());
        let fault = if self.stall_trials.contains(&trial_id) {
            Some(Fault::Stall)
        } else if self.fail_trials.contains(&trial_id) || kind.is_some_and(|k| self.failing_regressors.contains(k)) {
            Some(Fault::Fail)
        } else {
            None
        };
        TrialHooks { fault }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Share of instances used for training; the rest validate.
    pub train_fraction: f64,
    /// Validation series are cut at a uniform fraction in this range.
    pub truncation: (f64, f64),
    pub proposer: ProposerSettings,
    pub faults: FaultPlan,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            truncation: (0.3, 0.9),
            proposer: ProposerSettings::default(),
            faults: FaultPlan::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub history: RunHistory,
    /// Best pipeline, trained up to the maximum budget when that succeeded.
    pub incumbent: FittedPipeline,
    pub incumbent_trial: usize,
    pub incumbent_val_rmse: f64,
    pub incumbent_val_predictions: Vec<f64>,
    pub train: RunToFailureDataset,
    pub val: Vec<TestInstance>,
    pub elapsed_seconds: f64,
}

struct Task {
    trial_id: usize,
    config: Configuration,
    budget: usize,
    seed: u64,
    bracket: usize,
    rung: usize,
    parent: Option<(usize, Box<FittedPipeline>)>,
    hooks: TrialHooks,
}

struct Done {
    trial_id: usize,
    config: Configuration,
    budget: usize,
    seed: u64,
    bracket: usize,
    rung: usize,
    continued_from: Option<usize>,
    result: Result<FitOutcome>,
    fit_seconds: f64,
}

struct Survivor {
    loss: f64,
    trial_id: usize,
    config: Configuration,
    seed: u64,
    fitted: Box<FittedPipeline>,
}

/// Successive-halving state of the bracket being run.
struct Bracket {
    index: usize,
    rungs: Vec<Rung>,
    rung: usize,
    launched: usize,
    completed: usize,
    promotions: VecDeque<Survivor>,
    keep: Vec<Survivor>,
}

impl Bracket {
    fn new(index: usize, schedule: &[Vec<Rung>]) -> Self {
        Self {
            index,
            rungs: schedule[index % schedule.len()].clone(),
            rung: 0,
            launched: 0,
            completed: 0,
            promotions: VecDeque::new(),
            keep: Vec::new(),
        }
    }

    /// Retains the best successes of the current rung, as many as the next rung needs.
    fn offer(&mut self, s: Survivor) {
        let Some(next) = self.rungs.get(self.rung + 1) else {
            return;
        };
        self.keep.push(s);
        self.keep
            .sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.trial_id.cmp(&b.trial_id)));
        self.keep.truncate(next.n_configs);
    }
}

struct Coordinator<'a> {
    space: &'a ConfigurationSpace,
    proposer: Proposer<'a>,
    schedule: Vec<Vec<Rung>>,
    bracket: Bracket,
    history: RunHistory,
    next_id: usize,
    in_flight: Vec<(Configuration, usize)>,
    seed: u64,
    faults: &'a FaultPlan,
}

impl<'a> Coordinator<'a> {
    /// Next trial to launch, or `None` when the current rung must finish first.
    fn next_task(&mut self) -> Result<Option<Task>> {
        loop {
            let b = &mut self.bracket;
            let rung = b.rungs[b.rung];
            if b.rung == 0 && b.launched < rung.n_configs {
                let exclude: Vec<Configuration> = self
                    .in_flight
                    .iter()
                    .filter(|(_, budget)| *budget == rung.budget)
                    .map(|(c, _)| c.clone())
                    .collect();
                let config = self.proposer.propose(&self.history, rung.budget, &exclude)?;
                debug_assert!(self.space.validate(&config).is_ok());
                b.launched += 1;
                let id = self.next_id;
                return Ok(Some(Task {
                    trial_id: id,
                    hooks: self.faults.hooks(id, &config),
                    seed: derive_seed(self.seed, &[id as u64]),
                    config,
                    budget: rung.budget,
                    bracket: b.index,
                    rung: 0,
                    parent: None,
                }));
            }
            if let Some(s) = b.promotions.pop_front() {
                b.launched += 1;
                let id = self.next_id;
                return Ok(Some(Task {
                    trial_id: id,
                    hooks: self.faults.hooks(id, &s.config),
                    config: s.config,
                    budget: rung.budget,
                    seed: s.seed,
                    bracket: b.index,
                    rung: b.rung,
                    parent: Some((s.trial_id, s.fitted)),
                }));
            }
            if b.completed < b.launched {
                return Ok(None);
            }
            if b.rung + 1 < b.rungs.len() && !b.keep.is_empty() {
                b.rung += 1;
                let budget = b.rungs[b.rung].budget;
                let keep = std::mem::take(&mut b.keep);
                b.promotions = keep
                    .into_iter()
                    .filter(|s| !self.history.was_run(&s.config, budget))
                    .collect();
                b.launched = 0;
                b.completed = 0;
                if !b.promotions.is_empty() {
                    continue;
                }
            }
            self.bracket = Bracket::new(self.bracket.index + 1, &self.schedule);
        }
    }
}

fn run_task(task: Task, train: &RunToFailureDataset, val: &[TestInstance], deadline: Deadline) -> Done {
    let started = Instant::now();
    let Task {
        trial_id,
        config,
        budget,
        seed,
        bracket,
        rung,
        parent,
        hooks,
    } = task;
    let continued_from = parent.as_ref().map(|(id, _)| *id);
    let work = AssertUnwindSafe(|| match parent {
        None => fit(&config, train, val, budget, &deadline, seed, hooks),
        Some((_, mut fitted)) => {
            apply_fault(hooks, &deadline)?;
            let extra = budget.saturating_sub(fitted.consumed_budget).max(1);
            let (val_predictions, val_rmse) = fitted.continue_fit(train, val, extra, &deadline)?;
            Ok(FitOutcome {
                fitted: *fitted,
                val_predictions,
                val_rmse,
            })
        }
    });
    let result = catch_unwind(work).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Error::Fit(format!("trial panicked: {msg}")))
    });
    Done {
        trial_id,
        config,
        budget,
        seed,
        bracket,
        rung,
        continued_from,
        result,
        fit_seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn run_search(
    space: &ConfigurationSpace,
    dataset: &RunToFailureDataset,
    budget: &SearchBudget,
    seed: u64,
) -> Result<SearchOutcome> {
    run_search_with(space, dataset, budget, seed, &SearchOptions::default())
}

/// Runs Hyperband brackets cyclically until the walltime (or trial cap) is
/// used up, then returns the history and the incumbent trained at budget `R`.
pub fn run_search_with(
    space: &ConfigurationSpace,
    dataset: &RunToFailureDataset,
    budget: &SearchBudget,
    seed: u64,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    budget.validate()?;
    dataset.validate()?;
    let started = Instant::now();
    let search_deadline = Deadline::after_secs(budget.total_walltime_seconds);
    let (train, val_full) = split_train_val(dataset, options.train_fraction, seed)?;
    let val = truncate_instances(&val_full, options.truncation.0, options.truncation.1, seed)?;
    let schedule = hyperband_schedule(budget.max_budget, budget.eta);
    let mut coord = Coordinator {
        space,
        proposer: Proposer::with_settings(space, derive_seed(seed, &[0x9e0]), options.proposer),
        bracket: Bracket::new(0, &schedule),
        schedule,
        history: RunHistory::new(),
        next_id: 0,
        in_flight: Vec::new(),
        seed,
        faults: &options.faults,
    };
    let mut best: Option<Box<FittedPipeline>> = None;

    let (task_tx, task_rx) = mpsc::channel::<Task>();
    let (done_tx, done_rx) = mpsc::channel::<Done>();
    let task_rx = Mutex::new(task_rx);
    let (train_ref, val_ref) = (&train, val.as_slice());
    let per_trial = budget.per_trial_timeout_seconds;

    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..budget.n_workers {
            let done_tx = done_tx.clone();
            let task_rx = &task_rx;
            scope.spawn(move || loop {
                let task = match task_rx.lock().expect("task queue poisoned").recv() {
                    Ok(t) => t,
                    Err(_) => break,
                };
                let deadline = Deadline::after_secs(per_trial).min(search_deadline);
                if done_tx.send(run_task(task, train_ref, val_ref, deadline)).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);

        let mut running = 0usize;
        let mut launching = true;
        loop {
            while launching && running < budget.n_workers {
                if search_deadline.expired() || budget.max_trials.is_some_and(|m| coord.next_id >= m) {
                    launching = false;
                    break;
                }
                match coord.next_task() {
                    Ok(Some(task)) => {
                        log::debug!(
                            "launch trial {} (bracket {}, rung {}, budget {})",
                            task.trial_id,
                            task.bracket,
                            task.rung,
                            task.budget
                        );
                        coord.next_id += 1;
                        coord.in_flight.push((task.config.clone(), task.budget));
                        task_tx.send(task).expect("workers alive");
                        running += 1;
                    }
                    Ok(None) => break,
                    Err(e) => {
                        log::warn!("stopping proposals: {e}");
                        launching = false;
                    }
                }
            }
            if running == 0 {
                break;
            }
            let done = done_rx.recv().expect("a worker holds a result");
            running -= 1;
            if let Some(pos) = coord
                .in_flight
                .iter()
                .position(|(c, b)| *b == done.budget && *c == done.config)
            {
                coord.in_flight.swap_remove(pos);
            }
            let wall_clock = started.elapsed().as_secs_f64();
            let (status, val_rmse, val_predictions, message, fitted) = match done.result {
                Ok(out) if out.val_rmse.is_finite() => (
                    TrialStatus::Success,
                    Some(out.val_rmse),
                    Some(out.val_predictions),
                    None,
                    Some(out.fitted),
                ),
                Ok(out) => (
                    TrialStatus::Failed,
                    None,
                    None,
                    Some(format!("non-finite validation rmse {}", out.val_rmse)),
                    None,
                ),
                Err(Error::Timeout) => (TrialStatus::Timeout, None, None, Some("deadline exceeded".into()), None),
                Err(e) => (TrialStatus::Failed, None, None, Some(e.to_string()), None),
            };
            log::debug!(
                "trial {} {:?} budget {} rmse {:?} ({:.2}s)",
                done.trial_id,
                status,
                done.budget,
                val_rmse,
                done.fit_seconds
            );
            coord.history.push(TrialRecord {
                trial_id: done.trial_id,
                config: done.config.clone(),
                budget: done.budget,
                seed: done.seed,
                status,
                val_rmse,
                val_predictions,
                message,
                bracket: Some(done.bracket),
                rung: Some(done.rung),
                continued_from: done.continued_from,
                fit_seconds: done.fit_seconds,
                wall_clock,
            })?;
            if let Some(fitted) = fitted {
                let fitted = Box::new(fitted);
                if coord.history.incumbent().map(|r| r.trial_id) == Some(done.trial_id) {
                    best = Some(fitted.clone());
                }
                if done.bracket == coord.bracket.index && done.rung == coord.bracket.rung {
                    coord.bracket.offer(Survivor {
                        loss: val_rmse.expect("success has a loss"),
                        trial_id: done.trial_id,
                        config: done.config,
                        seed: done.seed,
                        fitted,
                    });
                }
            }
            if done.bracket == coord.bracket.index && done.rung == coord.bracket.rung {
                coord.bracket.completed += 1;
            }
        }
        drop(task_tx);
        Ok(())
    })?;

    let history = coord.history;
    let (Some(record), Some(mut incumbent)) = (history.incumbent().cloned(), best) else {
        return Err(Error::SearchFailed {
            history: Box::new(history),
        });
    };
    let mut val_rmse = record.val_rmse.expect("incumbent succeeded");
    let mut val_predictions = record.val_predictions.clone().unwrap_or_default();
    if incumbent.consumed_budget < budget.max_budget {
        let mut longer = incumbent.clone();
        let extra = budget.max_budget - incumbent.consumed_budget;
        match longer.continue_fit(&train, &val, extra, &Deadline::after_secs(per_trial)) {
            Ok((p, r)) => {
                incumbent = longer;
                val_rmse = r;
                val_predictions = p;
            }
            Err(e) => log::warn!(
                "could not extend incumbent {} to budget {}: {e}",
                record.trial_id,
                budget.max_budget
            ),
        }
    }
    Ok(SearchOutcome {
        history,
        incumbent: *incumbent,
        incumbent_trial: record.trial_id,
        incumbent_val_rmse: val_rmse,
        incumbent_val_predictions: val_predictions,
        train,
        val,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
