//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown.
//! The end-to-end walltime can be shortened for local iteration with
//! `RULSEARCH_ACCEPTANCE_WALLTIME` (seconds); the default is the full 600 s.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rulsearch_core::configspace::{define_space, names, ConfigurationSpace, GroupCounts, REFERENCE_STRUCTURES};
use rulsearch_core::dataset::{generate_synthetic, truncate_instances, RunToFailureDataset, TestInstance};
use rulsearch_core::ensemble::{bag_rmse, build_ensemble, greedy_select, EnsembleSettings};
use rulsearch_core::features::{fresh_select, ScoreTest, SelectionMode};
use rulsearch_core::regressors::{
    sequence_gradient_error, Activation, Cell, Mlp, MlpParams, RnnParams, SeqArch, TcnParams,
};
use rulsearch_core::report::{run_seed, run_statistics};
use rulsearch_core::search::{
    compute_regret, expected_improvement, hyperband_schedule, rmse, run_search_with, FaultPlan, RunHistory,
    SearchBudget, SearchOptions, TrialStatus,
};
use rulsearch_core::util::rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Criteria whose reference value or requirement cannot be met as stated.
const KNOWN_FAIL: [&str; 2] = ["ei_closed_form", "ensemble_guarantee"];

/// A search run kept for the cross-run criteria.
struct Recorded {
    label: String,
    history: RunHistory,
    timeout: f64,
    /// (ensemble val rmse, best single val rmse, distinct members)
    ensemble: Option<(f64, f64, usize)>,
}

fn rmse_oracle() -> Verdict {
    let mut g = rng(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = g.random_range(1..200);
        let p: Vec<f64> = (0..n).map(|_| g.random_range(-50.0..50.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| g.random_range(-50.0..50.0)).collect();
        let mut acc = 0.0;
        for i in 0..n {
            acc += (p[i] - t[i]) * (p[i] - t[i]);
        }
        let brute = (acc / n as f64).sqrt();
        worst = worst.max((rmse(&p, &t).unwrap() - brute).abs());
    }
    let hand = (rmse(&[3.0, 5.0], &[1.0, 2.0]).unwrap() - 6.5_f64.sqrt()).abs();
    verdict(
        worst <= 1e-12 && hand <= 1e-9,
        format!("max deviation {worst:.2e} over 100 vectors, hand case {hand:.2e}"),
    )
}

fn small_fleet(n: usize, base: usize, seed: u64) -> RunToFailureDataset {
    generate_synthetic(n, 3, base, 0.05, seed).unwrap()
}

fn tabular_space() -> ConfigurationSpace {
    define_space().with_fixed(names::TEMPLATE, "tabular").unwrap()
}

/// Rung survivors recomputed from the history alone.
fn survivors_match(history: &RunHistory, r: usize, eta: usize) -> Result<usize, String> {
    let schedule = hyperband_schedule(r, eta);
    let mut groups: BTreeMap<(usize, usize), Vec<&rulsearch_core::search::TrialRecord>> = BTreeMap::new();
    for rec in history.records() {
        if let (Some(b), Some(g)) = (rec.bracket, rec.rung) {
            groups.entry((b, g)).or_default().push(rec);
        }
    }
    let last = history
        .records()
        .iter()
        .max_by_key(|r| r.trial_id)
        .and_then(|r| r.bracket.zip(r.rung));
    let mut checked = 0;
    for (&(b, g), recs) in &groups {
        let Some(next) = groups.get(&(b, g + 1)) else {
            continue;
        };
        let rungs = &schedule[b % schedule.len()];
        let k = rungs[g + 1].n_configs;
        let first_next = next.iter().map(|r| r.trial_id).min().unwrap();
        let mut ok: Vec<_> = recs.iter().filter(|r| r.status == TrialStatus::Success).collect();
        ok.sort_by(|a, b| {
            a.val_rmse
                .unwrap()
                .total_cmp(&b.val_rmse.unwrap())
                .then(a.trial_id.cmp(&b.trial_id))
        });
        let budget = rungs[g + 1].budget;
        let expected: BTreeSet<usize> = ok
            .iter()
            .take(k)
            .filter(|s| {
                !history
                    .records()
                    .iter()
                    .any(|o| o.trial_id < first_next && o.budget == budget && o.config == s.config)
            })
            .map(|s| s.trial_id)
            .collect();
        let got: BTreeSet<usize> = next.iter().filter_map(|r| r.continued_from).collect();
        let complete = last != Some((b, g + 1));
        if (complete && got != expected) || !got.is_subset(&expected) {
            return Err(format!("bracket {b} rung {g}: promoted {got:?}, expected {expected:?}"));
        }
        checked += 1;
    }
    Ok(checked)
}

fn hyperband_check(runs: &mut Vec<Recorded>) -> Verdict {
    let t0 = Instant::now();
    let starts: Vec<(usize, usize)> = hyperband_schedule(27, 3)
        .iter()
        .map(|b| (b[0].n_configs, b[0].budget))
        .collect();
    let schedule_secs = t0.elapsed().as_secs_f64();
    let schedule_ok = starts == vec![(27, 1), (12, 3), (6, 9), (4, 27)] && schedule_secs < 1.0;

    let data = small_fleet(12, 60, 3);
    let mut checked = 0;
    let mut problems = Vec::new();
    for (seed, workers) in [(1, 1), (2, 2), (3, 3)] {
        let budget = SearchBudget {
            total_walltime_seconds: 300.0,
            per_trial_timeout_seconds: 30.0,
            max_budget: 9,
            eta: 3,
            n_workers: workers,
            max_trials: Some(40),
        };
        match run_search_with(&tabular_space(), &data, &budget, seed, &SearchOptions::default()) {
            Ok(out) => {
                match survivors_match(&out.history, 9, 3) {
                    Ok(n) => checked += n,
                    Err(e) => problems.push(e),
                }
                let targets: Vec<f64> = out.val.iter().map(|v| v.true_rul).collect();
                let ens = build_ensemble(&out.history, &targets, &EnsembleSettings::default())
                    .ok()
                    .map(|e| (e.val_rmse, e.best_single_rmse, e.members.len()));
                runs.push(Recorded {
                    label: format!("hyperband seed {seed}"),
                    history: out.history,
                    timeout: budget.per_trial_timeout_seconds,
                    ensemble: ens,
                });
            }
            Err(e) => problems.push(format!("seed {seed}: {e}")),
        }
    }
    verdict(
        schedule_ok && problems.is_empty() && checked > 0,
        format!(
            "bracket starts {starts:?} in {schedule_secs:.1e} s; {checked} promotions match brute force{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn ei_check() -> Verdict {
    let cases = [
        (expected_improvement(1.0, 0.0, 1.0), 0.0),
        (expected_improvement(1.0, 1.0, 1.0), 0.398942),
        (expected_improvement(0.0, 1.0, 1.0), 1.083332),
    ];
    let worst = cases.iter().map(|(v, r)| (v - r).abs()).fold(0.0, f64::max);
    verdict(
        worst <= 1e-5,
        format!(
            "values {:.7} {:.7} {:.7} vs tabulated 0 0.398942 1.083332, max deviation {worst:.2e} (tolerance 1e-5)",
            cases[0].0, cases[1].0, cases[2].0
        ),
    )
}

fn gradient_check() -> Verdict {
    let t0 = Instant::now();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut g = rng(44);
    for i in 0..24u64 {
        let layers = 1 + (i % 2) as usize;
        let ln = i % 3 == 0;
        let input = 1 + (i % 3) as usize;
        let steps = 3 + (i % 3) as usize;
        let archs = [
            (
                "gru",
                SeqArch::Rnn(RnnParams {
                    cell: Cell::Gru,
                    hidden_size: 3 + (i % 3) as usize,
                    num_layers: layers,
                    dropout: 0.1,
                    layer_norm: ln,
                }),
            ),
            (
                "lstm",
                SeqArch::Rnn(RnnParams {
                    cell: Cell::Lstm,
                    hidden_size: 3 + (i % 3) as usize,
                    num_layers: layers,
                    dropout: 0.1,
                    layer_norm: ln,
                }),
            ),
            (
                "tcn",
                SeqArch::Tcn(TcnParams {
                    channels: 3 + (i % 2) as usize,
                    kernel_size: 2 + (i % 2) as usize,
                    levels: layers,
                    dropout: 0.1,
                    layer_norm: ln,
                }),
            ),
        ];
        for (name, arch) in archs {
            let e = sequence_gradient_error(&arch, input, steps, 1000 + i);
            let w = worst.entry(name).or_insert(0.0);
            *w = w.max(e);
            *counts.entry(name).or_insert(0) += 1;
        }
        let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let m = Mlp::new(
            MlpParams {
                activation,
                hidden: vec![3 + (i % 3) as usize; layers],
                learning_rate: 1e-3,
                l2_penalty: 1e-2,
            },
            i,
            input,
        );
        let x = Array2::from_shape_simple_fn((6, input), || g.random_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((6, 1), || g.random_range(-1.0..1.0));
        let e = m.gradient_error(&x, &y);
        let w = worst.entry("mlp").or_insert(0.0);
        *w = w.max(e);
        *counts.entry("mlp").or_insert(0) += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst.values().all(|&e| e < 1e-4) && counts.values().all(|&c| c >= 20) && secs < 60.0;
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e} ({} cases)", counts[k]))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, format!("worst relative error: {detail}; {secs:.1} s"))
}

fn anytime_check(runs: &[Recorded]) -> Verdict {
    let mut bad = Vec::new();
    let mut points = 0;
    for r in runs {
        let trace = r.history.incumbent_trace();
        let best = trace.last().map(|p| p.1).unwrap_or(f64::NAN);
        let regret = compute_regret(&r.history, best);
        points += trace.len();
        let mono = |c: &[(f64, f64)]| c.windows(2).all(|w| w[1].1 <= w[0].1);
        if !mono(&trace) || !mono(&regret) {
            bad.push(r.label.clone());
        }
    }
    verdict(
        bad.is_empty() && !runs.is_empty(),
        format!("{} runs, {points} incumbent points; non-monotone: {bad:?}", runs.len()),
    )
}

/// Best bag of at most `rounds` picks by exhaustive search over multisets.
fn brute_force_bag(preds: &[Vec<f64>], targets: &[f64], rounds: usize) -> f64 {
    fn rec(preds: &[Vec<f64>], targets: &[f64], start: usize, bag: &mut Vec<usize>, left: usize, best: &mut f64) {
        if !bag.is_empty() {
            *best = best.min(bag_rmse(preds, targets, bag).unwrap());
        }
        if left == 0 {
            return;
        }
        for c in start..preds.len() {
            bag.push(c);
            rec(preds, targets, c, bag, left - 1, best);
            bag.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(preds, targets, 0, &mut Vec::new(), rounds, &mut best);
    best
}

fn ensemble_check(runs: &[Recorded]) -> Verdict {
    let mut run_problems = Vec::new();
    let mut checked_runs = 0;
    for r in runs {
        if let Some((bag, single, distinct)) = r.ensemble {
            checked_runs += 1;
            if bag > single || distinct > 10 {
                run_problems.push(format!("{}: bag {bag} single {single} distinct {distinct}", r.label));
            }
        }
    }
    let mut g = rng(606);
    let pools = 200;
    let mut mismatched = 0;
    let mut worst_gap = 0.0_f64;
    for _ in 0..pools {
        let n = 8;
        let targets: Vec<f64> = (0..n).map(|_| g.random_range(0.0..100.0)).collect();
        let mut preds: Vec<Vec<f64>> = (0..4)
            .map(|_| targets.iter().map(|t| t + g.random_range(-20.0..20.0)).collect())
            .collect();
        preds.sort_by(|a, b| rmse(a, &targets).unwrap().total_cmp(&rmse(b, &targets).unwrap()));
        let bag = greedy_select(&preds, &targets, 6, 10).unwrap();
        let greedy = bag_rmse(&preds, &targets, &bag).unwrap();
        let optimum = brute_force_bag(&preds, &targets, 6);
        if greedy - optimum > 1e-9 {
            mismatched += 1;
            worst_gap = worst_gap.max(greedy - optimum);
        }
    }
    verdict(
        run_problems.is_empty() && checked_runs > 0 && mismatched == 0,
        format!(
            "{checked_runs} run ensembles within guarantee{}; greedy above brute-force optimum on {mismatched}/{pools} random 4-candidate/6-round pools (largest gap {worst_gap:.3})",
            if run_problems.is_empty() { String::new() } else { format!(" except {run_problems:?}") }
        ),
    )
}

fn fdr_check() -> Verdict {
    let t0 = Instant::now();
    let normal = rand_distr::StandardNormal;
    let mut informative = Vec::new();
    let mut nulls = Vec::new();
    for seed in 0..20 {
        let mut g = rng(9000 + seed);
        let x = Array2::from_shape_simple_fn((1000, 55), || g.sample::<f64, _>(normal));
        let y: Vec<f64> = (0..1000)
            .map(|i| 0.25 * (0..5).map(|j| x[[i, j]]).sum::<f64>() + g.sample::<f64, _>(normal))
            .collect();
        let kept = fresh_select(x.view(), &y, 0.05, ScoreTest::Pearson, SelectionMode::FdrBy).unwrap();
        informative.push(kept.iter().filter(|&&c| c < 5).count());
        nulls.push(kept.iter().filter(|&&c| c >= 5).count());
    }
    let median = |v: &mut Vec<usize>| {
        v.sort_unstable();
        (v[9] + v[10]) as f64 / 2.0
    };
    let (mi, mn) = (median(&mut informative), median(&mut nulls));
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        mi >= 4.0 && mn <= 5.0 && secs < 120.0,
        format!("median informative kept {mi}, median nulls kept {mn} over 20 seeds; {secs:.1} s"),
    )
}

/// Mean channel-0 level over the last `w` steps of each prefix.
fn channel0_tail_mean(values: &Array2<f64>, end: usize, w: usize) -> f64 {
    let start = (end + 1).saturating_sub(w);
    let s: f64 = (start..=end).map(|t| values[[0, t]]).sum();
    s / (end + 1 - start) as f64
}

fn ols_oracle(train: &RunToFailureDataset, test: &[TestInstance], w: usize) -> Vec<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for inst in &train.instances {
        let rul = inst.rul.as_ref().unwrap();
        for t in 0..inst.len() {
            xs.push(channel0_tail_mean(&inst.values, t, w));
            ys.push(rul[t]);
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    test.iter()
        .map(|t| (a + b * channel0_tail_mean(&t.values, t.values.ncols() - 1, w)).max(0.0))
        .collect()
}

fn end_to_end(runs: &mut Vec<Recorded>) -> Verdict {
    let walltime: f64 = std::env::var("RULSEARCH_ACCEPTANCE_WALLTIME")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(600.0);
    let budget = SearchBudget {
        total_walltime_seconds: walltime,
        per_trial_timeout_seconds: (walltime / 10.0).max(5.0),
        max_budget: 27,
        eta: 3,
        n_workers: 4,
        max_trials: None,
    };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let fleet = generate_synthetic(40, 3, 200, 0.1, 500 + seed).unwrap();
        let train = fleet.with_instances(fleet.instances[..30].to_vec());
        let held_out = fleet.with_instances(fleet.instances[30..].to_vec());
        let test = truncate_instances(&held_out, 0.3, 0.9, seed).unwrap();
        let truth: Vec<f64> = test.iter().map(|t| t.true_rul).collect();
        let all_rul: Vec<f64> = train.instances.iter().flat_map(|i| i.rul.clone().unwrap()).collect();
        let mean_rul = all_rul.iter().sum::<f64>() / all_rul.len() as f64;
        let naive = rmse(&vec![mean_rul; test.len()], &truth).unwrap();
        let ols = rmse(&ols_oracle(&train, &test, 10), &truth).unwrap();
        eprintln!("  end-to-end seed {seed}: searching for {walltime} s");
        match run_seed(
            &define_space(),
            &train,
            &test,
            &budget,
            &EnsembleSettings::default(),
            &SearchOptions::default(),
            seed,
        ) {
            Ok(run) => {
                let ours = run.test_rmse.unwrap();
                let win = ours <= 0.8 * naive && ours <= ols;
                wins += win as usize;
                let e = &run.ensemble.ensemble;
                lines.push(format!(
                    "seed {seed}: ensemble {ours:.2} naive {naive:.2} ols {ols:.2} ({} trials{})",
                    run.outcome.history.len(),
                    if run.fallback.is_some() { ", incumbent fallback" } else { "" }
                ));
                let ensemble = if run.fallback.is_none() {
                    Some((e.val_rmse, e.best_single_rmse, e.members.len()))
                } else {
                    None
                };
                runs.push(Recorded {
                    label: format!("end-to-end seed {seed}"),
                    history: run.outcome.history,
                    timeout: budget.per_trial_timeout_seconds,
                    ensemble,
                });
            }
            Err(e) => lines.push(format!("seed {seed}: error {e}")),
        }
    }
    verdict(wins >= 4, format!("{wins}/5 seeds beat both baselines at walltime {walltime} s; {}", lines.join("; ")))
}

fn fault_check(runs: &mut Vec<Recorded>) -> Verdict {
    let space = tabular_space().with_fixed(names::TABULAR_REGRESSOR, "random_forest").unwrap();
    let data = small_fleet(10, 60, 8);
    let budget = SearchBudget {
        total_walltime_seconds: 300.0,
        per_trial_timeout_seconds: 2.0,
        max_budget: 9,
        eta: 3,
        n_workers: 2,
        max_trials: Some(24),
    };
    let fail: BTreeSet<usize> = [1, 5, 11, 17].into();
    let stall: BTreeSet<usize> = [3, 8, 20].into();
    let options = SearchOptions {
        faults: FaultPlan {
            failing_regressors: BTreeSet::new(),
            fail_trials: fail.clone(),
            stall_trials: stall.clone(),
        },
        ..SearchOptions::default()
    };
    let out = match run_search_with(&space, &data, &budget, 21, &options) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("search did not complete: {e}")),
    };
    let stats = run_statistics(&out.history, budget.max_budget);
    let ran: BTreeSet<usize> = out.history.records().iter().map(|r| r.trial_id).collect();
    let want_failed = fail.intersection(&ran).count();
    let want_timeout = stall.intersection(&ran).count();
    let slowest = out.history.records().iter().map(|r| r.fit_seconds).fold(0.0, f64::max);
    let pass = stats.n_failed == want_failed
        && stats.n_timeout == want_timeout
        && stats.n_success + stats.n_failed + stats.n_timeout == stats.n_configurations
        && slowest <= budget.per_trial_timeout_seconds * 1.1;
    let detail = format!(
        "{} trials: failed {} (injected {want_failed}), timeout {} (injected {want_timeout}), slowest trial {slowest:.2} s vs limit {:.2} s",
        stats.n_configurations,
        stats.n_failed,
        stats.n_timeout,
        budget.per_trial_timeout_seconds * 1.1
    );
    runs.push(Recorded {
        label: "fault injection".into(),
        history: out.history,
        timeout: budget.per_trial_timeout_seconds,
        ensemble: None,
    });
    verdict(pass, detail)
}

fn timing_check(runs: &[Recorded]) -> Option<String> {
    let over: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            r.history
                .records()
                .iter()
                .filter(|t| t.fit_seconds > r.timeout * 1.1)
                .map(|t| format!("{} trial {} {:.2} s", r.label, t.trial_id, t.fit_seconds))
                .collect::<Vec<_>>()
        })
        .collect();
    (!over.is_empty()).then(|| over.join(", "))
}

fn reproducibility(runs: &mut Vec<Recorded>) -> Verdict {
    let data = small_fleet(12, 60, 4);
    let budget = SearchBudget {
        total_walltime_seconds: 1800.0,
        per_trial_timeout_seconds: 300.0,
        max_budget: 9,
        eta: 3,
        n_workers: 1,
        max_trials: Some(30),
    };
    let run = || run_search_with(&define_space(), &data, &budget, 7, &SearchOptions::default());
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            let same = a.history.same_outcomes(&b.history) && a.incumbent == b.incumbent;
            let detail = format!("{} vs {} records, identical: {same}", a.history.len(), b.history.len());
            runs.push(Recorded {
                label: "reproducibility".into(),
                history: a.history,
                timeout: budget.per_trial_timeout_seconds,
                ensemble: None,
            });
            verdict(same, detail)
        }
        (a, b) => verdict(false, format!("run failed: {:?} / {:?}", a.err(), b.err())),
    }
}

fn space_audit() -> Verdict {
    let space = define_space();
    let counts = space.group_counts();
    let expected: [(&str, usize, usize, usize); 19] = [
        ("imputation", 1, 0, 0),
        ("exp_smoothing", 0, 2, 0),
        ("robust_scaler", 0, 2, 0),
        ("window", 0, 2, 0),
        ("stat_catalog", 43, 0, 0),
        ("pca", 1, 1, 0),
        ("select_percentile", 1, 1, 0),
        ("select_rates", 2, 1, 0),
        ("extra_trees", 2, 3, 0),
        ("gradient_boosting", 0, 6, 0),
        ("mlp", 2, 4, 1),
        ("passive_aggressive", 2, 2, 0),
        ("random_forest", 1, 2, 0),
        ("sgd", 2, 4, 1),
        ("gru", 1, 3, 1),
        ("lstm", 1, 3, 1),
        ("tcn", 1, 4, 1),
        ("optimizer", 0, 4, 0),
        ("trainer", 0, 2, 0),
    ];
    let mut wrong = Vec::new();
    for (group, categorical, numeric, conditional) in expected {
        let want = GroupCounts {
            categorical,
            numeric,
            conditional,
        };
        if counts.get(group) != Some(&want) {
            wrong.push(format!("{group}: {:?}", counts.get(group)));
        }
    }
    let manifest = space.manifest();
    let emitted = manifest["count_structures"].as_u64().is_some()
        && manifest["reference_structures"].as_u64() == Some(REFERENCE_STRUCTURES as u64);
    verdict(
        wrong.is_empty() && emitted,
        format!(
            "{} groups audited, mismatches {wrong:?}; manifest count_structures {} alongside reference {}",
            expected.len(),
            manifest["count_structures"],
            manifest["reference_structures"]
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut runs = Vec::new();
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    eprintln!("acceptance: running criteria (the end-to-end runs dominate)");
    results.push(("rmse_oracle", rmse_oracle()));
    results.push(("hyperband", hyperband_check(&mut runs)));
    results.push(("ei_closed_form", ei_check()));
    results.push(("gradient_checks", gradient_check()));
    let fdr = fdr_check();
    let fault = fault_check(&mut runs);
    let repro = reproducibility(&mut runs);
    let audit = space_audit();
    let e2e = end_to_end(&mut runs);
    results.push(("anytime", anytime_check(&runs)));
    results.push(("ensemble_guarantee", ensemble_check(&runs)));
    results.push(("fdr_control", fdr));
    results.push(("end_to_end", e2e));
    let fault = match timing_check(&runs) {
        Some(over) => verdict(false, format!("{}; over the grace limit: {over}", fault.detail)),
        None => fault,
    };
    results.push(("robustness", fault));
    results.push(("reproducibility", repro));
    results.push(("space_audit", audit));

    let mut unexpected = Vec::new();
    for (i, (name, v)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        if !v.pass && !KNOWN_FAIL.contains(name) {
            unexpected.push(*name);
        }
    }
    let passed = results.iter().filter(|(_, v)| v.pass).count();
    println!(
        "acceptance: {passed}/{} passed in {:.0} s; known failures {:?}",
        results.len(),
        started.elapsed().as_secs_f64(),
        KNOWN_FAIL
    );
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
