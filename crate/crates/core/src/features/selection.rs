//! Hypothesis-test feature selection and percentile selection.

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTest {
    Kendall,
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    FdrBy,
    Fpr,
    FweBonferroni,
}

pub const MIN_SELECTION_ROWS: usize = 20;

/// Kendall tau-b and its two-sided asymptotic p-value.
///
/// O(n log n): sort by (x, y), then count discordant pairs with a Fenwick tree.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    assert_eq!(n, y.len());
    if n < 3 {
        return (0.0, 1.0);
    }
    let yr = dense_ranks(y);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(yr[a].cmp(&yr[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let xr = dense_ranks(&xs);
    let ys: Vec<usize> = idx.iter().map(|&i| yr[i]).collect();

    let max_rank = *ys.iter().max().unwrap_or(&0);
    let mut tree = vec![0u64; max_rank + 2];
    let mut dis: u64 = 0;
    for (seen, &r) in ys.iter().enumerate() {
        // previous elements with strictly larger y rank
        let mut le = 0u64;
        let mut i = r + 1;
        while i > 0 {
            le += tree[i];
            i &= i - 1;
        }
        dis += seen as u64 - le;
        let mut i = r + 1;
        while i < tree.len() {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    let mut ntie: u64 = 0;
    let mut run = 1u64;
    for k in 1..=n {
        if k < n && xr[k] == xr[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            ntie += run * (run - 1) / 2;
            run = 1;
        }
    }
    let (xtie, x0, x1) = tie_stats(&xr);
    let (ytie, y0, y1) = tie_stats(&ys);
    let tot = (n * (n - 1) / 2) as f64;
    let con_minus_dis = tot - xtie - ytie + ntie as f64 - 2.0 * dis as f64;
    if tot - xtie <= 0.0 || tot - ytie <= 0.0 {
        return (0.0, 1.0);
    }
    let tau = con_minus_dis / (tot - xtie).sqrt() / (tot - ytie).sqrt();
    let nf = n as f64;
    let m = nf * (nf - 1.0);
    let var = (m * (2.0 * nf + 5.0) - x1 - y1) / 18.0
        + 2.0 * xtie * ytie / m
        + x0 * y0 / (9.0 * m * (nf - 2.0));
    let z = con_minus_dis / var.sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2);
    (tau.clamp(-1.0, 1.0), p.clamp(0.0, 1.0))
}

fn dense_ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0usize; v.len()];
    let mut r = 0usize;
    for k in 0..idx.len() {
        if k > 0 && v[idx[k]] != v[idx[k - 1]] {
            r += 1;
        }
        ranks[idx[k]] = r;
    }
    ranks
}

/// (tied pairs, Σt(t-1)(t-2), Σt(t-1)(2t+5)) over groups of equal ranks.
fn tie_stats(ranks: &[usize]) -> (f64, f64, f64) {
    let max = ranks.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; max + 1];
    for &r in ranks {
        counts[r] += 1;
    }
    counts.iter().filter(|&&c| c > 1).fold((0.0, 0.0, 0.0), |acc, &c| {
        let c = c as f64;
        (
            acc.0 + c * (c - 1.0) / 2.0,
            acc.1 + c * (c - 1.0) * (c - 2.0),
            acc.2 + c * (c - 1.0) * (2.0 * c + 5.0),
        )
    })
}

/// Pearson correlation and its two-sided t-test p-value.
pub fn pearson_test(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    assert_eq!(n, y.len());
    if n < 3 {
        return (0.0, 1.0);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return (0.0, 1.0);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    if 1.0 - r * r <= 1e-15 {
        return (r, 0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (r, (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

fn score(test: ScoreTest, x: &[f64], y: &[f64]) -> (f64, f64) {
    match test {
        ScoreTest::Kendall => kendall_tau_b(x, y),
        ScoreTest::Pearson => pearson_test(x, y),
    }
}

fn is_constant(col: ArrayView1<'_, f64>) -> bool {
    let first = col[0];
    col.iter().all(|v| *v == first)
}

/// Step-up procedure: indices (into `p`) rejected at level `alpha`, scaled by `c_m`.
fn step_up(p: &[f64], alpha: f64, c_m: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut k = 0;
    for (rank, &i) in order.iter().enumerate() {
        if p[i] <= (rank + 1) as f64 / (m as f64 * c_m) * alpha {
            k = rank + 1;
        }
    }
    let mut out: Vec<usize> = order[..k].to_vec();
    out.sort_unstable();
    out
}

pub fn benjamini_hochberg(p: &[f64], alpha: f64) -> Vec<usize> {
    step_up(p, alpha, 1.0)
}

pub fn benjamini_yekutieli(p: &[f64], alpha: f64) -> Vec<usize> {
    let c_m: f64 = (1..=p.len()).map(|i| 1.0 / i as f64).sum();
    step_up(p, alpha, c_m.max(1.0))
}

/// Selects columns associated with the target; always keeps at least one.
pub fn fresh_select(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alpha: f64,
    test: ScoreTest,
    mode: SelectionMode,
) -> Result<Vec<usize>> {
    if x.nrows() < MIN_SELECTION_ROWS {
        return Err(Error::InsufficientData(format!(
            "feature selection needs >= {MIN_SELECTION_ROWS} rows, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Contract("no columns to select from".into()));
    }
    let mut candidates = Vec::new();
    let mut pvals = Vec::new();
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        if is_constant(col) {
            continue;
        }
        let c = col.to_vec();
        candidates.push(j);
        pvals.push(score(test, &c, y).1);
    }
    if candidates.is_empty() {
        // Nothing carries information; keep the first column so downstream has input.
        return Ok(vec![0]);
    }
    let m = pvals.len() as f64;
    let passed: Vec<usize> = match mode {
        SelectionMode::FdrBy => benjamini_yekutieli(&pvals, alpha),
        SelectionMode::Fpr => (0..pvals.len()).filter(|&i| pvals[i] < alpha || alpha >= 1.0).collect(),
        SelectionMode::FweBonferroni => (0..pvals.len()).filter(|&i| pvals[i] < alpha / m).collect(),
    };
    if passed.is_empty() {
        let best = (0..pvals.len())
            .min_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)))
            .expect("non-empty");
        return Ok(vec![candidates[best]]);
    }
    Ok(passed.into_iter().map(|i| candidates[i]).collect())
}

/// Keeps the top ⌈percentile% · m⌉ columns by absolute association score.
pub fn select_percentile(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    percentile: f64,
    test: ScoreTest,
) -> Vec<usize> {
    let m = x.ncols();
    if m == 0 {
        return Vec::new();
    }
    let keep = ((percentile / 100.0 * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    let scores: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|col| {
            if is_constant(col) {
                -1.0
            } else {
                score(test, &col.to_vec(), y).0.abs()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = order[..keep].to_vec();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Quadratic tau-b for cross-checking.
    fn kendall_brute(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut s, mut tx, mut ty, mut tot) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                s += a * b;
                tot += 1.0;
                if x[i] == x[j] {
                    tx += 1.0;
                }
                if y[i] == y[j] {
                    ty += 1.0;
                }
            }
        }
        s / ((tot - tx) * (tot - ty)).sqrt()
    }

    #[test]
    fn kendall_known_values() {
        // Values cross-checked against a standard statistics package.
        let x = [12.0, 2.0, 1.0, 12.0, 2.0];
        let y = [1.0, 4.0, 7.0, 1.0, 0.0];
        let (tau, p) = kendall_tau_b(&x, &y);
        assert!((tau - (-0.47140452079103173)).abs() < 1e-12);
        assert!((p - 0.2827454599327748).abs() < 1e-9, "{p}");
    }

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let (r, p) = pearson_test(&x, &y);
        assert!((r - 0.8).abs() < 1e-12);
        assert!((p - 0.10408803866182788).abs() < 1e-9, "{p}");
    }

    #[test]
    fn identical_column_always_selected() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.1).collect();
        let mut x = Array2::zeros((50, 3));
        for i in 0..50 {
            x[[i, 0]] = ((i * 7919) % 13) as f64;
            x[[i, 1]] = y[i];
            x[[i, 2]] = 1.0;
        }
        for test in [ScoreTest::Kendall, ScoreTest::Pearson] {
            for mode in [SelectionMode::FdrBy, SelectionMode::Fpr, SelectionMode::FweBonferroni] {
                let s = fresh_select(x.view(), &y, 0.05, test, mode).unwrap();
                assert!(s.contains(&1));
                assert!(!s.contains(&2));
            }
        }
    }

    #[test]
    fn too_few_rows_errors() {
        let x = Array2::zeros((10, 2));
        assert!(matches!(
            fresh_select(x.view(), &[0.0; 10], 0.05, ScoreTest::Kendall, SelectionMode::Fpr),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fallback_keeps_best_column() {
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 31 + j * 17) % 7) as f64);
        let s = fresh_select(x.view(), &y, 1e-12, ScoreTest::Pearson, SelectionMode::FweBonferroni).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn percentile_arithmetic() {
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let x = Array2::from_shape_fn((30, 10), |(i, j)| if j == 4 { i as f64 } else { ((i * (j + 3)) % 11) as f64 });
        assert_eq!(select_percentile(x.view(), &y, 100.0, ScoreTest::Kendall).len(), 10);
        let s = select_percentile(x.view(), &y, 30.0, ScoreTest::Pearson);
        assert_eq!(s.len(), 3);
        assert!(s.contains(&4));
        assert_eq!(select_percentile(x.view(), &y, 1.0, ScoreTest::Kendall), vec![4]);
    }

    proptest! {
        #[test]
        fn kendall_matches_brute_force(pairs in proptest::collection::vec((0i32..6, 0i32..6), 3..40)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let brute = kendall_brute(&x, &y);
            let (tau, p) = kendall_tau_b(&x, &y);
            if brute.is_finite() {
                prop_assert!((tau - brute).abs() < 1e-9);
            }
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn by_subset_of_bh(p in proptest::collection::vec(0.0f64..1.0, 1..60), alpha in 0.001f64..0.5) {
            let by = benjamini_yekutieli(&p, alpha);
            let bh = benjamini_hochberg(&p, alpha);
            prop_assert!(by.iter().all(|i| bh.contains(i)));
            // brute-force BH: largest k with p_(k) <= k alpha / m
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let m = p.len() as f64;
            let k = (1..=p.len()).rev().find(|&k| sorted[k - 1] <= k as f64 * alpha / m).unwrap_or(0);
            prop_assert_eq!(bh.len(), k);
        }

        #[test]
        fn fpr_alpha_one_keeps_non_constant(seed in any::<u64>()) {
            let mut s = seed | 1;
            let mut next = || { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 1000) as f64 / 1000.0 };
            let x = Array2::from_shape_fn((25, 4), |(_, j)| if j == 2 { 3.0 } else { next() });
            let y: Vec<f64> = (0..25).map(|_| next()).collect();
            let sel = fresh_select(x.view(), &y, 1.0, ScoreTest::Kendall, SelectionMode::Fpr).unwrap();
            prop_assert_eq!(sel, vec![0, 1, 3]);
        }
    }
}
