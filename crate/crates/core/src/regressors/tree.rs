//! CART regression trees with exhaustive or randomized thresholds.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::util::{Deadline, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    SquaredError,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    /// Fraction of columns considered at each split.
    pub max_features: f64,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Extra-trees style: one uniform random threshold per candidate column.
    pub random_thresholds: bool,
    /// Ridge shrinkage of squared-error leaf values: Σy / (n + l2).
    pub leaf_l2: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::SquaredError,
            max_features: 1.0,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_depth: None,
            random_thresholds: false,
            leaf_l2: 0.0,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Tree {
    /// Fits on the rows listed in `rows` (duplicates allowed, e.g. a bootstrap).
    pub fn fit(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut Rng,
        deadline: &Deadline,
    ) -> Result<Tree> {
        let mut nodes = vec![Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: 0.0,
        }];
        let mut stack = vec![(0usize, rows, 0usize)];
        let m = x.ncols();
        let n_try = ((params.max_features * m as f64).round() as usize).clamp(1, m.max(1));
        while let Some((id, idx, depth)) = stack.pop() {
            deadline.check()?;
            nodes[id].value = leaf_value(y, &idx, params);
            let can_split = idx.len() >= params.min_samples_split.max(2)
                && idx.len() >= 2 * params.min_samples_leaf.max(1)
                && params.max_depth.is_none_or(|d| depth < d);
            if !can_split {
                continue;
            }
            let Some(split) = best_split(x, y, &idx, params, n_try, rng) else {
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| x[[i, split.feature]] <= split.threshold);
            let left = nodes.len();
            for _ in 0..2 {
                nodes.push(Node {
                    feature: LEAF,
                    threshold: 0.0,
                    left: LEAF,
                    right: LEAF,
                    value: 0.0,
                });
            }
            let node = &mut nodes[id];
            node.feature = split.feature as u32;
            node.threshold = split.threshold;
            node.left = left as u32;
            node.right = left as u32 + 1;
            stack.push((left + 1, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        Ok(Tree { nodes })
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut id = 0usize;
        loop {
            let n = &self.nodes[id];
            if n.feature == LEAF {
                return n.value;
            }
            id = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, id: usize) -> usize {
            let n = &t.nodes[id];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

fn leaf_value(y: &[f64], idx: &[usize], params: &TreeParams) -> f64 {
    let sum: f64 = idx.iter().map(|&i| y[i]).sum();
    match params.criterion {
        Criterion::SquaredError => sum / (idx.len() as f64 + params.leaf_l2),
        Criterion::Poisson => sum / idx.len() as f64,
    }
}

/// Proxy score of a child (higher is better); sums of these are compared.
fn child_score(criterion: Criterion, sum: f64, n: f64) -> f64 {
    match criterion {
        Criterion::SquaredError => sum * sum / n,
        Criterion::Poisson => {
            if sum <= 0.0 {
                0.0
            } else {
                sum * (sum / n).ln()
            }
        }
    }
}

fn best_split(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    idx: &[usize],
    params: &TreeParams,
    n_try: usize,
    rng: &mut Rng,
) -> Option<Split> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let parent = child_score(params.criterion, total, n as f64);
    let min_leaf = params.min_samples_leaf.max(1);
    let features = sample(rng, x.ncols(), n_try);
    let mut best: Option<Split> = None;
    let tol = 1e-12 * (1.0 + parent.abs());
    let mut consider = |feature: usize, threshold: f64, score: f64| {
        if score > parent + tol && best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Split {
                feature,
                threshold,
                score,
            });
        }
    };
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for f in features.iter() {
        if params.random_thresholds {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(x[[i, f]]), hi.max(x[[i, f]]))
            });
            if lo >= hi {
                continue;
            }
            let mut thr = rng.random_range(lo..hi);
            if thr >= hi {
                thr = lo;
            }
            let (mut sl, mut nl) = (0.0, 0usize);
            for &i in idx {
                if x[[i, f]] <= thr {
                    sl += y[i];
                    nl += 1;
                }
            }
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let score = child_score(params.criterion, sl, nl as f64)
                + child_score(params.criterion, total - sl, nr as f64);
            consider(f, thr, score);
        } else {
            order.clear();
            order.extend_from_slice(idx);
            order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
            let mut sl = 0.0;
            for k in 1..n {
                sl += y[order[k - 1]];
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let a = x[[order[k - 1], f]];
                let b = x[[order[k], f]];
                if a >= b {
                    continue;
                }
                let score = child_score(params.criterion, sl, k as f64)
                    + child_score(params.criterion, total - sl, (n - k) as f64);
                let mut thr = a + (b - a) / 2.0;
                if thr >= b {
                    thr = a;
                }
                consider(f, thr, score);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn data() -> (Array2<f64>, Vec<f64>) {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * (j + 3)) % 17) as f64 + i as f64 * 0.01);
        let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64 * 2.0 + 1.0).collect();
        (x, y)
    }

    #[test]
    fn deep_tree_memorizes() {
        let (x, y) = data();
        let mut rng = crate::util::rng(0);
        let t = Tree::fit(x.view(), &y, (0..40).collect(), &TreeParams::default(), &mut rng, &Deadline::none()).unwrap();
        for i in 0..40 {
            assert!((t.predict_row(x.row(i)) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn constraints_are_respected() {
        let (x, y) = data();
        let mut rng = crate::util::rng(1);
        let p = TreeParams {
            max_depth: Some(2),
            min_samples_leaf: 5,
            ..Default::default()
        };
        let t = Tree::fit(x.view(), &y, (0..40).collect(), &p, &mut rng, &Deadline::none()).unwrap();
        assert!(t.depth() <= 2);
        assert!(t.n_leaves() <= 4);
    }

    #[test]
    fn poisson_and_random_thresholds_reduce_error() {
        let (x, y) = data();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let base: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        for p in [
            TreeParams {
                criterion: Criterion::Poisson,
                ..Default::default()
            },
            TreeParams {
                random_thresholds: true,
                ..Default::default()
            },
        ] {
            let mut rng = crate::util::rng(2);
            let t = Tree::fit(x.view(), &y, (0..40).collect(), &p, &mut rng, &Deadline::none()).unwrap();
            let sse: f64 = (0..40).map(|i| (t.predict_row(x.row(i)) - y[i]).powi(2)).sum();
            assert!(sse < 0.5 * base);
        }
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let (x, _) = data();
        let y = vec![3.5; 40];
        let mut rng = crate::util::rng(3);
        let t = Tree::fit(x.view(), &y, (0..40).collect(), &TreeParams::default(), &mut rng, &Deadline::none()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(x.row(0)), 3.5);
    }
}
