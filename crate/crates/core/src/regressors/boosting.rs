//! Least-squares gradient boosting over shallow regression trees.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, Tree, TreeParams};
use crate::error::Result;
use crate::util::{rng_for, Deadline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub max_features: f64,
    pub l2_reg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosting {
    pub params: BoostingParams,
    pub seed: u64,
    pub init: f64,
    pub stages: Vec<Tree>,
}

impl Boosting {
    pub fn new(params: BoostingParams, seed: u64, y: &[f64]) -> Self {
        Self {
            params,
            seed,
            init: crate::util::mean(y),
            stages: Vec::new(),
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            criterion: Criterion::SquaredError,
            max_features: self.params.max_features,
            min_samples_leaf: self.params.min_samples_leaf,
            min_samples_split: 2 * self.params.min_samples_leaf.max(1),
            max_depth: Some(self.params.max_depth),
            random_thresholds: false,
            leaf_l2: self.params.l2_reg,
        }
    }

    /// Adds `extra` stages; stage `k` draws its subsample from stream `k`.
    pub fn grow(&mut self, x: ArrayView2<'_, f64>, y: &[f64], extra: usize, deadline: &Deadline) -> Result<()> {
        let n = x.nrows();
        let mut f: Vec<f64> = (0..n).map(|i| self.predict_row(x.row(i))).collect();
        let tp = self.tree_params();
        let n_sub = ((self.params.subsample * n as f64).round() as usize).clamp(1, n);
        for _ in 0..extra {
            deadline.check()?;
            let k = self.stages.len() as u64;
            let mut rng = rng_for(self.seed, &[k]);
            let residual: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let rows: Vec<usize> = if n_sub == n {
                (0..n).collect()
            } else {
                let mut r = sample(&mut rng, n, n_sub).into_vec();
                r.sort_unstable();
                r
            };
            let tree = Tree::fit(x, &residual, rows, &tp, &mut rng, deadline)?;
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += self.params.learning_rate * tree.predict_row(x.row(i));
            }
            self.stages.push(tree);
        }
        Ok(())
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let lr = self.params.learning_rate;
        self.stages.iter().fold(self.init, |f, t| f + lr * t.predict_row(row))
    }
}
