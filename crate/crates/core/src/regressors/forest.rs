//! Random forests and extremely randomized trees.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::error::Result;
use crate::util::{rng_for, Deadline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub bootstrap: bool,
}

/// Tree `k` always draws from stream `k` of the seed, so growing in several
/// steps yields exactly the trees of a single large fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn new(params: ForestParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            trees: Vec::new(),
        }
    }

    pub fn grow(&mut self, x: ArrayView2<'_, f64>, y: &[f64], extra: usize, deadline: &Deadline) -> Result<()> {
        let n = x.nrows();
        for _ in 0..extra {
            deadline.check()?;
            let k = self.trees.len() as u64;
            let mut rng = rng_for(self.seed, &[k]);
            let rows: Vec<usize> = if self.params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree = Tree::fit(x, y, rows, &self.params.tree, &mut rng, deadline)?;
            self.trees.push(tree);
        }
        Ok(())
    }

    pub fn tree_predictions(&self, row: ArrayView1<'_, f64>) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict_row(row)).collect()
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}
