//! Random-forest model of validation loss over configuration vectors.

use ndarray::{Array1, Array2};

use super::history::RunHistory;
use crate::configspace::ConfigurationSpace;
use crate::error::{Error, Result};
use crate::regressors::{Forest, ForestParams, TreeParams};
use crate::util::Deadline;

pub const MIN_SURROGATE_POINTS: usize = 8;
pub const SURROGATE_TREES: usize = 20;
pub const SIGMA_FLOOR: f64 = 1e-6;

pub struct Surrogate {
    forest: Forest,
    pub budget: usize,
    /// Best observed loss at `budget`.
    pub f_min: f64,
}

/// Fits on the successes of the highest budget that has at least
/// `MIN_SURROGATE_POINTS` of them.
pub fn fit_surrogate(history: &RunHistory, space: &ConfigurationSpace, seed: u64) -> Result<Surrogate> {
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for r in history.successes() {
        *counts.entry(r.budget).or_default() += 1;
    }
    let budget = counts
        .iter()
        .rev()
        .find(|(_, &n)| n >= MIN_SURROGATE_POINTS)
        .map(|(&b, _)| b)
        .ok_or(Error::NotReady)?;
    let rows: Vec<(Vec<f64>, f64)> = history
        .successes()
        .filter(|r| r.budget == budget)
        .map(|r| (space.vectorize(&r.config), r.val_rmse.expect("success has loss")))
        .collect();
    let dim = rows[0].0.len();
    let x = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].0[j]);
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let f_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let params = ForestParams {
        tree: TreeParams {
            max_features: 5.0 / 6.0,
            ..TreeParams::default()
        },
        bootstrap: true,
    };
    let mut forest = Forest::new(params, seed);
    forest.grow(x.view(), &y, SURROGATE_TREES, &Deadline::none())?;
    Ok(Surrogate { forest, budget, f_min })
}

impl Surrogate {
    /// (mean, std) over trees, std floored at `SIGMA_FLOOR`.
    pub fn predict(&self, v: &[f64]) -> (f64, f64) {
        let row = Array1::from(v.to_vec());
        let p = self.forest.tree_predictions(row.view());
        let mu = p.iter().sum::<f64>() / p.len() as f64;
        let var = p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / p.len() as f64;
        (mu, var.sqrt().max(SIGMA_FLOOR))
    }
}
