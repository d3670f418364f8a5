//! Online linear learners: passive-aggressive and stochastic gradient descent.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{rng_for, Deadline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaLoss {
    /// PA-I
    EpsilonInsensitive,
    /// PA-II
    SquaredEpsilonInsensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaParams {
    pub loss: PaLoss,
    pub fit_intercept: bool,
    pub c: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
    Elasticnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Invscaling,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub penalty: Penalty,
    pub schedule: Schedule,
    pub alpha: f64,
    pub eta0: f64,
    pub power_t: f64,
    pub l1_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinearRule {
    PassiveAggressive(PaParams),
    Sgd(SgdParams),
}

/// Linear model trained one epoch at a time on already standardized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineLinear {
    pub rule: LinearRule,
    pub seed: u64,
    pub w: Array1<f64>,
    pub b: f64,
    pub epochs: usize,
    /// Number of sample updates so far (drives the SGD schedule).
    pub t: u64,
}

impl OnlineLinear {
    pub fn new(rule: LinearRule, seed: u64, dim: usize) -> Self {
        Self {
            rule,
            seed,
            w: Array1::zeros(dim),
            b: 0.0,
            epochs: 0,
            t: 0,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.w.dot(&row) + self.b
    }

    pub fn train(&mut self, x: ArrayView2<'_, f64>, y: &[f64], epochs: usize, deadline: &Deadline) -> Result<()> {
        let n = x.nrows();
        for _ in 0..epochs {
            deadline.check()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(self.seed, &[self.epochs as u64]));
            for &i in &order {
                let row = x.row(i);
                self.t += 1;
                match self.rule {
                    LinearRule::PassiveAggressive(p) => self.pa_step(&p, row, y[i]),
                    LinearRule::Sgd(p) => self.sgd_step(&p, row, y[i]),
                }
            }
            self.epochs += 1;
            if !self.b.is_finite() || self.w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("linear model diverged at epoch {}", self.epochs)));
            }
        }
        Ok(())
    }

    fn pa_step(&mut self, p: &PaParams, row: ArrayView1<'_, f64>, y: f64) {
        let pred = self.predict_row(row);
        let loss = ((y - pred).abs() - p.epsilon).max(0.0);
        if loss <= 0.0 {
            return;
        }
        let sq = row.dot(&row) + if p.fit_intercept { 1.0 } else { 0.0 };
        let tau = match p.loss {
            PaLoss::EpsilonInsensitive => {
                if sq <= 0.0 {
                    return;
                }
                p.c.min(loss / sq)
            }
            PaLoss::SquaredEpsilonInsensitive => loss / (sq + 0.5 / p.c),
        };
        let step = (y - pred).signum() * tau;
        self.w.scaled_add(step, &row);
        if p.fit_intercept {
            self.b += step;
        }
    }

    fn sgd_step(&mut self, p: &SgdParams, row: ArrayView1<'_, f64>, y: f64) {
        let eta = match p.schedule {
            Schedule::Constant => p.eta0,
            Schedule::Invscaling => p.eta0 / (self.t as f64).powf(p.power_t),
        };
        let l1 = match p.penalty {
            Penalty::L1 => 1.0,
            Penalty::L2 => 0.0,
            Penalty::Elasticnet => p.l1_ratio,
        };
        let err = self.predict_row(row) - y;
        let shrink = 1.0 - eta * p.alpha * (1.0 - l1);
        self.w *= shrink.max(0.0);
        self.w.scaled_add(-eta * err, &row);
        self.b -= eta * err;
        if l1 > 0.0 {
            let cut = eta * p.alpha * l1;
            self.w.mapv_inplace(|v| v.signum() * (v.abs() - cut).max(0.0));
        }
    }
}
