//! Feed-forward network for tabular rows, trained with Adam on minibatches.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::autodiff::{finite_difference_error, Tape, Var};
use super::init_uniform;
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::util::{rng_for, Deadline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub l2_penalty: f64,
}

pub const MLP_BATCH: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: MlpParams,
    pub seed: u64,
    pub weights: Vec<Array2<f64>>,
    pub optimizer: Adam,
    pub epochs: usize,
}

impl Mlp {
    pub fn new(params: MlpParams, seed: u64, input_dim: usize) -> Self {
        let mut rng = rng_for(seed, &[0]);
        let mut weights = Vec::new();
        let mut fan_in = input_dim;
        for &h in params.hidden.iter().chain(std::iter::once(&1)) {
            weights.push(init_uniform(fan_in, h, fan_in, &mut rng));
            weights.push(init_uniform(1, h, fan_in, &mut rng));
            fan_in = h;
        }
        let optimizer = Adam::new(
            AdamConfig {
                learning_rate: params.learning_rate,
                beta1: 0.9,
                beta2: 0.999,
                weight_decay: 0.0,
                grad_clip: None,
            },
            &weights,
        );
        Self {
            params,
            seed,
            weights,
            optimizer,
            epochs: 0,
        }
    }

    fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        let mut h = x;
        let layers = vars.len() / 2;
        for l in 0..layers {
            let z = tape.matmul(h, vars[2 * l]);
            let z = tape.add_row(z, vars[2 * l + 1]);
            h = if l + 1 == layers {
                z
            } else {
                match self.params.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            };
        }
        h
    }

    fn loss(&self, tape: &mut Tape, vars: &[Var], x: Array2<f64>, y: Array2<f64>) -> Var {
        let n = x.nrows() as f64;
        let xv = tape.leaf(x);
        let pred = self.forward(tape, vars, xv);
        let ones = Array2::ones(y.raw_dim());
        let mut loss = tape.masked_mse(pred, y, ones);
        if self.params.l2_penalty > 0.0 {
            for l in 0..vars.len() / 2 {
                let sq = tape.sum_sq(vars[2 * l]);
                let pen = tape.scale(sq, 0.5 * self.params.l2_penalty / n);
                loss = tape.add(loss, pen);
            }
        }
        loss
    }

    /// Trains more epochs on standardized inputs and targets.
    pub fn train(&mut self, x: ArrayView2<'_, f64>, y: &[f64], epochs: usize, deadline: &Deadline) -> Result<()> {
        let n = x.nrows();
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(self.seed, &[1, self.epochs as u64]));
            for chunk in order.chunks(MLP_BATCH) {
                deadline.check()?;
                let xb = x.select(Axis(0), chunk);
                let yb = Array2::from_shape_fn((chunk.len(), 1), |(i, _)| y[chunk[i]]);
                let mut tape = Tape::new();
                let vars: Vec<Var> = self.weights.iter().map(|w| tape.leaf(w.clone())).collect();
                let loss = self.loss(&mut tape, &vars, xb, yb);
                if !tape.scalar(loss).is_finite() {
                    return Err(Error::Training(format!("mlp loss diverged at epoch {}", self.epochs)));
                }
                let grads = tape.backward(loss);
                let mut g: Vec<Array2<f64>> = vars
                    .iter()
                    .zip(&self.weights)
                    .map(|(&v, w)| grads[v].clone().unwrap_or_else(|| Array2::zeros(w.raw_dim())))
                    .collect();
                self.optimizer.update(&mut self.weights, &mut g);
            }
            self.epochs += 1;
        }
        Ok(())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let xv = tape.leaf(x.to_owned());
        let out = self.forward(&mut tape, &vars, xv);
        tape.value(out).iter().copied().collect()
    }

    /// Worst relative gradient error of the penalized loss on `x`, `y`.
    pub fn gradient_error(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let build = |ws: &[Array2<f64>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ws.iter().map(|w| tape.leaf(w.clone())).collect();
            let loss = self.loss(&mut tape, &vars, x.clone(), y.clone());
            (tape, vars, loss)
        };
        finite_difference_error(
            &self.weights,
            |ws| {
                let (t, _, l) = build(ws);
                t.scalar(l)
            },
            |ws| {
                let (t, vars, l) = build(ws);
                let g = t.backward(l);
                vars.iter()
                    .zip(ws)
                    .map(|(&v, w)| g[v].clone().unwrap_or_else(|| Array2::zeros(w.raw_dim())))
                    .collect()
            },
            1e-6,
            1e-7,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn gradients_match_for_both_activations() {
        let mut rng = crate::util::rng(11);
        for act in [Activation::Tanh, Activation::Relu] {
            let m = Mlp::new(
                MlpParams {
                    activation: act,
                    hidden: vec![4, 3],
                    learning_rate: 1e-3,
                    l2_penalty: 0.1,
                },
                3,
                3,
            );
            let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
            let y = Array2::from_shape_simple_fn((5, 1), || rng.random_range(-1.0..1.0));
            let err = m.gradient_error(&x, &y);
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn learns_smooth_function() {
        let x = Array2::from_shape_fn((300, 1), |(i, _)| i as f64 / 150.0 - 1.0);
        let y: Vec<f64> = x.iter().map(|v| (2.0 * v).sin()).collect();
        let mut m = Mlp::new(
            MlpParams {
                activation: Activation::Tanh,
                hidden: vec![16],
                learning_rate: 1e-2,
                l2_penalty: 1e-6,
            },
            0,
            1,
        );
        m.train(x.view(), &y, 300, &Deadline::none()).unwrap();
        let p = m.predict(x.view());
        let mse: f64 = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 300.0;
        assert!(mse < 0.01, "{mse}");
    }
}
