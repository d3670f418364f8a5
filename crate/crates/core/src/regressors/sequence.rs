//! Sequence-to-sequence RUL networks and their training loop.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::autodiff::{finite_difference_error, Tape, Var};
use super::optim::{Adam, AdamConfig};
use super::recurrent::RnnParams;
use super::tcn::TcnParams;
use super::TargetScale;
use crate::error::{Error, Result};
use crate::util::{rng_for, Deadline, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeqArch {
    Rnn(RnnParams),
    Tcn(TcnParams),
}

impl SeqArch {
    pub fn init(&self, input_dim: usize, rng: &mut Rng) -> Vec<Array2<f64>> {
        match self {
            SeqArch::Rnn(p) => p.init(input_dim, rng),
            SeqArch::Tcn(p) => p.init(input_dim, rng),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        steps: usize,
        batch: usize,
        dropout: Option<&mut Rng>,
    ) -> Var {
        match self {
            SeqArch::Rnn(p) => p.forward(tape, params, x, steps, batch, dropout),
            SeqArch::Tcn(p) => p.forward(tape, params, x, steps, batch, dropout),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum_beta: f64,
    pub grad_clip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerParams {
    pub batch_size: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub arch: SeqArch,
    pub optimizer: OptimizerParams,
    pub trainer: TrainerParams,
}

/// Series per forward/backward pass inside a mini-batch.
const SUB_BATCH: usize = 16;

/// One training series: channels × time values and a target per timestep.
pub type Series = (Array2<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSequence {
    pub spec: SequenceSpec,
    pub seed: u64,
    pub input_dim: usize,
    pub x_mean: Array1<f64>,
    pub x_std: Array1<f64>,
    pub target: TargetScale,
    pub params: Vec<Array2<f64>>,
    pub best_params: Vec<Array2<f64>>,
    pub optimizer: Adam,
    pub consumed_budget: usize,
    pub epochs_run: usize,
    pub best_loss: f64,
    pub stall: usize,
    pub stopped_early: bool,
    /// Training stopped at the deadline; `best_params` hold the best epoch so far.
    pub interrupted: bool,
    pub loss_history: Vec<f64>,
}

fn check_series(data: &[Series]) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::InsufficientData("no training sequences".into()))?;
    let d = first.0.nrows();
    for (x, y) in data {
        if x.nrows() != d {
            return Err(Error::Contract(format!("sequence has {} channels, expected {d}", x.nrows())));
        }
        if x.ncols() != y.len() || x.ncols() == 0 {
            return Err(Error::Shape(format!("{} steps with {} targets", x.ncols(), y.len())));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in sequence data".into()));
        }
    }
    Ok(d)
}

pub fn fit_sequence(
    spec: &SequenceSpec,
    data: &[Series],
    budget: usize,
    seed: u64,
    deadline: &Deadline,
) -> Result<FittedSequence> {
    let d = check_series(data)?;
    let mut sum = Array1::<f64>::zeros(d);
    let mut sq = Array1::<f64>::zeros(d);
    let mut count = 0.0;
    for (x, _) in data {
        for col in x.columns() {
            sum += &col;
            sq += &col.mapv(|v| v * v);
            count += 1.0;
        }
    }
    let x_mean = &sum / count;
    let x_std = (&sq / count - x_mean.mapv(|m| m * m)).mapv(|v| {
        let s = v.max(0.0).sqrt();
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    let all_y: Vec<f64> = data.iter().flat_map(|(_, y)| y.iter().copied()).collect();
    let target = TargetScale::fit(&all_y);
    let params = spec.arch.init(d, &mut rng_for(seed, &[0]));
    let o = spec.optimizer;
    let optimizer = Adam::new(
        AdamConfig {
            learning_rate: o.learning_rate,
            beta1: o.momentum_beta,
            beta2: 0.999,
            weight_decay: o.weight_decay,
            grad_clip: Some(o.grad_clip),
        },
        &params,
    );
    let mut fitted = FittedSequence {
        spec: *spec,
        seed,
        input_dim: d,
        x_mean,
        x_std,
        target,
        best_params: params.clone(),
        params,
        optimizer,
        consumed_budget: 0,
        epochs_run: 0,
        best_loss: f64::INFINITY,
        stall: 0,
        stopped_early: false,
        interrupted: false,
        loss_history: Vec::new(),
    };
    fitted.continue_fit(data, budget, deadline)?;
    Ok(fitted)
}

impl FittedSequence {
    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (mut row, (m, s)) in out.rows_mut().into_iter().zip(self.x_mean.iter().zip(&self.x_std)) {
            row.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    /// Stacks a batch into time-major rows, padding short series at the end.
    fn batch(&self, items: &[&Series]) -> (Array2<f64>, Array2<f64>, Array2<f64>, usize) {
        let b = items.len();
        let steps = items.iter().map(|(x, _)| x.ncols()).max().unwrap_or(0);
        let mut x = Array2::zeros((steps * b, self.input_dim));
        let mut y = Array2::zeros((steps * b, 1));
        let mut mask = Array2::zeros((steps * b, 1));
        for (k, (series, target)) in items.iter().enumerate() {
            let z = self.standardize(series.view());
            for t in 0..series.ncols() {
                x.row_mut(t * b + k).assign(&z.column(t));
                y[[t * b + k, 0]] = self.target.forward(target[t]);
                mask[[t * b + k, 0]] = 1.0;
            }
        }
        (x, y, mask, steps)
    }

    /// Trains up to `extra` more epochs, keeping optimizer state and the best parameters.
    pub fn continue_fit(&mut self, data: &[Series], extra: usize, deadline: &Deadline) -> Result<()> {
        let d = check_series(data)?;
        if d != self.input_dim {
            return Err(Error::Contract(format!(
                "model expects {} channels, data has {d}",
                self.input_dim
            )));
        }
        self.consumed_budget += extra;
        let bs = self.spec.trainer.batch_size.max(1);
        for _ in 0..extra {
            if self.stopped_early || self.interrupted {
                break;
            }
            let epoch = self.epochs_run as u64;
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng_for(self.seed, &[1, epoch]));
            let mut drop_rng = rng_for(self.seed, &[2, epoch]);
            let mut total = 0.0;
            let mut weight = 0.0;
            for chunk in order.chunks(bs) {
                let chunk_obs: f64 = chunk.iter().map(|&i| data[i].0.ncols() as f64).sum();
                let mut acc: Vec<Array2<f64>> = self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
                // Sub-batches bound the work between deadline checks; their
                // gradients are weighted so the sum equals the full-batch gradient.
                for sub in chunk.chunks(SUB_BATCH) {
                    if deadline.expired() {
                        self.interrupted = true;
                        return Ok(());
                    }
                    let items: Vec<&Series> = sub.iter().map(|&i| &data[i]).collect();
                    let (x, y, mask, steps) = self.batch(&items);
                    let n_obs = mask.sum();
                    let mut tape = Tape::new();
                    let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
                    let xv = tape.leaf(x);
                    let pred = self.spec.arch.forward(&mut tape, &vars, xv, steps, items.len(), Some(&mut drop_rng));
                    let loss = tape.masked_mse(pred, y, mask);
                    let value = tape.scalar(loss);
                    if !value.is_finite() {
                        return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
                    }
                    let grads = tape.backward(loss);
                    let share = n_obs / chunk_obs.max(1.0);
                    for (a, &v) in acc.iter_mut().zip(&vars) {
                        if let Some(g) = &grads[v] {
                            a.scaled_add(share, g);
                        }
                    }
                    total += value * n_obs;
                    weight += n_obs;
                }
                self.optimizer.update(&mut self.params, &mut acc);
            }
            let epoch_loss = total / weight.max(1.0);
            if self.params.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::Training(format!("non-finite parameters at epoch {epoch}")));
            }
            self.epochs_run += 1;
            self.loss_history.push(epoch_loss);
            if epoch_loss < self.best_loss {
                self.best_loss = epoch_loss;
                self.best_params = self.params.clone();
                self.stall = 0;
            } else {
                self.stall += 1;
                if self.stall >= self.spec.trainer.patience.max(1) {
                    self.stopped_early = true;
                }
            }
        }
        Ok(())
    }

    /// Model output (in RUL units, clipped at 0) at every step of one series.
    pub fn predict_steps(&self, series: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if series.nrows() != self.input_dim {
            return Err(Error::Contract(format!(
                "model expects {} channels, got {}",
                self.input_dim,
                series.nrows()
            )));
        }
        if series.ncols() == 0 {
            return Err(Error::Shape("empty series".into()));
        }
        let x = self.standardize(series).reversed_axes();
        let steps = x.nrows();
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.best_params.iter().map(|p| tape.leaf(p.clone())).collect();
        let xv = tape.leaf(x.as_standard_layout().to_owned());
        let out = self.spec.arch.forward(&mut tape, &vars, xv, steps, 1, None);
        Ok(tape.value(out).iter().map(|&z| self.target.inverse(z).max(0.0)).collect())
    }

    /// RUL estimate at the final timestep of a prefix.
    pub fn predict(&self, series: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(*self.predict_steps(series)?.last().expect("non-empty"))
    }
}

/// Worst relative error between backpropagated and central-difference
/// gradients of the masked training loss on a random tiny batch.
pub fn sequence_gradient_error(arch: &SeqArch, input_dim: usize, steps: usize, seed: u64) -> f64 {
    use rand::Rng as _;
    let mut rng = rng_for(seed, &[7]);
    let params: Vec<Array2<f64>> = arch
        .init(input_dim, &mut rng)
        .into_iter()
        .map(|p| p.mapv(|v| v * 2.0 + rng.random_range(-0.05..0.05)))
        .collect();
    let batch = 2;
    let x = Array2::from_shape_simple_fn((steps * batch, input_dim), || rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_simple_fn((steps * batch, 1), || rng.random_range(-1.0..1.0));
    let mut mask = Array2::ones((steps * batch, 1));
    // second series one step shorter: padded tail excluded from the loss
    mask[[(steps - 1) * batch + 1, 0]] = 0.0;
    let build = |ps: &[Array2<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let xv = tape.leaf(x.clone());
        let pred = arch.forward(&mut tape, &vars, xv, steps, batch, None);
        let loss = tape.masked_mse(pred, y.clone(), mask.clone());
        (tape, vars, loss)
    };
    finite_difference_error(
        &params,
        |ps| {
            let (t, _, l) = build(ps);
            t.scalar(l)
        },
        |ps| {
            let (t, vars, l) = build(ps);
            let g = t.backward(l);
            vars.iter()
                .zip(ps)
                .map(|(&v, p)| g[v].clone().unwrap_or_else(|| Array2::zeros(p.raw_dim())))
                .collect()
        },
        // close to the cube root of machine epsilon, the usual central-difference optimum
        1e-5,
        1e-6,
    )
}
