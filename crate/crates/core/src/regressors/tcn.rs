//! Temporal convolutional network: residual blocks of dilated causal convolutions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Var};
use super::init_uniform;
use super::recurrent::dropout_mask;
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcnParams {
    pub channels: usize,
    pub kernel_size: usize,
    pub levels: usize,
    pub dropout: f64,
    pub layer_norm: bool,
}

impl TcnParams {
    /// Number of past steps (including the current one) that can influence an output.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel_size - 1) * ((1 << self.levels) - 1)
    }

    pub fn init(&self, input_dim: usize, rng: &mut Rng) -> Vec<Array2<f64>> {
        let (c, k) = (self.channels, self.kernel_size);
        let mut out = Vec::new();
        let mut in_dim = input_dim;
        for _ in 0..self.levels {
            for conv_in in [in_dim, c] {
                out.push(init_uniform(k * conv_in, c, k * conv_in, rng));
                out.push(init_uniform(1, c, k * conv_in, rng));
                if self.layer_norm {
                    out.push(Array2::ones((1, c)));
                    out.push(Array2::zeros((1, c)));
                }
            }
            if in_dim != c {
                out.push(init_uniform(in_dim, c, in_dim, rng));
                out.push(init_uniform(1, c, in_dim, rng));
            }
            in_dim = c;
        }
        out.push(init_uniform(c, 1, c, rng));
        out.push(init_uniform(1, 1, c, rng));
        out
    }

    /// `x` is (steps·batch)×C with row `t·batch + b`; returns (steps·batch)×1.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        _steps: usize,
        batch: usize,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Var {
        let (c, k) = (self.channels, self.kernel_size);
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter list matches architecture");
        let mut input = x;
        let mut in_dim = tape.value(x).ncols();
        for level in 0..self.levels {
            let dilation = 1usize << level;
            let mut h = input;
            for conv_in in [in_dim, c] {
                let w = next();
                let b = next();
                let mut acc: Option<Var> = None;
                for tap in 0..k {
                    let shifted = if tap == 0 { h } else { tape.shift_rows(h, tap * dilation * batch) };
                    let wk = tape.rows(w, tap * conv_in, conv_in);
                    let term = tape.matmul(shifted, wk);
                    acc = Some(match acc {
                        None => term,
                        Some(a) => tape.add(a, term),
                    });
                }
                let mut y = tape.add_row(acc.expect("kernel_size >= 1"), b);
                if self.layer_norm {
                    let gain = next();
                    let bias = next();
                    y = tape.layer_norm(y, gain, bias);
                }
                y = tape.relu(y);
                if self.dropout > 0.0 {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        let mask = dropout_mask(tape.value(y).raw_dim(), self.dropout, rng);
                        y = tape.mul_const(y, mask);
                    }
                }
                h = y;
            }
            let residual = if in_dim != c {
                let wd = next();
                let bd = next();
                let r = tape.matmul(input, wd);
                tape.add_row(r, bd)
            } else {
                input
            };
            let sum = tape.add(residual, h);
            input = tape.relu(sum);
            in_dim = c;
        }
        let wo = next();
        let bo = next();
        let y = tape.matmul(input, wo);
        tape.add_row(y, bo)
    }
}
