//! Minimal reverse-mode differentiation over dense matrices.
//!
//! Every value is an `Array2<f64>`; scalars are 1×1. A `Tape` records each
//! operation once and `backward` walks it in reverse.

use ndarray::{s, Array1, Array2, Axis};

pub type Var = usize;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Cols(Var, usize),
    Rows(Var, usize),
    VStack(Vec<Var>),
    ShiftRows(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    MaskedMse {
        pred: Var,
        target: Array2<f64>,
        mask: Array2<f64>,
        denom: f64,
    },
    SumSq(Var),
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a].dot(&self.values[b]);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a] + &self.values[b];
        self.push(v, Op::Add(a, b))
    }

    /// `a` (n×m) plus a broadcast row `b` (1×m).
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a] + &self.values[b];
        self.push(v, Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a] - &self.values[b];
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a] * &self.values[b];
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = &self.values[a] * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = &self.values[a] * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.values[a].mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.values[a].mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.values[a].mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.values[a].slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::Cols(a, start))
    }

    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.values[a].slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::Rows(a, start))
    }

    pub fn vstack(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.values[p].view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("matching widths");
        self.push(v, Op::VStack(parts))
    }

    /// Moves rows down by `n`, filling the top with zeros (a causal time shift
    /// when rows are time-major blocks).
    pub fn shift_rows(&mut self, a: Var, n: usize) -> Var {
        let src = &self.values[a];
        let mut v = Array2::zeros(src.raw_dim());
        let rows = src.nrows();
        if n < rows {
            v.slice_mut(s![n.., ..]).assign(&src.slice(s![..rows - n, ..]));
        }
        self.push(v, Op::ShiftRows(a, n))
    }

    /// Row-wise normalization with learned gain and bias (both 1×m).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = &self.values[x];
        let m = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / m;
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|c| c * c).sum_axis(Axis(1)) / m;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
        let v = &(&xhat * &self.values[gain]) + &self.values[bias];
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Σ mask·(pred − target)² / Σ mask, as a 1×1 value.
    pub fn masked_mse(&mut self, pred: Var, target: Array2<f64>, mask: Array2<f64>) -> Var {
        let denom = mask.sum().max(1.0);
        let diff = &self.values[pred] - &target;
        let loss = (&diff * &diff * &mask).sum() / denom;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::MaskedMse {
                pred,
                target,
                mask,
                denom,
            },
        )
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let v = self.values[a].mapv(|x| x * x).sum();
        self.push(Array2::from_elem((1, 1), v), Op::SumSq(a))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v][[0, 0]]
    }

    /// Gradients of scalar `out` with respect to every recorded value.
    pub fn backward(&self, out: Var) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.values.len()).map(|_| None).collect();
        grads[out] = Some(Array2::ones(self.values[out].raw_dim()));
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[*b].t());
                    let gb = self.values[*a].t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.values[*b];
                    let gb = &g * &self.values[*a];
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MulConst(a, c) => acc(&mut grads, *a, &g * c),
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Sigmoid(a) => {
                    let y = &self.values[i];
                    acc(&mut grads, *a, &g * &y.mapv(|v| v * (1.0 - v)));
                }
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    acc(&mut grads, *a, &g * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Relu(a) => {
                    let y = &self.values[i];
                    let mut ga = g;
                    ga.zip_mut_with(y, |d, &v| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Cols(a, start) => {
                    let mut full = Array2::zeros(self.values[*a].raw_dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::Rows(a, start) => {
                    let mut full = Array2::zeros(self.values[*a].raw_dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::VStack(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let h = self.values[p].nrows();
                        acc(&mut grads, p, g.slice(s![at..at + h, ..]).to_owned());
                        at += h;
                    }
                }
                Op::ShiftRows(a, n) => {
                    let rows = g.nrows();
                    let mut ga = Array2::zeros(g.raw_dim());
                    if *n < rows {
                        ga.slice_mut(s![..rows - n, ..]).assign(&g.slice(s![*n.., ..]));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let m = xhat.ncols() as f64;
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * &self.values[*gain];
                    let sum_d = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let inner = &(&(&dxhat * m) - &sum_d) - &(xhat * &sum_dx);
                    let gx = &inner * &(inv_std / m).insert_axis(Axis(1));
                    acc(&mut grads, *x, gx);
                }
                Op::MaskedMse {
                    pred,
                    target,
                    mask,
                    denom,
                } => {
                    let scale = g[[0, 0]] * 2.0 / denom;
                    let gp = (&(&self.values[*pred] - target) * mask) * scale;
                    acc(&mut grads, *pred, gp);
                }
                Op::SumSq(a) => {
                    let scale = g[[0, 0]] * 2.0;
                    acc(&mut grads, *a, &self.values[*a] * scale);
                }
            }
        }
        grads
    }
}

fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Max relative error between analytic and central-difference gradients of
/// `loss(params)`; the relative denominator is floored at `floor`.
pub fn finite_difference_error<F, G>(params: &[Array2<f64>], loss: F, grads: G, step: f64, floor: f64) -> f64
where
    F: Fn(&[Array2<f64>]) -> f64,
    G: Fn(&[Array2<f64>]) -> Vec<Array2<f64>>,
{
    let analytic: Vec<Array2<f64>> = grads(params)
        .into_iter()
        .map(|g| g.as_standard_layout().into_owned())
        .collect();
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for p in 0..work.len() {
        for idx in 0..work[p].len() {
            let orig = work[p].as_slice().expect("standard layout")[idx];
            work[p].as_slice_mut().expect("standard layout")[idx] = orig + step;
            let up = loss(&work);
            work[p].as_slice_mut().expect("standard layout")[idx] = orig - step;
            let down = loss(&work);
            work[p].as_slice_mut().expect("standard layout")[idx] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[p].as_slice().expect("standard layout")[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}
