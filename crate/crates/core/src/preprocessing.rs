//! Data cleaning: imputation, categorical one-hot encoding, exponential
//! smoothing and column scaling. Every fitted transform only reads training
//! statistics.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{RunToFailureDataset, SymbolTable};
use crate::error::{Error, Result};
use crate::util::{mean, quantile_sorted, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Neighbor,
    Mean,
    Median,
}

/// Fills missing (`NaN`) entries of one channel.
pub fn impute(series: &[f64], strategy: ImputeStrategy) -> Result<Vec<f64>> {
    if series.iter().all(|v| v.is_nan()) {
        return Err(Error::Imputation { channel: String::new() });
    }
    if series.iter().all(|v| !v.is_nan()) {
        return Ok(series.to_vec());
    }
    let out = match strategy {
        ImputeStrategy::Neighbor => {
            let mut out = series.to_vec();
            let mut last = f64::NAN;
            for v in out.iter_mut() {
                if v.is_nan() {
                    *v = last;
                } else {
                    last = *v;
                }
            }
            // leading gap: backward fill from the first observation
            let first = out.iter().copied().find(|v| !v.is_nan()).expect("non-empty");
            for v in out.iter_mut().take_while(|v| v.is_nan()) {
                *v = first;
            }
            out
        }
        ImputeStrategy::Mean | ImputeStrategy::Median => {
            let observed: Vec<f64> = series.iter().copied().filter(|v| !v.is_nan()).collect();
            let fill = if strategy == ImputeStrategy::Mean {
                mean(&observed)
            } else {
                quantile_sorted(&sorted_copy(&observed), 0.5)
            };
            series.iter().map(|&v| if v.is_nan() { fill } else { v }).collect()
        }
    };
    Ok(out)
}

/// Causal exponential smoothing. The first `min_periods - 1` outputs are the
/// raw inputs; the recursion itself always starts at `s[0] = x[0]`.
pub fn exp_smooth(series: &[f64], alpha: f64, min_periods: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut state = 0.0;
    for (t, &x) in series.iter().enumerate() {
        state = if t == 0 { x } else { alpha * x + (1.0 - alpha) * state };
        out.push(if t + 1 < min_periods { x } else { state });
    }
    out
}

// ---------------------------------------------------------------------------
// Categorical encoding
// ---------------------------------------------------------------------------

/// One-hot encoder; symbol order is lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    input_dim: usize,
    /// categorical column → sorted symbols seen during fit
    columns: BTreeMap<usize, Vec<String>>,
    output_names: Vec<String>,
}

impl CategoricalEncoder {
    pub fn fit(
        sensor_names: &[String],
        categorical_columns: impl IntoIterator<Item = usize>,
        symbols: &SymbolTable,
    ) -> Self {
        let mut columns = BTreeMap::new();
        for c in categorical_columns {
            let mut syms = symbols.get(&c).cloned().unwrap_or_default();
            syms.sort();
            syms.dedup();
            columns.insert(c, syms);
        }
        let mut output_names = Vec::new();
        for (c, name) in sensor_names.iter().enumerate() {
            match columns.get(&c) {
                Some(syms) => output_names.extend(syms.iter().map(|s| format!("{name}={s}"))),
                None => output_names.push(name.clone()),
            }
        }
        Self {
            input_dim: sensor_names.len(),
            columns,
            output_names,
        }
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `values` is `d × T` with categorical codes indexing `symbols`.
    /// Unknown or missing symbols encode as an all-zero indicator row.
    pub fn apply(&self, values: ArrayView2<f64>, symbols: &SymbolTable) -> Result<Array2<f64>> {
        if values.nrows() != self.input_dim {
            return Err(Error::Contract(format!(
                "expected {} channels, got {}",
                self.input_dim,
                values.nrows()
            )));
        }
        if self.columns.is_empty() {
            return Ok(values.to_owned());
        }
        let t_len = values.ncols();
        let mut out = Array2::zeros((self.output_names.len(), t_len));
        let mut row = 0;
        for c in 0..self.input_dim {
            match self.columns.get(&c) {
                Some(fitted) => {
                    let table = symbols.get(&c);
                    for t in 0..t_len {
                        let code = values[[c, t]];
                        if code.is_nan() {
                            continue;
                        }
                        let sym = table.and_then(|tb| tb.get(code as usize));
                        if let Some(pos) = sym.and_then(|s| fitted.binary_search(s).ok()) {
                            out[[row + pos, t]] = 1.0;
                        }
                    }
                    row += fitted.len();
                }
                None => {
                    out.row_mut(row).assign(&values.row(c));
                    row += 1;
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerKind {
    Robust { q_lo: f64, q_hi: f64 },
    MinMax,
    Standard,
    UnitNorm,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedScaler {
    Robust { center: Vec<f64>, scale: Vec<f64> },
    MinMax { min: Vec<f64>, range: Vec<f64> },
    Standard { mean: Vec<f64>, std: Vec<f64> },
    UnitNorm,
    None,
}

/// Fits per-column statistics on `data` (rows = observations).
pub fn fit_scaler(data: ArrayView2<f64>, kind: ScalerKind) -> Result<FittedScaler> {
    if data.nrows() == 0 {
        return Err(Error::Fit("cannot fit a scaler on zero rows".into()));
    }
    let columns = || data.axis_iter(Axis(1)).map(|c| c.to_vec());
    Ok(match kind {
        ScalerKind::Robust { q_lo, q_hi } => {
            if !(0.0 < q_lo && q_lo < q_hi && q_hi < 100.0) {
                return Err(Error::Contract(format!("invalid quantile range ({q_lo}, {q_hi})")));
            }
            let (mut center, mut scale) = (Vec::new(), Vec::new());
            for col in columns() {
                let s = sorted_copy(&col);
                center.push(quantile_sorted(&s, 0.5));
                scale.push(quantile_sorted(&s, q_hi / 100.0) - quantile_sorted(&s, q_lo / 100.0));
            }
            FittedScaler::Robust { center, scale }
        }
        ScalerKind::MinMax => {
            let (mut min, mut range) = (Vec::new(), Vec::new());
            for col in columns() {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                min.push(lo);
                range.push(hi - lo);
            }
            FittedScaler::MinMax { min, range }
        }
        ScalerKind::Standard => {
            let (mut mu, mut sd) = (Vec::new(), Vec::new());
            for col in columns() {
                let m = mean(&col);
                let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
                mu.push(m);
                sd.push(var.sqrt());
            }
            FittedScaler::Standard { mean: mu, std: sd }
        }
        ScalerKind::UnitNorm => FittedScaler::UnitNorm,
        ScalerKind::None => FittedScaler::None,
    })
}

fn guarded(x: f64, center: f64, scale: f64) -> f64 {
    if scale.abs() < 1e-12 {
        0.0
    } else {
        (x - center) / scale
    }
}

/// Applies a fitted scaler to `data` (rows = observations).
pub fn apply_scaler(scaler: &FittedScaler, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = data.to_owned();
    let check = |n: usize| {
        if n != data.ncols() {
            Err(Error::Contract(format!("scaler fitted on {n} columns, got {}", data.ncols())))
        } else {
            Ok(())
        }
    };
    match scaler {
        FittedScaler::Robust { center, scale } => {
            check(center.len())?;
            for mut row in out.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = guarded(*v, center[j], scale[j]);
                }
            }
        }
        FittedScaler::MinMax { min, range } => {
            check(min.len())?;
            for mut row in out.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = guarded(*v, min[j], range[j]);
                }
            }
        }
        FittedScaler::Standard { mean, std } => {
            check(mean.len())?;
            for mut row in out.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = guarded(*v, mean[j], std[j]);
                }
            }
        }
        FittedScaler::UnitNorm => {
            for mut row in out.rows_mut() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.mapv_inplace(|v| v / norm);
                }
            }
        }
        FittedScaler::None => {}
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cleaning stage
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub alpha: f64,
    pub min_periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub impute_strategy: ImputeStrategy,
    pub smoothing: Option<Smoothing>,
    pub scaler: ScalerKind,
}

/// Train-fitted cleaning chain: impute → encode → smooth → scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCleaning {
    pub config: CleaningConfig,
    categorical_columns: Vec<usize>,
    encoder: CategoricalEncoder,
    scaler: FittedScaler,
}

impl FittedCleaning {
    /// Fits on `train` and returns the cleaned training series (`d' × T` each).
    pub fn fit(config: CleaningConfig, train: &RunToFailureDataset) -> Result<(Self, Vec<Array2<f64>>)> {
        if let Some(s) = config.smoothing {
            if !(s.alpha > 0.0 && s.alpha <= 1.0) {
                return Err(Error::Contract(format!("smoothing alpha {} outside (0, 1]", s.alpha)));
            }
        }
        let encoder = CategoricalEncoder::fit(
            &train.sensor_names,
            train.categorical_columns.iter().copied(),
            &train.symbols,
        );
        let categorical_columns: Vec<usize> = train.categorical_columns.iter().copied().collect();
        let mut stage = Self {
            config,
            categorical_columns,
            encoder,
            scaler: FittedScaler::None,
        };
        let pre: Vec<Array2<f64>> = train
            .instances
            .iter()
            .map(|inst| stage.pre_scale(inst.values.view(), &train.symbols, &train.sensor_names))
            .collect::<Result<_>>()?;
        let total: usize = pre.iter().map(|m| m.ncols()).sum();
        let width = stage.encoder.output_names().len();
        let mut stacked = Array2::zeros((total, width));
        let mut at = 0;
        for m in &pre {
            let n = m.ncols();
            stacked.slice_mut(ndarray::s![at..at + n, ..]).assign(&m.t());
            at += n;
        }
        stage.scaler = fit_scaler(stacked.view(), config.scaler)?;
        let cleaned = pre
            .into_iter()
            .map(|m| Ok(apply_scaler(&stage.scaler, m.t())?.reversed_axes()))
            .collect::<Result<_>>()?;
        Ok((stage, cleaned))
    }

    pub fn output_names(&self) -> &[String] {
        self.encoder.output_names()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn pre_scale(&self, values: ArrayView2<f64>, symbols: &SymbolTable, names: &[String]) -> Result<Array2<f64>> {
        let mut imputed = Array2::zeros(values.raw_dim());
        for (c, row) in values.rows().into_iter().enumerate() {
            let strategy = if self.categorical_columns.contains(&c) {
                ImputeStrategy::Neighbor
            } else {
                self.config.impute_strategy
            };
            let filled = impute(&row.to_vec(), strategy).map_err(|_| Error::Imputation {
                channel: names.get(c).cloned().unwrap_or_else(|| c.to_string()),
            })?;
            imputed.row_mut(c).assign(&ndarray::Array1::from(filled));
        }
        let mut encoded = self.encoder.apply(imputed.view(), symbols)?;
        if let Some(s) = self.config.smoothing {
            for mut row in encoded.rows_mut() {
                let sm = exp_smooth(&row.to_vec(), s.alpha, s.min_periods);
                row.assign(&ndarray::Array1::from(sm));
            }
        }
        Ok(encoded)
    }

    /// Cleans one `d × T` series with the train-fitted statistics.
    pub fn apply(&self, values: ArrayView2<f64>, symbols: &SymbolTable) -> Result<Array2<f64>> {
        let names: Vec<String> = (0..values.nrows()).map(|c| format!("channel {c}")).collect();
        let pre = self.pre_scale(values, symbols, &names)?;
        Ok(apply_scaler(&self.scaler, pre.t())?.reversed_axes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const NAN: f64 = f64::NAN;

    #[test]
    fn impute_examples() {
        assert_eq!(impute(&[1.0, NAN, 3.0], ImputeStrategy::Mean).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(impute(&[NAN, 2.0], ImputeStrategy::Neighbor).unwrap(), vec![2.0, 2.0]);
        assert_eq!(
            impute(&[1.0, NAN, NAN, 4.0, NAN], ImputeStrategy::Neighbor).unwrap(),
            vec![1.0, 1.0, 1.0, 4.0, 4.0]
        );
        assert_eq!(impute(&[1.0, NAN, 3.0, 10.0], ImputeStrategy::Median).unwrap()[1], 3.0);
        assert!(matches!(impute(&[NAN, NAN], ImputeStrategy::Mean), Err(Error::Imputation { .. })));
    }

    #[test]
    fn impute_is_idempotent_on_complete() {
        let x = [0.3, -1.0, 2.5];
        for s in [ImputeStrategy::Neighbor, ImputeStrategy::Mean, ImputeStrategy::Median] {
            assert_eq!(impute(&x, s).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn smoothing_examples() {
        let x = [0.3, 5.0, -2.0];
        assert_eq!(exp_smooth(&x, 1.0, 1), x.to_vec());
        assert_eq!(exp_smooth(&[0.0, 1.0], 0.5, 1), vec![0.0, 0.5]);
        assert_eq!(exp_smooth(&[4.0; 5], 0.3, 2), vec![4.0; 5]);
        let s = exp_smooth(&[0.0, 1.0, 1.0], 0.5, 3);
        assert_eq!(s, vec![0.0, 1.0, 0.75]);
    }

    #[test]
    fn smoothing_is_causal() {
        let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let full = exp_smooth(&x, 0.3, 3);
        for cut in 1..x.len() {
            assert_eq!(exp_smooth(&x[..cut], 0.3, 3), full[..cut].to_vec());
        }
    }

    #[test]
    fn one_hot_lexicographic_and_unseen() {
        let names = vec!["x".to_string(), "mode".to_string()];
        let mut table = SymbolTable::new();
        table.insert(1, vec!["b".to_string(), "a".to_string()]);
        let enc = CategoricalEncoder::fit(&names, [1], &table);
        assert_eq!(enc.output_names(), &["x", "mode=a", "mode=b"]);
        // codes index the *input* table: 1 → "a"
        let out = enc.apply(array![[7.0, 8.0], [1.0, 0.0]].view(), &table).unwrap();
        assert_eq!(out, array![[7.0, 8.0], [1.0, 0.0], [0.0, 1.0]]);

        let mut other = SymbolTable::new();
        other.insert(1, vec!["c".to_string()]);
        let out = enc.apply(array![[1.0], [0.0]].view(), &other).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_categoricals_is_identity() {
        let names = vec!["x".to_string(), "y".to_string()];
        let enc = CategoricalEncoder::fit(&names, [], &SymbolTable::new());
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(enc.apply(m.view(), &SymbolTable::new()).unwrap(), m);
    }

    #[test]
    fn minmax_example() {
        let data = array![[0.0], [5.0], [10.0]];
        let s = fit_scaler(data.view(), ScalerKind::MinMax).unwrap();
        assert_eq!(apply_scaler(&s, data.view()).unwrap(), array![[0.0], [0.5], [1.0]]);
    }

    #[test]
    fn standard_moments() {
        let data = array![[1.0, 10.0], [2.0, 20.0], [4.0, 0.0], [9.0, 5.0]];
        let s = fit_scaler(data.view(), ScalerKind::Standard).unwrap();
        let out = apply_scaler(&s, data.view()).unwrap();
        for col in out.columns() {
            let m = col.mean().unwrap();
            let v = col.mapv(|x| (x - m).powi(2)).mean().unwrap();
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_columns_map_to_zero() {
        let data = array![[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]];
        for kind in [ScalerKind::MinMax, ScalerKind::Standard, ScalerKind::Robust { q_lo: 25.0, q_hi: 75.0 }] {
            let s = fit_scaler(data.view(), kind).unwrap();
            let out = apply_scaler(&s, data.view()).unwrap();
            assert!(out.column(0).iter().all(|&v| v == 0.0), "{kind:?}");
        }
        let s = fit_scaler(data.view(), ScalerKind::UnitNorm).unwrap();
        let zeros = array![[0.0, 0.0]];
        assert_eq!(apply_scaler(&s, zeros.view()).unwrap(), zeros);
        let row = array![[3.0, 4.0]];
        assert_eq!(apply_scaler(&s, row.view()).unwrap(), array![[0.6, 0.8]]);
    }

    #[test]
    fn robust_uses_quantile_range() {
        let data = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let s = fit_scaler(data.view(), ScalerKind::Robust { q_lo: 25.0, q_hi: 75.0 }).unwrap();
        let out = apply_scaler(&s, data.view()).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_fit_errors() {
        let data = Array2::<f64>::zeros((0, 2));
        assert!(fit_scaler(data.view(), ScalerKind::Standard).is_err());
    }

    #[test]
    fn apply_ignores_new_statistics() {
        let train = array![[0.0], [10.0]];
        let s = fit_scaler(train.view(), ScalerKind::MinMax).unwrap();
        let a = apply_scaler(&s, array![[5.0], [100.0]].view()).unwrap();
        let b = apply_scaler(&s, array![[5.0], [-300.0]].view()).unwrap();
        assert_eq!(a[[0, 0]], b[[0, 0]]);
    }
}
