//! Windowing, flattening and statistical feature extraction.

pub mod catalog;
pub mod pca;
pub mod selection;

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::STAT_FEATURES;
pub use pca::{reduce_pca, FittedPca};
pub use selection::{
    benjamini_hochberg, benjamini_yekutieli, fresh_select, kendall_tau_b, pearson_test,
    select_percentile, ScoreTest, SelectionMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub length: usize,
    pub stride: usize,
}

impl WindowConfig {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if length < 2 || stride < 1 {
            return Err(Error::Contract(format!(
                "window length {length} must be >= 2 and stride {stride} >= 1"
            )));
        }
        Ok(Self { length, stride })
    }

    pub fn count(&self, len: usize) -> usize {
        if len < self.length {
            0
        } else {
            (len - self.length) / self.stride + 1
        }
    }

    pub fn starts(&self, len: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.count(len)).map(move |k| k * self.stride)
    }
}

/// Cuts a d×T series into windows; targets are the RUL at each window's last step.
pub fn make_windows(
    values: ArrayView2<'_, f64>,
    rul: &[f64],
    cfg: WindowConfig,
) -> Result<Vec<(Array2<f64>, f64)>> {
    let t = values.ncols();
    if t < cfg.length {
        return Err(Error::TooShort {
            length: t,
            window: cfg.length,
        });
    }
    if rul.len() != t {
        return Err(Error::Shape(format!(
            "rul length {} differs from series length {t}",
            rul.len()
        )));
    }
    Ok(cfg
        .starts(t)
        .map(|s| {
            let w = values.slice(ndarray::s![.., s..s + cfg.length]).to_owned();
            (w, rul[s + cfg.length - 1])
        })
        .collect())
}

/// Channel-major flattening: channel 0's timesteps first, then channel 1, ...
pub fn flatten_window(window: ArrayView2<'_, f64>) -> Vec<f64> {
    window.rows().into_iter().flat_map(|r| r.to_vec()).collect()
}

pub fn unflatten_window(flat: &[f64], channels: usize) -> Result<Array2<f64>> {
    if channels == 0 || flat.len() % channels != 0 {
        return Err(Error::Shape(format!(
            "cannot reshape {} values into {channels} channels",
            flat.len()
        )));
    }
    Array2::from_shape_vec((channels, flat.len() / channels), flat.to_vec())
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Per-channel catalog features of one window, named `<channel>__<feature_id>`.
pub fn extract_stat_features(
    window: ArrayView2<'_, f64>,
    channel_names: &[String],
    enabled: &[bool; 43],
) -> Result<Vec<(String, f64)>> {
    let mut planner = FftPlanner::new();
    let (names, values) = stat_row(window, channel_names, enabled, &mut planner)?;
    Ok(names.into_iter().zip(values).collect())
}

fn stat_row(
    window: ArrayView2<'_, f64>,
    channel_names: &[String],
    enabled: &[bool; 43],
    planner: &mut FftPlanner<f64>,
) -> Result<(Vec<String>, Vec<f64>)> {
    if !enabled.iter().any(|e| *e) {
        return Err(Error::Contract("no statistical feature enabled".into()));
    }
    if channel_names.len() != window.nrows() {
        return Err(Error::Contract(format!(
            "{} channel names for a {}-channel window",
            channel_names.len(),
            window.nrows()
        )));
    }
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (row, ch) in window.axis_iter(Axis(0)).zip(channel_names) {
        let series = row.to_vec();
        for (feat, v) in catalog::extract_with(&series, enabled, planner) {
            names.push(format!("{ch}__{feat}"));
            values.push(v);
        }
    }
    Ok((names, values))
}

/// How a window becomes one feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureExtractor {
    Flatten,
    Stat(Vec<bool>),
}

impl FeatureExtractor {
    fn flags(&self) -> Option<[bool; 43]> {
        match self {
            FeatureExtractor::Flatten => None,
            FeatureExtractor::Stat(v) => {
                let mut f = [false; 43];
                for (dst, src) in f.iter_mut().zip(v) {
                    *dst = *src;
                }
                Some(f)
            }
        }
    }

    pub fn column_names(&self, channel_names: &[String], window: usize) -> Vec<String> {
        match self.flags() {
            None => channel_names
                .iter()
                .flat_map(|c| (0..window).map(move |t| format!("{c}__t{t}")))
                .collect(),
            Some(flags) => channel_names
                .iter()
                .flat_map(|c| {
                    STAT_FEATURES
                        .iter()
                        .zip(flags)
                        .filter(|(_, on)| *on)
                        .map(move |(f, _)| format!("{c}__{f}"))
                })
                .collect(),
        }
    }

    /// Feature rows for every window of one series, in window order.
    pub fn rows(&self, values: ArrayView2<'_, f64>, cfg: WindowConfig) -> Result<Array2<f64>> {
        let t = values.ncols();
        if t < cfg.length {
            return Err(Error::TooShort {
                length: t,
                window: cfg.length,
            });
        }
        let starts: Vec<usize> = cfg.starts(t).collect();
        self.rows_at(values, cfg.length, &starts)
    }

    /// Rows for windows spaced by the stride and aligned so the last one ends
    /// at the final timestep.
    pub fn rows_aligned_to_end(&self, values: ArrayView2<'_, f64>, cfg: WindowConfig) -> Result<Array2<f64>> {
        let t = values.ncols();
        if t < cfg.length {
            return Err(Error::TooShort {
                length: t,
                window: cfg.length,
            });
        }
        let n = cfg.count(t);
        let last = t - cfg.length;
        let starts: Vec<usize> = (0..n).map(|k| last - (n - 1 - k) * cfg.stride).collect();
        self.rows_at(values, cfg.length, &starts)
    }

    /// Feature row of the window ending at the last timestep.
    pub fn last_row(&self, values: ArrayView2<'_, f64>, cfg: WindowConfig) -> Result<Array2<f64>> {
        let t = values.ncols();
        if t < cfg.length {
            return Err(Error::TooShort {
                length: t,
                window: cfg.length,
            });
        }
        self.rows_at(values, cfg.length, &[t - cfg.length])
    }

    fn rows_at(&self, values: ArrayView2<'_, f64>, len: usize, starts: &[usize]) -> Result<Array2<f64>> {
        let d = values.nrows();
        let flags = self.flags();
        let width = match flags {
            None => d * len,
            Some(f) => d * f.iter().filter(|x| **x).count(),
        };
        if width == 0 {
            return Err(Error::Contract("feature extractor produces no columns".into()));
        }
        let names: Vec<String> = (0..d).map(|c| c.to_string()).collect();
        let mut out = Array2::zeros((starts.len(), width));
        let mut planner = FftPlanner::new();
        for (r, &s) in starts.iter().enumerate() {
            let w = values.slice(ndarray::s![.., s..s + len]);
            let row = match flags {
                None => flatten_window(w),
                Some(f) => stat_row(w, &names, &f, &mut planner)?.1,
            };
            out.row_mut(r).assign(&ndarray::Array1::from(row));
        }
        Ok(out)
    }
}

/// Rows of windows with aligned targets and named columns.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            x: self.x.select(Axis(1), cols),
            y: self.y.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
        }
    }
}
