//! Fixed catalog of 43 statistical window features.
//!
//! Degenerate windows (zero variance, too short for a lag) yield 0 for moment
//! ratios, autocorrelations and R², so every feature is total.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::util::{quantile_sorted, sorted_copy};

pub const STAT_FEATURES: [&str; 43] = [
    "mean",
    "median",
    "std",
    "variance",
    "min",
    "max",
    "range",
    "sum",
    "abs_energy",
    "root_mean_square",
    "skewness",
    "kurtosis",
    "mean_abs_change",
    "mean_change",
    "mean_second_derivative_central",
    "count_above_mean",
    "count_below_mean",
    "first_location_of_max",
    "first_location_of_min",
    "last_location_of_max",
    "last_location_of_min",
    "longest_strike_above_mean",
    "longest_strike_below_mean",
    "number_peaks",
    "number_mean_crossings",
    "autocorrelation_lag1",
    "autocorrelation_lag2",
    "autocorrelation_lag3",
    "quantile_0.1",
    "quantile_0.25",
    "quantile_0.75",
    "quantile_0.9",
    "interquartile_range",
    "linear_trend_slope",
    "linear_trend_intercept",
    "linear_trend_r2",
    "absolute_sum_of_changes",
    "complexity_estimate",
    "binned_entropy",
    "energy_ratio_last_third",
    "spectral_centroid",
    "dominant_frequency",
    "ratio_beyond_2_sigma",
];

const EPS: f64 = 1e-12;

/// Shared intermediate statistics of one series.
struct Summary<'a> {
    x: &'a [f64],
    n: f64,
    mean: f64,
    var: f64,
    sorted: Vec<f64>,
}

impl<'a> Summary<'a> {
    fn new(x: &'a [f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            x,
            n,
            mean,
            var,
            sorted: sorted_copy(x),
        }
    }

    fn degenerate(&self) -> bool {
        self.var <= EPS * (1.0 + self.mean * self.mean)
    }

    fn central_moment(&self, k: i32) -> f64 {
        self.x.iter().map(|v| (v - self.mean).powi(k)).sum::<f64>() / self.n
    }

    fn autocorrelation(&self, lag: usize) -> f64 {
        let n = self.x.len();
        if n <= lag || self.degenerate() {
            return 0.0;
        }
        let s: f64 = (0..n - lag)
            .map(|t| (self.x[t] - self.mean) * (self.x[t + lag] - self.mean))
            .sum();
        s / ((n - lag) as f64 * self.var)
    }

    fn linear_trend(&self) -> (f64, f64, f64) {
        let n = self.x.len();
        if n < 2 {
            return (0.0, self.x[0], 0.0);
        }
        let t_mean = (n - 1) as f64 / 2.0;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for (t, v) in self.x.iter().enumerate() {
            let dt = t as f64 - t_mean;
            sxy += dt * (v - self.mean);
            sxx += dt * dt;
        }
        let slope = sxy / sxx;
        let intercept = self.mean - slope * t_mean;
        let r2 = if self.degenerate() {
            0.0
        } else {
            (sxy * sxy / (sxx * self.var * self.n)).clamp(0.0, 1.0)
        };
        (slope, intercept, r2)
    }

    fn longest_strike(&self, above: bool) -> f64 {
        let mut best = 0usize;
        let mut run = 0usize;
        for &v in self.x {
            let hit = if above { v > self.mean } else { v < self.mean };
            if hit {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best as f64
    }

    fn binned_entropy(&self, bins: usize) -> f64 {
        let lo = self.sorted[0];
        let hi = *self.sorted.last().expect("non-empty");
        if hi - lo <= EPS * (1.0 + lo.abs()) {
            return 0.0;
        }
        let mut counts = vec![0usize; bins];
        for &v in self.x {
            let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / self.n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn magnitude_spectrum(&self, planner: &mut FftPlanner<f64>) -> Vec<f64> {
        let n = self.x.len();
        let fft: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex<f64>> = self.x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm()).collect()
    }
}

/// Extracts the enabled catalog features of one series, in catalog order.
///
/// Returns `(feature_id, value)` pairs.
pub fn extract(x: &[f64], enabled: &[bool; 43]) -> Vec<(&'static str, f64)> {
    let mut planner = FftPlanner::new();
    extract_with(x, enabled, &mut planner)
}

pub(crate) fn extract_with(
    x: &[f64],
    enabled: &[bool; 43],
    planner: &mut FftPlanner<f64>,
) -> Vec<(&'static str, f64)> {
    assert!(!x.is_empty(), "feature extraction needs a non-empty window");
    let s = Summary::new(x);
    let n = x.len();
    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let trend = if enabled[33] || enabled[34] || enabled[35] {
        s.linear_trend()
    } else {
        (0.0, 0.0, 0.0)
    };
    let spectrum = if enabled[40] || enabled[41] {
        s.magnitude_spectrum(planner)
    } else {
        Vec::new()
    };
    let argmax_first = || {
        x.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
    };
    let argmin_first = || {
        x.iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
            .0
    };
    let argmax_last = || {
        x.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v >= acc.1 { (i, v) } else { acc })
            .0
    };
    let argmin_last = || {
        x.iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v <= acc.1 { (i, v) } else { acc })
            .0
    };

    let mut out = Vec::with_capacity(enabled.iter().filter(|e| **e).count());
    for (i, name) in STAT_FEATURES.iter().enumerate() {
        if !enabled[i] {
            continue;
        }
        let v = match i {
            0 => s.mean,
            1 => quantile_sorted(&s.sorted, 0.5),
            2 => s.var.sqrt(),
            3 => s.var,
            4 => s.sorted[0],
            5 => s.sorted[n - 1],
            6 => s.sorted[n - 1] - s.sorted[0],
            7 => x.iter().sum(),
            8 => x.iter().map(|v| v * v).sum(),
            9 => (x.iter().map(|v| v * v).sum::<f64>() / s.n).sqrt(),
            10 => {
                if s.degenerate() {
                    0.0
                } else {
                    s.central_moment(3) / s.var.powf(1.5)
                }
            }
            11 => {
                if s.degenerate() {
                    0.0
                } else {
                    s.central_moment(4) / (s.var * s.var) - 3.0
                }
            }
            12 => mean_or_zero(diffs.iter().map(|d| d.abs())),
            13 => mean_or_zero(diffs.iter().copied()),
            14 => {
                if n < 3 {
                    0.0
                } else {
                    mean_or_zero((0..n - 2).map(|t| (x[t + 2] - 2.0 * x[t + 1] + x[t]) / 2.0))
                }
            }
            15 => x.iter().filter(|&&v| v > s.mean).count() as f64,
            16 => x.iter().filter(|&&v| v < s.mean).count() as f64,
            17 => argmax_first() as f64 / s.n,
            18 => argmin_first() as f64 / s.n,
            19 => argmax_last() as f64 / s.n,
            20 => argmin_last() as f64 / s.n,
            21 => s.longest_strike(true),
            22 => s.longest_strike(false),
            23 => (1..n.saturating_sub(1))
                .filter(|&t| x[t] > x[t - 1] && x[t] > x[t + 1])
                .count() as f64,
            24 => x
                .windows(2)
                .filter(|w| (w[0] > s.mean) != (w[1] > s.mean))
                .count() as f64,
            25 => s.autocorrelation(1),
            26 => s.autocorrelation(2),
            27 => s.autocorrelation(3),
            28 => quantile_sorted(&s.sorted, 0.1),
            29 => quantile_sorted(&s.sorted, 0.25),
            30 => quantile_sorted(&s.sorted, 0.75),
            31 => quantile_sorted(&s.sorted, 0.9),
            32 => quantile_sorted(&s.sorted, 0.75) - quantile_sorted(&s.sorted, 0.25),
            33 => trend.0,
            34 => trend.1,
            35 => trend.2,
            36 => diffs.iter().map(|d| d.abs()).sum(),
            37 => diffs.iter().map(|d| d * d).sum::<f64>().sqrt(),
            38 => s.binned_entropy(10),
            39 => {
                let total: f64 = x.iter().map(|v| v * v).sum();
                let tail = (n / 3).max(1);
                let last: f64 = x[n - tail..].iter().map(|v| v * v).sum();
                if total <= 0.0 {
                    0.0
                } else {
                    last / total
                }
            }
            40 => {
                let mass: f64 = spectrum.iter().sum();
                if mass <= EPS {
                    0.0
                } else {
                    spectrum.iter().enumerate().map(|(k, m)| k as f64 * m).sum::<f64>() / mass
                }
            }
            41 => spectrum
                .iter()
                .enumerate()
                .skip(1)
                .fold((0usize, 0.0), |acc, (k, &m)| if m > acc.1 + EPS { (k, m) } else { acc })
                .0 as f64,
            42 => {
                if s.degenerate() {
                    0.0
                } else {
                    let sd = s.var.sqrt();
                    x.iter().filter(|&&v| (v - s.mean).abs() > 2.0 * sd).count() as f64 / s.n
                }
            }
            _ => unreachable!(),
        };
        out.push((*name, v));
    }
    out
}

fn mean_or_zero(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn all_enabled() -> [bool; 43] {
    [true; 43]
}

pub fn index_of(feature: &str) -> Option<usize> {
    STAT_FEATURES.iter().position(|f| *f == feature)
}
