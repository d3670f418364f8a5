use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub n_configs: usize,
    pub budget: usize,
}

/// Largest `s` with `eta^s <= r`.
pub fn s_max(r: usize, eta: usize) -> usize {
    let mut s = 0;
    let mut p = eta;
    while p <= r {
        s += 1;
        p = p.saturating_mul(eta);
    }
    s
}

/// Brackets from most to least aggressive (`s = s_max … 0`), each a list of rungs.
pub fn hyperband_schedule(r: usize, eta: usize) -> Vec<Vec<Rung>> {
    assert!(eta >= 2 && r >= 1, "hyperband needs eta >= 2 and R >= 1");
    let smax = s_max(r, eta);
    (0..=smax)
        .rev()
        .map(|s| {
            let n0 = ((smax + 1) as f64 / (s + 1) as f64 * (eta as f64).powi(s as i32) - 1e-9).ceil() as usize;
            let mut rungs = Vec::with_capacity(s + 1);
            let mut n = n0;
            for i in 0..=s {
                let budget = ((r as f64) / (eta as f64).powi((s - i) as i32)).round().max(1.0) as usize;
                rungs.push(Rung { n_configs: n, budget });
                n /= eta;
                if n == 0 {
                    break;
                }
            }
            rungs
        })
        .collect()
}
