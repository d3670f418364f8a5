//! Candidate proposal: random interleaving plus EI maximization over a
//! random-forest surrogate.

use super::acquisition::expected_improvement;
use super::history::RunHistory;
use super::surrogate::fit_surrogate;
use crate::configspace::{Configuration, ConfigurationSpace};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposerSettings {
    /// Every `random_every`-th proposal is a pure random sample.
    pub random_every: usize,
    pub n_random_candidates: usize,
    pub n_top: usize,
    pub k_neighbors: usize,
}

impl Default for ProposerSettings {
    fn default() -> Self {
        Self {
            random_every: 3,
            n_random_candidates: 500,
            n_top: 5,
            k_neighbors: 10,
        }
    }
}

pub struct Proposer<'a> {
    space: &'a ConfigurationSpace,
    seed: u64,
    settings: ProposerSettings,
    count: u64,
}

const MAX_RANDOM_RETRIES: usize = 100;

impl<'a> Proposer<'a> {
    pub fn new(space: &'a ConfigurationSpace, seed: u64) -> Self {
        Self::with_settings(space, seed, ProposerSettings::default())
    }

    pub fn with_settings(space: &'a ConfigurationSpace, seed: u64, settings: ProposerSettings) -> Self {
        Self {
            space,
            seed,
            settings,
            count: 0,
        }
    }

    pub fn proposals_made(&self) -> u64 {
        self.count
    }

    /// Next configuration to evaluate at `budget`, never one already run (or
    /// pending in `exclude`) at that budget.
    pub fn propose(&mut self, history: &RunHistory, budget: usize, exclude: &[Configuration]) -> Result<Configuration> {
        let k = self.count;
        self.count += 1;
        let fresh = |c: &Configuration| !history.was_run(c, budget) && !exclude.contains(c);
        let interleave = self.settings.random_every > 0 && (k + 1) % self.settings.random_every as u64 == 0;
        if !interleave {
            match fit_surrogate(history, self.space, derive_seed(self.seed, &[k, 1])) {
                Ok(surrogate) => {
                    let mut rng = rng_for(self.seed, &[k, 2]);
                    let mut candidates = Vec::with_capacity(self.settings.n_random_candidates + 50);
                    for _ in 0..self.settings.n_random_candidates {
                        candidates.push(self.space.sample_with(&mut rng)?);
                    }
                    let mut top: Vec<_> = history.successes().collect();
                    top.sort_by(|a, b| a.val_rmse.partial_cmp(&b.val_rmse).expect("finite").then(a.trial_id.cmp(&b.trial_id)));
                    let mut seen: Vec<&Configuration> = Vec::new();
                    for r in top {
                        if seen.len() >= self.settings.n_top {
                            break;
                        }
                        if seen.contains(&&r.config) {
                            continue;
                        }
                        seen.push(&r.config);
                        let nseed = derive_seed(self.seed, &[k, 3, r.trial_id as u64]);
                        candidates.extend(self.space.neighbors(&r.config, self.settings.k_neighbors, nseed));
                    }
                    let best = candidates
                        .into_iter()
                        .filter(|c| fresh(c))
                        .map(|c| {
                            let (mu, sigma) = surrogate.predict(&self.space.vectorize(&c));
                            (expected_improvement(mu, sigma, surrogate.f_min), c)
                        })
                        .fold(None::<(f64, Configuration)>, |acc, (ei, c)| match acc {
                            Some((b, _)) if b >= ei => acc,
                            _ => Some((ei, c)),
                        });
                    if let Some((_, c)) = best {
                        return Ok(c);
                    }
                }
                Err(Error::NotReady) => {}
                Err(e) => return Err(e),
            }
        }
        let mut rng = rng_for(self.seed, &[k, 4]);
        for _ in 0..MAX_RANDOM_RETRIES {
            let c = self.space.sample_with(&mut rng)?;
            if fresh(&c) {
                return Ok(c);
            }
        }
        Err(Error::Sampling(format!(
            "no unseen configuration found at budget {budget} after {MAX_RANDOM_RETRIES} draws"
        )))
    }
}
