//! Append-only trial log with incumbent tracking and JSON-lines persistence.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrialStatus {
    Success,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub config: Configuration,
    pub budget: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub val_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_predictions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Hyperband placement: (bracket index in launch order, rung index).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rung: Option<usize>,
    /// Trial whose fitted model this one continued.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continued_from: Option<usize>,
    pub fit_seconds: f64,
    /// Seconds since search start when the trial finished.
    #[serde(rename = "timestamp")]
    pub wall_clock: f64,
}

impl TrialRecord {
    /// Equality of everything except timing fields.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        let strip = |r: &TrialRecord| TrialRecord {
            fit_seconds: 0.0,
            wall_clock: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn is_success(&self) -> bool {
        self.status == TrialStatus::Success
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    records: Vec<TrialRecord>,
    incumbent: Option<usize>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TrialRecord) -> Result<()> {
        let ok = record.val_rmse.is_some_and(f64::is_finite);
        if ok != record.is_success() {
            return Err(Error::Contract(format!(
                "trial {}: val_rmse must be finite iff status is Success",
                record.trial_id
            )));
        }
        if record.budget == 0 {
            return Err(Error::Contract(format!("trial {} has budget 0", record.trial_id)));
        }
        let pos = self.records.len();
        if record.is_success() {
            let better = match self.incumbent {
                None => true,
                Some(i) => record.val_rmse < self.records[i].val_rmse,
            };
            if better {
                self.incumbent = Some(pos);
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Best successful trial so far; ties keep the earlier trial.
    pub fn incumbent(&self) -> Option<&TrialRecord> {
        self.incumbent.map(|i| &self.records[i])
    }

    pub fn successes(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.is_success())
    }

    pub fn get(&self, trial_id: usize) -> Option<&TrialRecord> {
        self.records.iter().find(|r| r.trial_id == trial_id)
    }

    pub fn was_run(&self, config: &Configuration, budget: usize) -> bool {
        self.records.iter().any(|r| r.budget == budget && &r.config == config)
    }

    /// (wall clock, incumbent loss) after every record once a success exists.
    pub fn incumbent_trace(&self) -> Vec<(f64, f64)> {
        let mut best = f64::INFINITY;
        let mut out = Vec::new();
        for r in &self.records {
            if let Some(v) = r.val_rmse {
                best = best.min(v);
            }
            if best.is_finite() {
                out.push((r.wall_clock, best));
            }
        }
        out
    }

    pub fn same_outcomes(&self, other: &RunHistory) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_outcome(b))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let reader = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut h = RunHistory::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            h.push(rec)?;
        }
        Ok(h)
    }
}
