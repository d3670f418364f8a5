use super::history::RunHistory;

/// Immediate regret |incumbent loss − reference| after every completed trial,
/// starting at the first success.
pub fn compute_regret(history: &RunHistory, reference_best: f64) -> Vec<(f64, f64)> {
    history
        .incumbent_trace()
        .into_iter()
        .map(|(t, loss)| (t, (loss - reference_best).abs()))
        .collect()
}

pub fn write_regret_csv(curve: &[(f64, f64)], path: &std::path::Path) -> crate::error::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seconds", "regret"])?;
    for (t, r) in curve {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
