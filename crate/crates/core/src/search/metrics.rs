use crate::error::{Error, Result};

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("rmse of empty vectors".into()));
    }
    if predictions.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in rmse input".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}
