use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Expected improvement below `f_min` of a Gaussian with mean `mu` and std `sigma`.
pub fn expected_improvement(mu: f64, sigma: f64, f_min: f64) -> f64 {
    if sigma <= 0.0 {
        return (f_min - mu).max(0.0);
    }
    let std = Normal::standard();
    let z = (f_min - mu) / sigma;
    ((f_min - mu) * std.cdf(z) + sigma * std.pdf(z)).max(0.0)
}
