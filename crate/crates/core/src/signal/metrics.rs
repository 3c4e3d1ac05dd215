//! Time-series comparison metrics.
//!
//! ```text
//! RMSE(e, e_hat) = sqrt( mean_k (e_hat[k] - e[k])^2 )
//! TRAC(e, e_hat) = (e_hat . e)^2 / ((e_hat . e_hat)(e . e)) * 100 %
//! ```
//!
//! TRAC is scale- and sign-invariant; 100 % means perfectly correlated.

use crate::error::{Error, Result};

/// Root mean square error between two equally long series.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("rmse requires equal lengths".into()));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("rmse requires at least one sample".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Time Response Assurance Criterion in percent.
pub fn trac(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("trac requires equal lengths".into()));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("trac requires at least one sample".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedMetric(
            "TRAC is undefined for a zero vector".into(),
        ));
    }
    Ok(100.0 * dot * dot / (na * nb))
}
