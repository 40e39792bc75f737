//! Log-log least-squares slope fits over CSV columns.

use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
    /// Rows dropped for non-positive or non-numeric values.
    pub dropped: usize,
}

/// Least squares of `log y` on `log x`, dropping rows where either value is
/// not a finite positive number.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<SlopeFit, CliError> {
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let dropped = xs.len().min(ys.len()) - pairs.len();
    if pairs.len() < 3 {
        return Err(CliError::Input(format!(
            "need at least 3 finite positive rows, have {} ({dropped} dropped)",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CliError::Input("x column is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        used: pairs.len(),
        dropped,
    })
}

/// Reads two named columns from a CSV file and fits them.
pub fn fit_csv(path: &Path, x_col: &str, y_col: &str) -> Result<SlopeFit, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("column `{name}` not found")))
    };
    let (xi, yi) = (find(x_col)?, find(y_col)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| record.get(i).and_then(|v| v.trim().parse::<f64>().ok()).unwrap_or(f64::NAN);
        xs.push(parse(xi));
        ys.push(parse(yi));
    }
    fit_log_log(&xs, &ys)
}
