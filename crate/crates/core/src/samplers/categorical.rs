//! Per-token categorical rows of the Euler, truncated τ-leaping and Tweedie
//! samplers. `rates[a]` is the frozen token rate toward `a` (zero at the
//! current token); `scores[a]` the matching concrete score (one at the
//! current token).

use crate::error::{Error, Result};
use crate::forward::base_exponential;

pub(crate) fn euler_row(rates: &[f64], current: usize, dt: f64) -> Result<Vec<f64>> {
    let mut row: Vec<f64> = rates.iter().map(|r| r * dt).collect();
    let leave: f64 = row.iter().sum();
    let stay = 1.0 - leave;
    if stay < 0.0 {
        return Err(Error::StepTooLarge(format!(
            "Euler stay probability 1 - {leave} is negative"
        )));
    }
    row[current] = stay;
    Ok(row)
}

pub(crate) fn truncated_row(rates: &[f64], current: usize, dt: f64) -> Vec<f64> {
    let rho: f64 = rates.iter().sum();
    let mut row = vec![0.0; rates.len()];
    if rho == 0.0 {
        row[current] = 1.0;
        return row;
    }
    let jump = -(-rho * dt).exp_m1();
    for (a, r) in rates.iter().enumerate() {
        row[a] = r / rho * jump;
    }
    row[current] = (-rho * dt).exp();
    row
}

pub(crate) fn tweedie_row(scores: &[f64], current: usize, dt: f64) -> Result<Vec<f64>> {
    let s = scores.len();
    // e^{-dt R_base} = e^{dt} I + off_back 11ᵀ, and the e^{dt R_base} entry
    // from any a ≠ current back to current is off_fwd
    let (_, off_back) = base_exponential(-dt, s);
    let (_, off_fwd) = base_exponential(dt, s);
    let grow = dt.exp();
    let total: f64 = scores.iter().sum();
    let mut row = vec![0.0; s];
    let mut leave = 0.0;
    for a in (0..s).filter(|&a| a != current) {
        let p = (off_back * total + grow * scores[a]) * off_fwd;
        if p < 0.0 {
            return Err(Error::NegativeMass { token: a, mass: p });
        }
        row[a] = p;
        leave += p;
    }
    if leave > 1.0 {
        return Err(Error::StepTooLarge(format!(
            "Tweedie move probabilities sum to {leave}"
        )));
    }
    row[current] = 1.0 - leave;
    Ok(row)
}
