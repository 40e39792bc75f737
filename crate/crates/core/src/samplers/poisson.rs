//! τ-leaping: independent Poisson jump counts toward every other token,
//! summed into one displacement and then mapped back into range.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What happens when the summed jumps leave `{0, …, S-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfRangePolicy {
    /// Clip the raw token value into range.
    #[default]
    Clamp,
    /// Keep the current token.
    Freeze,
}

impl OutOfRangePolicy {
    pub(crate) fn resolve(self, raw: i64, current: usize, vocab: usize) -> usize {
        if (0..vocab as i64).contains(&raw) {
            return raw as usize;
        }
        match self {
            OutOfRangePolicy::Clamp => raw.clamp(0, vocab as i64 - 1) as usize,
            OutOfRangePolicy::Freeze => current,
        }
    }
}

/// Means above this are refused rather than enumerated.
const MAX_POISSON_MEAN: f64 = 500.0;
const MAX_POISSON_TERMS: usize = 100_000;

/// Poisson pmf on `0..=K`, with `K` the first count whose upper tail is below `budget`.
fn truncated_poisson(mean: f64, budget: f64) -> Result<Vec<f64>> {
    if mean == 0.0 {
        return Ok(vec![1.0]);
    }
    if !(mean > 0.0 && mean <= MAX_POISSON_MEAN) {
        return Err(Error::TruncationOverflow { mean });
    }
    let mut pmf = Vec::new();
    let mut p = (-mean).exp();
    for n in 0..MAX_POISSON_TERMS {
        pmf.push(p);
        // past the mode the remaining tail is bounded by a geometric series
        let tail = if (n as f64 + 2.0) > mean {
            let next = p * mean / (n as f64 + 1.0);
            next / (1.0 - mean / (n as f64 + 2.0))
        } else {
            f64::INFINITY
        };
        if tail < budget {
            return Ok(pmf);
        }
        p *= mean / (n as f64 + 1.0);
    }
    Err(Error::TruncationOverflow { mean })
}

/// Exact law of the updated token, with the truncated joint tail (below
/// `tail`) moved onto the current token.
pub(crate) fn tau_leaping_row(
    rates: &[f64],
    current: usize,
    dt: f64,
    policy: OutOfRangePolicy,
    tail: f64,
) -> Result<Vec<f64>> {
    let s = rates.len();
    let budget = tail / (s - 1) as f64;
    // displacement distribution stored with offset `lo`
    let mut lo: i64 = 0;
    let mut dist = vec![1.0];
    for (a, &r) in rates.iter().enumerate() {
        if a == current || r == 0.0 {
            continue;
        }
        let counts = truncated_poisson(r * dt, budget)?;
        let shift = a as i64 - current as i64;
        let span = shift * (counts.len() as i64 - 1);
        let new_lo = lo + span.min(0);
        let new_len = dist.len() + span.unsigned_abs() as usize;
        let mut next = vec![0.0; new_len];
        for (j, &pd) in dist.iter().enumerate() {
            if pd == 0.0 {
                continue;
            }
            let base = lo + j as i64;
            for (n, &pn) in counts.iter().enumerate() {
                let pos = base + shift * n as i64 - new_lo;
                next[pos as usize] += pd * pn;
            }
        }
        dist = next;
        lo = new_lo;
    }
    let mut row = vec![0.0; s];
    for (j, &pd) in dist.iter().enumerate() {
        let raw = current as i64 + lo + j as i64;
        row[policy.resolve(raw, current, s)] += pd;
    }
    let kept: f64 = row.iter().sum();
    row[current] += (1.0 - kept).max(0.0);
    Ok(row)
}

/// One Monte-Carlo τ-leaping token update.
pub(crate) fn tau_leaping_draw<R: Rng + ?Sized>(
    rates: &[f64],
    current: usize,
    dt: f64,
    policy: OutOfRangePolicy,
    rng: &mut R,
) -> Result<usize> {
    let mut raw = current as i64;
    for (a, &r) in rates.iter().enumerate() {
        let mean = r * dt;
        if a == current || mean == 0.0 {
            continue;
        }
        let count = Poisson::new(mean)
            .map_err(|e| Error::InvalidRate(format!("Poisson mean {mean}: {e}")))?
            .sample(rng) as i64;
        raw += (a as i64 - current as i64) * count;
    }
    Ok(policy.resolve(raw, current, rates.len()))
}
