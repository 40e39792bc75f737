//! Reverse-time grids `0 = t_0 < … < t_N = T - δ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
    /// Constant-then-exponential-decay steps `κ min{1, T - t_k}`.
    Cted,
    /// Caller-supplied points.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    pub points: Vec<f64>,
    pub kappa: Option<f64>,
    pub kind: GridKind,
}

/// Relative slack used when deciding that a CTED step reaches `T - δ`.
const LANDING_TOL: f64 = 1e-12;

fn check_bounds(horizon: f64, delta: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidGrid(format!("horizon T = {horizon} must be positive")));
    }
    if !(delta > 0.0 && delta < horizon) {
        return Err(Error::InvalidGrid(format!("delta = {delta} must lie in (0, T = {horizon})")));
    }
    Ok(())
}

impl TimeGrid {
    /// Arbitrary strictly increasing points from 0 to `T - δ`. A single point
    /// (`N = 0`) is allowed when `T = δ`.
    pub fn from_points(horizon: f64, delta: f64, points: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0 && delta > 0.0 && delta <= horizon) {
            return Err(Error::InvalidGrid(format!("need 0 < delta <= T, got T = {horizon}, delta = {delta}")));
        }
        if points.first() != Some(&0.0) {
            return Err(Error::InvalidGrid("grid must start at 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid points must be strictly increasing".into()));
        }
        let end = *points.last().expect("non-empty");
        if (end - (horizon - delta)).abs() > LANDING_TOL * horizon {
            return Err(Error::InvalidGrid(format!("grid ends at {end}, expected T - delta = {}", horizon - delta)));
        }
        Ok(TimeGrid {
            horizon,
            delta,
            points,
            kappa: None,
            kind: GridKind::Custom,
        })
    }

    /// Number of steps `N`.
    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn end(&self) -> f64 {
        *self.points.last().expect("non-empty grid")
    }

    /// `(t_k, t_{k+1} - t_k)` for every step.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    /// `Σ_k max{1, (T - t_{k+1})^{-2}} (t_{k+1} - t_k)²`.
    pub fn discretization_sum(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let remaining = self.horizon - w[1];
                f64::max(1.0, remaining.powi(-2)) * (w[1] - w[0]).powi(2)
            })
            .sum()
    }
}

pub fn uniform_grid(horizon: f64, delta: f64, n: usize) -> Result<TimeGrid> {
    check_bounds(horizon, delta)?;
    if n == 0 {
        return Err(Error::InvalidGrid("N must be at least 1".into()));
    }
    let end = horizon - delta;
    let mut points: Vec<f64> = (0..n).map(|k| end * k as f64 / n as f64).collect();
    points.push(end);
    Ok(TimeGrid {
        horizon,
        delta,
        points,
        kappa: None,
        kind: GridKind::Uniform,
    })
}

pub fn cted_grid(horizon: f64, delta: f64, kappa: f64) -> Result<TimeGrid> {
    check_bounds(horizon, delta)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidGrid(format!("kappa = {kappa} must lie in (0, 1)")));
    }
    let end = horizon - delta;
    let mut points = vec![0.0];
    let mut t = 0.0f64;
    loop {
        let next = t + kappa * f64::min(1.0, horizon - t);
        if next >= end - LANDING_TOL * horizon {
            points.push(end);
            break;
        }
        points.push(next);
        t = next;
    }
    Ok(TimeGrid {
        horizon,
        delta,
        points,
        kappa: Some(kappa),
        kind: GridKind::Cted,
    })
}

/// Constant in the step-count check `N <= C κ⁻¹ (T + log(1/δ))`.
pub const STEP_COUNT_CONSTANT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCountScaling {
    pub n: usize,
    /// `κ⁻¹ (T + log(1/δ))`.
    pub reference: f64,
}

impl StepCountScaling {
    pub fn within_bound(&self) -> bool {
        self.n as f64 <= STEP_COUNT_CONSTANT * self.reference
    }
}

pub fn step_count_scaling(horizon: f64, delta: f64, kappa: f64) -> Result<StepCountScaling> {
    let grid = cted_grid(horizon, delta, kappa)?;
    Ok(StepCountScaling {
        n: grid.n_steps(),
        reference: (horizon + (1.0 / delta).ln()) / kappa,
    })
}
