//! Exact divergences, empirical estimates, the three-way KL bound and the
//! score time-difference diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::forward::{forward_marginal, ForwardMarginal};
use crate::samplers::{run_chain_exact, SamplerConfig, SamplerKind};
use crate::schedule::TimeGrid;
use crate::score::{expected_bregman_g, score_entropy_loss_at, EstimatedRate, ScoreProvider};
use crate::space::{DensePmf, SpaceConfig, TokenState};

/// A KL value; infinite when `p` is not absolutely continuous w.r.t. `q`.
/// Serialized as a number or the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Divergence::Finite(_))
    }
}

impl Serialize for Divergence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Divergence::Finite(v) => serializer.serialize_f64(*v),
            Divergence::Infinite => serializer.serialize_str("infinite"),
        }
    }
}

fn same_space(p: &DensePmf, q: &DensePmf) -> Result<()> {
    if p.space() != q.space() || p.len() != q.len() {
        return Err(Error::InvalidInput("pmfs live on different spaces".into()));
    }
    Ok(())
}

/// `Σ p log(p/q)` with `0 log 0 = 0`.
pub fn kl(p: &DensePmf, q: &DensePmf) -> Result<Divergence> {
    same_space(p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.mass().iter().zip(q.mass()) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(Divergence::Infinite);
        }
        total += a * (a / b).ln();
    }
    // exact cancellation can leave a tiny negative
    Ok(Divergence::Finite(total.max(0.0)))
}

pub fn tv(p: &DensePmf, q: &DensePmf) -> Result<f64> {
    same_space(p, q)?;
    Ok(0.5 * p.mass().iter().zip(q.mass()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Normalized histogram of `samples`.
pub fn empirical_pmf(samples: &[TokenState], space: &SpaceConfig) -> Result<DensePmf> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut counts = vec![0.0; space.exact_size()?];
    for s in samples {
        counts[space.encode(s)?] += 1.0;
    }
    let n = samples.len() as f64;
    Ok(DensePmf::from_raw(*space, counts.into_iter().map(|c| c / n).collect()))
}

/// The Monte-Carlo tolerance `5 sqrt(S^d / n)` on total variation.
pub fn monte_carlo_tv_tolerance(space: &SpaceConfig, n: usize) -> f64 {
    let size = space.cardinality().map(|c| c as f64).unwrap_or(f64::INFINITY);
    5.0 * (size / n as f64).sqrt()
}

/// `TV(q_0, q_δ)`.
pub fn early_stop_tv(q0: &DensePmf, delta: f64) -> Result<f64> {
    tv(q0, &forward_marginal(q0, delta)?)
}

/// How the sampler's rate is evaluated inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    /// `Ĥ_t(x, y) = s_{T-t_k}(y, x)/S` throughout `[t_k, t_{k+1})`.
    FrozenPerStep,
    /// `Ĥ_t(x, y) = s_{T-t}(y, x)/S`.
    Fresh,
}

/// `∫ E_{q̄_t}[g_t] dt` over one step, at two quadrature resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepIntegral {
    pub k: usize,
    pub t_k: f64,
    pub t_next: f64,
    pub integral: f64,
    pub integral_refined: f64,
    /// `(t_{k+1} - t_k) L_SE(T - t_k)`.
    pub estimation_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs_kl: f64,
    pub init_err: f64,
    pub est_err: f64,
    pub disc_err: f64,
    pub rhs_total: f64,
    /// `|I_m - I_{2m}|`, the quadrature error estimate.
    pub quad_est: f64,
    pub quadrature_substeps: usize,
    pub rate_mode: RateMode,
    pub per_step: Vec<StepIntegral>,
}

/// Fixed-schema projection of a [`BoundReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRecord {
    pub lhs_kl: f64,
    pub init_err: f64,
    pub est_err: f64,
    pub disc_err: f64,
    pub rhs_total: f64,
    pub quad_est: f64,
}

/// Multiple of the quadrature estimate granted as slack in [`BoundReport::holds`].
pub const QUADRATURE_SLACK: f64 = 10.0;

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lhs_kl <= self.rhs_total + QUADRATURE_SLACK * self.quad_est
    }

    pub fn margin(&self) -> f64 {
        self.rhs_total + QUADRATURE_SLACK * self.quad_est - self.lhs_kl
    }

    pub fn record(&self) -> BoundRecord {
        BoundRecord {
            lhs_kl: self.lhs_kl,
            init_err: self.init_err,
            est_err: self.est_err,
            disc_err: self.disc_err,
            rhs_total: self.rhs_total,
            quad_est: self.quad_est,
        }
    }
}

fn midpoint_integral<P: ScoreProvider + ?Sized>(
    provider: &P,
    q0: &DensePmf,
    grid: &TimeGrid,
    t_k: f64,
    dt: f64,
    m: usize,
    mode: RateMode,
) -> Result<f64> {
    let h = dt / m as f64;
    let mut total = 0.0;
    for j in 0..m {
        let t = t_k + (j as f64 + 0.5) * h;
        let marginal = ForwardMarginal::new(q0, grid.horizon - t)?;
        let rate_time = match mode {
            RateMode::FrozenPerStep => t_k,
            RateMode::Fresh => t,
        };
        let rate = EstimatedRate::at_reverse_time(provider, rate_time, grid.horizon);
        total += expected_bregman_g(&marginal, &rate)?;
    }
    Ok(total * h)
}

/// Evaluates both sides of the KL bound for a τ-leaping-type sampler:
/// the exact `KL(q_δ ‖ p_{T-δ})` against initialization, estimation and
/// discretization terms, the latter from `m`-point midpoint quadrature of
/// the expected Bregman term (with a `2m` rerun as error estimate).
pub fn theorem1_bound<P: ScoreProvider + ?Sized>(
    provider: &P,
    q0: &DensePmf,
    grid: &TimeGrid,
    sampler: &SamplerConfig,
    mode: RateMode,
    m: usize,
) -> Result<BoundReport> {
    if !matches!(sampler.kind, SamplerKind::TauLeaping | SamplerKind::Truncated) {
        return Err(Error::InvalidInput(format!(
            "the bound needs a sampler with a piecewise-constant rate, not {}",
            sampler.kind
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput("quadrature needs at least one substep".into()));
    }
    let space = *q0.space();
    space.exact_size()?;

    let chain = run_chain_exact(sampler, grid, provider)?;
    let target = forward_marginal(q0, grid.delta)?;
    let lhs_kl = kl(&target, chain.p_final())?.value();
    let init_err = kl(&forward_marginal(q0, grid.horizon)?, &DensePmf::uniform(space)?)?.value();

    let per_step = grid
        .points
        .windows(2)
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, w)| {
            let (t_k, dt) = (w[0], w[1] - w[0]);
            let marginal = ForwardMarginal::new(q0, grid.horizon - t_k)?;
            Ok(StepIntegral {
                k,
                t_k,
                t_next: w[1],
                integral: midpoint_integral(provider, q0, grid, t_k, dt, m, mode)?,
                integral_refined: midpoint_integral(provider, q0, grid, t_k, dt, 2 * m, mode)?,
                estimation_term: dt * score_entropy_loss_at(provider, &marginal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let est_err: f64 = per_step.iter().map(|s| s.estimation_term).sum();
    let coarse: f64 = per_step.iter().map(|s| s.integral).sum();
    let fine: f64 = per_step.iter().map(|s| s.integral_refined).sum();
    let disc_err = coarse - est_err;
    Ok(BoundReport {
        lhs_kl,
        init_err,
        est_err,
        disc_err,
        rhs_total: init_err + est_err + disc_err,
        quad_est: (coarse - fine).abs(),
        quadrature_substeps: m,
        rate_mode: mode,
        per_step,
    })
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0) {
        return Err(Error::InvalidTime(s));
    }
    if !(t >= s) {
        return Err(Error::InvalidTime(t));
    }
    Ok(())
}

/// `E_{x~q_t} Σ_y |q_t(y)/q_t(x) - q_s(y)/q_s(x)| R(y,x)` over Hamming-1 `y`.
pub fn score_time_diff_expected(q0: &DensePmf, s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    let space = *q0.space();
    let (early, late) = (ForwardMarginal::new(q0, s)?, ForwardMarginal::new(q0, t)?);
    let rate = 1.0 / space.vocab as f64;
    let mut total = 0.0;
    for (x, &qx) in late.mass().iter().enumerate() {
        let mut inner = 0.0;
        for (_, _, y) in space.neighbor_indices(x) {
            inner += (late.ratio(x, y)? - early.ratio(x, y)?).abs() * rate;
        }
        total += qx * inner;
    }
    Ok(total)
}

/// Worst-case counterpart: `max_{x,y} |Δ ratio| · d(S-1)/S`.
pub fn score_time_diff_sup(q0: &DensePmf, s: f64, t: f64) -> Result<f64> {
    check_times(s, t)?;
    let space = *q0.space();
    let (early, late) = (ForwardMarginal::new(q0, s)?, ForwardMarginal::new(q0, t)?);
    let mut worst: f64 = 0.0;
    for x in 0..late.mass().len() {
        for (_, _, y) in space.neighbor_indices(x) {
            worst = worst.max((late.ratio(x, y)? - early.ratio(x, y)?).abs());
        }
    }
    Ok(worst * space.neighbor_count() as f64 / space.vocab as f64)
}
