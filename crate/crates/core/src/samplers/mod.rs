//! Reverse samplers on a fixed grid. Every sampler freezes the estimated
//! rate `Ĥ_{t_k}(x, y) = s_{T-t_k}(y, x) / S` at the start of a step and
//! updates all dimensions from `x_{t_k}`.
//!
//! The factorized samplers (τ-leaping, Euler, Tweedie, truncated) have an
//! exact per-token row; the full transition row is the product over
//! dimensions. The Kolmogorov reference exponentiates the whole generator.

mod categorical;
mod chain;
mod kolmogorov;
mod poisson;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::ScoreProvider;
use crate::space::{hamming_index, SpaceConfig, TokenState};

pub use chain::{run_chain, run_chain_exact, run_chain_monte_carlo, ChainMode, ChainOutput, ExactChain};
pub use kolmogorov::{kolmogorov_reference_step_kernel, rate_generator};
pub use poisson::OutOfRangePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "tau-leaping")]
    TauLeaping,
    #[serde(rename = "euler")]
    Euler,
    #[serde(rename = "tweedie")]
    Tweedie,
    #[serde(rename = "truncated")]
    Truncated,
    #[serde(rename = "kolmogorov-ref")]
    KolmogorovRef,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::TauLeaping,
        SamplerKind::Euler,
        SamplerKind::Tweedie,
        SamplerKind::Truncated,
        SamplerKind::KolmogorovRef,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SamplerKind::TauLeaping => "tau-leaping",
            SamplerKind::Euler => "euler",
            SamplerKind::Tweedie => "tweedie",
            SamplerKind::Truncated => "truncated",
            SamplerKind::KolmogorovRef => "kolmogorov-ref",
        }
    }

    /// Whether the sampler updates each dimension independently given `x_{t_k}`.
    pub fn is_factorized(self) -> bool {
        self != SamplerKind::KolmogorovRef
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

pub const DEFAULT_POISSON_TAIL: f64 = 1e-12;

fn default_tail() -> f64 {
    DEFAULT_POISSON_TAIL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Only consulted by τ-leaping.
    #[serde(default)]
    pub out_of_range_policy: OutOfRangePolicy,
    /// Joint tail mass dropped when enumerating Poisson counts.
    #[serde(default = "default_tail")]
    pub poisson_truncation_tail: f64,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> Self {
        SamplerConfig {
            kind,
            out_of_range_policy: OutOfRangePolicy::default(),
            poisson_truncation_tail: DEFAULT_POISSON_TAIL,
        }
    }

    pub fn with_policy(mut self, policy: OutOfRangePolicy) -> Self {
        self.out_of_range_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tail = self.poisson_truncation_tail;
        if !(tail > 0.0 && tail <= 1e-6) {
            return Err(Error::InvalidInput(format!(
                "poisson_truncation_tail = {tail} must lie in (0, 1e-6]"
            )));
        }
        Ok(())
    }
}

/// One reverse step `t_k → t_{k+1}` on a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t_k: f64,
    pub t_next: f64,
    pub horizon: f64,
}

impl Step {
    pub fn new(t_k: f64, t_next: f64, horizon: f64) -> Result<Self> {
        if !(t_k >= 0.0 && t_k < horizon) {
            return Err(Error::InvalidTime(t_k));
        }
        if !(t_next >= t_k) {
            return Err(Error::InvalidTime(t_next));
        }
        Ok(Step { t_k, t_next, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.t_next - self.t_k
    }

    /// Forward time at which the scores are evaluated, `T - t_k`.
    pub fn score_time(&self) -> f64 {
        self.horizon - self.t_k
    }
}

/// `Ĥ_{t_k}(x, y)`: `s_{T-t_k}(y,x)/S` for Hamming-1 pairs, zero for
/// Hamming ≥ 2, and minus the off-diagonal row sum on the diagonal.
pub fn estimated_rate<P: ScoreProvider + ?Sized>(
    provider: &P,
    t_k: f64,
    horizon: f64,
    x: &TokenState,
    y: &TokenState,
) -> Result<f64> {
    let space = provider.space();
    let (xi, yi) = (space.encode(x)?, space.encode(y)?);
    let u = horizon - t_k;
    let s = space.vocab as f64;
    match hamming_index(space, xi, yi) {
        1 => Ok(provider.evaluate(u, xi, yi)? / s),
        0 => {
            let mut total = 0.0;
            for (_, _, n) in space.neighbor_indices(xi) {
                total += provider.evaluate(u, xi, n)?;
            }
            Ok(-total / s)
        }
        _ => Ok(0.0),
    }
}

/// Scores `s_u(x^{-i}⊕a, x)` for every token `a`, with 1 at the current token.
fn token_scores<P: ScoreProvider + ?Sized>(provider: &P, u: f64, x: usize, i: usize) -> Result<Vec<f64>> {
    let space = provider.space();
    let current = space.token_at(x, i);
    (0..space.vocab)
        .map(|a| {
            if a == current {
                Ok(1.0)
            } else {
                provider.evaluate(u, x, space.substitute_index(x, i, a))
            }
        })
        .collect()
}

/// Token-wise frozen rates `Ĥ^i(x^i, a)`, zero at the current token.
fn token_rates<P: ScoreProvider + ?Sized>(provider: &P, u: f64, x: usize, i: usize) -> Result<Vec<f64>> {
    let space = provider.space();
    let current = space.token_at(x, i);
    let s = space.vocab as f64;
    let mut rates = token_scores(provider, u, x, i)?;
    for (a, r) in rates.iter_mut().enumerate() {
        *r = if a == current { 0.0 } else { *r / s };
    }
    Ok(rates)
}

/// Exact law of `x^i_{t_{k+1}}` given `x_{t_k} = x` (state index), for a
/// factorized sampler.
pub fn token_row<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    provider: &P,
    x: usize,
    i: usize,
    step: &Step,
) -> Result<Vec<f64>> {
    let space = provider.space();
    let current = space.token_at(x, i);
    let (u, dt) = (step.score_time(), step.dt());
    if dt == 0.0 {
        let mut row = vec![0.0; space.vocab];
        row[current] = 1.0;
        return Ok(row);
    }
    match config.kind {
        SamplerKind::TauLeaping => poisson::tau_leaping_row(
            &token_rates(provider, u, x, i)?,
            current,
            dt,
            config.out_of_range_policy,
            config.poisson_truncation_tail,
        ),
        SamplerKind::Euler => categorical::euler_row(&token_rates(provider, u, x, i)?, current, dt),
        SamplerKind::Truncated => Ok(categorical::truncated_row(&token_rates(provider, u, x, i)?, current, dt)),
        SamplerKind::Tweedie => categorical::tweedie_row(&token_scores(provider, u, x, i)?, current, dt),
        SamplerKind::KolmogorovRef => Err(Error::InvalidInput(
            "the Kolmogorov reference does not factorize over tokens".into(),
        )),
    }
}

/// All `d` token rows for state `x`.
pub(crate) fn token_rows<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    provider: &P,
    x: usize,
    step: &Step,
) -> Result<Vec<Vec<f64>>> {
    (0..provider.space().dim)
        .map(|i| token_row(config, provider, x, i, step))
        .collect()
}

/// Expands per-token rows into a dense row over `[S]^d`.
pub(crate) fn product_row(space: &SpaceConfig, rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for (i, row) in rows.iter().enumerate() {
        let stride = space.stride(i);
        let mut next = vec![0.0; stride * space.vocab];
        for (a, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, &q) in out.iter().enumerate() {
                next[a * stride + j] = q * p;
            }
        }
        out = next;
    }
    out
}

/// Exact one-step transition matrix of a sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub rows: Vec<Vec<f64>>,
    pub from_time: f64,
    pub to_time: f64,
    pub sampler: SamplerKind,
}

/// Tolerance on row sums of exact kernels.
pub const ROW_SUM_TOL: f64 = 1e-10;

impl StepKernel {
    /// Non-negative entries and unit row sums.
    pub fn is_stochastic(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().all(|&p| p >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOL)
    }

    /// `p K`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let mut out = vec![0.0; n];
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (o, &k) in out.iter_mut().zip(&self.rows[x]) {
                *o += px * k;
            }
        }
        out
    }
}

/// Exact transition row from `x` (over all of `[S]^d`) for any sampler.
pub fn sampler_step_kernel<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    x: &TokenState,
    step: &Step,
    provider: &P,
) -> Result<Vec<f64>> {
    let space = *provider.space();
    space.exact_size()?;
    let xi = space.encode(x)?;
    if config.kind == SamplerKind::KolmogorovRef {
        let kernel = kolmogorov_reference_step_kernel(step, provider)?;
        return Ok(kernel.rows[xi].clone());
    }
    Ok(product_row(&space, &token_rows(config, provider, xi, step)?))
}

/// Full exact step kernel, one row per state.
pub fn step_kernel<P: ScoreProvider + ?Sized>(config: &SamplerConfig, step: &Step, provider: &P) -> Result<StepKernel> {
    let space = *provider.space();
    let n = space.exact_size()?;
    if config.kind == SamplerKind::KolmogorovRef {
        return kolmogorov_reference_step_kernel(step, provider);
    }
    let rows = (0..n)
        .map(|x| Ok(product_row(&space, &token_rows(config, provider, x, step)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepKernel {
        rows,
        from_time: step.t_k,
        to_time: step.t_next,
        sampler: config.kind,
    })
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let total: f64 = row.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut last = 0;
    for (a, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = a;
            if target < cum {
                return a;
            }
        }
    }
    last
}

/// One Monte-Carlo step of a factorized sampler from state index `x`.
pub fn sample_step<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    config: &SamplerConfig,
    provider: &P,
    x: usize,
    step: &Step,
    rng: &mut R,
) -> Result<usize> {
    let space = *provider.space();
    let mut next = x;
    for i in 0..space.dim {
        let current = space.token_at(x, i);
        let token = match config.kind {
            SamplerKind::TauLeaping => poisson::tau_leaping_draw(
                &token_rates(provider, step.score_time(), x, i)?,
                current,
                step.dt(),
                config.out_of_range_policy,
                rng,
            )?,
            SamplerKind::KolmogorovRef => {
                return Err(Error::InvalidInput(
                    "the Kolmogorov reference is sampled from its step kernel".into(),
                ))
            }
            _ => sample_categorical(&token_row(config, provider, x, i, step)?, rng),
        };
        next = space.substitute_index(next, i, token);
    }
    Ok(next)
}

fn step_state<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    config: SamplerConfig,
    x: &TokenState,
    step: &Step,
    provider: &P,
    rng: &mut R,
) -> Result<TokenState> {
    let space = provider.space();
    let next = sample_step(&config, provider, space.encode(x)?, step, rng)?;
    space.decode(next)
}

pub fn tau_leaping_step<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    x: &TokenState,
    step: &Step,
    provider: &P,
    policy: OutOfRangePolicy,
    rng: &mut R,
) -> Result<TokenState> {
    step_state(SamplerConfig::new(SamplerKind::TauLeaping).with_policy(policy), x, step, provider, rng)
}

pub fn euler_step<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    x: &TokenState,
    step: &Step,
    provider: &P,
    rng: &mut R,
) -> Result<TokenState> {
    step_state(SamplerConfig::new(SamplerKind::Euler), x, step, provider, rng)
}

pub fn tweedie_step<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    x: &TokenState,
    step: &Step,
    provider: &P,
    rng: &mut R,
) -> Result<TokenState> {
    step_state(SamplerConfig::new(SamplerKind::Tweedie), x, step, provider, rng)
}

pub fn truncated_tau_leaping_step<P: ScoreProvider + ?Sized, R: Rng + ?Sized>(
    x: &TokenState,
    step: &Step,
    provider: &P,
    rng: &mut R,
) -> Result<TokenState> {
    step_state(SamplerConfig::new(SamplerKind::Truncated), x, step, provider, rng)
}

/// Exact law of one dimension under τ-leaping.
pub fn tau_leaping_exact_token_kernel<P: ScoreProvider + ?Sized>(
    x: &TokenState,
    i: usize,
    step: &Step,
    provider: &P,
    policy: OutOfRangePolicy,
) -> Result<Vec<f64>> {
    let config = SamplerConfig::new(SamplerKind::TauLeaping).with_policy(policy);
    token_row(&config, provider, provider.space().encode(x)?, i, step)
}
