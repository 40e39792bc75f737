//! Whole-trajectory execution from `p_0 = Uniform([S]^d)`, either exactly
//! (composing step kernels) or by Monte-Carlo trajectories.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kolmogorov_reference_step_kernel, sample_categorical, sample_step, token_rows, SamplerConfig, SamplerKind, Step, StepKernel};
use crate::error::{Error, Result};
use crate::rng::trajectory_rng;
use crate::schedule::TimeGrid;
use crate::score::ScoreProvider;
use crate::space::{DensePmf, SpaceConfig, TokenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChainMode {
    Exact,
    MonteCarlo { n: usize, seed: u64 },
}

/// Marginals `p_{t_0}, …, p_{t_N}` of an exact run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactChain {
    pub marginals: Vec<DensePmf>,
}

impl ExactChain {
    pub fn p_final(&self) -> &DensePmf {
        self.marginals.last().expect("at least the initial marginal")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainOutput {
    Samples(Vec<TokenState>),
    Exact(ExactChain),
}

pub fn run_chain<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    grid: &TimeGrid,
    provider: &P,
    mode: ChainMode,
) -> Result<ChainOutput> {
    match mode {
        ChainMode::Exact => run_chain_exact(config, grid, provider).map(ChainOutput::Exact),
        ChainMode::MonteCarlo { n, seed } => {
            run_chain_monte_carlo(config, grid, provider, n, seed).map(ChainOutput::Samples)
        }
    }
}

fn grid_steps(grid: &TimeGrid) -> impl Iterator<Item = (usize, Step)> + '_ {
    grid.points.windows(2).enumerate().map(|(k, w)| {
        (
            k,
            Step {
                t_k: w[0],
                t_next: w[1],
                horizon: grid.horizon,
            },
        )
    })
}

fn state_tokens(space: &SpaceConfig, x: usize) -> Vec<usize> {
    space.decode(x).map(|s| s.tokens).unwrap_or_default()
}

/// `p K` for a factorized sampler without materializing `K`.
fn propagate_factorized<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    provider: &P,
    step: &Step,
    k: usize,
    p: &[f64],
) -> Result<Vec<f64>> {
    let space = *provider.space();
    let rows: Vec<Option<Vec<Vec<f64>>>> = (0..p.len())
        .into_par_iter()
        .map(|x| {
            if p[x] == 0.0 {
                return Ok(None);
            }
            token_rows(config, provider, x, step)
                .map(Some)
                .map_err(|e| e.at_step(k, state_tokens(&space, x)))
        })
        .collect::<Result<_>>()?;
    let next = (0..p.len())
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            for (x, rows_x) in rows.iter().enumerate() {
                let Some(rows_x) = rows_x else { continue };
                let mut prob = p[x];
                let mut rest = y;
                for row in rows_x {
                    prob *= row[rest % space.vocab];
                    rest /= space.vocab;
                    if prob == 0.0 {
                        break;
                    }
                }
                acc += prob;
            }
            acc
        })
        .collect();
    Ok(next)
}

pub fn run_chain_exact<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    grid: &TimeGrid,
    provider: &P,
) -> Result<ExactChain> {
    config.validate()?;
    let space = *provider.space();
    space.exact_size()?;
    let mut p = DensePmf::uniform(space)?;
    let mut marginals = vec![p.clone()];
    for (k, step) in grid_steps(grid) {
        let next = if config.kind == SamplerKind::KolmogorovRef {
            kolmogorov_reference_step_kernel(&step, provider)
                .map_err(|e| e.at_step(k, Vec::new()))?
                .apply(p.mass())
        } else {
            propagate_factorized(config, provider, &step, k, p.mass())?
        };
        p = DensePmf::from_raw(space, next);
        marginals.push(p.clone());
    }
    Ok(ExactChain { marginals })
}

fn uniform_start<R: Rng + ?Sized>(space: &SpaceConfig, rng: &mut R) -> usize {
    (0..space.dim).fold(0, |idx, i| idx + rng.random_range(0..space.vocab) * space.stride(i))
}

/// `n` independent trajectories; trajectory `j` uses stream `j` of `seed`,
/// so the output does not depend on the worker count.
pub fn run_chain_monte_carlo<P: ScoreProvider + ?Sized>(
    config: &SamplerConfig,
    grid: &TimeGrid,
    provider: &P,
    n: usize,
    seed: u64,
) -> Result<Vec<TokenState>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("Monte-Carlo mode needs n >= 1".into()));
    }
    let space = *provider.space();
    if space.cardinality().is_none() {
        return Err(Error::InvalidSpace("state indices overflow".into()));
    }
    let steps: Vec<(usize, Step)> = grid_steps(grid).collect();
    let kernels: Vec<StepKernel> = if config.kind == SamplerKind::KolmogorovRef {
        steps
            .iter()
            .map(|(k, step)| kolmogorov_reference_step_kernel(step, provider).map_err(|e| e.at_step(*k, Vec::new())))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_rng(seed, j);
            let mut x = uniform_start(&space, &mut rng);
            for (k, step) in &steps {
                x = if kernels.is_empty() {
                    sample_step(config, provider, x, step, &mut rng)
                        .map_err(|e| e.at_step(*k, state_tokens(&space, x)))?
                } else {
                    sample_categorical(&kernels[*k].rows[x], &mut rng)
                };
            }
            space.decode(x)
        })
        .collect()
}
