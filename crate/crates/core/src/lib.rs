//! Exact and Monte-Carlo machinery for uniform-rate discrete diffusion on
//! `[S]^d`: closed-form forward process, concrete-score providers, the
//! τ-leaping / Euler / Tweedie / truncated samplers with exact step kernels,
//! time grids, and KL metrology.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod score;
pub mod space;

pub use error::{Error, Result};
pub use forward::{
    concrete_score_direct, concrete_score_exact, concrete_score_posterior, forward_marginal, forward_rate, posterior,
    reverse_rate_exact, score_sup_bound_check, token_kernel, token_ratio_case, ForwardKernel, ForwardMarginal,
    RatioCase, SupBoundCheck,
};
pub use metrics::{
    early_stop_tv, empirical_pmf, kl, monte_carlo_tv_tolerance, score_time_diff_expected, score_time_diff_sup,
    theorem1_bound, tv, BoundRecord, BoundReport, Divergence, RateMode, StepIntegral,
};
pub use samplers::{
    estimated_rate, run_chain, run_chain_exact, run_chain_monte_carlo, sample_step, sampler_step_kernel,
    step_kernel, token_row, ChainMode, ChainOutput, ExactChain, OutOfRangePolicy, SamplerConfig, SamplerKind, Step,
    StepKernel,
};
pub use schedule::{cted_grid, step_count_scaling, uniform_grid, GridKind, StepCountScaling, TimeGrid};
pub use score::{
    bregman_g, eps_score, score_entropy_loss, EstimatedRate, ExactProvider, PerturbationSpec, PerturbedProvider,
    Provenance, RateAccessor, ScoreProvider,
};
pub use space::{hamming, neighbors, DensePmf, SpaceConfig, TokenState};
