//! One experiment end to end.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use ctmc_lab::{
    early_stop_tv, empirical_pmf, eps_score, forward_marginal, kl, run_chain_exact, run_chain_monte_carlo,
    theorem1_bound, tv, BoundRecord, Divergence, ExactProvider, PerturbedProvider, ScoreProvider,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ModeConfig};
use crate::error::CliError;

/// Exact marginal diagnostics at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostic {
    pub k: usize,
    pub t: f64,
    /// `KL(q_{T-t_k} ‖ p_{t_k})`.
    pub kl: Divergence,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub n_steps: usize,
    /// `KL(q_δ ‖ p_{T-δ})`; in Monte-Carlo mode `p` is the empirical law.
    pub kl: Divergence,
    pub tv: f64,
    pub eps_score: f64,
    pub early_stop_tv: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_step: Vec<StepDiagnostic>,
    /// Kept out of the serialized record so that records are reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn to_jsonl(&self) -> String {
        let mut line = serde_json::to_string(self).expect("report serializes");
        line.push('\n');
        line
    }
}

pub fn execute(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let grid = config.grid()?;
    let q0 = config.q0()?;
    let base = ExactProvider::unclipped(q0.clone())?;
    let provider = PerturbedProvider::new(&base, config.provider.perturbation, config.provider.clip_bound)?;
    let target = forward_marginal(&q0, grid.delta)?;

    let (final_kl, final_tv, per_step) = match config.mode {
        ModeConfig::Exact => {
            let chain = run_chain_exact(&config.sampler, &grid, &provider)?;
            let mut per_step = Vec::with_capacity(chain.marginals.len());
            for (k, (p, &t)) in chain.marginals.iter().zip(&grid.points).enumerate() {
                let q = forward_marginal(&q0, grid.horizon - t)?;
                per_step.push(StepDiagnostic {
                    k,
                    t,
                    kl: kl(&q, p)?,
                    tv: tv(&q, p)?,
                });
            }
            (kl(&target, chain.p_final())?, tv(&target, chain.p_final())?, per_step)
        }
        ModeConfig::MonteCarlo { n } => {
            let samples = run_chain_monte_carlo(&config.sampler, &grid, &provider, n, config.master_seed)?;
            let p = empirical_pmf(&samples, provider.space())?;
            (kl(&target, &p)?, tv(&target, &p)?, Vec::new())
        }
    };

    let bound = if config.wants_bound() {
        let report = theorem1_bound(
            &provider,
            &q0,
            &grid,
            &config.sampler,
            config.bound.rate_mode,
            config.bound.substeps,
        )?;
        Some(report.record())
    } else {
        None
    };

    Ok(RunReport {
        config_hash: config.hash(),
        config: config.clone(),
        seed: config.master_seed,
        n_steps: grid.n_steps(),
        kl: final_kl,
        tv: final_tv,
        eps_score: eps_score(&provider, &q0, &grid)?,
        early_stop_tv: early_stop_tv(&q0, grid.delta)?,
        bound,
        per_step,
        wall_clock: started.elapsed(),
    })
}

pub fn write_steps_csv(report: &RunReport, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["k", "t", "kl", "tv"])?;
    for s in &report.per_step {
        writer.write_record([
            s.k.to_string(),
            s.t.to_string(),
            s.kl.value().to_string(),
            s.tv.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs `config` and writes its JSONL record (to `output`, else stdout) and
/// the optional per-step CSV.
pub fn cli_run(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let report = execute(config)?;
    match &config.output {
        Some(path) => File::create(path)?.write_all(report.to_jsonl().as_bytes())?,
        None => std::io::stdout().write_all(report.to_jsonl().as_bytes())?,
    }
    if let Some(path) = &config.steps_csv {
        write_steps_csv(&report, path)?;
    }
    Ok(report)
}
