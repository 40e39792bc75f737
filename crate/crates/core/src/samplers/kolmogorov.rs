//! Reference stepper: solve the Kolmogorov equation of the frozen generator
//! over `[S]^d` exactly, `K = exp(Δ Ĥ_{t_k})`.

use super::{SamplerKind, Step, StepKernel};
use crate::error::Result;
use crate::linalg::{expm, DenseMatrix};
use crate::score::ScoreProvider;

/// Full generator `Ĥ` at forward time `u`: `s_u(y,x)/S` on Hamming-1 pairs,
/// negative row sums on the diagonal.
pub fn rate_generator<P: ScoreProvider + ?Sized>(provider: &P, u: f64) -> Result<DenseMatrix> {
    let space = *provider.space();
    let n = space.exact_size()?;
    let s = space.vocab as f64;
    let mut g = DenseMatrix::zeros(n);
    for x in 0..n {
        let mut total = 0.0;
        for (_, _, y) in space.neighbor_indices(x) {
            let r = provider.evaluate(u, x, y)? / s;
            g.set(x, y, r);
            total += r;
        }
        g.set(x, x, -total);
    }
    Ok(g)
}

pub fn kolmogorov_reference_step_kernel<P: ScoreProvider + ?Sized>(step: &Step, provider: &P) -> Result<StepKernel> {
    let mut g = rate_generator(provider, step.score_time())?;
    g.scale(step.dt());
    let rows = expm(&g)
        .into_rows()
        .into_iter()
        .map(|row| {
            let row: Vec<f64> = row.into_iter().map(|p| p.max(0.0)).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|p| p / total).collect()
        })
        .collect();
    Ok(StepKernel {
        rows,
        from_time: step.t_k,
        to_time: step.t_next,
        sampler: SamplerKind::KolmogorovRef,
    })
}
