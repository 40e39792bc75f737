//! Concrete-score providers and the score-entropy / Bregman diagnostics.
//!
//! Argument order is fixed as `s_u(y, x) ≈ q_u(y) / q_u(x)`: the score of
//! neighbour `y` relative to the current state `x`. Providers work on state
//! indices; see [`SpaceConfig::encode`].

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardMarginal;
use crate::rng::mix_words;
use crate::schedule::TimeGrid;
use crate::space::{hamming_index, DensePmf, SpaceConfig, TokenState};

/// Where a provider's scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    Perturbed { spec: PerturbationSpec },
}

pub trait ScoreProvider: Send + Sync {
    fn space(&self) -> &SpaceConfig;

    /// `M` in `[1/M, M]`; `f64::INFINITY` means unclipped.
    fn clip_bound(&self) -> f64;

    fn provenance(&self) -> Provenance;

    /// `s_u(y, x)` for a Hamming-1 neighbour `y` of `x` (state indices).
    fn evaluate(&self, u: f64, x: usize, y: usize) -> Result<f64>;

    fn evaluate_states(&self, u: f64, x: &TokenState, y: &TokenState) -> Result<f64> {
        let space = self.space();
        let (xi, yi) = (space.encode(x)?, space.encode(y)?);
        match hamming_index(space, xi, yi) {
            1 => self.evaluate(u, xi, yi),
            h => Err(Error::InvalidNeighbor(h)),
        }
    }
}

impl<P: ScoreProvider + ?Sized> ScoreProvider for Arc<P> {
    fn space(&self) -> &SpaceConfig {
        (**self).space()
    }
    fn clip_bound(&self) -> f64 {
        (**self).clip_bound()
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
    fn evaluate(&self, u: f64, x: usize, y: usize) -> Result<f64> {
        (**self).evaluate(u, x, y)
    }
}

impl<P: ScoreProvider + ?Sized> ScoreProvider for &P {
    fn space(&self) -> &SpaceConfig {
        (**self).space()
    }
    fn clip_bound(&self) -> f64 {
        (**self).clip_bound()
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
    fn evaluate(&self, u: f64, x: usize, y: usize) -> Result<f64> {
        (**self).evaluate(u, x, y)
    }
}

fn check_clip_bound(m: f64) -> Result<()> {
    if m >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("clip bound M = {m} must be at least 1")))
    }
}

#[inline]
fn clip(value: f64, m: f64) -> f64 {
    if m.is_infinite() {
        value
    } else {
        value.clamp(1.0 / m, m)
    }
}

/// Marginals are cached per forward time; beyond this many entries the
/// cache is flushed rather than grown.
const MARGINAL_CACHE_LIMIT: usize = 4096;

/// Exact ratios `q_u(y)/q_u(x)` of the forward marginals of `q0`.
#[derive(Debug)]
pub struct ExactProvider {
    q0: DensePmf,
    clip_bound: f64,
    cache: RwLock<HashMap<u64, Arc<ForwardMarginal>>>,
}

impl ExactProvider {
    pub fn new(q0: DensePmf, clip_bound: f64) -> Result<Self> {
        check_clip_bound(clip_bound)?;
        q0.space().exact_size()?;
        Ok(ExactProvider {
            q0,
            clip_bound,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Unclipped truth.
    pub fn unclipped(q0: DensePmf) -> Result<Self> {
        Self::new(q0, f64::INFINITY)
    }

    pub fn q0(&self) -> &DensePmf {
        &self.q0
    }

    pub fn marginal(&self, u: f64) -> Result<Arc<ForwardMarginal>> {
        if !(u > 0.0) {
            return Err(Error::InvalidTime(u));
        }
        let key = u.to_bits();
        if let Some(m) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(ForwardMarginal::new(&self.q0, u)?);
        let mut cache = self.cache.write().expect("cache lock");
        if cache.len() >= MARGINAL_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&m));
        Ok(m)
    }
}

impl ScoreProvider for ExactProvider {
    fn space(&self) -> &SpaceConfig {
        self.q0.space()
    }

    fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    fn provenance(&self) -> Provenance {
        Provenance::Exact
    }

    fn evaluate(&self, u: f64, x: usize, y: usize) -> Result<f64> {
        Ok(clip(self.marginal(u)?.ratio(x, y)?, self.clip_bound))
    }
}

/// Synthetic corruption of a base score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationSpec {
    None,
    /// Multiply every score by `c`.
    Constant { c: f64 },
    /// Multiply by `exp(σ Z)`, with `Z` a standard normal drawn
    /// deterministically from `(seed, u, x, y)`.
    Lognormal { sigma: f64, seed: u64 },
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationSpec::None => Ok(()),
            PerturbationSpec::Constant { c } if c > 0.0 && c.is_finite() => Ok(()),
            PerturbationSpec::Constant { c } => Err(Error::InvalidSpec(format!("c = {c} must be positive"))),
            PerturbationSpec::Lognormal { sigma, .. } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            PerturbationSpec::Lognormal { sigma, .. } => {
                Err(Error::InvalidSpec(format!("sigma = {sigma} must be non-negative")))
            }
        }
    }

    fn factor(&self, u: f64, x: usize, y: usize) -> f64 {
        match *self {
            PerturbationSpec::None => 1.0,
            PerturbationSpec::Constant { c } => c,
            PerturbationSpec::Lognormal { sigma, seed } => {
                let key = mix_words(&[seed, u.to_bits(), x as u64, y as u64]);
                let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key));
                (sigma * z).exp()
            }
        }
    }
}

/// A base provider multiplied by a deterministic perturbation, then clipped.
#[derive(Debug)]
pub struct PerturbedProvider<P> {
    base: P,
    spec: PerturbationSpec,
    clip_bound: f64,
}

impl<P: ScoreProvider> PerturbedProvider<P> {
    /// Clips to `clip_bound` after perturbing; typically `base` is unclipped.
    pub fn new(base: P, spec: PerturbationSpec, clip_bound: f64) -> Result<Self> {
        spec.validate()?;
        check_clip_bound(clip_bound)?;
        Ok(PerturbedProvider {
            base,
            spec,
            clip_bound,
        })
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }
}

impl<P: ScoreProvider> ScoreProvider for PerturbedProvider<P> {
    fn space(&self) -> &SpaceConfig {
        self.base.space()
    }

    fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    fn provenance(&self) -> Provenance {
        Provenance::Perturbed { spec: self.spec }
    }

    fn evaluate(&self, u: f64, x: usize, y: usize) -> Result<f64> {
        let raw = self.base.evaluate(u, x, y)? * self.spec.factor(u, x, y);
        Ok(clip(raw, self.clip_bound))
    }
}

/// Off-diagonal rate entries `Ĥ(x, y)` for Hamming-1 pairs.
pub trait RateAccessor {
    fn rate(&self, x: usize, y: usize) -> Result<f64>;
}

/// The score-parameterized rate `Ĥ(x,y) = R(y,x) s_u(y,x) = s_u(y,x)/S`
/// at forward time `u`. With `u = T - t_k` it is the frozen per-step
/// sampler rate; with `u = T - t` it is the fresh rate at time `t`.
pub struct EstimatedRate<'a, P: ?Sized> {
    pub provider: &'a P,
    pub u: f64,
}

impl<'a, P: ScoreProvider + ?Sized> EstimatedRate<'a, P> {
    pub fn at_reverse_time(provider: &'a P, t: f64, horizon: f64) -> Self {
        EstimatedRate { provider, u: horizon - t }
    }
}

impl<P: ScoreProvider + ?Sized> RateAccessor for EstimatedRate<'_, P> {
    fn rate(&self, x: usize, y: usize) -> Result<f64> {
        Ok(self.provider.evaluate(self.u, x, y)? / self.provider.space().vocab as f64)
    }
}

/// `s - r - r log(s/r)`, the score-entropy integrand.
fn se_term(s: f64, r: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidRate(format!("score {s} is not positive")));
    }
    if r == 0.0 {
        return Ok(s);
    }
    Ok(s - r - r * (s / r).ln())
}

/// Score-entropy loss at forward time `u`, given the exact marginal there.
pub fn score_entropy_loss_at<P: ScoreProvider + ?Sized>(provider: &P, marginal: &ForwardMarginal) -> Result<f64> {
    let space = *marginal.space();
    let rate = 1.0 / space.vocab as f64;
    let mut total = 0.0;
    for (x, &qx) in marginal.mass().iter().enumerate() {
        if qx == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (_, _, y) in space.neighbor_indices(x) {
            let s = provider.evaluate(marginal.u, x, y)?;
            inner += rate * se_term(s, marginal.ratio(x, y)?)?;
        }
        total += qx * inner;
    }
    Ok(total)
}

/// Exact score-entropy loss `E_{x~q_u} Σ_y R(y,x) (s - r - r log(s/r))`.
pub fn score_entropy_loss<P: ScoreProvider + ?Sized>(provider: &P, q0: &DensePmf, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidTime(u));
    }
    score_entropy_loss_at(provider, &ForwardMarginal::new(q0, u)?)
}

/// Grid-weighted estimation error `Σ_k (t_{k+1} - t_k) L_SE(T - t_k)`.
pub fn eps_score<P: ScoreProvider + ?Sized>(provider: &P, q0: &DensePmf, grid: &TimeGrid) -> Result<f64> {
    let mut total = 0.0;
    for (t_k, dt) in grid.steps() {
        total += dt * score_entropy_loss(provider, q0, grid.horizon - t_k)?;
    }
    Ok(total)
}

/// `g(x) = Σ_y [Ĥ - R̄ + R̄ log(R̄/Ĥ)]` against the true reverse rates encoded
/// by `marginal` (at forward time `u = T - t`).
pub fn bregman_g_at<A: RateAccessor + ?Sized>(marginal: &ForwardMarginal, x: usize, rate: &A) -> Result<f64> {
    let space = *marginal.space();
    let mut total = 0.0;
    for (_, _, y) in space.neighbor_indices(x) {
        let truth = marginal.reverse_rate(x, y)?;
        let est = rate.rate(x, y)?;
        if truth > 0.0 && !(est > 0.0) {
            return Err(Error::InvalidRate(format!(
                "estimated rate {est} on a pair with true rate {truth}"
            )));
        }
        total += if truth == 0.0 {
            est
        } else {
            est - truth + truth * (truth / est).ln()
        };
    }
    Ok(total)
}

/// `E_{x ~ q_u}[g(x)]`.
pub fn expected_bregman_g<A: RateAccessor + Sync + ?Sized>(marginal: &ForwardMarginal, rate: &A) -> Result<f64> {
    let mut total = 0.0;
    for (x, &qx) in marginal.mass().iter().enumerate() {
        if qx > 0.0 {
            total += qx * bregman_g_at(marginal, x, rate)?;
        }
    }
    Ok(total)
}

/// Bregman diagnostic at reverse time `t` for the state `x`.
pub fn bregman_g<A: RateAccessor + ?Sized>(
    q0: &DensePmf,
    t: f64,
    horizon: f64,
    x: &TokenState,
    rate: &A,
) -> Result<f64> {
    let u = horizon - t;
    if !(u > 0.0) || t < 0.0 {
        return Err(Error::InvalidTime(t));
    }
    let marginal = ForwardMarginal::new(q0, u)?;
    bregman_g_at(&marginal, q0.space().encode(x)?, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{uniform_grid, TimeGrid};

    const LN2: f64 = std::f64::consts::LN_2;

    fn s21() -> SpaceConfig {
        SpaceConfig::new(2, 1).unwrap()
    }

    fn closed_form(c: f64) -> f64 {
        0.5 * (c - 1.0 - c.ln())
    }

    struct FixedRate(f64);
    impl RateAccessor for FixedRate {
        fn rate(&self, _: usize, _: usize) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn exact_provider_examples() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let uni = ExactProvider::new(DensePmf::uniform(space).unwrap(), 1.0).unwrap();
        assert!((uni.evaluate(0.4, 0, 1).unwrap() - 1.0).abs() < 1e-14);

        let pm = DensePmf::point_mass(s21(), 0).unwrap();
        let p10 = ExactProvider::new(pm.clone(), 10.0).unwrap();
        // s(y=0, x=1): toward the point mass
        assert!((p10.evaluate(LN2, 1, 0).unwrap() - 3.0).abs() < 1e-12);
        assert!((p10.evaluate(LN2, 0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let p2 = ExactProvider::new(pm, 2.0).unwrap();
        assert_eq!(p2.evaluate(LN2, 1, 0).unwrap(), 2.0);
        assert_eq!(p2.evaluate(LN2, 0, 1).unwrap(), 0.5);

        assert!(matches!(
            uni.evaluate_states(0.4, &TokenState::new(vec![0, 0]), &TokenState::new(vec![1, 1])),
            Err(Error::InvalidNeighbor(2))
        ));
        assert!(ExactProvider::new(DensePmf::uniform(space).unwrap(), 0.5).is_err());
        assert!(uni.evaluate(0.0, 0, 1).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let q0 = DensePmf::from_weights(space, (1..=9).map(|w| w as f64).collect()).unwrap();
        let base = ExactProvider::unclipped(q0).unwrap();
        let none = PerturbedProvider::new(&base, PerturbationSpec::None, f64::INFINITY).unwrap();
        let unit = PerturbedProvider::new(&base, PerturbationSpec::Constant { c: 1.0 }, f64::INFINITY).unwrap();
        for x in 0..9 {
            for (_, _, y) in space.neighbor_indices(x) {
                let b = base.evaluate(0.3, x, y).unwrap();
                assert_eq!(none.evaluate(0.3, x, y).unwrap(), b);
                assert_eq!(unit.evaluate(0.3, x, y).unwrap(), b);
            }
        }

        let uni = ExactProvider::unclipped(DensePmf::uniform(space).unwrap()).unwrap();
        let doubled = PerturbedProvider::new(&uni, PerturbationSpec::Constant { c: 2.0 }, f64::INFINITY).unwrap();
        assert!((doubled.evaluate(1.0, 4, 5).unwrap() - 2.0).abs() < 1e-14);

        assert!(matches!(
            PerturbedProvider::new(&uni, PerturbationSpec::Constant { c: 0.0 }, 10.0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(PerturbedProvider::new(&uni, PerturbationSpec::Lognormal { sigma: -1.0, seed: 1 }, 10.0).is_err());
    }

    #[test]
    fn clipping_follows_perturbation() {
        let uni = ExactProvider::unclipped(DensePmf::uniform(s21()).unwrap()).unwrap();
        let p = PerturbedProvider::new(&uni, PerturbationSpec::Constant { c: 5.0 }, 3.0).unwrap();
        assert_eq!(p.evaluate(0.5, 0, 1).unwrap(), 3.0);
        assert_eq!(p.clip_bound(), 3.0);
    }

    #[test]
    fn lognormal_draws_are_keyed_and_deterministic() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let uni = ExactProvider::unclipped(DensePmf::uniform(space).unwrap()).unwrap();
        let spec = PerturbationSpec::Lognormal { sigma: 0.5, seed: 11 };
        let a = PerturbedProvider::new(&uni, spec, 100.0).unwrap();
        let b = PerturbedProvider::new(&uni, spec, 100.0).unwrap();
        assert_eq!(a.evaluate(0.7, 0, 1).unwrap(), b.evaluate(0.7, 0, 1).unwrap());
        assert_ne!(a.evaluate(0.7, 0, 1).unwrap(), a.evaluate(0.7, 1, 0).unwrap());
        assert_ne!(a.evaluate(0.7, 0, 1).unwrap(), a.evaluate(0.8, 0, 1).unwrap());

        // log-factors look standard normal scaled by sigma
        let logs: Vec<f64> = (0..2000)
            .map(|k| a.evaluate(0.1 + k as f64 * 1e-3, 0, 1).unwrap().ln())
            .collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64;
        assert!(mean.abs() < 0.05 && (var.sqrt() - 0.5).abs() < 0.05);
    }

    #[test]
    fn se_loss_examples() {
        let q0 = DensePmf::point_mass(SpaceConfig::new(3, 2).unwrap(), 4).unwrap();
        let exact = ExactProvider::unclipped(q0.clone()).unwrap();
        assert!(score_entropy_loss(&exact, &q0, 0.5).unwrap().abs() < 1e-12);

        let uq = DensePmf::uniform(s21()).unwrap();
        let uni = ExactProvider::unclipped(uq.clone()).unwrap();
        for (c, expect) in [(2.0, 0.153426), (0.5, 0.096574)] {
            let p = PerturbedProvider::new(&uni, PerturbationSpec::Constant { c }, f64::INFINITY).unwrap();
            let loss = score_entropy_loss(&p, &uq, 0.9).unwrap();
            assert!((loss - closed_form(c)).abs() < 1e-14);
            assert!((loss - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn se_loss_vanishes_only_at_truth() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let q0 = DensePmf::from_weights(space, vec![3.0, 1.0, 0.0, 2.0, 5.0, 1.0, 0.5, 0.0, 1.0]).unwrap();
        let exact = ExactProvider::unclipped(q0.clone()).unwrap();
        assert!(score_entropy_loss(&exact, &q0, 0.2).unwrap().abs() < 1e-12);
        let noisy = PerturbedProvider::new(&exact, PerturbationSpec::Lognormal { sigma: 0.1, seed: 3 }, f64::INFINITY)
            .unwrap();
        assert!(score_entropy_loss(&noisy, &q0, 0.2).unwrap() > 1e-6);
    }

    #[test]
    fn clipping_true_ratios_costs_loss() {
        let q0 = DensePmf::point_mass(SpaceConfig::new(4, 1).unwrap(), 0).unwrap();
        // sup ratio at u = 0.2 is far above 2
        let clipped = ExactProvider::new(q0.clone(), 2.0).unwrap();
        assert!(score_entropy_loss(&clipped, &q0, 0.2).unwrap() > 1e-3);
    }

    #[test]
    fn eps_score_examples() {
        let uq = DensePmf::uniform(s21()).unwrap();
        let uni = ExactProvider::unclipped(uq.clone()).unwrap();
        let grid = uniform_grid(1.5, 0.5, 4).unwrap();
        assert_eq!(eps_score(&uni, &uq, &grid).unwrap(), 0.0);

        let p = PerturbedProvider::new(&uni, PerturbationSpec::Constant { c: 2.0 }, f64::INFINITY).unwrap();
        let one = eps_score(&p, &uq, &grid).unwrap();
        assert!((one - closed_form(2.0)).abs() < 1e-13);

        let stretched = TimeGrid::from_points(3.0, 1.0, vec![0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        let two = eps_score(&p, &uq, &stretched).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-13);
    }

    #[test]
    fn bregman_examples() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let q0 = DensePmf::from_weights(space, (1..=9).map(|w| w as f64).collect()).unwrap();
        let exact = ExactProvider::unclipped(q0.clone()).unwrap();
        let (t, horizon) = (0.4, 2.0);
        let fresh = EstimatedRate::at_reverse_time(&exact, t, horizon);
        for x in space.states().unwrap() {
            assert!(bregman_g(&q0, t, horizon, &x, &fresh).unwrap().abs() < 1e-13);
        }

        let uq = DensePmf::uniform(s21()).unwrap();
        let uni = ExactProvider::unclipped(uq.clone()).unwrap();
        let p = PerturbedProvider::new(&uni, PerturbationSpec::Constant { c: 2.0 }, f64::INFINITY).unwrap();
        let rate = EstimatedRate::at_reverse_time(&p, 0.3, 1.0);
        let g = bregman_g(&uq, 0.3, 1.0, &TokenState::new(vec![0]), &rate).unwrap();
        assert!((g - 0.153426).abs() < 1e-6);

        assert!(matches!(
            bregman_g(&uq, 0.3, 1.0, &TokenState::new(vec![0]), &FixedRate(0.0)),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn bregman_identity_on_enumerated_instances() {
        let space = SpaceConfig::new(3, 2).unwrap();
        let q0 = DensePmf::from_weights(space, vec![3.0, 1.0, 0.0, 2.0, 5.0, 1.0, 0.5, 0.0, 1.0]).unwrap();
        let exact = ExactProvider::unclipped(q0.clone()).unwrap();
        let noisy =
            PerturbedProvider::new(&exact, PerturbationSpec::Lognormal { sigma: 0.4, seed: 9 }, 50.0).unwrap();
        let (t, horizon) = (1.1, 2.5);
        let marginal = ForwardMarginal::new(&q0, horizon - t).unwrap();
        let lhs = expected_bregman_g(&marginal, &EstimatedRate::at_reverse_time(&noisy, t, horizon)).unwrap();
        let rhs = score_entropy_loss(&noisy, &q0, horizon - t).unwrap();
        assert!(lhs > 1e-4);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
