//! The state space `[S]^d`: enumeration, mixed-radix indexing and Hamming
//! neighbourhoods.
//!
//! Tokens are 0-based everywhere, including the CLI and CSV outputs. A state
//! is stored at index `sum_i tokens[i] * S^i`, so dimension 0 is the least
//! significant digit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXACT_CAP: usize = 65_536;

fn default_exact_cap() -> usize {
    DEFAULT_EXACT_CAP
}

/// Vocabulary size `S`, dimension `d` and the enumeration cap for exact mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceConfig {
    #[serde(rename = "S")]
    pub vocab: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(default = "default_exact_cap")]
    pub exact_cap: usize,
}

impl SpaceConfig {
    pub fn new(vocab: usize, dim: usize) -> Result<Self> {
        Self::with_cap(vocab, dim, DEFAULT_EXACT_CAP)
    }

    pub fn with_cap(vocab: usize, dim: usize, exact_cap: usize) -> Result<Self> {
        let space = SpaceConfig {
            vocab,
            dim,
            exact_cap,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::InvalidSpace(format!("S = {} < 2", self.vocab)));
        }
        if self.dim < 1 {
            return Err(Error::InvalidSpace("d must be at least 1".into()));
        }
        Ok(())
    }

    /// `S^d`, or `None` if it overflows `usize`.
    pub fn cardinality(&self) -> Option<usize> {
        self.vocab.checked_pow(self.dim as u32)
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self.cardinality(), Some(n) if n <= self.exact_cap)
    }

    /// Number of states, refusing spaces above the exact-mode cap.
    pub fn exact_size(&self) -> Result<usize> {
        match self.cardinality() {
            Some(n) if n <= self.exact_cap => Ok(n),
            Some(n) => Err(Error::ExactModeUnavailable {
                size: n.to_string(),
                cap: self.exact_cap,
            }),
            None => Err(Error::ExactModeUnavailable {
                size: format!("{}^{}", self.vocab, self.dim),
                cap: self.exact_cap,
            }),
        }
    }

    /// `S^i`, the index stride of dimension `i`.
    #[inline]
    pub fn stride(&self, i: usize) -> usize {
        self.vocab.pow(i as u32)
    }

    /// Token of dimension `i` in the state stored at `index`.
    #[inline]
    pub fn token_at(&self, index: usize, i: usize) -> usize {
        (index / self.stride(i)) % self.vocab
    }

    /// Index of `x^{-i} ⊕ a`.
    #[inline]
    pub fn substitute_index(&self, index: usize, i: usize, a: usize) -> usize {
        let stride = self.stride(i);
        let current = (index / stride) % self.vocab;
        index - current * stride + a * stride
    }

    /// All Hamming-1 neighbours of `index` as `(dimension, token, neighbour index)`,
    /// ordered by dimension then token.
    pub fn neighbor_indices(&self, index: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let stride = self.stride(i);
            let current = (index / stride) % self.vocab;
            let base = index - current * stride;
            (0..self.vocab)
                .filter(move |&a| a != current)
                .map(move |a| (i, a, base + a * stride))
        })
    }

    /// Number of Hamming-1 neighbours of any state, `d(S-1)`.
    pub fn neighbor_count(&self) -> usize {
        self.dim * (self.vocab - 1)
    }

    pub fn encode(&self, state: &TokenState) -> Result<usize> {
        self.check(state)?;
        let n = self.cardinality().ok_or_else(|| Error::ExactModeUnavailable {
            size: format!("{}^{}", self.vocab, self.dim),
            cap: self.exact_cap,
        })?;
        let index = state
            .tokens
            .iter()
            .rev()
            .fold(0usize, |acc, &tok| acc * self.vocab + tok);
        debug_assert!(index < n);
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<TokenState> {
        match self.cardinality() {
            Some(n) if index < n => {}
            _ => {
                return Err(Error::InvalidState(format!(
                    "index {index} outside the space of S = {}, d = {}",
                    self.vocab, self.dim
                )))
            }
        }
        let mut rest = index;
        let tokens = (0..self.dim)
            .map(|_| {
                let tok = rest % self.vocab;
                rest /= self.vocab;
                tok
            })
            .collect();
        Ok(TokenState { tokens })
    }

    /// Validates length and token range.
    pub fn check(&self, state: &TokenState) -> Result<()> {
        if state.tokens.len() != self.dim {
            return Err(Error::InvalidState(format!(
                "state has length {}, expected d = {}",
                state.tokens.len(),
                self.dim
            )));
        }
        if let Some((i, &tok)) = state.tokens.iter().enumerate().find(|(_, &t)| t >= self.vocab) {
            return Err(Error::InvalidState(format!(
                "token {tok} at dimension {i} outside 0..{}",
                self.vocab
            )));
        }
        Ok(())
    }

    /// Every state of the space in index order.
    pub fn states(&self) -> Result<impl Iterator<Item = TokenState> + '_> {
        let n = self.exact_size()?;
        Ok((0..n).map(move |idx| self.decode(idx).expect("index in range")))
    }
}

/// A point of `[S]^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenState {
    pub tokens: Vec<usize>,
}

impl TokenState {
    pub fn new(tokens: Vec<usize>) -> Self {
        TokenState { tokens }
    }

    pub fn dim(&self) -> usize {
        self.tokens.len()
    }

    /// `x^{-i} ⊕ a`.
    pub fn substitute(&self, i: usize, a: usize) -> TokenState {
        let mut tokens = self.tokens.clone();
        tokens[i] = a;
        TokenState { tokens }
    }
}

impl From<Vec<usize>> for TokenState {
    fn from(tokens: Vec<usize>) -> Self {
        TokenState { tokens }
    }
}

pub fn hamming(x: &TokenState, y: &TokenState) -> Result<usize> {
    if x.dim() != y.dim() {
        return Err(Error::InvalidState(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(x.tokens.iter().zip(&y.tokens).filter(|(a, b)| a != b).count())
}

/// The `d(S-1)` states at Hamming distance one from `x`.
pub fn neighbors(x: &TokenState, space: &SpaceConfig) -> Result<Vec<TokenState>> {
    space.check(x)?;
    let mut out = Vec::with_capacity(space.neighbor_count());
    for i in 0..space.dim {
        for a in (0..space.vocab).filter(|&a| a != x.tokens[i]) {
            out.push(x.substitute(i, a));
        }
    }
    Ok(out)
}

/// Hamming distance between two state indices.
pub(crate) fn hamming_index(space: &SpaceConfig, x: usize, y: usize) -> usize {
    let (mut a, mut b) = (x, y);
    let mut count = 0;
    for _ in 0..space.dim {
        if a % space.vocab != b % space.vocab {
            count += 1;
        }
        a /= space.vocab;
        b /= space.vocab;
    }
    count
}

/// Exact probability mass function over the enumerated space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensePmf {
    mass: Vec<f64>,
    space: SpaceConfig,
}

pub const PMF_SUM_TOL: f64 = 1e-12;

impl DensePmf {
    pub fn new(space: SpaceConfig, mass: Vec<f64>) -> Result<Self> {
        let n = space.exact_size()?;
        if mass.len() != n {
            return Err(Error::InvalidInput(format!(
                "pmf has {} entries, space has {n}",
                mass.len()
            )));
        }
        if let Some(bad) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidInput(format!("pmf entry {bad} is not a probability")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL * (n as f64).max(1.0).sqrt().max(1.0) {
            return Err(Error::InvalidInput(format!("pmf sums to {total}, not 1")));
        }
        Ok(DensePmf { mass, space })
    }

    /// Normalizes non-negative weights into a pmf.
    pub fn from_weights(space: SpaceConfig, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidInput("weights must have a positive finite sum".into()));
        }
        Self::new(space, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(space: SpaceConfig) -> Result<Self> {
        let n = space.exact_size()?;
        Ok(DensePmf {
            mass: vec![1.0 / n as f64; n],
            space,
        })
    }

    pub fn point_mass(space: SpaceConfig, index: usize) -> Result<Self> {
        let n = space.exact_size()?;
        if index >= n {
            return Err(Error::InvalidState(format!("index {index} outside 0..{n}")));
        }
        let mut mass = vec![0.0; n];
        mass[index] = 1.0;
        Ok(DensePmf { mass, space })
    }

    /// Skips the sum check; for internally produced vectors that are
    /// stochastic by construction.
    pub(crate) fn from_raw(space: SpaceConfig, mass: Vec<f64>) -> Self {
        debug_assert_eq!(Some(mass.len()), space.cardinality());
        DensePmf { mass, space }
    }

    pub fn space(&self) -> &SpaceConfig {
        &self.space
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn prob(&self, state: &TokenState) -> Result<f64> {
        Ok(self.mass[self.space.encode(state)?])
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }
}
