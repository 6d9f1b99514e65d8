use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Result;
use crate::ndcore::Tensor;
use crate::nets::Network;

/// Deterministic batched action selection from encoded observations.
pub trait Policy {
    fn act(&self, obs: &Tensor) -> Result<Vec<usize>>;
}

/// Greedy (argmax) actions of a network run for a fixed number of steps.
#[derive(Clone, Copy, Debug)]
pub struct GreedyNet<'a> {
    pub net: &'a Network,
    pub steps: usize,
}

impl<'a> GreedyNet<'a> {
    pub fn new(net: &'a Network, steps: usize) -> Self {
        Self { net, steps }
    }
}

impl Policy for GreedyNet<'_> {
    fn act(&self, obs: &Tensor) -> Result<Vec<usize>> {
        let scores = self.net.infer(obs, self.steps)?;
        let (rows, cols) = scores.dims2("greedy")?;
        Ok((0..rows).map(|r| argmax(&scores.data()[r * cols..(r + 1) * cols])).collect())
    }
}

/// Uniformly random actions from its own seeded stream.
#[derive(Debug)]
pub struct UniformRandom {
    actions: usize,
    rng: RefCell<ChaCha8Rng>,
}

impl UniformRandom {
    pub fn new(actions: usize, rng: ChaCha8Rng) -> Self {
        Self {
            actions,
            rng: RefCell::new(rng),
        }
    }
}

impl Policy for UniformRandom {
    fn act(&self, obs: &Tensor) -> Result<Vec<usize>> {
        let rows = obs.shape().first().copied().unwrap_or(0);
        let mut rng = self.rng.borrow_mut();
        Ok((0..rows).map(|_| rng.gen_range(0..self.actions)).collect())
    }
}

impl<F: Fn(&[f64]) -> usize> Policy for F {
    fn act(&self, obs: &Tensor) -> Result<Vec<usize>> {
        let (rows, cols) = obs.dims2("policy")?;
        Ok((0..rows).map(|r| self(&obs.data()[r * cols..(r + 1) * cols])).collect())
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Draw an index from (possibly unnormalized) non-negative weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
