//! Weighted multi-source sampling: each draw picks source i with
//! probability wᵢ/Σw, then a uniform element within it. The entire draw
//! sequence is defined by one seeded generator, so any consumer replays it
//! exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub struct WeightedSampler {
    cumulative: Vec<f64>,
    sizes: Vec<usize>,
    rng: ChaCha8Rng,
}

impl WeightedSampler {
    /// `sources` pairs each source's element count with its weight.
    pub fn new(sources: &[(usize, f64)], seed: u64) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Config("sampler: no sources".into()));
        }
        let mut cumulative = Vec::with_capacity(sources.len());
        let mut acc = 0.0;
        for (i, &(size, weight)) in sources.iter().enumerate() {
            if size == 0 {
                return Err(Error::Config(format!("sampler: source {i} is empty")));
            }
            if weight.is_nan() || weight <= 0.0 {
                return Err(Error::Config(format!("sampler: source {i} has weight {weight}")));
            }
            acc += weight;
            cumulative.push(acc);
        }
        Ok(WeightedSampler {
            cumulative,
            sizes: sources.iter().map(|&(s, _)| s).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Next (source, index) pair of the infinite stream.
    pub fn draw(&mut self) -> (usize, usize) {
        let total = *self.cumulative.last().expect("nonempty");
        let u = self.rng.gen_range(0.0..total);
        let source = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.sizes.len() - 1);
        let index = self.rng.gen_range(0..self.sizes[source]);
        (source, index)
    }
}
