use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: f64,
    /// Reward after fairness adjustment and normalization.
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, entries: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn store(&mut self, t: Transition) {
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            self.entries[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform draws with replacement.
    pub fn sample<R: Rng>(&self, minibatch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.entries.len() < minibatch_size || self.entries.is_empty() {
            return Err(Error::NotReady { size: self.entries.len(), needed: minibatch_size.max(1) });
        }
        Ok((0..minibatch_size).map(|_| &self.entries[rng.random_range(0..self.entries.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition { observation: vec![r], action: 0.0, reward: r, next_observation: vec![r], done: false }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(2);
        for r in [1.0, 2.0, 3.0] {
            b.store(tr(r));
        }
        assert_eq!(b.len(), 2);
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert!(!rewards.contains(&1.0));
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0));
    }

    #[test]
    fn not_ready_until_filled() {
        let mut b = ReplayBuffer::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.store(tr(1.0));
        assert!(matches!(b.sample(2, &mut rng), Err(Error::NotReady { size: 1, needed: 2 })));
        b.store(tr(2.0));
        assert_eq!(b.sample(2, &mut rng).unwrap().len(), 2);
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let mut b = ReplayBuffer::new(16);
        for i in 0..16 {
            b.store(tr(i as f64));
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(8, &mut rng).unwrap().iter().map(|t| t.reward).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.store(tr(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..n / 10 {
            for t in b.sample(10, &mut rng).unwrap() {
                counts[t.reward as usize] += 1;
            }
        }
        let p = 0.1;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
        }
    }
}
