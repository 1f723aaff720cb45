use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Generator for the random vectors that stand in for tokens a table does
/// not attest.
///
/// Every vector is keyed by `(seed, table name, token, dim)`, so it does not
/// depend on the order in which vectors are requested.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RandomBackfill {
    seed: u64,
    low: f32,
    high: f32,
}

impl RandomBackfill {
    pub const DEFAULT_LOW: f32 = -0.25;
    pub const DEFAULT_HIGH: f32 = 0.25;

    pub fn new(seed: u64, low: f32, high: f32) -> Result<Self, String> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(format!("invalid backfill bounds [{low}, {high})"));
        }
        Ok(RandomBackfill { seed, low, high })
    }

    pub fn with_seed(seed: u64) -> Self {
        RandomBackfill {
            seed,
            low: Self::DEFAULT_LOW,
            high: Self::DEFAULT_HIGH,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bounds(&self) -> (f32, f32) {
        (self.low, self.high)
    }

    /// Uniform vector in `[low, high)` for `token` in the table `table_name`.
    pub fn vector(&self, table_name: &str, token: &str, dim: usize) -> Vec<f32> {
        let mut out = vec![0.0; dim];
        self.fill(table_name, token, &mut out);
        out
    }

    /// Like [`vector`](Self::vector) but writes into `out`, whose length is the dim.
    pub fn fill(&self, table_name: &str, token: &str, out: &mut [f32]) {
        let mut rng = ChaCha8Rng::from_seed(self.key(table_name, token, out.len()));
        let dist = Uniform::new(self.low, self.high);
        for v in out.iter_mut() {
            *v = dist.sample(&mut rng);
        }
    }

    fn key(&self, table_name: &str, token: &str, dim: usize) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        // length prefixes keep ("ab", "c") and ("a", "bc") apart
        hasher.update((table_name.len() as u64).to_le_bytes());
        hasher.update(table_name.as_bytes());
        hasher.update((token.len() as u64).to_le_bytes());
        hasher.update(token.as_bytes());
        hasher.update((dim as u64).to_le_bytes());
        hasher.finalize().into()
    }
}

impl Default for RandomBackfill {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn deterministic() {
        let b = RandomBackfill::with_seed(7);
        assert_eq!(b.vector("glove", "the", 50), b.vector("glove", "the", 50));
        // order of requests does not matter
        let first = b.vector("glove", "cat", 8);
        let _ = b.vector("glove", "dog", 8);
        assert_eq!(first, b.vector("glove", "cat", 8));
    }

    #[test]
    fn distinct_tokens_get_distinct_vectors() {
        let b = RandomBackfill::with_seed(1);
        let vectors: HashSet<Vec<u32>> = (0..100)
            .map(|i| {
                b.vector("senna", &format!("tok{i}"), 16)
                    .into_iter()
                    .map(f32::to_bits)
                    .collect()
            })
            .collect();
        assert_eq!(vectors.len(), 100);
    }

    #[test]
    fn keyed_by_every_component() {
        let b = RandomBackfill::with_seed(1);
        let base = b.vector("a", "x", 4);
        assert_ne!(base, RandomBackfill::with_seed(2).vector("a", "x", 4));
        assert_ne!(base, b.vector("b", "x", 4));
        assert_ne!(base, b.vector("a", "y", 4));
        assert_ne!(b.vector("ab", "c", 4), b.vector("a", "bc", 4));
    }

    #[test]
    fn within_bounds() {
        let b = RandomBackfill::new(3, -0.25, 0.25).unwrap();
        let v = b.vector("t", "w", 4);
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|&x| (-0.25..0.25).contains(&x)));
        for i in 0..200 {
            assert!(b
                .vector("t", &i.to_string(), 64)
                .iter()
                .all(|&x| (-0.25..0.25).contains(&x)));
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(RandomBackfill::new(0, 1.0, 1.0).is_err());
        assert!(RandomBackfill::new(0, 1.0, -1.0).is_err());
        assert!(RandomBackfill::new(0, f32::NAN, 1.0).is_err());
    }
}
