use std::hash::Hasher;

use fnv::FnvHasher;
use ndarray::Array1;

use crate::scalar::Scalar;

pub const DEFAULT_BUCKETS: usize = 1 << 18;

/// Signed feature hashing of token counts, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBow {
    buckets: usize,
}

impl Default for HashedBow {
    fn default() -> Self {
        HashedBow::new(DEFAULT_BUCKETS)
    }
}

fn hash(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

impl HashedBow {
    pub fn new(buckets: usize) -> Self {
        assert!(buckets > 0, "bucket count must be positive");
        HashedBow { buckets }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// (bucket, sign) for a token; the sign comes from the top hash bit.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = hash(token);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.buckets as u64) as usize, sign)
    }

    /// Non-zero entries sorted by bucket.
    pub fn embed_sparse<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(usize, f64)> {
        let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
        for t in tokens {
            let (b, s) = self.slot(t.as_ref());
            *acc.entry(b).or_default() += s;
        }
        acc.retain(|_, v| *v != 0.0);
        let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        acc.into_iter()
            .map(|(b, v)| (b, if norm > 0.0 { v / norm } else { v }))
            .collect()
    }

    pub fn embed_dense<T: Scalar, S: AsRef<str>>(&self, tokens: &[S]) -> Array1<T> {
        let mut out = Array1::from_elem(self.buckets, T::zero());
        for (b, v) in self.embed_sparse(tokens) {
            out[b] = T::from_f64_lossy(v);
        }
        out
    }
}
