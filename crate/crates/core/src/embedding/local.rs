use super::{check_text, Embedder};
use crate::remote::BackendError;

pub const DEFAULT_LOCAL_DIMENSION: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed_0f_e3be_dd1e;

const MIN_DIMENSION: usize = 16;

/// Lowercased alphanumeric runs of `text`.
pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Signed hashed bag-of-tokens, L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalEmbedder {
    name: String,
    dimension: usize,
    seed: u64,
}

impl LocalEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, BackendError> {
        if dimension < MIN_DIMENSION {
            return Err(BackendError::InvalidInput(format!(
                "local embedder needs dimension >= {MIN_DIMENSION}, got {dimension}"
            )));
        }
        Ok(Self {
            name: format!("local-hash-{dimension}"),
            dimension,
            seed,
        })
    }

    /// Bucket and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = splitmix64(fnv1a(self.seed, token.as_bytes()));
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if splitmix64(h ^ self.seed) >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_LOCAL_DIMENSION, DEFAULT_HASH_SEED).expect("default dimension is valid")
    }
}

impl Embedder for LocalEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        check_text(text)?;
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(BackendError::InvalidInput(format!("no tokens in {text:?}")));
        }
        let mut v = vec![0.0; self.dimension];
        for t in &toks {
            let (bucket, sign) = self.slot(t);
            v[bucket] += sign;
        }
        let norm = crate::memory::l2_norm(&v);
        if norm == 0.0 {
            // every token cancelled out against a colliding opposite-sign one
            return Err(BackendError::InvalidInput(format!("{text:?} hashes to the zero vector")));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}
