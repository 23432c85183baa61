//! Text to vector embedding.
//!
//! [`LocalEmbedder`] is a deterministic hashed bag-of-tokens used in tests and
//! offline runs; [`RemoteEmbedder`] talks to an OpenAI-compatible
//! `/v1/embeddings` endpoint.

mod local;
mod remote;

pub(crate) use local::fnv1a;
pub use local::{tokens, LocalEmbedder, DEFAULT_HASH_SEED, DEFAULT_LOCAL_DIMENSION};
pub use remote::RemoteEmbedder;

use crate::remote::BackendError;

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;

    /// Output length, or `None` while a remote model has not answered yet.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

pub(crate) fn check_text(text: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::InvalidInput("cannot embed empty text".into()));
    }
    Ok(())
}
