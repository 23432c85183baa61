use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::{check_text, Embedder};
use crate::remote::{endpoint, post_with_retry, BackendError, HttpTransport, RetryPolicy};

/// Client for `POST {base}/v1/embeddings`, caching vectors by exact text.
pub struct RemoteEmbedder {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    model: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    dimension: Mutex<Option<usize>>,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl RemoteEmbedder {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Self {
        Self {
            transport,
            base_url: base_url.into(),
            model: model.into(),
            api_key,
            policy: RetryPolicy::default(),
            dimension: Mutex::new(None),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Pins the expected dimension, e.g. to that of an existing store.
    pub fn expect_dimension(self, dimension: usize) -> Self {
        *self.dimension.lock().unwrap() = Some(dimension);
        self
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = json!({ "model": self.model, "input": text });
        let reply = post_with_retry(
            self.transport.as_ref(),
            &endpoint(&self.base_url, "/v1/embeddings"),
            self.api_key.as_deref(),
            &body,
            &self.policy,
        )?;
        parse_embedding(&reply)
    }
}

fn parse_embedding(reply: &Value) -> Result<Vec<f64>, BackendError> {
    let arr = reply
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Parse("missing data[0].embedding".into()))?;
    let v = arr
        .iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| BackendError::Parse(format!("non-numeric embedding entry {x}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if v.is_empty() {
        return Err(BackendError::Parse("empty embedding".into()));
    }
    Ok(v)
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> Option<usize> {
        *self.dimension.lock().unwrap()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        check_text(text)?;
        if let Some(hit) = self.cache.lock().unwrap().get(text) {
            return Ok(hit.clone());
        }
        let v = self.fetch(text)?;
        {
            let mut dim = self.dimension.lock().unwrap();
            match *dim {
                Some(d) if d != v.len() => {
                    return Err(BackendError::InvalidInput(format!(
                        "embedding dimension drifted from {d} to {}",
                        v.len()
                    )))
                }
                Some(_) => {}
                None => *dim = Some(v.len()),
            }
        }
        // a racing caller may have inserted the same text meanwhile; keep the first
        let mut cache = self.cache.lock().unwrap();
        Ok(cache.entry(text.to_string()).or_insert(v).clone())
    }
}
