use chrono::{DateTime, TimeZone, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    cosine_similarity, l2_norm, ExperienceRecord, LessonTag, MemoryError, Result, RetrievalResult,
    ScenarioKey,
};

pub const DEFAULT_TOP_K: usize = 5;

/// Source of `created_at` stamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordClock {
    /// `origin + id` seconds; keeps saved stores reproducible.
    Logical { origin: DateTime<Utc> },
    Wall,
}

impl Default for RecordClock {
    fn default() -> Self {
        RecordClock::Logical {
            origin: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// Fields for a record about to be appended.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub key: ScenarioKey,
    pub summary: String,
    pub embedding: Vec<f64>,
    pub episode_id: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
    pub lesson: Option<LessonTag>,
}

impl NewRecord {
    pub fn new(key: ScenarioKey, summary: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self {
            key,
            summary: summary.into(),
            embedding,
            episode_id: None,
            created_at: None,
            lesson: None,
        }
    }

    pub fn episode(mut self, id: impl Into<String>) -> Self {
        self.episode_id = Some(id.into());
        self
    }

    pub fn lesson(mut self, lesson: LessonTag) -> Self {
        self.lesson = Some(lesson);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    dimension: Option<usize>,
    records: Vec<ExperienceRecord>,
    clock: RecordClock,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_clock(clock: RecordClock) -> Self {
        Self {
            clock,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Embedding dimension, fixed by the first append.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&ExperienceRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    fn next_id(&self) -> u64 {
        self.records.last().map_or(0, |r| r.id + 1)
    }

    pub(crate) fn check_embedding(&self, embedding: &[f64]) -> Result<()> {
        if embedding.is_empty() {
            return Err(MemoryError::InvalidInput("empty embedding".into()));
        }
        if let Some(d) = self.dimension {
            if embedding.len() != d {
                return Err(MemoryError::InvalidInput(format!(
                    "embedding has dimension {}, store expects {d}",
                    embedding.len()
                )));
            }
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(MemoryError::InvalidInput("embedding has non-finite values".into()));
        }
        if !(l2_norm(embedding) > 0.0) {
            return Err(MemoryError::InvalidInput("embedding has zero norm".into()));
        }
        Ok(())
    }

    pub fn append(&mut self, key: ScenarioKey, summary: impl Into<String>, embedding: Vec<f64>) -> Result<u64> {
        self.append_record(NewRecord::new(key, summary, embedding))
    }

    pub fn append_record(&mut self, new: NewRecord) -> Result<u64> {
        self.check_embedding(&new.embedding)?;
        if new.key.instruction.trim().is_empty() {
            return Err(MemoryError::InvalidInput("instruction must not be empty".into()));
        }
        let id = self.next_id();
        let created_at = new.created_at.unwrap_or_else(|| match self.clock {
            RecordClock::Logical { origin } => origin + chrono::Duration::seconds(id as i64),
            RecordClock::Wall => Utc::now(),
        });
        self.dimension = Some(new.embedding.len());
        self.records.push(ExperienceRecord {
            id,
            key: new.key,
            summary: new.summary,
            embedding: new.embedding,
            episode_id: new.episode_id.unwrap_or_else(|| format!("episode-{id}")),
            created_at,
            lesson: new.lesson,
        });
        Ok(id)
    }

    /// Used by the loader, which has already validated ids and dimensions.
    pub(crate) fn push_loaded(&mut self, record: ExperienceRecord) {
        self.dimension = Some(record.embedding.len());
        self.records.push(record);
    }

    /// The `k` most similar records, most similar first; ties keep the older record first.
    pub fn retrieve_top_k(&self, query: &[f64], k: usize) -> Result<Vec<RetrievalResult>> {
        if k == 0 {
            return Err(MemoryError::InvalidInput("k must be at least 1".into()));
        }
        if let Some(d) = self.dimension {
            if query.len() != d {
                return Err(MemoryError::InvalidInput(format!(
                    "query has dimension {}, store expects {d}",
                    query.len()
                )));
            }
        }
        let mut scored = self
            .records
            .iter()
            .map(|r| cosine_similarity(query, &r.embedding).map(|s| (s, r)))
            .collect::<Result<Vec<_>>>()?;
        // stable sort keeps insertion order among equal similarities
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, r)| RetrievalResult {
                record: r.clone(),
                similarity,
            })
            .collect())
    }

    /// `min(k, len)` distinct records drawn uniformly from a seeded generator.
    pub fn retrieve_random_k(&self, k: usize, seed: u64) -> Vec<ExperienceRecord> {
        let n = self.records.len();
        let amount = k.min(n);
        if amount == 0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, n, amount)
            .into_iter()
            .map(|i| self.records[i].clone())
            .collect()
    }

    pub fn retrieve_all(&self) -> Vec<ExperienceRecord> {
        self.records.clone()
    }
}
