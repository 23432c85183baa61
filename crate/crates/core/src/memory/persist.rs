//! Newline-delimited JSON persistence, one record per line.
//!
//! Floats are written in shortest round-trip form so embeddings reload
//! bit-identically. Unknown fields are ignored on load.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{ExperienceRecord, LessonTag, MemoryError, MemoryStore, Result, ScenarioKey};

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: u64,
    instruction: String,
    scene: String,
    summary: String,
    embedding: Vec<f64>,
    episode_id: String,
    created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lesson: Option<LessonTag>,
}

impl From<&ExperienceRecord> for RecordLine {
    fn from(r: &ExperienceRecord) -> Self {
        Self {
            id: r.id,
            instruction: r.key.instruction.clone(),
            scene: r.key.scene_description.clone(),
            summary: r.summary.clone(),
            embedding: r.embedding.clone(),
            episode_id: r.episode_id.clone(),
            created_at: r.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            lesson: r.lesson,
        }
    }
}

impl MemoryStore {
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        for r in self.records() {
            let line = serde_json::to_string(&RecordLine::from(r))
                .map_err(|e| MemoryError::InvalidInput(e.to_string()))?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut store = MemoryStore::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| MemoryError::Parse {
                line: line_no,
                message,
            };
            let rec: RecordLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if let Some(last) = store.records().last() {
                if rec.id <= last.id {
                    return Err(parse_err(format!(
                        "record id {} does not follow {}",
                        rec.id, last.id
                    )));
                }
            }
            store
                .check_embedding(&rec.embedding)
                .map_err(|e| parse_err(e.to_string()))?;
            let key = ScenarioKey::new(rec.instruction, rec.scene).map_err(|e| parse_err(e.to_string()))?;
            let created_at = DateTime::parse_from_rfc3339(&rec.created_at)
                .map_err(|e| parse_err(format!("bad created_at: {e}")))?
                .with_timezone(&Utc);
            store.push_loaded(ExperienceRecord {
                id: rec.id,
                key,
                summary: rec.summary,
                embedding: rec.embedding,
                episode_id: rec.episode_id,
                created_at,
                lesson: rec.lesson,
            });
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let file = fs::File::create(&tmp)?;
            self.write_to(BufWriter::new(file))?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MemoryStore {
        let mut s = MemoryStore::new();
        s.append(
            ScenarioKey::new("Put the apple on the plate.", "an apple next to a container").unwrap(),
            "pushed the container first",
            vec![0.1 + 0.2, -1.0 / 3.0, 1e-300],
        )
        .unwrap();
        s.append_record(
            super::super::NewRecord::new(
                ScenarioKey::new("Pick up the bowl.", "").unwrap(),
                "unloaded the bowl \"first\"\nthen lifted",
                vec![f64::MIN_POSITIVE, 2.0, 3.5],
            )
            .lesson(LessonTag::UnloadContainerBeforeLift),
        )
        .unwrap();
        s
    }

    #[test]
    fn empty_round_trip() {
        let mut buf = Vec::new();
        MemoryStore::new().write_to(&mut buf).unwrap();
        assert!(buf.is_empty());
        assert_eq!(MemoryStore::read_from(&buf[..]).unwrap(), MemoryStore::new());
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = MemoryStore::read_from(&buf[..]).unwrap();
        assert_eq!(back.records(), s.records());
        for (a, b) in back.records().iter().zip(s.records()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.embedding), bits(&b.embedding));
        }
    }

    #[test]
    fn one_object_per_line_with_expected_fields() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        for field in ["id", "instruction", "scene", "summary", "embedding", "episode_id", "created_at"] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
        assert_eq!(v["created_at"], "2025-01-01T00:00:00Z");
    }

    #[test]
    fn unknown_fields_ignored() {
        let line = r#"{"id":4,"instruction":"x","scene":"y","summary":"z","embedding":[1.0],"episode_id":"e","created_at":"2025-01-01T00:00:00Z","future":{"a":1}}"#;
        let s = MemoryStore::read_from(line.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.records()[0].id, 4);
    }

    #[test]
    fn truncated_file_names_line() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let cut = &buf[..buf.len() - 20];
        match MemoryStore::read_from(cut) {
            Err(MemoryError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_lines_rejected() {
        let a = r#"{"id":0,"instruction":"x","scene":"","summary":"","embedding":[1.0,0.0],"episode_id":"e","created_at":"2025-01-01T00:00:00Z"}"#;
        let dim = r#"{"id":1,"instruction":"x","scene":"","summary":"","embedding":[1.0],"episode_id":"e","created_at":"2025-01-01T00:00:00Z"}"#;
        let dup = r#"{"id":0,"instruction":"x","scene":"","summary":"","embedding":[1.0,0.0],"episode_id":"e","created_at":"2025-01-01T00:00:00Z"}"#;
        let zero = r#"{"id":0,"instruction":"x","scene":"","summary":"","embedding":[0.0,0.0],"episode_id":"e","created_at":"2025-01-01T00:00:00Z"}"#;
        for text in [format!("{a}\n{dim}\n"), format!("{a}\n{dup}\n"), format!("{zero}\n")] {
            assert!(matches!(
                MemoryStore::read_from(text.as_bytes()),
                Err(MemoryError::Parse { .. })
            ));
        }
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ltm.ndjson");
        let s = sample();
        s.save(&path).unwrap();
        assert_eq!(MemoryStore::load(&path).unwrap().records(), s.records());
        assert!(matches!(
            MemoryStore::load(dir.path().join("missing")),
            Err(MemoryError::Io(_))
        ));
    }
}
