use serde::{Deserialize, Serialize};

use super::{CandidateSet, GeometryError, Point2, RasterMask, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedOption {
    pub label: u32,
    pub location: Point2,
    pub description: String,
}

/// A base mask overlaid with numbered options, as handed to a selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedView {
    pub base: RasterMask,
    pub options: Vec<AnnotatedOption>,
}

pub fn annotate(base: &RasterMask, candidates: &CandidateSet) -> Result<AnnotatedView> {
    if !candidates.labels_consecutive() {
        return Err(GeometryError::InvalidInput(
            "candidate labels must run 1..=n".into(),
        ));
    }
    let options = candidates
        .items()
        .iter()
        .map(|c| AnnotatedOption {
            label: c.label,
            location: c.location,
            description: format!("option {} at {}", c.label, c.location),
        })
        .collect();
    Ok(AnnotatedView {
        base: base.clone(),
        options,
    })
}

impl AnnotatedView {
    pub fn labels(&self) -> Vec<u32> {
        self.options.iter().map(|o| o.label).collect()
    }

    pub fn location_of(&self, label: u32) -> Option<Point2> {
        self.options
            .iter()
            .find(|o| o.label == label)
            .map(|o| o.location)
    }

    /// Option listing used in place of the rendered overlay image.
    pub fn describe(&self) -> String {
        let mut out = String::from("The initial position (0) is the current position.\n");
        if self.options.is_empty() {
            out.push_str("No numbered options.\n");
        }
        for o in &self.options {
            out.push_str(&format!("{}: {}\n", o.label, o.description));
        }
        out
    }
}
