//! The answerer backend contract.
//!
//! Any VQA system plugs into the game through [`AnswerBackend`]. Two
//! in-process backends ship with the crate: [`ScriptedBackend`], which answers
//! from catalog annotations, and [`NoisyBackend`], which wraps another backend
//! and degrades its answers and explanations at a configurable rate.
//! [`RemoteBackend`] speaks the JSON wire protocol to an external service.

mod noisy;
mod remote;
mod scripted;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use noisy::{NoiseDecision, NoisyBackend};
pub use remote::RemoteBackend;
pub use scripted::{ScriptedBackend, FALLBACK_ANSWER};

/// Side of the square spatial-attention grid.
pub const GRID_SIZE: usize = 14;
/// Upper bound on object proposals carried in one response.
pub const MAX_OBJECT_PROPOSALS: usize = 100;
/// Upper bound on the answer vocabulary.
pub const MAX_VOCABULARY: usize = 3000;

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary has {0} entries, at most {MAX_VOCABULARY} allowed")]
    TooLarge(usize),
}

/// Why a backend call is made within a round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Purpose {
    /// The player's own question.
    #[default]
    Primary,
    /// The `index`-th related bank question shown as an explanation.
    Related { index: u32 },
    /// Answering the player's question about a distractor to find a
    /// plausible wrong answer.
    Probe,
}

/// Game context attached to a request so backends can derive per-session
/// randomness and see the image set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub session_id: String,
    pub round: u32,
    pub image_set: Vec<String>,
    #[serde(default)]
    pub purpose: Purpose,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub question: String,
    pub image_id: String,
    #[serde(default)]
    pub want_attention: bool,
    #[serde(default)]
    pub want_detections: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<RequestContext>,
}

impl AnswerRequest {
    pub fn new(question: impl Into<String>, image_id: impl Into<String>) -> Self {
        AnswerRequest {
            question: question.into(),
            image_id: image_id.into(),
            want_attention: false,
            want_detections: false,
            context: None,
        }
    }

    pub fn with_explanations(mut self) -> Self {
        self.want_attention = true;
        self.want_detections = true;
        self
    }

    pub fn with_context(mut self, context: RequestContext) -> Self {
        self.context = Some(context);
        self
    }

    pub fn validate(&self) -> Result<(), AnswerError> {
        if self.question.trim().is_empty() {
            return Err(AnswerError::EmptyQuestion);
        }
        Ok(())
    }
}

/// A `14 x 14` grid of nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttentionGrid(Vec<Vec<f64>>);

impl AttentionGrid {
    /// Normalize raw nonnegative weights. An all-zero grid becomes uniform.
    pub fn from_weights(mut cells: Vec<Vec<f64>>) -> Result<Self, AnswerError> {
        if cells.len() != GRID_SIZE || cells.iter().any(|r| r.len() != GRID_SIZE) {
            return Err(AnswerError::Protocol(format!(
                "attention grid must be {GRID_SIZE}x{GRID_SIZE}"
            )));
        }
        if cells.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(AnswerError::Protocol("negative or non-finite attention weight".into()));
        }
        let total: f64 = cells.iter().flatten().sum();
        if total == 0.0 {
            return Ok(Self::uniform());
        }
        for w in cells.iter_mut().flatten() {
            *w /= total;
        }
        Ok(AttentionGrid(cells))
    }

    pub fn uniform() -> Self {
        let w = 1.0 / (GRID_SIZE * GRID_SIZE) as f64;
        AttentionGrid(vec![vec![w; GRID_SIZE]; GRID_SIZE])
    }

    /// Unit mass on one cell.
    pub fn spike(row: usize, col: usize) -> Self {
        let mut cells = vec![vec![0.0; GRID_SIZE]; GRID_SIZE];
        cells[row][col] = 1.0;
        AttentionGrid(cells)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }

    /// `(row, col)` of the heaviest cell, first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (r, row) in self.0.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                if *w > self.0[best.0][best.1] {
                    best = (r, c);
                }
            }
        }
        best
    }

    pub fn is_normalized(&self) -> bool {
        self.0.len() == GRID_SIZE
            && self.0.iter().all(|r| r.len() == GRID_SIZE)
            && self.0.iter().flatten().all(|w| *w >= 0.0)
            && (self.total() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }
}

/// An object proposal's mask geometry (normalized box) and attention weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAttention {
    pub mask: [f64; 4],
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
}

/// Whether an explanation supports the answer it accompanies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationQuality {
    OnPoint,
    Off,
}

/// Ground truth a backend may know about its own reply. Simulation backends
/// fill it in; real VQA services leave it empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_quality: Option<ExplanationQuality>,
}

impl ResponseMeta {
    fn is_empty(&self) -> bool {
        self.answer_correct.is_none() && self.explanation_quality.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
    pub confidence: f64,
    /// False when the answer falls outside the backend's declared vocabulary.
    #[serde(default = "default_true")]
    pub in_vocabulary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_attention: Option<AttentionGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_attentions: Option<Vec<ObjectAttention>>,
    #[serde(default)]
    pub detections: Vec<Detection>,
    /// Requested explanation fields the backend cannot produce.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsupported: Vec<String>,
    #[serde(default, skip_serializing_if = "ResponseMeta::is_empty")]
    pub meta: ResponseMeta,
}

fn default_true() -> bool {
    true
}

impl AnswerResponse {
    /// Check the structural invariants of a reply.
    pub fn validate(&self) -> Result<(), AnswerError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(AnswerError::Protocol(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if let Some(grid) = &self.spatial_attention {
            if !grid.is_normalized() {
                return Err(AnswerError::Protocol("spatial attention not normalized".into()));
            }
        }
        if let Some(objs) = &self.object_attentions {
            if objs.len() > MAX_OBJECT_PROPOSALS {
                return Err(AnswerError::Protocol(format!(
                    "{} object proposals exceed {MAX_OBJECT_PROPOSALS}",
                    objs.len()
                )));
            }
            if objs.iter().any(|o| !(o.weight >= 0.0)) {
                return Err(AnswerError::Protocol("negative object attention".into()));
            }
        }
        if self.detections.iter().any(|d| !(0.0..=1.0).contains(&d.confidence)) {
            return Err(AnswerError::Protocol("detection confidence outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// A VQA system as seen by the game. Implementations must be deterministic
/// for a fixed state and request, and safe to call from many sessions at once.
pub trait AnswerBackend: Send + Sync {
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, AnswerError>;

    /// Candidate answers, when the backend declares them.
    fn vocabulary(&self) -> Option<&AnswerVocabulary> {
        None
    }
}

impl<T: AnswerBackend + ?Sized> AnswerBackend for std::sync::Arc<T> {
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, AnswerError> {
        (**self).answer(req)
    }

    fn vocabulary(&self) -> Option<&AnswerVocabulary> {
        (**self).vocabulary()
    }
}

/// Declared answer classes, at most [`MAX_VOCABULARY`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnswerVocabulary {
    tokens: Vec<String>,
    set: HashSet<String>,
}

impl AnswerVocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = AnswerVocabulary::default();
        for t in tokens {
            let t: String = t.into().trim().to_lowercase();
            if !t.is_empty() && vocab.set.insert(t.clone()) {
                vocab.tokens.push(t);
            }
        }
        if vocab.tokens.len() > MAX_VOCABULARY {
            return Err(VocabularyError::TooLarge(vocab.tokens.len()));
        }
        Ok(vocab)
    }

    /// One token per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabularyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| VocabularyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(text.lines())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.set.contains(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_normalizes() {
        let mut cells = vec![vec![1.0; GRID_SIZE]; GRID_SIZE];
        cells[3][4] = 195.0;
        let g = AttentionGrid::from_weights(cells).unwrap();
        assert!(g.is_normalized());
        assert_eq!(g.argmax(), (3, 4));
        assert!((g.rows()[3][4] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_wrong_shape_and_negative() {
        assert!(AttentionGrid::from_weights(vec![vec![1.0; 13]; 14]).is_err());
        let mut cells = vec![vec![1.0; GRID_SIZE]; GRID_SIZE];
        cells[0][0] = -1.0;
        assert!(AttentionGrid::from_weights(cells).is_err());
    }

    #[test]
    fn zero_grid_becomes_uniform() {
        let g = AttentionGrid::from_weights(vec![vec![0.0; GRID_SIZE]; GRID_SIZE]).unwrap();
        assert_eq!(g, AttentionGrid::uniform());
    }

    #[test]
    fn vocabulary_caps_size() {
        let too_many = (0..=MAX_VOCABULARY).map(|i| format!("w{i}"));
        assert!(matches!(AnswerVocabulary::new(too_many), Err(VocabularyError::TooLarge(3001))));
        let v = AnswerVocabulary::new(["Yes", "no", "yes"]).unwrap();
        assert_eq!(v.tokens(), ["yes", "no"]);
    }

    #[test]
    fn request_needs_text() {
        assert!(matches!(
            AnswerRequest::new("   ", "img").validate(),
            Err(AnswerError::EmptyQuestion)
        ));
    }

    #[test]
    fn response_validation_catches_bad_confidence() {
        let r = AnswerResponse {
            answer: "yes".into(),
            confidence: 1.5,
            in_vocabulary: true,
            spatial_attention: None,
            object_attentions: None,
            detections: vec![],
            unsupported: vec![],
            meta: ResponseMeta::default(),
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn wire_request_minimal_shape() {
        let r: AnswerRequest =
            serde_json::from_str(r#"{"question": "is there a clock?", "image_id": "img_1"}"#).unwrap();
        assert!(!r.want_attention && r.context.is_none());
    }
}
