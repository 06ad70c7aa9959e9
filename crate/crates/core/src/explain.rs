//! Explanation payloads shown alongside an answer.
//!
//! Three kinds of evidence are produced for a round: attention maps (spatial
//! grid plus weighted object masks), the object/scene predictions most
//! relevant to the answer, and the answers to bank questions most related to
//! the asked one (RelQAS). [`build_bundle`] packages them per game setting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answerer::{AnswerResponse, AttentionGrid, Detection, ObjectAttention};
use crate::catalog::{Catalog, ImageSet};
use crate::embeddings::{EmbeddingError, EmbeddingTable};
use crate::text::{normalize_question, tokenize};

/// Related questions shown per image.
pub const DEFAULT_RELQA_COUNT: usize = 5;
/// Object/scene predictions listed for the secret image.
pub const DEFAULT_OBJECT_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("detection confidence {p} for {label:?} must lie in (0, 1]")]
    DegenerateConfidence { label: String, p: f64 },
    #[error("no detections to rank")]
    NoDetections,
    #[error("object attention requested but {0}")]
    MissingAttentionWeights(String),
    #[error("question bank is empty")]
    EmptyBank,
    #[error("related-question count must be positive")]
    InvalidCount,
    #[error("question bank has {size} entries, fewer than the {k} requested")]
    InsufficientBank { k: usize, size: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("no backend answer for image {0:?}")]
    MissingAnswer(String),
    #[error("no related questions for image {0:?}")]
    MissingRelQa(String),
    #[error("question bank {path}: {message}")]
    Bank { path: String, message: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationMode {
    #[default]
    None,
    Attention,
    #[serde(rename = "relqas")]
    RelQas,
    Both,
}

impl ExplanationMode {
    pub const ALL: [ExplanationMode; 4] = [
        ExplanationMode::Attention,
        ExplanationMode::RelQas,
        ExplanationMode::Both,
        ExplanationMode::None,
    ];

    pub fn includes_attention(self) -> bool {
        matches!(self, ExplanationMode::Attention | ExplanationMode::Both)
    }

    pub fn includes_relqas(self) -> bool {
        matches!(self, ExplanationMode::RelQas | ExplanationMode::Both)
    }

    pub fn is_none(self) -> bool {
        self == ExplanationMode::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExplanationMode::None => "none",
            ExplanationMode::Attention => "attention",
            ExplanationMode::RelQas => "relqas",
            ExplanationMode::Both => "both",
        }
    }
}

impl std::str::FromStr for ExplanationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ExplanationMode::None),
            "attention" => Ok(ExplanationMode::Attention),
            "relqas" | "rel_qas" | "relqa" => Ok(ExplanationMode::RelQas),
            "both" => Ok(ExplanationMode::Both),
            other => Err(format!("unknown explanation mode {other:?}")),
        }
    }
}

/// Game protocol: `A` is 20 images with optional paid explanations, `B` is 5
/// closer images with explanations always shown and rated each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
}

/// How the client should draw attention. `V1`: transparency-modulated
/// attention with object labels. `V2`: jet-colormapped spatial attention,
/// object masks without labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderVersion {
    V1,
    #[default]
    V2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPayload {
    pub spatial: AttentionGrid,
    /// Sorted by weight, heaviest first.
    pub objects: Vec<ObjectAttention>,
    pub render_version: RenderVersion,
}

impl AttentionPayload {
    pub fn from_response(resp: &AnswerResponse, render_version: RenderVersion) -> Option<Self> {
        let spatial = resp.spatial_attention.clone()?;
        let mut objects = resp.object_attentions.clone().unwrap_or_default();
        objects.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        Some(AttentionPayload {
            spatial,
            objects,
            render_version,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelQa {
    pub question: String,
    pub answer: String,
    pub relevance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedObject {
    pub label: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageExplanation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relqas: Option<Vec<RelQa>>,
}

/// Explanations about the machine's own view of the secret image (Setting A).
/// Not keyed by image so the player cannot read the secret off the bundle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MachinePanel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<RankedObject>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relqas: Option<Vec<RelQa>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub mode: ExplanationMode,
    pub setting: Setting,
    pub per_image: BTreeMap<String, ImageExplanation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_panel: Option<MachinePanel>,
}

impl ExplanationBundle {
    pub fn empty(mode: ExplanationMode, setting: Setting) -> Self {
        ExplanationBundle {
            mode,
            setting,
            per_image: BTreeMap::new(),
            machine_panel: None,
        }
    }

    pub fn has_attention(&self) -> bool {
        self.per_image.values().any(|e| e.attention.is_some())
    }

    pub fn has_relqas(&self) -> bool {
        self.per_image.values().any(|e| e.relqas.is_some())
            || self.machine_panel.as_ref().is_some_and(|p| p.relqas.is_some())
    }

    pub fn has_objects(&self) -> bool {
        self.machine_panel.as_ref().is_some_and(|p| p.objects.is_some())
    }
}

fn phrase_similarity(embeddings: &EmbeddingTable, a: &str, b: &str) -> f64 {
    if !a.contains(char::is_whitespace) && !b.contains(char::is_whitespace) {
        return embeddings.word_similarity(a, b).value;
    }
    let (ta, tb) = (tokenize(a), tokenize(b));
    embeddings
        .avg_token_similarity(&ta, &tb)
        .map(|s| s.value)
        .unwrap_or(0.0)
}

/// Relevance of object/scene `label` to `answer`: embedding similarity of
/// the two divided by the detector's confidence in the object.
pub fn importance_score(
    embeddings: &EmbeddingTable,
    label: &str,
    answer: &str,
    p_obj_given_img: f64,
) -> Result<f64, ExplainError> {
    if !(p_obj_given_img > 0.0 && p_obj_given_img <= 1.0) {
        return Err(ExplainError::DegenerateConfidence {
            label: label.to_string(),
            p: p_obj_given_img,
        });
    }
    Ok(phrase_similarity(embeddings, label, answer) / p_obj_given_img)
}

/// Top-`k` detections by importance score, or by the supplied object
/// attention weights (one per detection) when `use_object_attention` is set.
/// Ties go to the lexicographically smaller label.
pub fn rank_objects(
    embeddings: &EmbeddingTable,
    detections: &[Detection],
    answer: &str,
    k: usize,
    use_object_attention: bool,
    attention_weights: Option<&[f64]>,
) -> Result<Vec<RankedObject>, ExplainError> {
    if detections.is_empty() {
        return Err(ExplainError::NoDetections);
    }
    let scores: Vec<f64> = if use_object_attention {
        let weights = attention_weights
            .ok_or_else(|| ExplainError::MissingAttentionWeights("no weights supplied".into()))?;
        if weights.len() != detections.len() {
            return Err(ExplainError::MissingAttentionWeights(format!(
                "{} weights for {} detections",
                weights.len(),
                detections.len()
            )));
        }
        weights.to_vec()
    } else {
        detections
            .iter()
            .map(|d| importance_score(embeddings, &d.label, answer, d.confidence))
            .collect::<Result<_, _>>()?
    };
    let mut ranked: Vec<RankedObject> = detections
        .iter()
        .zip(scores)
        .map(|(d, score)| RankedObject {
            label: d.label.clone(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.label.cmp(&b.label)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
}

/// Candidate related questions, with their scoring tokens precomputed.
#[derive(Clone, Debug, Default)]
pub struct QuestionBank {
    entries: Vec<BankEntry>,
    tokens: Vec<Vec<String>>,
    normalized: Vec<String>,
}

impl QuestionBank {
    pub fn new(entries: Vec<BankEntry>) -> Self {
        let tokens = entries
            .iter()
            .map(|e| {
                let mut t = tokenize(&e.question);
                for a in tokenize(&e.answer) {
                    if !t.contains(&a) {
                        t.push(a);
                    }
                }
                t
            })
            .collect();
        let normalized = entries.iter().map(|e| normalize_question(&e.question)).collect();
        QuestionBank {
            entries,
            tokens,
            normalized,
        }
    }

    /// One entry per distinct (normalized) question in the catalog's QA
    /// annotations, keeping the first image's answer.
    pub fn from_catalog(catalog: &Catalog) -> Self {
        let mut seen = std::collections::HashSet::new();
        let entries = catalog
            .records()
            .iter()
            .flat_map(|r| r.qa_pairs.iter().map(move |qa| (r, qa)))
            .filter(|(_, qa)| seen.insert(normalize_question(&qa.question)))
            .map(|(r, qa)| BankEntry {
                question: qa.question.clone(),
                answer: qa.answer.clone(),
                image_id: Some(r.image_id.clone()),
            })
            .collect();
        Self::new(entries)
    }

    /// JSON array of `{question, answer, image_id?}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExplainError> {
        let path = path.as_ref();
        let err = |message: String| ExplainError::Bank {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries: Vec<BankEntry> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Question tokens unioned with answer tokens, question order first.
    pub fn scoring_tokens(&self, index: usize) -> &[String] {
        &self.tokens[index]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatedQuestion {
    pub index: usize,
    pub question: String,
    pub gt_answer: String,
    pub relevance: f64,
    pub exact_match: bool,
}

/// The `k` bank questions most related to `asked`.
///
/// Relevance is the mean cross-pair embedding similarity between the asked
/// question's tokens and the candidate's question-plus-answer tokens. A bank
/// question textually identical to the asked one always ranks first; other
/// ties keep bank order.
pub fn select_related_questions(
    embeddings: &EmbeddingTable,
    asked: &str,
    bank: &QuestionBank,
    k: usize,
) -> Result<Vec<RelatedQuestion>, ExplainError> {
    if k == 0 {
        return Err(ExplainError::InvalidCount);
    }
    if bank.is_empty() {
        return Err(ExplainError::EmptyBank);
    }
    if bank.len() < k {
        return Err(ExplainError::InsufficientBank { k, size: bank.len() });
    }
    let asked_tokens = tokenize(asked);
    if asked_tokens.is_empty() {
        return Err(EmbeddingError::EmptyTokens.into());
    }
    let asked_norm = normalize_question(asked);

    let mut scored: Vec<RelatedQuestion> = bank
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let cand = bank.scoring_tokens(i);
            let relevance = if cand.is_empty() {
                0.0
            } else {
                embeddings.avg_token_similarity(&asked_tokens, cand)?.value
            };
            Ok(RelatedQuestion {
                index: i,
                question: e.question.clone(),
                gt_answer: e.answer.clone(),
                relevance,
                exact_match: bank.normalized[i] == asked_norm,
            })
        })
        .collect::<Result<_, ExplainError>>()?;
    scored.sort_by(|a, b| {
        b.exact_match
            .cmp(&a.exact_match)
            .then_with(|| b.relevance.total_cmp(&a.relevance))
            .then_with(|| a.index.cmp(&b.index))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Inputs gathered by the engine for one round.
#[derive(Clone, Debug, Default)]
pub struct RoundEvidence {
    /// Backend replies (with attention) per image.
    pub answers: BTreeMap<String, AnswerResponse>,
    /// Answered related questions per image.
    pub relqas: BTreeMap<String, Vec<RelQa>>,
    /// Ranked object/scene predictions for the secret image.
    pub ranked_objects: Option<Vec<RankedObject>>,
}

/// Package a round's explanations for display.
///
/// Setting B: attention and/or RelQAS for every image. Setting A: attention
/// heatmaps for every image; ranked objects and RelQAS for the secret image
/// only, carried in the unkeyed machine panel.
pub fn build_bundle(
    mode: ExplanationMode,
    setting: Setting,
    image_set: &ImageSet,
    evidence: &RoundEvidence,
    render_version: RenderVersion,
) -> Result<ExplanationBundle, ExplainError> {
    let mut bundle = ExplanationBundle::empty(mode, setting);
    if mode.is_none() {
        return Ok(bundle);
    }

    let attention_for = |id: &str| -> Result<Option<AttentionPayload>, ExplainError> {
        let resp = evidence
            .answers
            .get(id)
            .ok_or_else(|| ExplainError::MissingAnswer(id.to_string()))?;
        Ok(AttentionPayload::from_response(resp, render_version))
    };
    let relqas_for = |id: &str| -> Result<Vec<RelQa>, ExplainError> {
        evidence
            .relqas
            .get(id)
            .cloned()
            .ok_or_else(|| ExplainError::MissingRelQa(id.to_string()))
    };

    match setting {
        Setting::B => {
            for id in &image_set.member_ids {
                let mut entry = ImageExplanation::default();
                if mode.includes_attention() {
                    entry.attention = attention_for(id)?;
                }
                if mode.includes_relqas() {
                    entry.relqas = Some(relqas_for(id)?);
                }
                bundle.per_image.insert(id.clone(), entry);
            }
        }
        Setting::A => {
            if mode.includes_attention() {
                for id in &image_set.member_ids {
                    let entry = ImageExplanation {
                        attention: attention_for(id)?,
                        relqas: None,
                    };
                    bundle.per_image.insert(id.clone(), entry);
                }
            }
            let panel = MachinePanel {
                objects: if mode.includes_attention() {
                    evidence.ranked_objects.clone()
                } else {
                    None
                },
                relqas: if mode.includes_relqas() {
                    Some(relqas_for(&image_set.secret_id)?)
                } else {
                    None
                },
            };
            if panel.objects.is_some() || panel.relqas.is_some() {
                bundle.machine_panel = Some(panel);
            }
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answerer::ResponseMeta;
    use crate::catalog::DistanceBand;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_vectors(
            2,
            vec![
                ("clock", vec![1.0, 0.0]),
                ("time", vec![0.6, 0.8]),
                ("dog", vec![0.0, 1.0]),
                ("cat", vec![0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn importance_divides_similarity_by_confidence() {
        let t = table();
        // sim(clock, time) = 0.6
        let s = importance_score(&t, "clock", "time", 0.3).unwrap();
        assert!((s - 2.0).abs() < 1e-6);
        assert_eq!(importance_score(&t, "clock", "dog", 0.7).unwrap(), 0.0);
    }

    #[test]
    fn importance_rejects_degenerate_confidence() {
        let t = table();
        for p in [0.0, -0.2, f64::NAN, 1.5] {
            assert!(matches!(
                importance_score(&t, "clock", "time", p),
                Err(ExplainError::DegenerateConfidence { .. })
            ));
        }
    }

    fn det(label: &str, confidence: f64) -> Detection {
        Detection {
            label: label.into(),
            confidence,
        }
    }

    #[test]
    fn single_detection_ranks_first() {
        let r = rank_objects(&table(), &[det("clock", 0.5)], "time", 3, false, None).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].label, "clock");
    }

    #[test]
    fn equal_scores_break_by_label() {
        let r = rank_objects(&table(), &[det("dog", 0.5), det("cat", 0.5)], "dog", 2, false, None)
            .unwrap();
        assert_eq!(r[0].label, "cat");
        assert_eq!(r[1].label, "dog");
    }

    #[test]
    fn object_attention_skips_importance() {
        // confidence 0 would be degenerate for importance scoring
        let dets = [det("clock", 0.0), det("dog", 0.0)];
        let r = rank_objects(&table(), &dets, "time", 2, true, Some(&[0.2, 0.8])).unwrap();
        assert_eq!(r[0].label, "dog");
        assert!(matches!(
            rank_objects(&table(), &dets, "time", 2, true, None),
            Err(ExplainError::MissingAttentionWeights(_))
        ));
    }

    #[test]
    fn no_detections() {
        assert!(matches!(
            rank_objects(&table(), &[], "time", 2, false, None),
            Err(ExplainError::NoDetections)
        ));
    }

    fn bank(questions: &[(&str, &str)]) -> QuestionBank {
        QuestionBank::new(
            questions
                .iter()
                .map(|(q, a)| BankEntry {
                    question: q.to_string(),
                    answer: a.to_string(),
                    image_id: None,
                })
                .collect(),
        )
    }

    #[test]
    fn exact_match_ranks_first() {
        let b = bank(&[("time clock", "clock"), ("is there a dog?", "no"), ("clock", "clock")]);
        let r = select_related_questions(&table(), "Is there a dog", &b, 2).unwrap();
        assert_eq!(r[0].index, 1);
        assert!(r[0].exact_match);
    }

    #[test]
    fn bank_errors() {
        let t = table();
        assert!(matches!(
            select_related_questions(&t, "clock", &QuestionBank::default(), 1),
            Err(ExplainError::EmptyBank)
        ));
        let b = bank(&[("clock", "yes")]);
        assert!(matches!(select_related_questions(&t, "clock", &b, 0), Err(ExplainError::InvalidCount)));
        assert!(matches!(
            select_related_questions(&t, "clock", &b, 2),
            Err(ExplainError::InsufficientBank { k: 2, size: 1 })
        ));
    }

    fn image_set(n: usize) -> ImageSet {
        ImageSet {
            secret_id: "img2".into(),
            member_ids: (0..n).map(|i| format!("img{i}")).collect(),
            difficulty: 0.1,
            band: DistanceBand::new(0.0, 1.0),
            widenings: 0,
        }
    }

    fn evidence(set: &ImageSet) -> RoundEvidence {
        let resp = AnswerResponse {
            answer: "yes".into(),
            confidence: 0.9,
            in_vocabulary: true,
            spatial_attention: Some(AttentionGrid::uniform()),
            object_attentions: Some(vec![]),
            detections: vec![],
            unsupported: vec![],
            meta: ResponseMeta::default(),
        };
        let rq = vec![
            RelQa {
                question: "q".into(),
                answer: "a".into(),
                relevance: 0.5,
            };
            DEFAULT_RELQA_COUNT
        ];
        RoundEvidence {
            answers: set.member_ids.iter().map(|id| (id.clone(), resp.clone())).collect(),
            relqas: set.member_ids.iter().map(|id| (id.clone(), rq.clone())).collect(),
            ranked_objects: Some(vec![RankedObject {
                label: "clock".into(),
                score: 1.0,
            }]),
        }
    }

    #[test]
    fn none_mode_is_empty() {
        let set = image_set(5);
        let b = build_bundle(ExplanationMode::None, Setting::B, &set, &evidence(&set), RenderVersion::V2)
            .unwrap();
        assert!(b.per_image.is_empty() && b.machine_panel.is_none());
    }

    #[test]
    fn setting_b_both_covers_every_image() {
        let set = image_set(5);
        let b = build_bundle(ExplanationMode::Both, Setting::B, &set, &evidence(&set), RenderVersion::V2)
            .unwrap();
        assert_eq!(b.per_image.len(), 5);
        for e in b.per_image.values() {
            assert!(e.attention.is_some());
            assert_eq!(e.relqas.as_ref().unwrap().len(), 5);
        }
        assert!(b.machine_panel.is_none());
    }

    #[test]
    fn setting_a_keeps_secret_only_evidence_unkeyed() {
        let set = image_set(20);
        let b = build_bundle(ExplanationMode::Both, Setting::A, &set, &evidence(&set), RenderVersion::V2)
            .unwrap();
        assert_eq!(b.per_image.len(), 20);
        assert!(b.per_image.values().all(|e| e.attention.is_some() && e.relqas.is_none()));
        let panel = b.machine_panel.unwrap();
        assert!(panel.objects.is_some());
        assert_eq!(panel.relqas.unwrap().len(), 5);
    }

    #[test]
    fn modes_exclude_each_other() {
        let set = image_set(5);
        for setting in [Setting::A, Setting::B] {
            let att = build_bundle(ExplanationMode::Attention, setting, &set, &evidence(&set), RenderVersion::V2)
                .unwrap();
            assert!(att.has_attention() && !att.has_relqas());
            let rel = build_bundle(ExplanationMode::RelQas, setting, &set, &evidence(&set), RenderVersion::V2)
                .unwrap();
            assert!(rel.has_relqas() && !rel.has_attention() && !rel.has_objects());
        }
    }

    #[test]
    fn missing_answer_is_reported() {
        let set = image_set(5);
        let mut ev = evidence(&set);
        ev.answers.remove("img3");
        let err = build_bundle(ExplanationMode::Attention, Setting::B, &set, &ev, RenderVersion::V2)
            .unwrap_err();
        assert!(matches!(err, ExplainError::MissingAnswer(id) if id == "img3"));
    }

    #[test]
    fn mode_round_trips_through_strings() {
        for m in ExplanationMode::ALL {
            assert_eq!(m.as_str().parse::<ExplanationMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
    }
}
