use std::sync::Arc;

use super::{
    AnswerBackend, AnswerError, AnswerRequest, AnswerResponse, AnswerVocabulary, AttentionGrid,
    Detection, ExplanationQuality, ObjectAttention, ResponseMeta, GRID_SIZE, MAX_OBJECT_PROPOSALS,
};
use crate::catalog::{Catalog, ImageRecord};
use crate::text::{normalize_question, raw_tokens};

/// Answer given when no rule applies.
pub const FALLBACK_ANSWER: &str = "unknown";

const YES_NO_LEADS: &[&str] = &[
    "is", "are", "does", "do", "can", "was", "were", "has", "have", "could", "will",
];
const BACKGROUND_WEIGHT: f64 = 0.002;
const MATCHED_OBJECT_SHARE: f64 = 0.7;

/// Rule-based stand-in for a VQA network, answering from catalog annotations.
///
/// Rules, in order: an exact stored question-answer pair; yes/no questions by
/// matching object and scene labels against the question; "what" questions
/// with the most confident label the question does not already mention;
/// otherwise [`FALLBACK_ANSWER`] with confidence 0.
pub struct ScriptedBackend {
    catalog: Arc<Catalog>,
    vocabulary: Option<AnswerVocabulary>,
}

impl ScriptedBackend {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        ScriptedBackend {
            catalog,
            vocabulary: None,
        }
    }

    pub fn with_vocabulary(mut self, vocabulary: AnswerVocabulary) -> Self {
        self.vocabulary = Some(vocabulary);
        self
    }

    /// A vocabulary covering every answer this backend can produce on the
    /// catalog, truncated to the cap.
    pub fn derived_vocabulary(catalog: &Catalog) -> AnswerVocabulary {
        let mut tokens = vec!["yes".to_string(), "no".to_string()];
        for rec in catalog.records() {
            tokens.extend(rec.labels().map(|(l, _)| l.to_lowercase()));
            tokens.extend(rec.qa_pairs.iter().map(|qa| qa.answer.to_lowercase()));
        }
        let mut seen = std::collections::HashSet::new();
        tokens.retain(|t| seen.insert(t.clone()));
        tokens.truncate(super::MAX_VOCABULARY);
        AnswerVocabulary::new(tokens).expect("truncated to cap")
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }
}

struct RuleAnswer {
    answer: String,
    confidence: f64,
    /// Index into the record's objects, when the answer points at one.
    focus: Option<String>,
}

fn mentions(tokens: &[String], label: &str) -> bool {
    let label_tokens = raw_tokens(label);
    if label_tokens.is_empty() {
        return false;
    }
    if label_tokens.len() == 1 {
        let l = &label_tokens[0];
        return tokens
            .iter()
            .any(|t| t == l || t.strip_suffix('s') == Some(l.as_str()) || *t == format!("{l}es"));
    }
    tokens.windows(label_tokens.len()).any(|w| w == label_tokens.as_slice())
}

fn rule_answer(record: &ImageRecord, question: &str) -> RuleAnswer {
    let norm = normalize_question(question);
    let tokens = raw_tokens(question);

    if let Some(qa) = record
        .qa_pairs
        .iter()
        .find(|qa| normalize_question(&qa.question) == norm)
    {
        let focus = record
            .labels()
            .find(|(l, _)| mentions(&tokens, l) || l.eq_ignore_ascii_case(&qa.answer))
            .map(|(l, _)| l.to_string());
        return RuleAnswer {
            answer: qa.answer.clone(),
            confidence: 1.0,
            focus,
        };
    }

    let lead = tokens.first().map(String::as_str).unwrap_or_default();
    if YES_NO_LEADS.contains(&lead) {
        let best = record
            .labels()
            .filter(|(l, _)| mentions(&tokens, l))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        return match best {
            Some((label, conf)) => RuleAnswer {
                answer: "yes".into(),
                confidence: conf,
                focus: Some(label.to_string()),
            },
            None => RuleAnswer {
                answer: "no".into(),
                confidence: 1.0,
                focus: None,
            },
        };
    }

    if lead == "what" || lead == "which" {
        let best = record
            .labels()
            .filter(|(l, _)| !mentions(&tokens, l))
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)));
        if let Some((label, conf)) = best {
            return RuleAnswer {
                answer: label.to_lowercase(),
                confidence: conf,
                focus: Some(label.to_string()),
            };
        }
    }

    RuleAnswer {
        answer: FALLBACK_ANSWER.into(),
        confidence: 0.0,
        focus: None,
    }
}

/// Attention mass proportional to each cell's overlap with `bbox`, on top of
/// a small uniform background.
pub(crate) fn grid_over_box(bbox: [f64; 4]) -> AttentionGrid {
    let cell = 1.0 / GRID_SIZE as f64;
    let [x0, y0, x1, y1] = bbox;
    let cells = (0..GRID_SIZE)
        .map(|r| {
            (0..GRID_SIZE)
                .map(|c| {
                    let (cx0, cy0) = (c as f64 * cell, r as f64 * cell);
                    let ox = (x1.min(cx0 + cell) - x0.max(cx0)).max(0.0);
                    let oy = (y1.min(cy0 + cell) - y0.max(cy0)).max(0.0);
                    ox * oy / (cell * cell) + BACKGROUND_WEIGHT
                })
                .collect()
        })
        .collect();
    AttentionGrid::from_weights(cells).expect("nonnegative 14x14")
}

fn object_attentions(record: &ImageRecord, focus: Option<&str>) -> Vec<ObjectAttention> {
    let boxed: Vec<_> = record
        .objects
        .iter()
        .filter_map(|o| o.bbox.map(|b| (o, b)))
        .take(MAX_OBJECT_PROPOSALS)
        .collect();
    if boxed.is_empty() {
        return vec![];
    }
    let focused = focus.and_then(|f| boxed.iter().position(|(o, _)| o.label == f));
    let n = boxed.len() as f64;
    let mut out: Vec<ObjectAttention> = boxed
        .iter()
        .enumerate()
        .map(|(i, (o, b))| {
            let weight = match focused {
                Some(j) if boxed.len() == 1 => {
                    debug_assert_eq!(i, j);
                    1.0
                }
                Some(j) if i == j => MATCHED_OBJECT_SHARE,
                Some(_) => (1.0 - MATCHED_OBJECT_SHARE) / (n - 1.0),
                None => 1.0 / n,
            };
            ObjectAttention {
                mask: *b,
                weight,
                label: Some(o.label.clone()),
            }
        })
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    out
}

impl AnswerBackend for ScriptedBackend {
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, AnswerError> {
        req.validate()?;
        let record = self
            .catalog
            .get(&req.image_id)
            .ok_or_else(|| AnswerError::UnknownImage(req.image_id.clone()))?;
        let rule = rule_answer(record, &req.question);
        let focus_box = rule.focus.as_deref().and_then(|f| {
            record
                .objects
                .iter()
                .find(|o| o.label == f)
                .and_then(|o| o.bbox)
        });

        let spatial_attention = req.want_attention.then(|| match focus_box {
            Some(b) => grid_over_box(b),
            None => AttentionGrid::uniform(),
        });
        let object_attentions = req
            .want_attention
            .then(|| object_attentions(record, rule.focus.as_deref()));
        let detections = if req.want_detections {
            record
                .labels()
                .map(|(label, confidence)| Detection {
                    label: label.to_string(),
                    confidence,
                })
                .collect()
        } else {
            vec![]
        };
        let in_vocabulary = self
            .vocabulary
            .as_ref()
            .is_none_or(|v| v.contains(&rule.answer));

        Ok(AnswerResponse {
            answer: rule.answer,
            confidence: rule.confidence,
            in_vocabulary,
            spatial_attention,
            object_attentions,
            detections,
            unsupported: vec![],
            meta: ResponseMeta {
                answer_correct: Some(true),
                explanation_quality: req.want_attention.then_some(ExplanationQuality::OnPoint),
            },
        })
    }

    fn vocabulary(&self) -> Option<&AnswerVocabulary> {
        self.vocabulary.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{DetectedObject, QaPair, SceneLabel};

    fn catalog() -> Arc<Catalog> {
        let clock_img = ImageRecord {
            image_id: "clock_img".into(),
            uri: "c.jpg".into(),
            fc7: vec![1.0, 0.0],
            objects: vec![
                DetectedObject {
                    label: "clock".into(),
                    confidence: 0.9,
                    bbox: Some([0.0, 0.0, 0.25, 0.25]),
                },
                DetectedObject {
                    label: "traffic light".into(),
                    confidence: 0.6,
                    bbox: Some([0.5, 0.5, 1.0, 1.0]),
                },
            ],
            scenes: vec![SceneLabel {
                label: "street".into(),
                confidence: 0.8,
            }],
            qa_pairs: vec![],
        };
        let qa_img = ImageRecord {
            image_id: "qa_img".into(),
            uri: "q.jpg".into(),
            fc7: vec![0.0, 1.0],
            objects: vec![],
            scenes: vec![],
            qa_pairs: vec![QaPair {
                question: "is there a clock?".into(),
                answer: "no".into(),
            }],
        };
        Arc::new(Catalog::from_records(vec![clock_img, qa_img]).unwrap())
    }

    fn ask(q: &str, img: &str) -> AnswerResponse {
        ScriptedBackend::new(catalog())
            .answer(&AnswerRequest::new(q, img).with_explanations())
            .unwrap()
    }

    #[test]
    fn stored_pair_wins_verbatim() {
        let r = ask("Is there a clock?", "qa_img");
        assert_eq!(r.answer, "no");
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn existence_question_matches_objects() {
        let r = ask("is there a clock", "clock_img");
        assert_eq!(r.answer, "yes");
        assert_eq!(r.confidence, 0.9);
        assert_eq!(ask("are there any clocks?", "clock_img").answer, "yes");
        assert_eq!(ask("is there a traffic light?", "clock_img").answer, "yes");
        assert_eq!(ask("is there a dog?", "clock_img").answer, "no");
        assert_eq!(ask("is this a street?", "clock_img").answer, "yes");
    }

    #[test]
    fn what_question_uses_top_unmentioned_label() {
        assert_eq!(ask("what is in the image?", "clock_img").answer, "clock");
        assert_eq!(ask("what is next to the clock?", "clock_img").answer, "street");
    }

    #[test]
    fn unmatched_question_falls_back() {
        let r = ask("how many people?", "clock_img");
        assert_eq!(r.answer, FALLBACK_ANSWER);
        assert_eq!(r.confidence, 0.0);
    }

    #[test]
    fn unknown_image() {
        let err = ScriptedBackend::new(catalog())
            .answer(&AnswerRequest::new("is there a clock?", "nope"))
            .unwrap_err();
        assert!(matches!(err, AnswerError::UnknownImage(id) if id == "nope"));
    }

    #[test]
    fn attention_concentrates_on_matched_object() {
        let r = ask("is there a clock?", "clock_img");
        r.validate().unwrap();
        let grid = r.spatial_attention.unwrap();
        assert!(grid.is_normalized());
        let (row, col) = grid.argmax();
        assert!(row < 4 && col < 4, "({row}, {col})");
        let objs = r.object_attentions.unwrap();
        assert_eq!(objs[0].label.as_deref(), Some("clock"));
        assert!(objs.windows(2).all(|w| w[0].weight >= w[1].weight));
    }

    #[test]
    fn unmatched_attention_is_uniform() {
        let r = ask("how many people?", "clock_img");
        assert_eq!(r.spatial_attention.unwrap(), AttentionGrid::uniform());
    }

    #[test]
    fn explanations_only_when_requested() {
        let r = ScriptedBackend::new(catalog())
            .answer(&AnswerRequest::new("is there a clock?", "clock_img"))
            .unwrap();
        assert!(r.spatial_attention.is_none() && r.object_attentions.is_none());
        assert!(r.detections.is_empty());
    }

    #[test]
    fn out_of_vocabulary_answers_are_flagged() {
        let backend = ScriptedBackend::new(catalog())
            .with_vocabulary(AnswerVocabulary::new(["yes", "no"]).unwrap());
        let r = backend
            .answer(&AnswerRequest::new("what is in the image?", "clock_img"))
            .unwrap();
        assert_eq!(r.answer, "clock");
        assert!(!r.in_vocabulary);
    }
}
