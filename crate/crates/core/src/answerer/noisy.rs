use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{
    AnswerBackend, AnswerError, AnswerRequest, AnswerResponse, AnswerVocabulary, AttentionGrid,
    ExplanationQuality, Purpose, RequestContext, GRID_SIZE,
};
use crate::rng::StreamKey;
use crate::text::normalize_question;

/// Minimum Chebyshev distance, in cells, between the true attention peak and
/// the peak of a deliberately misplaced one.
const OFF_PEAK_DISTANCE: usize = 4;

/// The per-(session, round, image) draw shared by the primary answer and the
/// related-question answers of that image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseDecision {
    pub correct: bool,
    pub quality: ExplanationQuality,
}

/// Wraps a backend, passing its answer through with probability `accuracy`
/// and otherwise substituting a plausible wrong one.
///
/// With probability `coupling` the explanation quality tracks correctness
/// (correct answers get on-point explanations, wrong ones get visibly off
/// explanations); otherwise quality is a fair coin independent of the answer.
/// Off explanations move the spatial attention away from the evidence,
/// reverse the object-attention ranking, and replace related-question answers
/// with wrong ones.
pub struct NoisyBackend {
    inner: Arc<dyn AnswerBackend>,
    accuracy: f64,
    coupling: f64,
    seed: u64,
    fallback_tokens: Vec<String>,
}

impl NoisyBackend {
    pub fn new(
        inner: Arc<dyn AnswerBackend>,
        accuracy: f64,
        coupling: f64,
        seed: u64,
    ) -> Result<Self, AnswerError> {
        for (name, v) in [("accuracy", accuracy), ("coupling", coupling)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AnswerError::Protocol(format!("{name} {v} outside [0, 1]")));
            }
        }
        let fallback_tokens = inner
            .vocabulary()
            .map(|v| v.tokens().to_vec())
            .unwrap_or_else(|| vec!["yes".into(), "no".into()]);
        Ok(NoisyBackend {
            inner,
            accuracy,
            coupling,
            seed,
            fallback_tokens,
        })
    }

    /// Tokens used as wrong answers when no distractor offers one.
    pub fn with_fallback_vocabulary(mut self, vocabulary: &AnswerVocabulary) -> Self {
        self.fallback_tokens = vocabulary.tokens().to_vec();
        self
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    fn key(&self, req: &AnswerRequest) -> StreamKey {
        let key = StreamKey::new(self.seed).str("noisy").str(&req.image_id);
        match &req.context {
            Some(ctx) => key.str(&ctx.session_id).num(u64::from(ctx.round)),
            None => key.str(&normalize_question(&req.question)),
        }
    }

    /// The correctness/quality draw for this request's (session, round, image).
    pub fn decide(&self, req: &AnswerRequest) -> NoiseDecision {
        let mut rng = self.key(req).str("decision").rng();
        // always three draws so the stream layout is independent of the knobs
        let correct = rng.random_bool(self.accuracy);
        let coupled = rng.random_bool(self.coupling);
        let coin = rng.random_bool(0.5);
        let on_point = if coupled { correct } else { coin };
        NoiseDecision {
            correct,
            quality: if on_point {
                ExplanationQuality::OnPoint
            } else {
                ExplanationQuality::Off
            },
        }
    }

    /// A wrong answer: another set member's answer to the same question if one
    /// differs, else a vocabulary token. `None` when nothing differs.
    fn substitute(
        &self,
        req: &AnswerRequest,
        truth: &str,
        rng: &mut impl Rng,
    ) -> Result<Option<String>, AnswerError> {
        let mut candidates: Vec<String> = Vec::new();
        if let Some(ctx) = &req.context {
            for other in ctx.image_set.iter().filter(|m| **m != req.image_id) {
                let probe = AnswerRequest::new(req.question.clone(), other.clone()).with_context(
                    RequestContext {
                        purpose: Purpose::Probe,
                        ..ctx.clone()
                    },
                );
                let a = self.inner.answer(&probe)?.answer;
                if a != truth && !candidates.contains(&a) {
                    candidates.push(a);
                }
            }
        }
        if candidates.is_empty() {
            candidates = self
                .fallback_tokens
                .iter()
                .filter(|t| t.as_str() != truth)
                .cloned()
                .collect();
        }
        candidates.sort();
        Ok(candidates.choose(rng).cloned())
    }
}

/// Spread mass around a cell at least [`OFF_PEAK_DISTANCE`] away from `avoid`.
fn misplaced_grid(avoid: (usize, usize), rng: &mut impl Rng) -> AttentionGrid {
    let far: Vec<(usize, usize)> = (0..GRID_SIZE)
        .flat_map(|r| (0..GRID_SIZE).map(move |c| (r, c)))
        .filter(|(r, c)| r.abs_diff(avoid.0).max(c.abs_diff(avoid.1)) >= OFF_PEAK_DISTANCE)
        .collect();
    let (pr, pc) = *far.choose(rng).expect("14x14 grid always has far cells");
    let cells = (0..GRID_SIZE)
        .map(|r| {
            (0..GRID_SIZE)
                .map(|c| {
                    let d2 = (r as f64 - pr as f64).powi(2) + (c as f64 - pc as f64).powi(2);
                    (-d2 / 2.0).exp()
                })
                .collect()
        })
        .collect();
    AttentionGrid::from_weights(cells).expect("positive weights")
}

impl AnswerBackend for NoisyBackend {
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, AnswerError> {
        let mut resp = self.inner.answer(req)?;
        let purpose = req
            .context
            .as_ref()
            .map(|c| c.purpose.clone())
            .unwrap_or_default();
        if purpose == Purpose::Probe {
            return Ok(resp);
        }
        let decision = self.decide(req);
        let off = decision.quality == ExplanationQuality::Off;
        let inner_correct = resp.meta.answer_correct.unwrap_or(true);

        match purpose {
            Purpose::Primary => {
                if !decision.correct {
                    let mut rng = self.key(req).str("substitute").rng();
                    if let Some(wrong) = self.substitute(req, &resp.answer, &mut rng)? {
                        resp.in_vocabulary = self
                            .inner
                            .vocabulary()
                            .is_none_or(|v| v.contains(&wrong));
                        resp.answer = wrong;
                        resp.meta.answer_correct = Some(false);
                    }
                } else {
                    resp.meta.answer_correct = Some(inner_correct);
                }
                if off {
                    let mut rng = self.key(req).str("misplace").rng();
                    if let Some(grid) = &resp.spatial_attention {
                        resp.spatial_attention = Some(misplaced_grid(grid.argmax(), &mut rng));
                    }
                    if let Some(objs) = resp.object_attentions.as_mut() {
                        let weights: Vec<f64> = objs.iter().rev().map(|o| o.weight).collect();
                        for (o, w) in objs.iter_mut().zip(weights) {
                            o.weight = w;
                        }
                        objs.sort_by(|a, b| b.weight.total_cmp(&a.weight));
                    }
                }
                if req.want_attention || resp.meta.explanation_quality.is_some() {
                    resp.meta.explanation_quality = Some(decision.quality);
                }
            }
            Purpose::Related { index } => {
                if off {
                    let mut rng = self.key(req).str("related").num(u64::from(index)).rng();
                    if let Some(wrong) = self.substitute(req, &resp.answer, &mut rng)? {
                        resp.answer = wrong;
                        resp.meta.answer_correct = Some(false);
                    }
                }
                resp.meta.explanation_quality = Some(decision.quality);
            }
            Purpose::Probe => unreachable!(),
        }
        Ok(resp)
    }

    fn vocabulary(&self) -> Option<&AnswerVocabulary> {
        self.inner.vocabulary()
    }
}
