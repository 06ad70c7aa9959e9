//! Game sessions.
//!
//! An [`Engine`] owns the shared assets (catalog, embeddings, question bank)
//! and the answer backend. A [`GameSession`] is a plain value driven through
//! `AwaitingQuestion -> [AwaitingRating ->] ... -> Finished`; callers that
//! share a session across threads must serialize access to it.

mod log;
mod plan;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answerer::{
    AnswerBackend, AnswerError, AnswerRequest, AnswerResponse, ExplanationQuality, Purpose,
    RequestContext,
};
use crate::catalog::synth::{generate_pool, SynthParams};
use crate::catalog::{select_image_set, Catalog, CatalogError, DistanceBand, ImageSet};
use crate::embeddings::EmbeddingTable;
use crate::explain::{
    build_bundle, rank_objects, select_related_questions, ExplainError, ExplanationBundle,
    ExplanationMode, QuestionBank, RelQa, RenderVersion, RoundEvidence, Setting,
    DEFAULT_OBJECT_COUNT, DEFAULT_RELQA_COUNT,
};
use crate::text::tokenize;

pub use log::{
    canonical_bytes, read_logs, replay_digest, write_logs, GameLogRecord, LogError,
    LOG_SCHEMA_VERSION,
};
pub use plan::{assign_worker_plan, PlanRegistry, WorkerPlan, GAMES_PER_BLOCK};

pub const DEFAULT_P0: u32 = 10;
pub const QUESTION_COST: u32 = 1;
pub const EXPLANATION_COST: u32 = 2;

pub const SETTING_A_IMAGES: usize = 20;
pub const SETTING_B_IMAGES: usize = 5;
pub const SETTING_A_BAND: DistanceBand = DistanceBand::new(0.2, 0.6);
pub const SETTING_B_BAND: DistanceBand = DistanceBand::new(0.05, 0.35);

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Backend(#[from] AnswerError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("session is {actual:?}, expected {expected:?}")]
    WrongState {
        expected: SessionState,
        actual: SessionState,
    },
    #[error("session already finished")]
    Finished,
    #[error("question cap of {0} reached")]
    QuestionCap(u32),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("rating {0} outside {MIN_RATING}..={MAX_RATING}")]
    RatingOutOfRange(u8),
    #[error("image {0:?} is not in this game's image set")]
    ForeignImage(String),
    #[error("session is not finished")]
    NotFinished,
    #[error("worker {worker:?} is assigned to {existing:?}, not {requested:?}")]
    PlanConflict {
        worker: String,
        existing: ExplanationMode,
        requested: ExplanationMode,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub setting: Setting,
    pub n_images: usize,
    pub band: DistanceBand,
    pub p0: u32,
    pub question_cost: u32,
    /// Charged per explanation request in Setting A; ignored in Setting B.
    pub explanation_cost: u32,
    pub explanation_mode: ExplanationMode,
    pub max_questions: u32,
    pub seed: u64,
    #[serde(default)]
    pub render_version: RenderVersion,
    #[serde(default = "default_relqa_count")]
    pub relqa_count: usize,
    /// Rank the secret's objects by object attention instead of importance.
    #[serde(default)]
    pub use_object_attention: bool,
}

fn default_relqa_count() -> usize {
    DEFAULT_RELQA_COUNT
}

impl GameConfig {
    pub fn new(setting: Setting, explanation_mode: ExplanationMode, seed: u64) -> Self {
        let (n_images, band) = match setting {
            Setting::A => (SETTING_A_IMAGES, SETTING_A_BAND),
            Setting::B => (SETTING_B_IMAGES, SETTING_B_BAND),
        };
        GameConfig {
            setting,
            n_images,
            band,
            p0: DEFAULT_P0,
            question_cost: QUESTION_COST,
            explanation_cost: EXPLANATION_COST,
            explanation_mode,
            max_questions: DEFAULT_P0 - 1,
            seed,
            render_version: RenderVersion::default(),
            relqa_count: DEFAULT_RELQA_COUNT,
            use_object_attention: false,
        }
    }

    pub fn setting_a(mode: ExplanationMode, seed: u64) -> Self {
        Self::new(Setting::A, mode, seed)
    }

    pub fn setting_b(mode: ExplanationMode, seed: u64) -> Self {
        Self::new(Setting::B, mode, seed)
    }

    /// Set `P0` and reset the question cap to `P0 - 1`.
    pub fn with_p0(mut self, p0: u32) -> Self {
        self.p0 = p0;
        self.max_questions = p0.saturating_sub(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Points charged for a round.
    pub fn round_cost(&self, explanation_requested: bool) -> u32 {
        match (self.setting, explanation_requested) {
            (Setting::A, true) => self.question_cost + self.explanation_cost,
            _ => self.question_cost,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.p0 < 1 {
            return Err(EngineError::InvalidConfig("p0 must be at least 1".into()));
        }
        if self.n_images < 2 {
            return Err(EngineError::InvalidConfig("n_images must be at least 2".into()));
        }
        if self.relqa_count == 0 && self.explanation_mode.includes_relqas() {
            return Err(EngineError::InvalidConfig("relqa_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingQuestion,
    AwaitingRating,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Won,
    Lost,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub uri: String,
}

/// One question and everything the game did with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaRound {
    pub index: u32,
    pub question: String,
    /// The machine's answer about the secret image.
    pub answer: String,
    pub confidence: f64,
    pub in_vocabulary: bool,
    /// The player paid for explanations (Setting A).
    pub explanation_requested: bool,
    pub explanation_shown: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<ExplanationBundle>,
    pub points_charged: u32,
    /// Backend ground truth, when it reports one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_quality: Option<ExplanationQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpfulness_rating: Option<u8>,
    pub timestamp_ms: u64,
}

/// What the player sees after asking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub round: u32,
    pub question: String,
    pub answer: String,
    pub confidence: f64,
    pub in_vocabulary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanations: Option<ExplanationBundle>,
    pub points_spent: u32,
    pub points_remaining: i64,
    pub state: SessionState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeView {
    pub outcome: Outcome,
    pub score: u32,
    pub guessed_id: String,
    pub secret_id: String,
    pub points_spent: u32,
}

/// Player-facing state. `secret_id` is filled only once the game is over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub setting: Setting,
    pub explanation_mode: ExplanationMode,
    pub images: Vec<ImageRef>,
    pub points_spent: u32,
    pub points_remaining: i64,
    pub questions_remaining: u32,
    pub state: SessionState,
    pub rounds: Vec<RoundView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSession {
    session_id: String,
    config: GameConfig,
    image_set: ImageSet,
    images: Vec<ImageRef>,
    rounds: Vec<QaRound>,
    points_spent: u32,
    state: SessionState,
    guess: Option<String>,
    outcome: Option<Outcome>,
    final_score: Option<u32>,
    started_ms: u64,
    finished_ms: Option<u64>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl GameSession {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state == SessionState::Finished
    }

    pub fn images(&self) -> &[ImageRef] {
        &self.images
    }

    pub fn member_ids(&self) -> &[String] {
        &self.image_set.member_ids
    }

    /// The full image set, secret included. Not for player-facing output.
    pub fn image_set(&self) -> &ImageSet {
        &self.image_set
    }

    pub fn rounds(&self) -> &[QaRound] {
        &self.rounds
    }

    pub fn points_spent(&self) -> u32 {
        self.points_spent
    }

    pub fn points_remaining(&self) -> i64 {
        i64::from(self.config.p0) - i64::from(self.points_spent)
    }

    pub fn questions_remaining(&self) -> u32 {
        self.config.max_questions.saturating_sub(self.rounds.len() as u32)
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn final_score(&self) -> Option<u32> {
        self.final_score
    }

    fn round_view(&self, r: &QaRound) -> RoundView {
        let spent: u32 = self.rounds[..=r.index as usize]
            .iter()
            .map(|x| x.points_charged)
            .sum();
        RoundView {
            round: r.index,
            question: r.question.clone(),
            answer: r.answer.clone(),
            confidence: r.confidence,
            in_vocabulary: r.in_vocabulary,
            explanations: r.bundle.clone(),
            points_spent: spent,
            points_remaining: i64::from(self.config.p0) - i64::from(spent),
            state: if r.index as usize + 1 == self.rounds.len() {
                self.state
            } else {
                SessionState::AwaitingQuestion
            },
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            setting: self.config.setting,
            explanation_mode: self.config.explanation_mode,
            images: self.images.clone(),
            points_spent: self.points_spent,
            points_remaining: self.points_remaining(),
            questions_remaining: self.questions_remaining(),
            state: self.state,
            rounds: self.rounds.iter().map(|r| self.round_view(r)).collect(),
            outcome: self.outcome,
            final_score: self.final_score,
            secret_id: self
                .is_finished()
                .then(|| self.image_set.secret_id.clone()),
        }
    }

    fn expect_state(&self, expected: SessionState) -> Result<(), EngineError> {
        match self.state {
            s if s == expected => Ok(()),
            SessionState::Finished => Err(EngineError::Finished),
            actual => Err(EngineError::WrongState { expected, actual }),
        }
    }

    /// Attach a 1-5 helpfulness rating to the round awaiting one.
    pub fn submit_helpfulness_rating(&mut self, level: u8) -> Result<(), EngineError> {
        self.expect_state(SessionState::AwaitingRating)?;
        if !(MIN_RATING..=MAX_RATING).contains(&level) {
            return Err(EngineError::RatingOutOfRange(level));
        }
        let last = self.rounds.last_mut().expect("rating state implies a round");
        last.helpfulness_rating = Some(level);
        self.state = SessionState::AwaitingQuestion;
        Ok(())
    }

    /// Guess the secret. A win needs the right image and `P0 - spent > 0`.
    pub fn guess(&mut self, image_id: &str) -> Result<OutcomeView, EngineError> {
        self.expect_state(SessionState::AwaitingQuestion)?;
        if !self.image_set.contains(image_id) {
            return Err(EngineError::ForeignImage(image_id.to_string()));
        }
        let correct = image_id == self.image_set.secret_id;
        let remaining = self.points_remaining();
        let (outcome, score) = if correct && remaining > 0 {
            (Outcome::Won, remaining as u32)
        } else {
            (Outcome::Lost, 0)
        };
        self.guess = Some(image_id.to_string());
        self.outcome = Some(outcome);
        self.final_score = Some(score);
        self.state = SessionState::Finished;
        self.finished_ms = Some(now_ms());
        Ok(OutcomeView {
            outcome,
            score,
            guessed_id: image_id.to_string(),
            secret_id: self.image_set.secret_id.clone(),
            points_spent: self.points_spent,
        })
    }

    /// The immutable log of a finished game.
    pub fn finalize_log(
        &self,
        worker_id: &str,
        group: ExplanationMode,
        block: u32,
        play_index: u32,
    ) -> Result<GameLogRecord, EngineError> {
        if !self.is_finished() {
            return Err(EngineError::NotFinished);
        }
        Ok(GameLogRecord {
            schema_version: LOG_SCHEMA_VERSION,
            game_id: self.session_id.clone(),
            worker_id: worker_id.to_string(),
            group,
            block,
            play_index,
            setting: self.config.setting,
            explanation_mode: self.config.explanation_mode,
            config: self.config.clone(),
            secret_id: self.image_set.secret_id.clone(),
            image_set: self.image_set.clone(),
            rounds: self.rounds.clone(),
            points_spent: self.points_spent,
            guess: self.guess.clone().expect("finished implies guessed"),
            outcome: self.outcome.expect("finished implies outcome"),
            final_score: self.final_score.expect("finished implies score"),
            started_ms: self.started_ms,
            finished_ms: self.finished_ms.unwrap_or(self.started_ms),
        })
    }
}

/// Catalog, word embeddings and related-question bank shared by all games.
#[derive(Clone)]
pub struct GameAssets {
    pub catalog: Arc<Catalog>,
    pub embeddings: Arc<EmbeddingTable>,
    pub bank: Arc<QuestionBank>,
}

/// Dimension of the random embeddings built for synthetic assets.
pub const SYNTHETIC_EMBEDDING_DIM: usize = 50;

impl GameAssets {
    pub fn new(catalog: Arc<Catalog>, embeddings: Arc<EmbeddingTable>, bank: Arc<QuestionBank>) -> Self {
        GameAssets {
            catalog,
            embeddings,
            bank,
        }
    }

    /// A synthetic pool with its QA annotations as question bank and random
    /// embeddings over every word they use.
    pub fn synthetic(params: &SynthParams) -> Self {
        Self::from_catalog(generate_pool(params), params.seed)
    }

    /// Derive the bank and random embeddings from a catalog's annotations.
    pub fn from_catalog(catalog: Catalog, seed: u64) -> Self {
        let bank = QuestionBank::from_catalog(&catalog);
        let mut words: Vec<String> = Vec::new();
        for r in catalog.records() {
            for (label, _) in r.labels() {
                words.extend(tokenize(label));
            }
            for qa in &r.qa_pairs {
                words.extend(tokenize(&qa.question));
                words.extend(tokenize(&qa.answer));
            }
        }
        words.sort();
        words.dedup();
        let embeddings = EmbeddingTable::random(&words, SYNTHETIC_EMBEDDING_DIM, seed);
        GameAssets {
            catalog: Arc::new(catalog),
            embeddings: Arc::new(embeddings),
            bank: Arc::new(bank),
        }
    }
}

#[derive(Clone)]
pub struct Engine {
    assets: GameAssets,
    backend: Arc<dyn AnswerBackend>,
}

impl Engine {
    pub fn new(assets: GameAssets, backend: Arc<dyn AnswerBackend>) -> Self {
        Engine { assets, backend }
    }

    pub fn assets(&self) -> &GameAssets {
        &self.assets
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.assets.catalog
    }

    pub fn backend(&self) -> &Arc<dyn AnswerBackend> {
        &self.backend
    }

    /// A fresh session over an image set drawn with `config.seed`.
    pub fn start_game(
        &self,
        config: GameConfig,
        session_id: impl Into<String>,
    ) -> Result<GameSession, EngineError> {
        config.validate()?;
        let catalog = &self.assets.catalog;
        let image_set = select_image_set(catalog, None, config.n_images, config.band, config.seed)?;
        let images = image_set
            .member_ids
            .iter()
            .map(|id| {
                let r = catalog.require(id)?;
                Ok(ImageRef {
                    image_id: r.image_id.clone(),
                    uri: r.uri.clone(),
                })
            })
            .collect::<Result<_, CatalogError>>()?;
        Ok(GameSession {
            session_id: session_id.into(),
            config,
            image_set,
            images,
            rounds: Vec::new(),
            points_spent: 0,
            state: SessionState::AwaitingQuestion,
            guess: None,
            outcome: None,
            final_score: None,
            started_ms: now_ms(),
            finished_ms: None,
        })
    }

    /// Ask a question, charging its cost and gathering explanations.
    ///
    /// Setting A answers about the secret only and explains when
    /// `request_explanations` is set (and the mode has any). Setting B queries
    /// every image, always explains when the mode has explanations, and then
    /// waits for a helpfulness rating. Nothing changes if the backend fails.
    pub fn ask_question(
        &self,
        session: &mut GameSession,
        text: &str,
        request_explanations: bool,
    ) -> Result<RoundView, EngineError> {
        session.expect_state(SessionState::AwaitingQuestion)?;
        let cfg = &session.config;
        if session.rounds.len() as u32 >= cfg.max_questions {
            return Err(EngineError::QuestionCap(cfg.max_questions));
        }
        let question = text.trim();
        if question.is_empty() {
            return Err(EngineError::EmptyQuestion);
        }

        let mode = cfg.explanation_mode;
        let setting = cfg.setting;
        let show = !mode.is_none() && (setting == Setting::B || request_explanations);
        let requested = setting == Setting::A && show;
        let round = session.rounds.len() as u32;
        let secret = session.image_set.secret_id.clone();
        let members = session.image_set.member_ids.clone();
        let context = |purpose: Purpose| RequestContext {
            session_id: session.session_id.clone(),
            round,
            image_set: members.clone(),
            purpose,
        };

        let want_attention = show && mode.includes_attention();
        let want_objects = want_attention && setting == Setting::A;
        let targets: Vec<&String> = if setting == Setting::B || want_attention {
            members.iter().collect()
        } else {
            vec![&secret]
        };
        let mut answers: BTreeMap<String, AnswerResponse> = BTreeMap::new();
        for id in targets {
            let req = AnswerRequest {
                question: question.to_string(),
                image_id: id.clone(),
                want_attention,
                want_detections: want_objects && *id == secret,
                context: Some(context(Purpose::Primary)),
            };
            answers.insert(id.clone(), self.backend.answer(&req)?);
        }

        let mut relqas: BTreeMap<String, Vec<RelQa>> = BTreeMap::new();
        let mut secret_related_quality = None;
        if show && mode.includes_relqas() {
            let related = select_related_questions(
                &self.assets.embeddings,
                question,
                &self.assets.bank,
                cfg.relqa_count,
            )?;
            let relqa_targets = match setting {
                Setting::B => members.clone(),
                Setting::A => vec![secret.clone()],
            };
            for id in relqa_targets {
                let mut list = Vec::with_capacity(related.len());
                for (j, rq) in related.iter().enumerate() {
                    let req = AnswerRequest::new(rq.question.clone(), id.clone())
                        .with_context(context(Purpose::Related { index: j as u32 }));
                    let resp = self.backend.answer(&req)?;
                    if id == secret && secret_related_quality.is_none() {
                        secret_related_quality = resp.meta.explanation_quality;
                    }
                    list.push(RelQa {
                        question: rq.question.clone(),
                        answer: resp.answer,
                        relevance: rq.relevance,
                    });
                }
                relqas.insert(id, list);
            }
        }

        let primary = &answers[&secret];
        let ranked_objects = if want_objects {
            let detections: Vec<_> = primary
                .detections
                .iter()
                .filter(|d| d.confidence > 0.0)
                .cloned()
                .collect();
            if detections.is_empty() {
                None
            } else {
                let weights: Option<Vec<f64>> = cfg.use_object_attention.then(|| {
                    let objs = primary.object_attentions.as_deref().unwrap_or_default();
                    detections
                        .iter()
                        .map(|d| {
                            objs.iter()
                                .find(|o| o.label.as_deref() == Some(d.label.as_str()))
                                .map_or(0.0, |o| o.weight)
                        })
                        .collect()
                });
                Some(rank_objects(
                    &self.assets.embeddings,
                    &detections,
                    &primary.answer,
                    DEFAULT_OBJECT_COUNT,
                    cfg.use_object_attention,
                    weights.as_deref(),
                )?)
            }
        } else {
            None
        };

        let bundle = if show {
            let evidence = RoundEvidence {
                answers: answers.clone(),
                relqas,
                ranked_objects,
            };
            Some(build_bundle(
                mode,
                setting,
                &session.image_set,
                &evidence,
                cfg.render_version,
            )?)
        } else {
            None
        };

        let primary = answers.remove(&secret).expect("secret always queried");
        let points_charged = cfg.round_cost(requested);
        let explanation_quality = if show {
            primary.meta.explanation_quality.or(secret_related_quality)
        } else {
            None
        };
        session.rounds.push(QaRound {
            index: round,
            question: question.to_string(),
            answer: primary.answer,
            confidence: primary.confidence,
            in_vocabulary: primary.in_vocabulary,
            explanation_requested: requested,
            explanation_shown: show,
            bundle,
            points_charged,
            answer_correct: primary.meta.answer_correct,
            explanation_quality,
            helpfulness_rating: None,
            timestamp_ms: now_ms(),
        });
        session.points_spent += points_charged;
        if setting == Setting::B && show {
            session.state = SessionState::AwaitingRating;
        }
        let last = session.rounds.last().expect("just pushed");
        Ok(session.round_view(last))
    }

    /// Re-run a logged game's actions and return the resulting log.
    pub fn replay(&self, record: &GameLogRecord) -> Result<GameLogRecord, EngineError> {
        let mut session = self.start_game(record.config.clone(), record.game_id.clone())?;
        for round in &record.rounds {
            self.ask_question(&mut session, &round.question, round.explanation_requested)?;
            if let Some(level) = round.helpfulness_rating {
                session.submit_helpfulness_rating(level)?;
            }
        }
        session.guess(&record.guess)?;
        let mut replayed =
            session.finalize_log(&record.worker_id, record.group, record.block, record.play_index)?;
        replayed.started_ms = record.started_ms;
        replayed.finished_ms = record.finished_ms;
        for (r, orig) in replayed.rounds.iter_mut().zip(&record.rounds) {
            r.timestamp_ms = orig.timestamp_ms;
        }
        Ok(replayed)
    }
}
