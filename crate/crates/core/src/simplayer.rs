//! Simulated players.
//!
//! Bots keep a Bayesian belief over the image set, ask object-existence
//! questions chosen for expected information gain, and guess once confident.
//! An explanation-aware bot adjusts how much it trusts each answer by the
//! quality of the accompanying explanation; a blind bot trusts every answer
//! the same.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answerer::{AnswerBackend, AnswerError, ExplanationQuality, NoisyBackend, ScriptedBackend};
use crate::catalog::Catalog;
use crate::engine::{
    Engine, EngineError, GameAssets, GameConfig, GameLogRecord, GameSession, SessionState,
};
use crate::explain::{ExplanationMode, Setting};
use crate::rng::{derive_seed, StreamKey};
use crate::text::raw_tokens;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;
const GAIN_EPSILON: f64 = 1e-12;
/// Ceiling on aware bots' boosted trust.
pub const MAX_TRUST: f64 = 0.99;
/// Trust an aware bot gives an answer whose explanation is off.
pub const OFF_TRUST: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid bot policy: {0}")]
    InvalidPolicy(String),
    #[error("trust {0} outside (0, 1)")]
    InvalidTrust(f64),
    #[error("belief has {belief} entries for {images} images")]
    SizeMismatch { belief: usize, images: usize },
    #[error("n_games must be positive")]
    NoGames,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Backend(#[from] AnswerError),
}

/// Probability vector over the candidate images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefState(Vec<f64>);

impl BeliefState {
    pub fn uniform(n: usize) -> Self {
        BeliefState(vec![1.0 / n as f64; n])
    }

    /// Normalize nonnegative weights; `None` if they are all zero.
    pub fn from_weights(weights: Vec<f64>) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return None;
        }
        Some(BeliefState(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Indices tied (within 1e-12) for the largest mass.
    pub fn argmax_set(&self) -> Vec<usize> {
        let m = self.max();
        (0..self.0.len()).filter(|&i| m - self.0[i] <= GAIN_EPSILON).collect()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|p| *p >= 0.0)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|x| **x > 0.0).map(|x| -x * x.log2()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotKind {
    ExplanationBlind,
    ExplanationAware,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BotPolicy {
    pub kind: BotKind,
    /// Trust in answers, `tau`.
    pub base_trust: f64,
    /// Guess once the top belief reaches this.
    pub guess_threshold: f64,
    /// Questions before a forced guess; the game's cap also applies.
    pub question_budget: u32,
    /// Trust boost for on-point explanations, `delta`.
    pub trust_delta: f64,
    /// Pay for explanations in Setting A.
    pub request_explanations: bool,
}

impl BotPolicy {
    pub fn new(kind: BotKind) -> Self {
        BotPolicy {
            kind,
            base_trust: 0.8,
            guess_threshold: 0.9,
            question_budget: u32::MAX,
            trust_delta: 0.15,
            request_explanations: kind == BotKind::ExplanationAware,
        }
    }

    pub fn blind() -> Self {
        Self::new(BotKind::ExplanationBlind)
    }

    pub fn aware() -> Self {
        Self::new(BotKind::ExplanationAware)
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.question_budget = budget;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.base_trust > 0.5 && self.base_trust <= 1.0) {
            return Err(SimError::InvalidPolicy(format!(
                "base trust {} outside (0.5, 1]",
                self.base_trust
            )));
        }
        if !(self.guess_threshold > 0.0 && self.guess_threshold <= 1.0) {
            return Err(SimError::InvalidPolicy(format!(
                "guess threshold {} outside (0, 1]",
                self.guess_threshold
            )));
        }
        if !(self.trust_delta >= 0.0) {
            return Err(SimError::InvalidPolicy("negative trust delta".into()));
        }
        Ok(())
    }

    /// Helpfulness rating given after an explained round.
    pub fn rating_for(&self, quality: Option<ExplanationQuality>) -> u8 {
        match (self.kind, quality) {
            (BotKind::ExplanationAware, Some(ExplanationQuality::OnPoint)) => 5,
            (BotKind::ExplanationAware, Some(ExplanationQuality::Off)) => 1,
            _ => 3,
        }
    }
}

/// Trust `t` used to update on a round's answer. Kept below 1 so a single
/// wrong answer never zeroes the secret's mass.
pub fn effective_trust(policy: &BotPolicy, quality: Option<ExplanationQuality>) -> f64 {
    let tau = policy.base_trust.min(MAX_TRUST);
    match (policy.kind, quality) {
        (BotKind::ExplanationBlind, _) | (BotKind::ExplanationAware, None) => tau,
        (BotKind::ExplanationAware, Some(ExplanationQuality::OnPoint)) => {
            (policy.base_trust + policy.trust_delta).min(MAX_TRUST)
        }
        (BotKind::ExplanationAware, Some(ExplanationQuality::Off)) => OFF_TRUST,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuestionChoice {
    Ask(String),
    ForceGuess,
}

pub fn existence_question(label: &str) -> String {
    format!("is there a {label}?")
}

/// The label of an `is there a ...?` question.
pub fn existence_label(question: &str) -> Option<String> {
    let tokens = raw_tokens(question);
    match tokens.as_slice() {
        [is, there, article, rest @ ..]
            if is == "is" && there == "there" && (article == "a" || article == "an") && !rest.is_empty() =>
        {
            Some(rest.join(" "))
        }
        _ => None,
    }
}

fn has_label(catalog: &Catalog, image_id: &str, label: &str) -> bool {
    catalog.get(image_id).is_some_and(|r| {
        r.labels()
            .any(|(l, _)| raw_tokens(l).join(" ") == label)
    })
}

/// Which images an answer is consistent with. Existence questions are
/// consistent when the answer matches the label's presence; anything else
/// is consistent with every image.
pub fn answer_consistency(
    catalog: &Catalog,
    image_ids: &[String],
    question: &str,
    answer: &str,
) -> Vec<bool> {
    match existence_label(question) {
        Some(label) => {
            let yes = answer.trim().eq_ignore_ascii_case("yes");
            let no = answer.trim().eq_ignore_ascii_case("no");
            image_ids
                .iter()
                .map(|id| {
                    let present = has_label(catalog, id, &label);
                    (yes && present) || (no && !present)
                })
                .collect()
        }
        None => vec![true; image_ids.len()],
    }
}

/// Expected reduction of belief entropy from asking about `consistent`
/// images, when a yes answer is right with probability `t`.
pub fn expected_information_gain(belief: &BeliefState, consistent: &[bool], t: f64) -> f64 {
    let prior = belief.probs();
    let mut expected = 0.0;
    for answer_yes in [true, false] {
        let joint: Vec<f64> = prior
            .iter()
            .zip(consistent)
            .map(|(p, &c)| p * if c == answer_yes { t } else { 1.0 - t })
            .collect();
        let p_ans: f64 = joint.iter().sum();
        if p_ans > 0.0 {
            let post: Vec<f64> = joint.iter().map(|j| j / p_ans).collect();
            expected += p_ans * entropy(&post);
        }
    }
    entropy(prior) - expected
}

/// The unasked existence question with the largest expected information
/// gain, ties to the lexicographically first. The bank is every label present
/// in some member; `ForceGuess` when no unasked question carries information.
pub fn choose_question(
    belief: &BeliefState,
    catalog: &Catalog,
    image_ids: &[String],
    asked: &HashSet<String>,
    trust: f64,
) -> Result<QuestionChoice, SimError> {
    if belief.len() != image_ids.len() {
        return Err(SimError::SizeMismatch {
            belief: belief.len(),
            images: image_ids.len(),
        });
    }
    let labels: BTreeSet<String> = image_ids
        .iter()
        .filter_map(|id| catalog.get(id))
        .flat_map(|r| r.labels().map(|(l, _)| raw_tokens(l).join(" ")).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect();
    let mut questions: Vec<(String, String)> = labels
        .into_iter()
        .map(|l| (existence_question(&l), l))
        .filter(|(q, _)| !asked.contains(q))
        .collect();
    questions.sort();

    let mut best: Option<(f64, String)> = None;
    for (q, label) in questions {
        let consistent: Vec<bool> = image_ids.iter().map(|id| has_label(catalog, id, &label)).collect();
        let gain = expected_information_gain(belief, &consistent, trust);
        if gain > GAIN_EPSILON && best.as_ref().is_none_or(|(g, _)| gain > g + GAIN_EPSILON) {
            best = Some((gain, q));
        }
    }
    Ok(match best {
        Some((_, q)) => QuestionChoice::Ask(q),
        None => QuestionChoice::ForceGuess,
    })
}

/// Bayes update: likelihood `t` for consistent images, `1 - t` otherwise.
/// Returns the posterior and whether it had to be reset to uniform.
pub fn update_belief(
    belief: &BeliefState,
    consistent: &[bool],
    t: f64,
) -> Result<(BeliefState, bool), SimError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(SimError::InvalidTrust(t));
    }
    if belief.len() != consistent.len() {
        return Err(SimError::SizeMismatch {
            belief: belief.len(),
            images: consistent.len(),
        });
    }
    let weights = belief
        .probs()
        .iter()
        .zip(consistent)
        .map(|(p, &c)| p * if c { t } else { 1.0 - t })
        .collect();
    Ok(match BeliefState::from_weights(weights) {
        Some(b) => (b, false),
        None => (BeliefState::uniform(belief.len()), true),
    })
}

/// Play one game to the end and return the finished session.
pub fn play_game(
    engine: &Engine,
    mut session: GameSession,
    policy: &BotPolicy,
    tie_seed: u64,
) -> Result<GameSession, SimError> {
    let catalog = engine.catalog().clone();
    let ids = session.member_ids().to_vec();
    let mut belief = BeliefState::uniform(ids.len());
    let mut asked = HashSet::new();
    let mut asked_count = 0u32;
    while belief.max() < policy.guess_threshold
        && asked_count < policy.question_budget
        && session.questions_remaining() > 0
    {
        let q = match choose_question(&belief, &catalog, &ids, &asked, policy.base_trust)? {
            QuestionChoice::Ask(q) => q,
            QuestionChoice::ForceGuess => break,
        };
        let want = policy.request_explanations && session.config().setting == Setting::A;
        let view = engine.ask_question(&mut session, &q, want)?;
        asked_count += 1;
        let round = session.rounds().last().expect("just asked");
        let quality = round.explanation_shown.then_some(round.explanation_quality).flatten();
        let t = effective_trust(policy, quality);
        // a discarded answer leaves the question open
        if t != OFF_TRUST {
            asked.insert(q.clone());
        }
        let consistent = answer_consistency(&catalog, &ids, &q, &view.answer);
        belief = update_belief(&belief, &consistent, t)?.0;
        if session.state() == SessionState::AwaitingRating {
            session.submit_helpfulness_rating(policy.rating_for(quality))?;
        }
    }
    let mut rng = StreamKey::new(tie_seed).str("bot-guess").rng();
    let pick = *belief.argmax_set().choose(&mut rng).expect("nonempty set");
    session.guess(&ids[pick])?;
    Ok(session)
}

pub fn sim_session_id(seed: u64, index: usize) -> String {
    format!("sim-{seed}-{index}")
}

/// Play `n_games` bot games. Game `i` uses image-set seed
/// `derive_seed(seed, "game", i)` and session id `sim-{seed}-{i}`, so the
/// result does not depend on thread scheduling.
pub fn run_bot_games(
    engine: &Engine,
    config: &GameConfig,
    policy: &BotPolicy,
    n_games: usize,
    seed: u64,
) -> Result<Vec<GameLogRecord>, SimError> {
    if n_games == 0 {
        return Err(SimError::NoGames);
    }
    policy.validate()?;
    let worker = match policy.kind {
        BotKind::ExplanationBlind => "bot-blind",
        BotKind::ExplanationAware => "bot-aware",
    };
    (0..n_games)
        .into_par_iter()
        .map(|i| {
            let game_seed = derive_seed(seed, "game", i as u64);
            let cfg = config.clone().with_seed(game_seed);
            let session = engine.start_game(cfg, sim_session_id(seed, i))?;
            let done = play_game(engine, session, policy, game_seed)?;
            let block = u32::from(!config.explanation_mode.is_none());
            Ok(done.finalize_log(worker, config.explanation_mode, block, i as u32)?)
        })
        .collect()
}

/// Scripted oracle wrapped in a noisy backend.
pub fn noisy_engine(assets: &GameAssets, accuracy: f64, coupling: f64, seed: u64) -> Result<Engine, SimError> {
    let scripted: Arc<dyn AnswerBackend> = Arc::new(ScriptedBackend::new(assets.catalog.clone()));
    let noisy = NoisyBackend::new(scripted, accuracy, coupling, seed)?;
    Ok(Engine::new(assets.clone(), Arc::new(noisy)))
}

/// A bot type paired with the explanation mode it plays under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cohort {
    pub kind: BotKind,
    pub mode: ExplanationMode,
}

impl Cohort {
    pub const AWARE_BOTH: Cohort = Cohort {
        kind: BotKind::ExplanationAware,
        mode: ExplanationMode::Both,
    };
    pub const BLIND_NONE: Cohort = Cohort {
        kind: BotKind::ExplanationBlind,
        mode: ExplanationMode::None,
    };
    pub const BLIND_BOTH: Cohort = Cohort {
        kind: BotKind::ExplanationBlind,
        mode: ExplanationMode::Both,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub setting: Setting,
    pub accuracies: Vec<f64>,
    pub coupling: f64,
    pub cohorts: Vec<Cohort>,
    pub games_per_seed: usize,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub accuracy: f64,
    pub cohort: Cohort,
    pub wins: u64,
    pub games: u64,
}

impl SweepCell {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.games as f64
    }
}

/// Win counts per (accuracy, cohort), pooled over seeds. Each seed drives
/// both the noisy backend and the image sets, and is shared by all cohorts.
pub fn run_sweep(assets: &GameAssets, spec: &SweepSpec) -> Result<Vec<SweepCell>, SimError> {
    let mut cells = Vec::new();
    for &accuracy in &spec.accuracies {
        for &cohort in &spec.cohorts {
            let mut wins = 0u64;
            let mut games = 0u64;
            for &seed in &spec.seeds {
                let engine = noisy_engine(assets, accuracy, spec.coupling, seed)?;
                let config = GameConfig::new(spec.setting, cohort.mode, seed);
                let logs = run_bot_games(&engine, &config, &BotPolicy::new(cohort.kind), spec.games_per_seed, seed)?;
                wins += logs.iter().filter(|l| l.won()).count() as u64;
                games += logs.len() as u64;
            }
            cells.push(SweepCell {
                accuracy,
                cohort,
                wins,
                games,
            });
        }
    }
    Ok(cells)
}
