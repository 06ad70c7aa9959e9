//! Reports over game logs and rating files.
//!
//! Every function here is pure: the same logs and ratings always give the
//! same numbers. Proportions keep their integer counts; percentages are for
//! display only.

mod ratings;
pub mod replica;
mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::catalog::{set_difficulty, Catalog, CatalogError};
use crate::engine::GameLogRecord;
use crate::explain::ExplanationMode;

pub use ratings::{
    read_ratings, simulated_ratings, write_ratings, AnswerAccuracyLevel, CorrectnessLevel, ExternalRating,
    HelpfulnessLevel, RatingScale, SIMULATED_RATER,
};
pub use report::{table1_report, table2_report, Table1Report, Table2Cell, Table2Report, Table2Row};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no games match {0}")]
    EmptySelection(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("empty rating list")]
    EmptyRatings,
    #[error("rating {level} is not on the {scale:?} scale")]
    OffScale { scale: RatingScale, level: f64 },
    #[error("need at least {needed} games, have {have}")]
    TooFewGames { needed: usize, have: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two points")]
    TooShort,
    #[error("zero variance; correlation undefined")]
    ZeroVariance,
    #[error("rating for unknown game {0:?}")]
    MissingJoin(String),
    #[error("group {0:?} has no baseline block")]
    MissingBaseline(ExplanationMode),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("ratings file {path}: {message}")]
    RatingsIo { path: String, message: String },
}

/// `k` successes out of `n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Proportion {
    pub k: u64,
    pub n: u64,
}

impl Proportion {
    pub fn new(k: u64, n: u64) -> Self {
        Proportion { k, n }
    }

    /// `None` when `n` is zero.
    pub fn value(&self) -> Option<f64> {
        (self.n > 0).then(|| self.k as f64 / self.n as f64)
    }

    pub fn percent(&self) -> Option<f64> {
        self.value().map(|v| 100.0 * v)
    }

    fn add(&mut self, hit: bool) {
        self.n += 1;
        self.k += u64::from(hit);
    }
}

impl std::fmt::Display for Proportion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.percent() {
            Some(p) => write!(f, "{}/{} = {p:.2}%", self.k, self.n),
            None => write!(f, "0/0 = n/a"),
        }
    }
}

/// Wins among the games selected by `filter`.
pub fn win_rate(
    logs: &[GameLogRecord],
    filter: impl Fn(&GameLogRecord) -> bool,
) -> Result<Proportion, AnalyticsError> {
    let mut p = Proportion::default();
    for l in logs.iter().filter(|l| filter(l)) {
        p.add(l.won());
    }
    if p.n == 0 {
        return Err(AnalyticsError::EmptySelection("win-rate filter".into()));
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_two_tailed: f64,
    /// Pooled proportion was 0 or 1; `z = 0`, `p = 1` by convention.
    pub degenerate: bool,
}

/// Pooled two-proportion z-test with a two-tailed p-value.
pub fn two_proportion_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, AnalyticsError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(AnalyticsError::InvalidCounts(format!("({k1}/{n1}) vs ({k2}/{n2})")));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(ZTest {
            z: 0.0,
            p_two_tailed: 1.0,
            degenerate: true,
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    let normal = Normal::standard();
    let p = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok(ZTest {
        z,
        p_two_tailed: p,
        degenerate: false,
    })
}

/// Nearest level to `mean`, halves rounding up.
pub fn bin_mean(mean: f64) -> u8 {
    (mean + 0.5).floor().clamp(1.0, 5.0) as u8
}

/// Average a game's ratings and bin to the nearest level, halves up.
pub fn bin_game_rating(ratings: &[u8]) -> Result<u8, AnalyticsError> {
    if ratings.is_empty() {
        return Err(AnalyticsError::EmptyRatings);
    }
    let mean = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64;
    Ok(bin_mean(mean))
}

/// Pearson correlation coefficient.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooShort);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Share of games using explanations at least once, per consecutive
/// segment of `logs` (taken in the given order). Segment `i` covers
/// `[i*n/segments, (i+1)*n/segments)`.
pub fn adoption_curve(logs: &[GameLogRecord], segments: usize) -> Result<Vec<Proportion>, AnalyticsError> {
    let n = logs.len();
    let needed = segments.max(2);
    if n < needed {
        return Err(AnalyticsError::TooFewGames { needed, have: n });
    }
    Ok((0..segments)
        .map(|i| {
            let mut p = Proportion::default();
            for l in &logs[i * n / segments..(i + 1) * n / segments] {
                p.add(l.used_explanations());
            }
            p
        })
        .collect())
}

/// Sort logs into play order: start time, then worker and play index.
pub fn sort_by_play_time(logs: &mut [GameLogRecord]) {
    logs.sort_by(|a, b| {
        a.started_ms
            .cmp(&b.started_ms)
            .then_with(|| a.worker_id.cmp(&b.worker_id))
            .then_with(|| a.play_index.cmp(&b.play_index))
    });
}

/// Which per-game rating the bins are built from.
#[derive(Clone, Copy, Debug)]
pub enum RatingSource<'a> {
    /// In-game helpfulness ratings.
    Helpfulness,
    /// Independent correctness ratings (mean over raters per round, then
    /// over rounds).
    Correctness(&'a [ExternalRating]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingBinRow {
    pub group: ExplanationMode,
    /// `None` for the group's baseline block.
    pub bin: Option<u8>,
    pub wins: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingBinTable {
    pub rows: Vec<RatingBinRow>,
}

impl RatingBinTable {
    pub fn get(&self, group: ExplanationMode, bin: Option<u8>) -> Option<&RatingBinRow> {
        self.rows.iter().find(|r| r.group == group && r.bin == bin)
    }
}

fn round_means(
    ratings: &[ExternalRating],
    scale: RatingScale,
    known: &HashMap<&str, &GameLogRecord>,
) -> Result<BTreeMap<(String, u32), f64>, AnalyticsError> {
    let mut sums: BTreeMap<(String, u32), (f64, u32)> = BTreeMap::new();
    for r in ratings.iter().filter(|r| r.scale == scale) {
        r.validate()?;
        if !known.contains_key(r.game_id.as_str()) {
            return Err(AnalyticsError::MissingJoin(r.game_id.clone()));
        }
        let e = sums.entry((r.game_id.clone(), r.round)).or_default();
        e.0 += r.level;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, c))| (k, s / f64::from(c)))
        .collect())
}

fn game_means(rounds: &BTreeMap<(String, u32), f64>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for ((game, _), m) in rounds {
        let e = acc.entry(game.clone()).or_default();
        e.0 += m;
        e.1 += 1;
    }
    acc.into_iter().map(|(g, (s, c))| (g, s / f64::from(c))).collect()
}

/// Win rate per (group, rating bin) over games played with explanations,
/// plus each group's baseline-block row. All five bins appear for every
/// group, empty ones with `n = 0`.
pub fn winrate_by_rating_bin(
    logs: &[GameLogRecord],
    source: RatingSource<'_>,
) -> Result<RatingBinTable, AnalyticsError> {
    let known: HashMap<&str, &GameLogRecord> = logs.iter().map(|l| (l.game_id.as_str(), l)).collect();
    let correctness = match source {
        RatingSource::Correctness(r) => Some(game_means(&round_means(r, RatingScale::Correctness, &known)?)),
        RatingSource::Helpfulness => None,
    };
    let mut groups: Vec<ExplanationMode> = logs
        .iter()
        .map(|l| l.group)
        .filter(|g| !g.is_none())
        .collect();
    groups.sort();
    groups.dedup();

    let mut rows = Vec::new();
    for group in groups {
        let mut bins: BTreeMap<u8, Proportion> = (1..=5).map(|b| (b, Proportion::default())).collect();
        let mut baseline = Proportion::default();
        for l in logs.iter().filter(|l| l.group == group) {
            if l.block == 0 {
                baseline.add(l.won());
                continue;
            }
            if !l.used_explanations() {
                continue;
            }
            let bin = match &correctness {
                Some(means) => means.get(&l.game_id).map(|m| bin_mean(*m)),
                None => {
                    let hs = l.helpfulness_ratings();
                    (!hs.is_empty()).then(|| bin_game_rating(&hs)).transpose()?
                }
            };
            if let Some(b) = bin {
                bins.get_mut(&b).expect("bins 1..=5").add(l.won());
            }
        }
        rows.push(RatingBinRow {
            group,
            bin: None,
            wins: baseline,
        });
        rows.extend(bins.into_iter().map(|(b, wins)| RatingBinRow {
            group,
            bin: Some(b),
            wins,
        }));
    }
    Ok(RatingBinTable { rows })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanCell {
    pub n: u64,
    /// `None` when `n = 0`.
    pub mean: Option<f64>,
}

impl MeanCell {
    fn from_values(values: &[f64]) -> Self {
        MeanCell {
            n: values.len() as u64,
            mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

/// Mean image-set difficulty by outcome and explanation use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyContrast {
    pub with_expl_win: MeanCell,
    pub with_expl_lose: MeanCell,
    pub without_expl_win: MeanCell,
    pub without_expl_lose: MeanCell,
}

/// Difficulty is recomputed from the catalog for each logged image set.
pub fn difficulty_contrast(logs: &[GameLogRecord], catalog: &Catalog) -> Result<DifficultyContrast, AnalyticsError> {
    let mut cells: [Vec<f64>; 4] = Default::default();
    for l in logs {
        let d = set_difficulty(&l.image_set, catalog)?;
        let idx = match (l.used_explanations(), l.won()) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        cells[idx].push(d);
    }
    Ok(DifficultyContrast {
        with_expl_win: MeanCell::from_values(&cells[0]),
        with_expl_lose: MeanCell::from_values(&cells[1]),
        without_expl_win: MeanCell::from_values(&cells[2]),
        without_expl_lose: MeanCell::from_values(&cells[3]),
    })
}

/// Number of equal-width game-mean answer-accuracy bins over `[0, 1]`.
pub const ACCURACY_BINS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBin {
    pub lo: f64,
    pub hi: f64,
    pub wins: Proportion,
}

/// Win rate against game-mean answer accuracy for two cohorts: games with at
/// least one explanation rated above Indifferent, and games without
/// explanations. A cohort with no games is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyAnswerCurves {
    pub good_explanation: Option<Vec<AccuracyBin>>,
    pub no_explanation: Option<Vec<AccuracyBin>>,
}

fn accuracy_bin(mean: f64) -> usize {
    ((mean * ACCURACY_BINS as f64).floor() as usize).min(ACCURACY_BINS - 1)
}

pub fn noisy_answer_analysis(
    logs: &[GameLogRecord],
    answer_ratings: &[ExternalRating],
    expl_ratings: &[ExternalRating],
) -> Result<NoisyAnswerCurves, AnalyticsError> {
    let known: HashMap<&str, &GameLogRecord> = logs.iter().map(|l| (l.game_id.as_str(), l)).collect();
    let accuracy = game_means(&round_means(answer_ratings, RatingScale::AnswerAccuracy, &known)?);
    let expl_rounds = round_means(expl_ratings, RatingScale::Correctness, &known)?;
    let above_indifferent: std::collections::HashSet<&str> = expl_rounds
        .iter()
        .filter(|(_, m)| **m > f64::from(CorrectnessLevel::Indifferent as u8))
        .map(|((g, _), _)| g.as_str())
        .collect();

    let empty = || -> Vec<AccuracyBin> {
        (0..ACCURACY_BINS)
            .map(|i| AccuracyBin {
                lo: i as f64 / ACCURACY_BINS as f64,
                hi: (i + 1) as f64 / ACCURACY_BINS as f64,
                wins: Proportion::default(),
            })
            .collect()
    };
    let (mut good, mut none) = (empty(), empty());
    let (mut n_good, mut n_none) = (0, 0);
    for l in logs {
        let Some(acc) = accuracy.get(&l.game_id) else {
            continue;
        };
        let b = accuracy_bin(*acc);
        if !l.used_explanations() {
            none[b].wins.add(l.won());
            n_none += 1;
        } else if above_indifferent.contains(l.game_id.as_str()) {
            good[b].wins.add(l.won());
            n_good += 1;
        }
    }
    Ok(NoisyAnswerCurves {
        good_explanation: (n_good > 0).then_some(good),
        no_explanation: (n_none > 0).then_some(none),
    })
}
