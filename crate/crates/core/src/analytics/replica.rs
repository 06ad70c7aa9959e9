//! Log sets built to reproduce published aggregate counts exactly.
//!
//! The games are schematic (existence questions, fixed image ids) but every
//! field the reports read is consistent: points spent match the rounds and
//! costs, scores follow the scoring rule, and explanation use matches the
//! rounds' flags.

use crate::catalog::synth::OBJECT_LABELS;
use crate::catalog::{DistanceBand, ImageSet};
use crate::engine::{
    GameConfig, GameLogRecord, Outcome, QaRound, LOG_SCHEMA_VERSION, SETTING_A_BAND, SETTING_B_BAND,
};
use crate::explain::{ExplanationMode, Setting};

/// Starting points used by the Table 2 replica.
pub const TABLE2_P0: u32 = 15;
const BASE_MS: u64 = 1_500_000_000_000;

/// Whether item `i` of `n` is one of `k` evenly spread hits.
fn spread(i: u64, k: u64, n: u64) -> bool {
    (i + 1) * k / n > i * k / n
}

struct GameSpec<'a> {
    game_id: String,
    worker_id: String,
    group: ExplanationMode,
    block: u32,
    play_index: u32,
    config: GameConfig,
    /// (explanation shown, explanation paid for) per round.
    rounds: &'a [(bool, bool)],
    won: bool,
    started_ms: u64,
}

fn image_set(setting: Setting, n: usize) -> ImageSet {
    let band: DistanceBand = match setting {
        Setting::A => SETTING_A_BAND,
        Setting::B => SETTING_B_BAND,
    };
    ImageSet {
        secret_id: "r-0".into(),
        member_ids: (0..n).map(|i| format!("r-{i}")).collect(),
        difficulty: (band.lo + band.hi) / 2.0,
        band,
        widenings: 0,
    }
}

fn build(spec: GameSpec<'_>) -> GameLogRecord {
    let cfg = &spec.config;
    let mut spent = 0;
    let rounds: Vec<QaRound> = spec
        .rounds
        .iter()
        .enumerate()
        .map(|(i, &(shown, paid))| {
            let cost = cfg.round_cost(paid);
            spent += cost;
            QaRound {
                index: i as u32,
                question: format!("is there a {}?", OBJECT_LABELS[i % OBJECT_LABELS.len()]),
                answer: if i % 2 == 0 { "yes" } else { "no" }.into(),
                confidence: 0.9,
                in_vocabulary: true,
                explanation_requested: paid,
                explanation_shown: shown,
                bundle: None,
                points_charged: cost,
                answer_correct: None,
                explanation_quality: None,
                helpfulness_rating: (shown && cfg.setting == Setting::B).then_some(4),
                timestamp_ms: spec.started_ms + 1000 * (i as u64 + 1),
            }
        })
        .collect();
    let set = image_set(cfg.setting, cfg.n_images);
    let remaining = i64::from(cfg.p0) - i64::from(spent);
    assert!(!spec.won || remaining > 0, "replica win needs points left");
    let (guess, outcome, score) = if spec.won {
        (set.secret_id.clone(), Outcome::Won, remaining as u32)
    } else {
        (set.member_ids[1].clone(), Outcome::Lost, 0)
    };
    GameLogRecord {
        schema_version: LOG_SCHEMA_VERSION,
        game_id: spec.game_id,
        worker_id: spec.worker_id,
        group: spec.group,
        block: spec.block,
        play_index: spec.play_index,
        setting: cfg.setting,
        explanation_mode: cfg.explanation_mode,
        config: spec.config.clone(),
        secret_id: set.secret_id.clone(),
        image_set: set,
        rounds,
        points_spent: spent,
        guess,
        outcome,
        final_score: score,
        started_ms: spec.started_ms,
        finished_ms: spec.started_ms + 60_000,
    }
}

/// Setting A pilot: 206 games in play order. 157 use explanations (75 won),
/// 49 do not (14 won); 63 of the first 103 and 94 of the last 103 use them.
pub fn table1_replica() -> Vec<GameLogRecord> {
    const HALF: u64 = 103;
    const USED_BY_HALF: [u64; 2] = [63, 94];
    const USED: (u64, u64) = (157, 75);
    const UNUSED: (u64, u64) = (49, 14);
    let (mut used_i, mut unused_i) = (0u64, 0u64);
    let mut out = Vec::new();
    for half in 0..2u64 {
        for j in 0..HALF {
            let i = half * HALF + j;
            let uses = spread(j, USED_BY_HALF[half as usize], HALF);
            let won = if uses {
                used_i += 1;
                spread(used_i - 1, USED.1, USED.0)
            } else {
                unused_i += 1;
                spread(unused_i - 1, UNUSED.1, UNUSED.0)
            };
            let rounds: &[(bool, bool)] = if uses {
                &[(false, false), (true, true)]
            } else {
                &[(false, false), (false, false)]
            };
            let worker = i / 10;
            out.push(build(GameSpec {
                game_id: format!("pilot-{i:03}"),
                worker_id: format!("pilot-w{worker:02}"),
                group: ExplanationMode::Both,
                block: 0,
                play_index: (i % 10) as u32,
                config: GameConfig::setting_a(ExplanationMode::Both, i),
                rounds,
                won,
                started_ms: BASE_MS + i * 120_000,
            }));
        }
    }
    out
}

/// Counts behind one Table 2 cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellCounts {
    pub games: u64,
    pub wins: u64,
    pub score_sum: u64,
}

/// Per explanation group: (With Expl, No Expl, Group Baseline). Baseline
/// cells hold exactly five games per worker.
pub const TABLE2_COUNTS: [(ExplanationMode, [CellCounts; 3]); 3] = [
    (
        ExplanationMode::Attention,
        [
            CellCounts { games: 198, wins: 132, score_sum: 1233 },
            CellCounts { games: 248, wins: 161, score_sum: 1488 },
            CellCounts { games: 525, wins: 326, score_sum: 2974 },
        ],
    ),
    (
        ExplanationMode::RelQas,
        [
            CellCounts { games: 256, wins: 183, score_sum: 1741 },
            CellCounts { games: 392, wins: 253, score_sum: 2363 },
            CellCounts { games: 605, wins: 396, score_sum: 3645 },
        ],
    ),
    (
        ExplanationMode::Both,
        [
            CellCounts { games: 155, wins: 107, score_sum: 998 },
            CellCounts { games: 234, wins: 148, score_sum: 1364 },
            CellCounts { games: 480, wins: 306, score_sum: 2728 },
        ],
    ),
];

/// Scores for one cell: `wins` positive scores summing to `score_sum`,
/// spread evenly, then losses.
fn cell_outcomes(c: CellCounts) -> Vec<Option<u32>> {
    let base = c.score_sum / c.wins;
    let extra = c.score_sum % c.wins;
    let mut win_no = 0u64;
    (0..c.games)
        .map(|i| {
            spread(i, c.wins, c.games).then(|| {
                let s = base + u64::from(win_no < extra);
                win_no += 1;
                s as u32
            })
        })
        .collect()
}

/// Setting B game logs whose Table 2 cells reproduce [`TABLE2_COUNTS`].
/// Each worker plays a five-game baseline block, then alternating
/// with/without-explanation blocks of up to five games.
pub fn table2_replica() -> Vec<GameLogRecord> {
    let mut out = Vec::new();
    let mut game_no = 0u64;
    for (group, [with, without, baseline]) in TABLE2_COUNTS {
        let workers = baseline.games / 5;
        let tag = group.as_str();
        let mut push = |worker: u64, block: u32, slot: u32, mode: ExplanationMode, score: Option<u32>| {
            let cfg = GameConfig::setting_b(mode, game_no).with_p0(TABLE2_P0);
            // a win scoring s spends p0 - s points; a loss asks five questions
            let n_rounds = match score {
                Some(s) => (TABLE2_P0 - s) as usize,
                None => 5,
            };
            let shown = !mode.is_none();
            let rounds = vec![(shown, false); n_rounds];
            let play_index = block * 5 + slot;
            out.push(build(GameSpec {
                game_id: format!("t2-{tag}-{worker:03}-{play_index:02}"),
                worker_id: format!("t2-{tag}-{worker:03}"),
                group,
                block,
                play_index,
                config: cfg,
                rounds: &rounds,
                won: score.is_some(),
                started_ms: BASE_MS + game_no * 120_000,
            }));
            game_no += 1;
        };
        for (i, score) in cell_outcomes(baseline).into_iter().enumerate() {
            let i = i as u64;
            push(i / 5, 0, (i % 5) as u32, ExplanationMode::None, score);
        }
        // chunk c of a cell goes to worker c % workers as its (c / workers)-th block pair
        for (cell, mode, parity) in [(with, group, 1u32), (without, ExplanationMode::None, 2u32)] {
            for (i, score) in cell_outcomes(cell).into_iter().enumerate() {
                let chunk = i as u64 / 5;
                let worker = chunk % workers;
                let block = parity + 2 * (chunk / workers) as u32;
                push(worker, block, (i % 5) as u32, mode, score);
            }
        }
    }
    out
}
