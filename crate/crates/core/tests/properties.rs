use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use exag::analytics::{bin_mean, pearson_corr, two_proportion_ztest};
use exag::answerer::{AttentionGrid, Detection, ScriptedBackend, GRID_SIZE};
use exag::catalog::synth::{SynthParams, OBJECT_LABELS};
use exag::catalog::{cosine_distance, DistanceBand};
use exag::embeddings::EmbeddingTable;
use exag::engine::{Engine, GameAssets, GameConfig, Outcome};
use exag::explain::{
    importance_score, rank_objects, select_related_questions, BankEntry, ExplanationMode, QuestionBank, Setting,
};
use exag::simplayer::{existence_question, update_belief, BeliefState};

fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        let assets = GameAssets::synthetic(&SynthParams::default());
        let backend = Arc::new(ScriptedBackend::new(assets.catalog.clone()));
        Engine::new(assets, backend)
    })
}

fn table() -> EmbeddingTable {
    EmbeddingTable::random(OBJECT_LABELS, 16, 3)
}

#[derive(Clone, Debug)]
enum Action {
    Ask(usize, bool),
    Rate(u8),
    Guess(usize),
    GuessSecret,
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        4 => (0..OBJECT_LABELS.len(), any::<bool>()).prop_map(|(i, e)| Action::Ask(i, e)),
        1 => (0u8..7).prop_map(Action::Rate),
        1 => (0usize..20).prop_map(Action::Guess),
        1 => Just(Action::GuessSecret),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn points_are_conserved(
        setting_a in any::<bool>(),
        mode in 0usize..4,
        p0 in 2u32..16,
        seed in any::<u64>(),
        actions in prop::collection::vec(action(), 1..40),
    ) {
        let setting = if setting_a { Setting::A } else { Setting::B };
        let cfg = GameConfig::new(setting, ExplanationMode::ALL[mode], seed).with_p0(p0);
        let e = engine();
        let mut s = e.start_game(cfg, format!("p-{seed}")).unwrap();
        let secret = s.image_set().secret_id.clone();
        for a in actions {
            let before = s.points_spent();
            let _ = match a {
                Action::Ask(i, x) => e.ask_question(&mut s, &existence_question(OBJECT_LABELS[i]), x).map(|_| ()),
                Action::Rate(l) => s.submit_helpfulness_rating(l),
                Action::Guess(i) => {
                    let id = s.member_ids()[i % s.member_ids().len()].clone();
                    s.guess(&id).map(|_| ())
                }
                Action::GuessSecret => s.guess(&secret).map(|_| ()),
            };
            prop_assert!(s.points_spent() >= before);
            let charged: u32 = s.rounds().iter().map(|r| r.points_charged).sum();
            prop_assert_eq!(charged, s.points_spent());
            prop_assert!((s.rounds().len() as u32) < p0);
            if setting == Setting::B || ExplanationMode::ALL[mode].is_none() {
                prop_assert!(s.rounds().iter().all(|r| r.points_charged == 1));
            }
        }
        if let Some(outcome) = s.outcome() {
            let left = i64::from(p0) - i64::from(s.points_spent());
            let log = s.finalize_log("w", ExplanationMode::None, 0, 0).unwrap();
            let success = log.guess == secret && left > 0;
            prop_assert_eq!(outcome == Outcome::Won, success);
            prop_assert_eq!(i64::from(log.final_score), if success { left } else { 0 });
        }
    }

    #[test]
    fn belief_stays_normalized(
        weights in prop::collection::vec(0.0f64..1.0, 2..25),
        mask in prop::collection::vec(any::<bool>(), 25),
        t in 0.01f64..0.99,
    ) {
        let belief = BeliefState::from_weights(weights.clone()).unwrap_or_else(|| BeliefState::uniform(weights.len()));
        let consistent = &mask[..weights.len()];
        let (post, _) = update_belief(&belief, consistent, t).unwrap();
        prop_assert!(post.is_normalized());
        prop_assert!(post.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn ztest_is_antisymmetric(n1 in 1u64..500, n2 in 1u64..500, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (k1, k2) = ((a * n1 as f64) as u64, (b * n2 as f64) as u64);
        let x = two_proportion_ztest(k1, n1, k2, n2).unwrap();
        let y = two_proportion_ztest(k2, n2, k1, n1).unwrap();
        prop_assert!((x.z + y.z).abs() < 1e-9);
        prop_assert!((x.p_two_tailed - y.p_two_tailed).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.p_two_tailed));
    }

    #[test]
    fn rating_bins_are_monotone(a in 1.0f64..5.0, b in 1.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bin_mean(lo) <= bin_mean(hi));
        prop_assert!((1..=5).contains(&bin_mean(a)));
        prop_assert!((f64::from(bin_mean(a)) - a).abs() <= 0.5);
    }

    #[test]
    fn pearson_is_bounded_and_symmetric(xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let (Ok(r), Ok(s)) = (pearson_corr(&x, &y), pearson_corr(&y, &x)) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - s).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_decreases_with_confidence(i in 0..OBJECT_LABELS.len(), j in 0..OBJECT_LABELS.len(), p in 0.01f64..0.99, dp in 0.001f64..0.5) {
        let t = table();
        let (l, a) = (OBJECT_LABELS[i], OBJECT_LABELS[j]);
        let q = (p + dp).min(1.0);
        let s1 = importance_score(&t, l, a, p).unwrap();
        let s2 = importance_score(&t, l, a, q).unwrap();
        if s1 > 0.0 && q > p {
            prop_assert!(s2 < s1);
        }
    }

    #[test]
    fn ranking_is_a_sorted_prefix(
        picks in prop::collection::vec((0..OBJECT_LABELS.len(), 0.01f64..1.0), 1..12),
        answer in 0..OBJECT_LABELS.len(),
        k in 1usize..8,
    ) {
        let dets: Vec<Detection> = picks.iter().map(|&(i, c)| Detection { label: OBJECT_LABELS[i].into(), confidence: c }).collect();
        let ranked = rank_objects(&table(), &dets, OBJECT_LABELS[answer], k, false, None).unwrap();
        prop_assert_eq!(ranked.len(), k.min(dets.len()));
        prop_assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(ranked.iter().all(|r| dets.iter().any(|d| d.label == r.label)));
    }

    #[test]
    fn related_questions_ignore_bank_order(
        words in prop::collection::vec((0..OBJECT_LABELS.len(), 0..OBJECT_LABELS.len()), 6..15),
        asked in 0..OBJECT_LABELS.len(),
        seed in any::<u64>(),
    ) {
        let entries: Vec<BankEntry> = words
            .iter()
            .map(|&(q, a)| BankEntry { question: format!("is there {}", OBJECT_LABELS[q]), answer: OBJECT_LABELS[a].into(), image_id: None })
            .collect();
        let mut shuffled = entries.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % n as u64) as usize);
        }
        let t = table();
        let q = existence_question(OBJECT_LABELS[asked]);
        let a = select_related_questions(&t, &q, &QuestionBank::new(entries), 5).unwrap();
        let b = select_related_questions(&t, &q, &QuestionBank::new(shuffled), 5).unwrap();
        prop_assert!(a.windows(2).all(|w| (w[0].exact_match && !w[1].exact_match) || w[0].relevance >= w[1].relevance - 1e-12));
        let key = |r: &exag::explain::RelatedQuestion| (r.exact_match, (r.relevance * 1e9).round() as i64);
        prop_assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
    }

    #[test]
    fn attention_grids_normalize(cells in prop::collection::vec(0.0f64..10.0, GRID_SIZE * GRID_SIZE)) {
        let rows: Vec<Vec<f64>> = cells.chunks(GRID_SIZE).map(<[f64]>::to_vec).collect();
        if let Ok(g) = AttentionGrid::from_weights(rows) {
            prop_assert!(g.is_normalized());
            prop_assert!((g.total() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_distance_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 8), b in prop::collection::vec(-5.0f64..5.0, 8)) {
        let d = cosine_distance(&a, &b).unwrap();
        prop_assert!((d - cosine_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn widening_contains_the_band(lo in 0.0f64..1.0, w in 0.0f64..1.0) {
        let b = DistanceBand::new(lo, lo + w);
        let c = b.widened();
        prop_assert!(c.lo <= b.lo && c.hi >= b.hi);
    }
}
