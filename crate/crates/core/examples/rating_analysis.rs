//! Simulate explained games against a noisy backend, derive ratings from the
//! logged ground truth, and bin win rates by rating and answer accuracy.

use exag::analytics::{noisy_answer_analysis, simulated_ratings, winrate_by_rating_bin, RatingSource};
use exag::catalog::synth::SynthParams;
use exag::engine::{GameAssets, GameConfig};
use exag::explain::ExplanationMode;
use exag::simplayer::{noisy_engine, run_bot_games, BotPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = GameAssets::synthetic(&SynthParams::default());
    let engine = noisy_engine(&assets, 0.6, 0.8, 4)?;
    // baseline block of the same group: played without explanations
    let mut logs = run_bot_games(&engine, &GameConfig::setting_b(ExplanationMode::None, 4), &BotPolicy::blind(), 150, 4)?;
    for l in &mut logs {
        l.group = ExplanationMode::Both;
    }
    logs.extend(run_bot_games(&engine, &GameConfig::setting_b(ExplanationMode::Both, 5), &BotPolicy::aware(), 300, 5)?);

    let (answers, expls) = simulated_ratings(&logs);
    for (name, source) in [("helpfulness", RatingSource::Helpfulness), ("correctness", RatingSource::Correctness(&expls))] {
        println!("{name}:");
        for row in winrate_by_rating_bin(&logs, source)?.rows {
            let bin = row.bin.map_or("baseline".into(), |b| format!("bin {b}"));
            println!("  {:<6} {bin:<9} {}", row.group.as_str(), row.wins);
        }
    }

    let curves = noisy_answer_analysis(&logs, &answers, &expls)?;
    for (name, bins) in [("good explanation", curves.good_explanation), ("no explanation", curves.no_explanation)] {
        println!("{name}:");
        for b in bins.into_iter().flatten() {
            println!("  accuracy [{:.1}, {:.1}) {}", b.lo, b.hi, b.wins);
        }
    }
    Ok(())
}
