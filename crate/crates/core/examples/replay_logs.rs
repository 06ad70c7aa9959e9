//! Write simulated game logs, read them back and check that each replays to
//! the same canonical bytes.

use exag::catalog::synth::SynthParams;
use exag::engine::{canonical_bytes, read_logs, replay_digest, write_logs, GameAssets, GameConfig};
use exag::explain::ExplanationMode;
use exag::simplayer::{noisy_engine, run_bot_games, BotPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = GameAssets::synthetic(&SynthParams::default());
    let engine = noisy_engine(&assets, 0.7, 0.8, 9)?;
    let logs = run_bot_games(&engine, &GameConfig::setting_a(ExplanationMode::Both, 9), &BotPolicy::aware(), 5, 9)?;

    let path = std::env::temp_dir().join("exag-replay.jsonl");
    write_logs(&path, &logs, false)?;
    for log in read_logs(&path)? {
        let again = engine.replay(&log)?;
        let same = canonical_bytes(&again) == canonical_bytes(&log);
        println!("{} {:?} score {} digest {} replay {}", log.game_id, log.outcome, log.final_score, &replay_digest(&log)[..16], if same { "identical" } else { "DIFFERS" });
    }
    Ok(())
}
