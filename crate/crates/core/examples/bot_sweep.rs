//! Explanation-aware against explanation-blind bots as answer accuracy
//! falls. Pass a game count per seed (default 200).
//!
//!     cargo run --release --example bot_sweep -- 500

use exag::catalog::synth::SynthParams;
use exag::engine::GameAssets;
use exag::explain::Setting;
use exag::simplayer::{run_sweep, Cohort, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let games: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let assets = GameAssets::synthetic(&SynthParams::default());
    for coupling in [0.8, 0.0] {
        let spec = SweepSpec {
            setting: Setting::B,
            accuracies: vec![0.3, 0.5, 0.7, 0.9],
            coupling,
            cohorts: vec![Cohort::AWARE_BOTH, Cohort::BLIND_NONE],
            games_per_seed: games,
            seeds: vec![1, 2, 3],
        };
        println!("coupling {coupling}");
        for c in run_sweep(&assets, &spec)? {
            println!("  a={:.1} {:<18} {:>5.1}% ({}/{})", c.accuracy, format!("{:?}/{}", c.cohort.kind, c.cohort.mode.as_str()), 100.0 * c.win_rate(), c.wins, c.games);
        }
    }
    Ok(())
}
