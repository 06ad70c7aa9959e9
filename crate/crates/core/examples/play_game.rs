//! Play one Setting B game by hand against the scripted backend and print
//! what the player sees each round.

use std::sync::Arc;

use exag::answerer::ScriptedBackend;
use exag::catalog::synth::SynthParams;
use exag::engine::{Engine, GameAssets, GameConfig, SessionState};
use exag::explain::ExplanationMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = GameAssets::synthetic(&SynthParams::default());
    let engine = Engine::new(assets.clone(), Arc::new(ScriptedBackend::new(assets.catalog.clone())));
    let mut game = engine.start_game(GameConfig::setting_b(ExplanationMode::Both, 1), "demo")?;
    for img in game.images() {
        println!("image {} ({})", img.image_id, img.uri);
    }

    for q in ["is there a dog?", "is there a car?", "what is in the image?"] {
        let round = engine.ask_question(&mut game, q, false)?;
        println!("\nQ: {}  A: {} ({:.2})  points left {}", round.question, round.answer, round.confidence, round.points_remaining);
        if let Some(bundle) = &round.explanations {
            for (id, expl) in &bundle.per_image {
                let rel: Vec<String> = expl
                    .relqas
                    .iter()
                    .flatten()
                    .take(2)
                    .map(|r| format!("{} {}", r.question, r.answer))
                    .collect();
                println!("  {id}: attention peak {:?}, related: {}", expl.attention.as_ref().map(|a| a.spatial.argmax()), rel.join("; "));
            }
        }
        if game.state() == SessionState::AwaitingRating {
            game.submit_helpfulness_rating(4)?;
        }
    }

    let pick = game.member_ids()[0].clone();
    let outcome = game.guess(&pick)?;
    println!("\nguessed {}: {:?}, score {}, secret was {}", pick, outcome.outcome, outcome.score, outcome.secret_id);
    Ok(())
}
