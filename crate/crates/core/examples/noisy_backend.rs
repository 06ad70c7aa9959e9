//! Wrap the scripted oracle in the noise model and measure how often
//! answers are right and explanations on point.

use std::sync::Arc;

use exag::answerer::{AnswerBackend, AnswerRequest, ExplanationQuality, NoisyBackend, Purpose, RequestContext, ScriptedBackend};
use exag::catalog::synth::{generate_pool, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Arc::new(generate_pool(&SynthParams::default()));
    let scripted: Arc<dyn AnswerBackend> = Arc::new(ScriptedBackend::new(catalog.clone()));
    let ids: Vec<String> = catalog.records().iter().take(5).map(|r| r.image_id.clone()).collect();

    for (accuracy, coupling) in [(0.9, 0.8), (0.5, 0.8), (0.5, 0.0)] {
        let noisy = NoisyBackend::new(scripted.clone(), accuracy, coupling, 1)?;
        let (mut correct, mut on_point, mut agree, n) = (0, 0, 0, 2000);
        for round in 0..n {
            let req = AnswerRequest::new("is there a dog?", ids[round % 5].clone())
                .with_explanations()
                .with_context(RequestContext {
                    session_id: format!("s{}", round / 9),
                    round: (round % 9) as u32,
                    image_set: ids.clone(),
                    purpose: Purpose::Primary,
                });
            let meta = noisy.answer(&req)?.meta;
            let c = meta.answer_correct == Some(true);
            let o = meta.explanation_quality == Some(ExplanationQuality::OnPoint);
            correct += usize::from(c);
            on_point += usize::from(o);
            agree += usize::from(c == o);
        }
        println!(
            "a={accuracy} rho={coupling}: correct {:.3}, on point {:.3}, agreement {:.3}",
            correct as f64 / n as f64,
            on_point as f64 / n as f64,
            agree as f64 / n as f64
        );
    }
    Ok(())
}
