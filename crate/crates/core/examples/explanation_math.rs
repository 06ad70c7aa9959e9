//! Importance scores, object ranking and related-question selection over a
//! small hand-made embedding table.

use exag::answerer::Detection;
use exag::embeddings::EmbeddingTable;
use exag::explain::{importance_score, rank_objects, select_related_questions, BankEntry, QuestionBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = EmbeddingTable::from_vectors(
        3,
        [
            ("clock", vec![1.0, 0.1, 0.0]),
            ("time", vec![0.9, 0.3, 0.0]),
            ("tower", vec![0.6, 0.0, 0.7]),
            ("dog", vec![0.0, 1.0, 0.2]),
            ("street", vec![0.3, 0.2, 0.9]),
            ("yes", vec![0.5, 0.5, 0.5]),
        ],
    )?;

    println!("S(clock | time, p=0.8) = {:.4}", importance_score(&table, "clock", "time", 0.8)?);

    let detections = vec![
        Detection { label: "clock".into(), confidence: 0.9 },
        Detection { label: "tower".into(), confidence: 0.4 },
        Detection { label: "dog".into(), confidence: 0.7 },
        Detection { label: "street".into(), confidence: 0.8 },
    ];
    for r in rank_objects(&table, &detections, "time", 3, false, None)? {
        println!("object {:<8} {:.4}", r.label, r.score);
    }

    let bank = QuestionBank::new(
        [
            ("what time is on the clock?", "noon"),
            ("is there a dog?", "yes"),
            ("is the street busy?", "yes"),
            ("is there a tower?", "yes"),
            ("what color is the dog?", "brown"),
            ("is there a clock?", "yes"),
        ]
        .into_iter()
        .map(|(q, a)| BankEntry { question: q.into(), answer: a.into(), image_id: None })
        .collect(),
    );
    for r in select_related_questions(&table, "is there a clock?", &bank, 5)? {
        println!("related {:<28} {:<6} {:.4}{}", r.question, r.gt_answer, r.relevance, if r.exact_match { " (exact)" } else { "" });
    }
    Ok(())
}
