use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::answerer::ExplanationQuality;
use crate::engine::GameLogRecord;

/// In-game helpfulness judgment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum HelpfulnessLevel {
    Misleading = 1,
    NotMuch = 2,
    Somewhat = 3,
    MostlyGood = 4,
    Excellent = 5,
}

/// Independent judgment of whether an explanation is on point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum CorrectnessLevel {
    Wrong = 1,
    SomewhatOff = 2,
    Indifferent = 3,
    MostlyOnPoint = 4,
    Excellent = 5,
}

/// Independent judgment of an answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerAccuracyLevel {
    Wrong,
    Somewhat,
    Correct,
}

impl HelpfulnessLevel {
    pub const ALL: [HelpfulnessLevel; 5] = [
        HelpfulnessLevel::Misleading,
        HelpfulnessLevel::NotMuch,
        HelpfulnessLevel::Somewhat,
        HelpfulnessLevel::MostlyGood,
        HelpfulnessLevel::Excellent,
    ];

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            HelpfulnessLevel::Misleading => "Misleading",
            HelpfulnessLevel::NotMuch => "Not Much",
            HelpfulnessLevel::Somewhat => "Somewhat",
            HelpfulnessLevel::MostlyGood => "Mostly Good",
            HelpfulnessLevel::Excellent => "Excellent",
        }
    }
}

impl CorrectnessLevel {
    pub const ALL: [CorrectnessLevel; 5] = [
        CorrectnessLevel::Wrong,
        CorrectnessLevel::SomewhatOff,
        CorrectnessLevel::Indifferent,
        CorrectnessLevel::MostlyOnPoint,
        CorrectnessLevel::Excellent,
    ];

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }
}

impl AnswerAccuracyLevel {
    pub fn value(self) -> f64 {
        match self {
            AnswerAccuracyLevel::Wrong => 0.0,
            AnswerAccuracyLevel::Somewhat => 0.5,
            AnswerAccuracyLevel::Correct => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    /// Explanation correctness, levels 1-5.
    Correctness,
    /// Answer accuracy, levels 0, 0.5, 1.
    AnswerAccuracy,
}

/// One rater's judgment of one round, a line of a ratings JSONL file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalRating {
    pub game_id: String,
    pub round: u32,
    pub rater_id: String,
    pub scale: RatingScale,
    pub level: f64,
}

impl ExternalRating {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let ok = match self.scale {
            RatingScale::Correctness => {
                self.level.fract() == 0.0 && (1.0..=5.0).contains(&self.level)
            }
            RatingScale::AnswerAccuracy => [0.0, 0.5, 1.0].contains(&self.level),
        };
        if ok {
            Ok(())
        } else {
            Err(AnalyticsError::OffScale {
                scale: self.scale,
                level: self.level,
            })
        }
    }
}

pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<ExternalRating>, AnalyticsError> {
    let path = path.as_ref();
    let err = |message: String| AnalyticsError::RatingsIo {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ExternalRating =
            serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_ratings(path: impl AsRef<Path>, ratings: &[ExternalRating]) -> Result<(), AnalyticsError> {
    let path = path.as_ref();
    let err = |e: std::io::Error| AnalyticsError::RatingsIo {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut f = File::create(path).map_err(err)?;
    for r in ratings {
        let mut line = serde_json::to_vec(r).expect("ratings serialize");
        line.push(b'\n');
        f.write_all(&line).map_err(err)?;
    }
    Ok(())
}

/// Ratings derived from the ground truth simulation backends record: one
/// answer-accuracy rating per round with a known answer, and one correctness
/// rating per shown explanation with a known quality (4 on point, 2 off).
pub fn simulated_ratings(logs: &[GameLogRecord]) -> (Vec<ExternalRating>, Vec<ExternalRating>) {
    let (mut answers, mut expls) = (Vec::new(), Vec::new());
    for l in logs {
        for r in &l.rounds {
            let rating = |scale, level| ExternalRating {
                game_id: l.game_id.clone(),
                round: r.index,
                rater_id: SIMULATED_RATER.into(),
                scale,
                level,
            };
            if let Some(c) = r.answer_correct {
                let level = if c { AnswerAccuracyLevel::Correct } else { AnswerAccuracyLevel::Wrong };
                answers.push(rating(RatingScale::AnswerAccuracy, level.value()));
            }
            if let (true, Some(q)) = (r.explanation_shown, r.explanation_quality) {
                let level = match q {
                    ExplanationQuality::OnPoint => CorrectnessLevel::MostlyOnPoint,
                    ExplanationQuality::Off => CorrectnessLevel::SomewhatOff,
                };
                expls.push(rating(RatingScale::Correctness, f64::from(level as u8)));
            }
        }
    }
    (answers, expls)
}

/// Rater id used by [`simulated_ratings`].
pub const SIMULATED_RATER: &str = "simulated";
