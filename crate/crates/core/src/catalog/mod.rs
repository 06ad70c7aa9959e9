//! Image pool and difficulty-controlled image-set construction.
//!
//! A [`Catalog`] holds every [`ImageRecord`] of the pool together with its
//! FC7 feature vector. Image sets are built around a secret image by sampling
//! distractors whose feature distance to the secret falls inside a
//! [`DistanceBand`]; narrower, closer bands give harder games.

mod io;
pub mod synth;

use std::collections::HashMap;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamKey;

pub use io::{load_catalog, write_catalog, FeatureFormat};

/// Number of times an under-populated band is widened before giving up.
pub const MAX_BAND_WIDENINGS: u32 = 5;
/// Relative width growth per widening step.
pub const BAND_WIDENING_FACTOR: f64 = 1.1;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} in {path}: {message}")]
    Parse {
        path: PathBuf,
        what: &'static str,
        message: String,
    },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("feature file has {features} rows but manifest lists {records} images")]
    RowCountMismatch { features: usize, records: usize },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
    #[error("confidence {value} for {label:?} on {image_id:?} is outside [0, 1]")]
    InvalidConfidence {
        image_id: String,
        label: String,
        value: f64,
    },
    #[error("pool too sparse: need {needed} distractors, found {available} after widening")]
    PoolTooSparse { needed: usize, available: usize },
    #[error("invalid image-set request: {0}")]
    InvalidRequest(String),
}

/// A detected object: label, detector confidence p(O|I) and optional
/// normalized bounding box `[x0, y0, x1, y1]` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLabel {
    pub label: String,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub uri: String,
    #[serde(skip)]
    pub fc7: Vec<f64>,
    #[serde(default)]
    pub objects: Vec<DetectedObject>,
    #[serde(default)]
    pub scenes: Vec<SceneLabel>,
    #[serde(default)]
    pub qa_pairs: Vec<QaPair>,
}

impl ImageRecord {
    /// Object and scene labels with their confidences, objects first.
    pub fn labels(&self) -> impl Iterator<Item = (&str, f64)> {
        self.objects
            .iter()
            .map(|o| (o.label.as_str(), o.confidence))
            .chain(self.scenes.iter().map(|s| (s.label.as_str(), s.confidence)))
    }
}

/// Immutable image pool. Safe to share across sessions behind an `Arc`.
#[derive(Clone, Debug)]
pub struct Catalog {
    dim: usize,
    records: Vec<ImageRecord>,
    index: HashMap<String, usize>,
}

impl Catalog {
    /// Validate and index a list of records.
    pub fn from_records(records: Vec<ImageRecord>) -> Result<Self, CatalogError> {
        let dim = records.first().map_or(0, |r| r.fc7.len());
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec.fc7.len() != dim {
                return Err(CatalogError::DimensionMismatch {
                    expected: dim,
                    found: rec.fc7.len(),
                });
            }
            for (label, value) in rec.labels() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(CatalogError::InvalidConfidence {
                        image_id: rec.image_id.clone(),
                        label: label.to_string(),
                        value,
                    });
                }
            }
            if index.insert(rec.image_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(rec.image_id.clone()));
            }
        }
        Ok(Catalog { dim, records, index })
    }

    /// Feature dimension shared by every record.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    pub fn require(&self, image_id: &str) -> Result<&ImageRecord, CatalogError> {
        self.get(image_id)
            .ok_or_else(|| CatalogError::UnknownImage(image_id.to_string()))
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.index.contains_key(image_id)
    }
}

/// Cosine distance between two FC7 vectors, `1 - cos(a, b)`, in `[0, 2]`.
///
/// A zero vector is at distance 0 from another zero vector and 1 from
/// anything else.
pub fn fc7_distance(a: &ImageRecord, b: &ImageRecord) -> Result<f64, CatalogError> {
    cosine_distance(&a.fc7, &b.fc7)
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, CatalogError> {
    if a.len() != b.len() {
        return Err(CatalogError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(if na == nb { 0.0 } else { 1.0 });
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Closed distance interval `[lo, hi]` for distractor sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBand {
    pub lo: f64,
    pub hi: f64,
}

impl DistanceBand {
    pub const fn new(lo: f64, hi: f64) -> Self {
        DistanceBand { lo, hi }
    }

    pub fn contains(&self, d: f64) -> bool {
        self.lo <= d && d <= self.hi
    }

    /// Grow the width by [`BAND_WIDENING_FACTOR`] around the same center.
    pub fn widened(&self) -> Self {
        let center = (self.lo + self.hi) / 2.0;
        let half = (self.hi - self.lo) / 2.0 * BAND_WIDENING_FACTOR;
        DistanceBand {
            lo: (center - half).max(0.0),
            hi: center + half,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub secret_id: String,
    /// Display order; a seeded permutation of secret plus distractors.
    pub member_ids: Vec<String>,
    /// Mean distance of the distractors to the secret.
    pub difficulty: f64,
    /// Band the distractors were finally drawn from.
    pub band: DistanceBand,
    /// How many times the requested band had to be widened.
    pub widenings: u32,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.member_ids.iter().any(|m| m == image_id)
    }

    pub fn distractors(&self) -> impl Iterator<Item = &str> {
        self.member_ids
            .iter()
            .map(String::as_str)
            .filter(move |m| *m != self.secret_id)
    }
}

/// Build an `n`-image set around a secret.
///
/// The secret is drawn uniformly when `secret_id` is `None`. The `n - 1`
/// distractors are drawn uniformly without replacement from the images whose
/// distance to the secret lies in `band`; if the band holds too few, it is
/// widened up to [`MAX_BAND_WIDENINGS`] times. A pool of exactly `n` images
/// always yields the whole pool.
pub fn select_image_set(
    catalog: &Catalog,
    secret_id: Option<&str>,
    n: usize,
    band: DistanceBand,
    seed: u64,
) -> Result<ImageSet, CatalogError> {
    if n < 2 {
        return Err(CatalogError::InvalidRequest(format!("set size {n} < 2")));
    }
    if !(band.lo <= band.hi) {
        return Err(CatalogError::InvalidRequest(format!(
            "empty band [{}, {}]",
            band.lo, band.hi
        )));
    }
    if catalog.len() < n {
        return Err(CatalogError::PoolTooSparse {
            needed: n - 1,
            available: catalog.len().saturating_sub(1),
        });
    }
    let mut rng = StreamKey::new(seed).str("image-set").rng();

    let secret_idx = match secret_id {
        Some(id) => *catalog
            .index
            .get(id)
            .ok_or_else(|| CatalogError::UnknownImage(id.to_string()))?,
        None => rng.random_range(0..catalog.len()),
    };
    let secret = &catalog.records[secret_idx];

    let distances: Vec<(usize, f64)> = catalog
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != secret_idx)
        .map(|(i, r)| Ok((i, fc7_distance(secret, r)?)))
        .collect::<Result<_, CatalogError>>()?;

    let needed = n - 1;
    let mut current = band;
    let mut widenings = 0;
    let mut candidates: Vec<(usize, f64)>;
    loop {
        candidates = distances
            .iter()
            .copied()
            .filter(|(_, d)| current.contains(*d))
            .collect();
        if candidates.len() >= needed || widenings == MAX_BAND_WIDENINGS {
            break;
        }
        current = current.widened();
        widenings += 1;
    }
    if candidates.len() < needed {
        if distances.len() == needed {
            // the pool is exactly n images: only one set exists
            candidates = distances;
            let max = candidates.iter().map(|c| c.1).fold(0.0, f64::max);
            let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            current = DistanceBand::new(min.min(current.lo), max.max(current.hi));
        } else {
            return Err(CatalogError::PoolTooSparse {
                needed,
                available: candidates.len(),
            });
        }
    }

    let chosen: Vec<(usize, f64)> = candidates
        .choose_multiple(&mut rng, needed)
        .copied()
        .collect();
    let difficulty = chosen.iter().map(|c| c.1).sum::<f64>() / needed as f64;

    let mut member_ids: Vec<String> = std::iter::once(secret_idx)
        .chain(chosen.iter().map(|c| c.0))
        .map(|i| catalog.records[i].image_id.clone())
        .collect();
    member_ids.shuffle(&mut rng);

    Ok(ImageSet {
        secret_id: secret.image_id.clone(),
        member_ids,
        difficulty,
        band: current,
        widenings,
    })
}

/// Mean distance from each non-secret member to the secret.
pub fn set_difficulty(image_set: &ImageSet, catalog: &Catalog) -> Result<f64, CatalogError> {
    let secret = catalog.require(&image_set.secret_id)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for id in image_set.distractors() {
        total += fc7_distance(catalog.require(id)?, secret)?;
        count += 1;
    }
    if count == 0 {
        return Err(CatalogError::InvalidRequest(
            "image set has no distractors".into(),
        ));
    }
    Ok(total / count as f64)
}
