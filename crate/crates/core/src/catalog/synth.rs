//! Synthetic image pools for tests, examples and simulation.
//!
//! Images are grouped into scenes. Each scene has a prototype feature vector
//! and a handful of typical objects; an image's features are its scene
//! prototype plus the feature directions of its objects plus noise, so images
//! from the same scene are close in feature space and share many objects.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Catalog, DetectedObject, ImageRecord, QaPair, SceneLabel};
use crate::rng::StreamKey;

/// Object vocabulary used by the generator.
pub const OBJECT_LABELS: &[&str] = &[
    "person", "bicycle", "car", "motorcycle", "bus", "train", "truck", "boat",
    "bench", "bird", "cat", "dog", "horse", "sheep", "cow", "elephant", "bear",
    "zebra", "giraffe", "backpack", "umbrella", "handbag", "tie", "suitcase",
    "frisbee", "skis", "snowboard", "kite", "surfboard", "bottle", "cup", "fork",
    "knife", "spoon", "bowl", "banana", "apple", "sandwich", "orange", "broccoli",
    "carrot", "pizza", "donut", "cake", "chair", "couch", "bed", "table",
    "toilet", "tv", "laptop", "mouse", "keyboard", "phone", "microwave", "oven",
    "sink", "refrigerator", "book", "clock", "vase", "scissors", "teddy",
    "toothbrush",
];

/// Scene vocabulary used by the generator.
pub const SCENE_LABELS: &[&str] = &[
    "kitchen", "street", "beach", "park", "bedroom", "office", "farm", "ocean",
    "mountain", "restaurant", "airport", "zoo", "livingroom", "bathroom",
    "market", "station",
];

#[derive(Clone, Debug)]
pub struct SynthParams {
    pub n_images: usize,
    pub dim: usize,
    pub n_scenes: usize,
    pub objects_per_scene: usize,
    /// Objects drawn per image from its scene's typical objects.
    pub objects_per_image: (usize, usize),
    /// Standard deviation of the per-image feature noise.
    pub noise: f64,
    /// Upper bound on the weight an image gives a second, random scene
    /// prototype. Spreads cross-scene distances out.
    pub scene_mix: f64,
    /// Scale of a feature component shared by every image. Larger values
    /// pull the whole pool closer together.
    pub shared: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_images: 300,
            dim: 32,
            n_scenes: 12,
            objects_per_scene: 10,
            objects_per_image: (2, 5),
            noise: 0.25,
            scene_mix: 0.6,
            shared: 2.0,
            seed: 7,
        }
    }
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

/// Generate a pool of images with scene structure.
pub fn generate_pool(params: &SynthParams) -> Catalog {
    let mut rng = StreamKey::new(params.seed).str("synth-pool").rng();
    let n_scenes = params.n_scenes.clamp(1, SCENE_LABELS.len());
    let label_dirs: Vec<Vec<f64>> = OBJECT_LABELS
        .iter()
        .map(|_| gaussian_vec(&mut rng, params.dim, 1.0))
        .collect();

    let common = gaussian_vec(&mut rng, params.dim, params.shared);

    struct Scene {
        label: &'static str,
        prototype: Vec<f64>,
        typical: Vec<usize>,
    }
    let scenes: Vec<Scene> = (0..n_scenes)
        .map(|s| {
            let mut idx: Vec<usize> = (0..OBJECT_LABELS.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(params.objects_per_scene.min(OBJECT_LABELS.len()));
            Scene {
                label: SCENE_LABELS[s],
                prototype: gaussian_vec(&mut rng, params.dim, 2.0),
                typical: idx,
            }
        })
        .collect();

    let (lo, hi) = params.objects_per_image;
    let records = (0..params.n_images)
        .map(|i| {
            let scene = &scenes[rng.random_range(0..scenes.len())];
            let count = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
            let mut chosen: Vec<usize> = scene
                .typical
                .choose_multiple(&mut rng, count.min(scene.typical.len()))
                .copied()
                .collect();
            if rng.random_bool(0.3) {
                let extra = rng.random_range(0..OBJECT_LABELS.len());
                if !chosen.contains(&extra) {
                    chosen.push(extra);
                }
            }

            let other = &scenes[rng.random_range(0..scenes.len())];
            let mix = if params.scene_mix > 0.0 {
                rng.random_range(0.0..params.scene_mix)
            } else {
                0.0
            };
            let mut fc7: Vec<f64> = scene
                .prototype
                .iter()
                .zip(&other.prototype)
                .zip(&common)
                .map(|((a, b), c)| (1.0 - mix) * a + mix * b + c)
                .collect();
            for &o in &chosen {
                for (f, d) in fc7.iter_mut().zip(&label_dirs[o]) {
                    *f += 0.6 * d;
                }
            }
            for f in fc7.iter_mut() {
                *f += rng.sample::<f64, _>(StandardNormal) * params.noise;
            }

            let mut objects: Vec<DetectedObject> = chosen
                .iter()
                .map(|&o| {
                    let x0: f64 = rng.random_range(0.0..0.7);
                    let y0: f64 = rng.random_range(0.0..0.7);
                    let w: f64 = rng.random_range(0.15..0.3);
                    let h: f64 = rng.random_range(0.15..0.3);
                    DetectedObject {
                        label: OBJECT_LABELS[o].to_string(),
                        confidence: round3(rng.random_range(0.5..0.99)),
                        bbox: Some([round3(x0), round3(y0), round3(x0 + w), round3(y0 + h)]),
                    }
                })
                .collect();
            objects.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

            let absent = scene
                .typical
                .iter()
                .find(|o| !chosen.contains(o))
                .map(|&o| OBJECT_LABELS[o]);
            let mut qa_pairs = vec![QaPair {
                question: "what is in the image?".into(),
                answer: objects[0].label.clone(),
            }];
            qa_pairs.push(QaPair {
                question: format!("is there a {}?", objects[0].label),
                answer: "yes".into(),
            });
            if let Some(label) = absent {
                qa_pairs.push(QaPair {
                    question: format!("is there a {label}?"),
                    answer: "no".into(),
                });
            }
            qa_pairs.push(QaPair {
                question: "where is this?".into(),
                answer: scene.label.to_string(),
            });

            ImageRecord {
                image_id: format!("syn_{i:05}"),
                uri: format!("synthetic://{}/{i:05}.jpg", scene.label),
                fc7,
                objects,
                scenes: vec![SceneLabel {
                    label: scene.label.to_string(),
                    confidence: round3(rng.random_range(0.6..0.95)),
                }],
                qa_pairs,
            }
        })
        .collect();
    Catalog::from_records(records).expect("generator emits a valid catalog")
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{select_image_set, DistanceBand};

    #[test]
    fn deterministic_under_seed() {
        let p = SynthParams { n_images: 40, ..Default::default() };
        let a = generate_pool(&p);
        let b = generate_pool(&p);
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn supports_both_default_bands() {
        let cat = generate_pool(&SynthParams::default());
        for seed in 0..20 {
            let b = select_image_set(&cat, None, 5, DistanceBand::new(0.05, 0.35), seed).unwrap();
            assert_eq!(b.len(), 5);
            let a = select_image_set(&cat, None, 20, DistanceBand::new(0.2, 0.6), seed).unwrap();
            assert_eq!(a.len(), 20);
        }
    }
}
