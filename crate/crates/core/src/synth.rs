//! Synthetic captioned datasets with known topic labels.
//!
//! Each topic has a Gaussian feature center; centers sit on scaled axis
//! vectors so any two are `separation * sigma` apart. Captions mix
//! Zipf-weighted topic nouns with a shared construction-site vocabulary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageRecord, MAX_CAPTIONS};
use crate::error::{Error, Result};

pub const TOPIC_VOCABULARY: [&[&str]; 12] = [
    &[
        "crane",
        "boom",
        "hook",
        "cable",
        "counterweight",
        "mast",
        "jib",
        "pulley",
    ],
    &[
        "excavator",
        "trench",
        "soil",
        "bucket",
        "dirt",
        "pit",
        "shovel",
        "mound",
    ],
    &[
        "concrete", "slab", "formwork", "rebar", "mixer", "column", "footing", "chute",
    ],
    &[
        "roof", "shingle", "gutter", "tile", "rafter", "ladder", "chimney", "skylight",
    ],
    &[
        "pipe", "valve", "fitting", "drain", "faucet", "hose", "sewer", "tank",
    ],
    &[
        "wire",
        "panel",
        "conduit",
        "outlet",
        "breaker",
        "circuit",
        "meter",
        "transformer",
    ],
    &[
        "scaffolding",
        "plank",
        "pole",
        "platform",
        "railing",
        "tube",
        "clamp",
        "toeboard",
    ],
    &[
        "drywall",
        "ceiling",
        "window",
        "door",
        "floor",
        "wall",
        "stud",
        "insulation",
    ],
    &[
        "truck",
        "trailer",
        "wheel",
        "tire",
        "driver",
        "cab",
        "bulldozer",
        "loader",
    ],
    &[
        "tree", "grass", "shrub", "lawn", "fence", "path", "garden", "mulch",
    ],
    &[
        "beam", "girder", "bolt", "steel", "frame", "truss", "welder", "rivet",
    ],
    &[
        "helmet", "vest", "sign", "cone", "barrier", "harness", "glove", "goggles",
    ],
];

pub const SHARED_NOUNS: [&str; 5] = ["site", "construction", "area", "ground", "worker"];
pub const ADJECTIVES: [&str; 8] = [
    "large", "small", "red", "yellow", "new", "old", "heavy", "tall",
];
const LINKS: [&str; 4] = ["near", "beside", "under", "behind"];
const SCENES: [&str; 2] = ["at the construction site", "in the work area"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub topics: usize,
    pub per_topic: usize,
    pub dim: usize,
    /// Distance between topic centers in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub min_captions: usize,
    pub max_captions: usize,
    /// Probability that a caption noun comes from the topic vocabulary rather
    /// than the shared one.
    pub topic_word_rate: f64,
    /// Zipf exponent over each topic's vocabulary.
    pub zipf_exponent: f64,
    /// Probability that a caption ends with a shared scene phrase.
    pub scene_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 3,
            per_topic: 200,
            dim: 16,
            separation: 10.0,
            sigma: 1.0,
            min_captions: 3,
            max_captions: 6,
            topic_word_rate: 0.9,
            zipf_exponent: 0.25,
            scene_rate: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.topics == 0 || self.topics > TOPIC_VOCABULARY.len() {
            return bad(format!(
                "topics must be in 1..={}, got {}",
                TOPIC_VOCABULARY.len(),
                self.topics
            ));
        }
        if self.per_topic == 0 {
            return bad("per_topic must be at least 1".into());
        }
        if self.dim < self.topics {
            return bad(format!(
                "dim {} is smaller than topics {}",
                self.dim, self.topics
            ));
        }
        if !(self.sigma > 0.0) || !(self.separation >= 0.0) {
            return bad("sigma must be > 0 and separation >= 0".into());
        }
        if self.min_captions == 0
            || self.min_captions > self.max_captions
            || self.max_captions > MAX_CAPTIONS
        {
            return bad(format!(
                "caption counts must satisfy 1 <= min <= max <= {MAX_CAPTIONS}"
            ));
        }
        if !(0.0..=1.0).contains(&self.topic_word_rate) || !(0.0..=1.0).contains(&self.scene_rate) {
            return bad("topic_word_rate and scene_rate must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn zipf_pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str], exponent: f64) -> &'a str {
    let weights: Vec<f64> = (1..=words.len())
        .map(|r| (r as f64).powf(-exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (w, word) in weights.iter().zip(words) {
        if u < *w {
            return word;
        }
        u -= w;
    }
    words[words.len() - 1]
}

fn caption(rng: &mut ChaCha8Rng, topic: usize, cfg: &SynthConfig) -> String {
    let noun = |rng: &mut ChaCha8Rng| {
        if rng.random::<f64>() < cfg.topic_word_rate {
            zipf_pick(rng, TOPIC_VOCABULARY[topic], cfg.zipf_exponent)
        } else {
            SHARED_NOUNS[rng.random_range(0..SHARED_NOUNS.len())]
        }
    };
    let adj = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
    let first = noun(rng);
    let link = LINKS[rng.random_range(0..LINKS.len())];
    let second = noun(rng);
    let mut text = format!("a {adj} {first} {link} the {second}");
    if rng.random::<f64>() < cfg.scene_rate {
        text.push(' ');
        text.push_str(SCENES[rng.random_range(0..SCENES.len())]);
    }
    text
}

/// Generates the dataset together with the topic label of each record. Ids
/// are `img00000`, `img00001`, ...; record `i` belongs to topic
/// `i % topics`.
pub fn synth_labeled(cfg: &SynthConfig) -> Result<(Dataset, Vec<usize>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let scale = cfg.separation * cfg.sigma / std::f64::consts::SQRT_2;
    let total = cfg.topics * cfg.per_topic;
    let mut records = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let topic = i % cfg.topics;
        let features = (0..cfg.dim)
            .map(|d| {
                let center = if d == topic { scale } else { 0.0 };
                center + noise.sample(&mut rng)
            })
            .collect();
        let n_caps = rng.random_range(cfg.min_captions..=cfg.max_captions);
        let captions = (0..n_caps).map(|_| caption(&mut rng, topic, cfg)).collect();
        records.push(ImageRecord {
            id: format!("img{i:05}"),
            features,
            captions,
        });
        labels.push(topic);
    }
    let metadata = BTreeMap::from([
        ("generator".to_string(), "synth".to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("topics".to_string(), cfg.topics.to_string()),
    ]);
    Ok((Dataset::new(records, metadata)?, labels))
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    synth_labeled(cfg).map(|(d, _)| d)
}
