//! Deterministic labelled corpus with planted signal, for desk-scale runs.
//!
//! - `zany` appears exactly in humorous texts.
//! - humor rating is `0.5 + (number of "haha") + noise`.
//! - `edgy` appears exactly in controversial humorous texts.
//! - offense rating is `0.25·(words − 3) + noise`.
//!
//! Ratings are clamped to `[0, 5]`; noise is Gaussian with `noise_std`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Provenance, RatingRange, Record};
use crate::seed;

pub const HUMOR_MARKER: &str = "zany";
pub const LAUGH_MARKER: &str = "haha";
pub const CONTROVERSY_MARKER: &str = "edgy";

const FILLER: [&str; 16] = [
    "apple", "river", "window", "garden", "pencil", "rocket", "violin", "carpet", "tunnel", "marble", "basket",
    "ladder", "candle", "meadow", "jacket", "harbor",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub records: usize,
    pub humor_fraction: f64,
    pub controversy_fraction: f64,
    pub noise_std: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub max_laughs: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            records: 200,
            humor_fraction: 0.5,
            controversy_fraction: 0.5,
            noise_std: 0.1,
            min_words: 5,
            max_words: 16,
            max_laughs: 3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn humor_rating(laughs: usize) -> f64 {
        0.5 + laughs as f64
    }

    pub fn offense_rating(words: usize) -> f64 {
        0.25 * (words as f64 - 3.0)
    }
}

/// Generates `config.records` records with ids `1..=records`.
///
/// Panics if `min_words` is too small to hold the markers of a humorous
/// text or if `noise_std` is negative.
pub fn generate(config: &SyntheticConfig) -> Dataset {
    assert!(
        config.min_words >= config.max_laughs + 2 && config.max_words >= config.min_words,
        "word bounds cannot hold the markers"
    );
    let noise = Normal::new(0.0, config.noise_std).expect("noise_std must be non-negative");
    let mut rng = seed::stream(config.seed, "synthetic");
    let range = RatingRange::ZERO_TO_FIVE;
    let records = (1..=config.records)
        .map(|id| {
            let is_humor = rng.gen_bool(config.humor_fraction);
            let words = rng.gen_range(config.min_words..=config.max_words);
            let mut tokens: Vec<&str> = Vec::with_capacity(words);
            let (humor_rating, humor_controversy) = if is_humor {
                let laughs = rng.gen_range(0..=config.max_laughs);
                let controversial = rng.gen_bool(config.controversy_fraction);
                tokens.push(HUMOR_MARKER);
                tokens.extend(core::iter::repeat_n(LAUGH_MARKER, laughs));
                if controversial {
                    tokens.push(CONTROVERSY_MARKER);
                }
                let rating = SyntheticConfig::humor_rating(laughs) + noise.sample(&mut rng);
                (Some(range.clamp(rating)), Some(controversial))
            } else {
                (None, None)
            };
            while tokens.len() < words {
                tokens.push(FILLER[rng.gen_range(0..FILLER.len())]);
            }
            tokens.shuffle(&mut rng);
            let offense = SyntheticConfig::offense_rating(words) + noise.sample(&mut rng);
            let mut text = String::new();
            for (i, t) in tokens.iter().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                text.push_str(t);
            }
            Record {
                id: id as i64,
                text,
                is_humor,
                humor_rating,
                humor_controversy,
                offense_rating: range.clamp(offense),
            }
        })
        .collect();
    Dataset::new(records, Provenance::Synthetic).expect("ids are unique")
}
