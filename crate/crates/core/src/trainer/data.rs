//! Synthetic segmentation data: 1–3 filled ellipses on a noisy background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::field::{Grid, ImageField, LabelField};

use super::config::TrainConfig;

pub const FOREGROUND_MEAN: f64 = 0.8;
pub const BACKGROUND_MEAN: f64 = 0.2;
pub const NOISE_STD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub image: ImageField,
    pub label: LabelField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub labeled: Vec<SyntheticSample>,
    /// Labels are kept for diagnostics only; training never reads them.
    pub unlabeled: Vec<SyntheticSample>,
    pub test: Vec<SyntheticSample>,
}

impl Dataset {
    /// The two labeled halves (first ⌈n/2⌉, rest).
    pub fn labeled_halves(&self) -> (&[SyntheticSample], &[SyntheticSample]) {
        let mid = self.labeled.len().div_ceil(2);
        self.labeled.split_at(mid)
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

pub fn generate_sample<R: Rng + ?Sized>(size: usize, rng: &mut R) -> SyntheticSample {
    let s = size as f64;
    let count = rng.random_range(1..=3);
    let ellipses: Vec<Ellipse> = (0..count)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Ellipse {
                cx: rng.random_range(0.25 * s..0.75 * s),
                cy: rng.random_range(0.25 * s..0.75 * s),
                a: rng.random_range(0.08 * s..0.22 * s),
                b: rng.random_range(0.08 * s..0.22 * s),
                cos: angle.cos(),
                sin: angle.sin(),
            }
        })
        .collect();
    let label = Grid::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        u8::from(ellipses.iter().any(|e| e.contains(px, py)))
    });
    let fg = Normal::new(FOREGROUND_MEAN, NOISE_STD).expect("valid normal");
    let bg = Normal::new(BACKGROUND_MEAN, NOISE_STD).expect("valid normal");
    let image = label.map(|&l| {
        let v = if l != 0 {
            fg.sample(rng)
        } else {
            bg.sample(rng)
        };
        v.clamp(0.0, 1.0)
    });
    SyntheticSample { image, label }
}

/// Deterministic per `config.seed`. Image content is drawn from its own
/// stream so it does not depend on training choices.
pub fn generate_dataset(config: &TrainConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |n: usize| -> Vec<SyntheticSample> {
        (0..n)
            .map(|_| generate_sample(config.image_size, &mut rng))
            .collect()
    };
    let labeled = draw(config.n_labeled);
    let unlabeled = draw(config.n_unlabeled);
    let test = draw(config.n_test);
    Dataset {
        labeled,
        unlabeled,
        test,
    }
}
