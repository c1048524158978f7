mod common;

use coevidence::field::{Grid, LabelField};
use coevidence::metrics::{distance_metrics, evaluate, overlap_metrics, surface_points};
use coevidence::Error;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pixels(w: usize, h: usize, on: &[(usize, usize)]) -> LabelField {
    Grid::from_fn(w, h, |x, y| u8::from(on.contains(&(x, y))))
}

/// Largest directed surface distance in either direction.
fn max_directed(a: &LabelField, b: &LabelField) -> f64 {
    let (sa, sb) = (surface_points(a), surface_points(b));
    let d = |p: &(usize, usize), q: &(usize, usize)| {
        ((p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2)).sqrt()
    };
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        from.iter()
            .map(|p| to.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&sa, &sb).max(directed(&sb, &sa))
}

#[test]
fn identical_masks() {
    let m = pixels(6, 6, &[(1, 1), (2, 1), (1, 2), (2, 2)]);
    let r = evaluate(&m, &m).unwrap();
    assert_eq!((r.dice, r.jaccard, r.hd95, r.asd), (100.0, 100.0, 0.0, 0.0));
}

#[test]
fn single_pixels_three_apart() {
    let a = pixels(8, 3, &[(1, 1)]);
    let b = pixels(8, 3, &[(4, 1)]);
    assert_eq!(distance_metrics(&a, &b).unwrap(), (3.0, 3.0));
}

#[test]
fn overlap_counts() {
    let a = pixels(4, 2, &[(0, 0), (1, 0), (2, 0), (3, 0)]);
    let b = pixels(4, 2, &[(2, 0), (3, 0), (0, 1), (1, 1)]);
    let (d, j) = overlap_metrics(&a, &b).unwrap();
    assert!(close(d, 50.0, 1e-12));
    assert!(close(j, 100.0 / 3.0, 1e-12));
}

#[test]
fn square_surface_is_its_border() {
    let m = Grid::from_fn(5, 5, |x, y| {
        u8::from((1..4).contains(&x) && (1..4).contains(&y))
    });
    let mut s = surface_points(&m);
    s.sort();
    assert_eq!(s.len(), 8);
    assert!(!s.contains(&(2, 2)));
}

#[test]
fn empty_surface_is_an_error() {
    let a = pixels(4, 4, &[(1, 1)]);
    let b = pixels(4, 4, &[]);
    assert_eq!(distance_metrics(&a, &b), Err(Error::EmptySurface));
    assert_eq!(overlap_metrics(&b, &b).unwrap(), (100.0, 100.0));
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn symmetric_translation_invariant_and_bounded(seed in any::<u64>(), dx in 0usize..5, dy in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_mask(&mut rng, 16, 12);
        let b = random_mask(&mut rng, 16, 12);
        let ab = evaluate(&a, &b).unwrap();
        let ba = evaluate(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        let moved = evaluate(&shift(&a, dx, dy), &shift(&b, dx, dy)).unwrap();
        prop_assert_eq!(ab, moved);
        let (d, j) = (ab.dice / 100.0, ab.jaccard / 100.0);
        prop_assert!(close(d, 2.0 * j / (1.0 + j), 1e-9));
        let bound = max_directed(&a, &b);
        prop_assert!(ab.hd95 <= bound + 1e-12);
        prop_assert!(ab.asd <= bound + 1e-12);
    }
}
