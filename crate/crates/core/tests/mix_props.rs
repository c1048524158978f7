mod common;

use coevidence::field::{ClassField, Grid, LabelField};
use coevidence::mix::{largest_component, make_mask, mix, pseudo_label};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Component sizes by recursive flood fill, 4-connectivity.
fn component_sizes(mask: &LabelField) -> Vec<usize> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    fn fill(mask: &LabelField, seen: &mut [bool], x: usize, y: usize) -> usize {
        let (w, h) = mask.dims();
        let i = y * w + x;
        if seen[i] || *mask.get(x, y) == 0 {
            return 0;
        }
        seen[i] = true;
        let mut n = 1;
        if x > 0 {
            n += fill(mask, seen, x - 1, y);
        }
        if x + 1 < w {
            n += fill(mask, seen, x + 1, y);
        }
        if y > 0 {
            n += fill(mask, seen, x, y - 1);
        }
        if y + 1 < h {
            n += fill(mask, seen, x, y + 1);
        }
        n
    }
    for y in 0..h {
        for x in 0..w {
            let n = fill(mask, &mut seen, x, y);
            if n > 0 {
                sizes.push(n);
            }
        }
    }
    sizes
}

fn parse(w: usize, rows: &str) -> LabelField {
    let data: Vec<u8> = rows
        .bytes()
        .filter(|b| !b.is_ascii_whitespace())
        .map(|b| b - b'0')
        .collect();
    Grid::from_vec(w, data.len() / w, data).unwrap()
}

#[test]
fn six_by_six_third() {
    let m = make_mask(6, 6, 1.0 / 3.0, 4).unwrap();
    assert_eq!(m.zero_size, (2, 2));
    assert_eq!(m.grid.count_foreground(), 32);
}

#[test]
fn larger_blob_survives() {
    let m = parse(6, "110000 110001 100001 000001 000000");
    let kept = largest_component(&m);
    assert_eq!(component_sizes(&kept), vec![5]);
    assert_eq!(*kept.get(5, 1), 0);
}

#[test]
fn pseudo_label_keeps_larger_predicted_blob() {
    let fg = parse(5, "11000 11001 00001");
    let probs = ClassField::from_vec(
        5,
        3,
        2,
        fg.data
            .iter()
            .flat_map(|&v| if v == 1 { [0.2, 0.8] } else { [0.9, 0.1] })
            .collect(),
    )
    .unwrap();
    let pl = pseudo_label(&probs);
    assert_eq!(component_sizes(&pl), vec![4]);
    assert_eq!(*pl.get(4, 1), 0);
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn mixing_partitions_every_voxel(seed in any::<u64>(), eta in 0.05f64..0.95) {
        let fg = Grid::from_fn(9, 7, |x, y| (x * 10 + y) as i32);
        let bg = fg.map(|v| -v - 1);
        let mask = make_mask(9, 7, eta, seed).unwrap();
        let a = mix(&fg, &bg, &mask.grid).unwrap();
        let b = mix(&bg, &fg, &mask.grid).unwrap();
        for i in 0..a.len() {
            let pair = (a.data[i], b.data[i]);
            prop_assert!(pair == (fg.data[i], bg.data[i]) || pair == (bg.data[i], fg.data[i]));
            prop_assert_eq!(a.data[i] == fg.data[i], mask.grid.data[i] == 1);
        }
        let again = make_mask(9, 7, eta, seed).unwrap();
        prop_assert_eq!(&mask, &again);
    }

    #[test]
    fn largest_component_is_a_single_subset(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mask(&mut rng, 12, 10);
        let kept = largest_component(&m);
        prop_assert!(kept.data.iter().zip(&m.data).all(|(&k, &v)| k <= v));
        let sizes = component_sizes(&kept);
        prop_assert!(sizes.len() <= 1);
        let before = component_sizes(&m);
        prop_assert_eq!(sizes.first().copied(), before.iter().copied().max());
    }
}

#[test]
fn seeds_give_different_masks_on_large_grids() {
    let a = make_mask(64, 64, 0.5, 1).unwrap();
    let differing = (2..20)
        .filter(|&s| make_mask(64, 64, 0.5, s).unwrap() != a)
        .count();
    assert!(differing >= 15);
}
