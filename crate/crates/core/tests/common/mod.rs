//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use coevidence::belief::{Frame, MassFunction, SimpleSupportMass, Subset};
use coevidence::field::{Grid, LabelField};
use proptest::prelude::*;
use rand::Rng;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Builds a mass function from unnormalized (bitmask, weight) pairs.
pub fn mass_from_weights(n: usize, entries: &[(u32, f64)]) -> MassFunction {
    let total: f64 = entries.iter().map(|e| e.1).sum();
    MassFunction::new(
        Frame::new(n).unwrap(),
        entries.iter().map(|&(s, w)| (Subset(s), w / total)),
    )
    .unwrap()
}

/// Any valid mass on a frame of size 2..=4.
pub fn mass_strategy() -> impl Strategy<Value = MassFunction> {
    (2usize..=4).prop_flat_map(|n| {
        let full = (1u32 << n) - 1;
        prop::collection::vec((1u32..=full, 0.01f64..1.0), 1..6)
            .prop_map(move |entries| mass_from_weights(n, &entries))
    })
}

/// Two or three masses on one shared frame.
pub fn mass_tuple_strategy(count: usize) -> impl Strategy<Value = Vec<MassFunction>> {
    (2usize..=4).prop_flat_map(move |n| {
        let full = (1u32 << n) - 1;
        prop::collection::vec(
            prop::collection::vec((1u32..=full, 0.01f64..1.0), 1..6),
            count,
        )
        .prop_map(move |all| all.iter().map(|e| mass_from_weights(n, e)).collect())
    })
}

/// Singleton and full-set weights, normalized, with a strictly positive
/// full-set mass.
pub fn simple_strategy(
    frames: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = SimpleSupportMass> {
    frames.prop_flat_map(|n| {
        (prop::collection::vec(0.0f64..1.0, n), 0.01f64..1.0).prop_map(|(s, f)| {
            let total = s.iter().sum::<f64>() + f;
            SimpleSupportMass::new(s.iter().map(|v| v / total).collect(), f / total).unwrap()
        })
    })
}

pub fn random_mass<R: Rng>(rng: &mut R, n: usize) -> MassFunction {
    let full = (1u32 << n) - 1;
    let k = rng.random_range(1..6);
    let entries: Vec<(u32, f64)> = (0..k)
        .map(|_| (rng.random_range(1..=full), rng.random_range(0.01..1.0)))
        .collect();
    mass_from_weights(n, &entries)
}

pub fn random_simple<R: Rng>(rng: &mut R, n: usize) -> SimpleSupportMass {
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let f: f64 = rng.random_range(0.01..1.0);
    let total = s.iter().sum::<f64>() + f;
    SimpleSupportMass::new(s.iter().map(|v| v / total).collect(), f / total).unwrap()
}

/// Dense mass vector indexed by bitmask.
pub fn dense(m: &MassFunction) -> Vec<f64> {
    let mut v = vec![0.0; 1 << m.frame().size()];
    for (s, x) in m.focal_elements() {
        v[s.0 as usize] += x;
    }
    v
}

/// Dempster's rule by enumerating every pair of subsets.
pub fn dempster_oracle(a: &MassFunction, b: &MassFunction) -> Option<(Vec<f64>, f64)> {
    let (da, db) = (dense(a), dense(b));
    let mut out = vec![0.0; da.len()];
    let mut conflict = 0.0;
    for (x, &ma) in da.iter().enumerate() {
        for (y, &mb) in db.iter().enumerate() {
            let z = x & y;
            if z == 0 {
                conflict += ma * mb;
            } else {
                out[z] += ma * mb;
            }
        }
    }
    if 1.0 - conflict <= 1e-12 {
        return None;
    }
    out.iter_mut().for_each(|v| *v /= 1.0 - conflict);
    Some((out, conflict))
}

/// BetP by spreading each focal mass evenly over its members.
pub fn pignistic_oracle(m: &MassFunction) -> Vec<f64> {
    let n = m.frame().size();
    let mut p = vec![0.0; n];
    for (s, x) in m.focal_elements() {
        let members: Vec<usize> = (0..n).filter(|&i| s.0 >> i & 1 == 1).collect();
        for i in &members {
            p[*i] += x / members.len() as f64;
        }
    }
    p
}

/// Pignistic pair fusion by walking every pair of focal elements: equal
/// singletons multiply, singleton × full set takes weight 1/(N+1), full set
/// × full set is a bare product, distinct singletons drop out.
pub fn fusion_oracle(d: &SimpleSupportMass, e: &SimpleSupportMass) -> Vec<f64> {
    let n = d.singletons().len();
    let cross = 1.0 / (n as f64 + 1.0);
    let focal = |m: &SimpleSupportMass| -> Vec<(Option<usize>, f64)> {
        let mut v: Vec<_> = m
            .singletons()
            .iter()
            .enumerate()
            .map(|(i, &x)| (Some(i), x))
            .collect();
        v.push((None, m.fullset()));
        v
    };
    let mut raw = vec![0.0; n + 1];
    for (a, ma) in focal(d) {
        for (b, mb) in focal(e) {
            match (a, b) {
                (Some(i), Some(j)) if i == j => raw[i] += ma * mb,
                (Some(_), Some(_)) => {}
                (Some(i), None) | (None, Some(i)) => raw[i] += cross * ma * mb,
                (None, None) => raw[n] += ma * mb,
            }
        }
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Information volume by materializing every fragment as an explicit subset
/// and splitting each multi-element fragment over its own nonempty subsets.
/// Returns (value, entropies).
pub fn iv_oracle(m: &MassFunction, rho: f64) -> (f64, Vec<f64>) {
    let term = |s: u32, x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            let cap = (2f64).powi(s.count_ones() as i32) - 1.0;
            -x * (x / cap).log2()
        }
    };
    let mut settled = 0.0;
    let mut open: Vec<(u32, f64)> = Vec::new();
    for (s, x) in m.focal_elements() {
        if s.0.count_ones() == 1 {
            settled += term(s.0, x);
        } else {
            open.push((s.0, x));
        }
    }
    let mut entropy = settled + open.iter().map(|&(s, x)| term(s, x)).sum::<f64>();
    let mut trace = vec![entropy];
    while !open.is_empty() && trace.len() < 10_000 {
        let mut next = Vec::new();
        for &(s, x) in &open {
            let a = s.count_ones() as i32;
            let denom = 3f64.powi(a) - 2f64.powi(a);
            let mut b = s;
            while b != 0 {
                let share = x * ((2f64).powi(b.count_ones() as i32) - 1.0) / denom;
                if b.count_ones() == 1 {
                    settled += term(b, share);
                } else {
                    next.push((b, share));
                }
                b = (b - 1) & s;
            }
        }
        open = next;
        let e = settled + open.iter().map(|&(s, x)| term(s, x)).sum::<f64>();
        trace.push(e);
        let delta = e - entropy;
        entropy = e;
        if delta < rho {
            break;
        }
    }
    (entropy, trace)
}

/// Random binary mask with a few filled rectangles.
pub fn random_mask<R: Rng>(rng: &mut R, w: usize, h: usize) -> LabelField {
    let rects: Vec<(usize, usize, usize, usize)> = (0..rng.random_range(1..=3))
        .map(|_| {
            let x0 = rng.random_range(0..w);
            let y0 = rng.random_range(0..h);
            (
                x0,
                y0,
                rng.random_range(1..=w / 2),
                rng.random_range(1..=h / 2),
            )
        })
        .collect();
    Grid::from_fn(w, h, |x, y| {
        u8::from(
            rects
                .iter()
                .any(|&(x0, y0, rw, rh)| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh),
        )
    })
}

pub fn shift(mask: &LabelField, dx: usize, dy: usize) -> LabelField {
    let (w, h) = mask.dims();
    Grid::from_fn(w + dx, h + dy, |x, y| {
        if x >= dx && y >= dy {
            *mask.get(x - dx, y - dy)
        } else {
            0
        }
    })
}

pub fn focal_map(m: &MassFunction) -> BTreeMap<u32, f64> {
    m.focal_elements().map(|(s, x)| (s.0, x)).collect()
}

/// Proptest settings without on-disk failure persistence.
pub fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}
