//! Copy-paste masks, image/label mixing and pseudo-label cleanup.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClassField, Grid, LabelField};

/// Binary mixing mask: 1 keeps the foreground source, 0 takes the background
/// source. Exactly one axis-aligned rectangle is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixMask {
    pub grid: Grid<u8>,
    /// (x, y) of the zero rectangle's top-left corner.
    pub zero_origin: (usize, usize),
    /// (width, height) of the zero rectangle.
    pub zero_size: (usize, usize),
}

impl MixMask {
    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    /// The mask with zeros and ones swapped.
    pub fn complement(&self) -> Grid<u8> {
        self.grid.map(|&v| 1 - v)
    }
}

pub fn make_mask(width: usize, height: usize, eta: f64, seed: u64) -> Result<MixMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_mask_with(width, height, eta, &mut rng)
}

/// Zero rectangle of ⌈ηW⌉ × ⌈ηH⌉ at a uniformly random in-bounds origin.
pub fn make_mask_with<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    eta: f64,
    rng: &mut R,
) -> Result<MixMask> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::RatioOutOfRange(eta));
    }
    let zw = ((eta * width as f64).ceil() as usize).clamp(1, width.max(1));
    let zh = ((eta * height as f64).ceil() as usize).clamp(1, height.max(1));
    let x0 = rng.random_range(0..=width - zw);
    let y0 = rng.random_range(0..=height - zh);
    let grid = Grid::from_fn(width, height, |x, y| {
        let inside = x >= x0 && x < x0 + zw && y >= y0 && y < y0 + zh;
        u8::from(!inside)
    });
    Ok(MixMask {
        grid,
        zero_origin: (x0, y0),
        zero_size: (zw, zh),
    })
}

/// Voxel-wise select: `fg` where the mask is 1, `bg` where it is 0.
pub fn mix<T: Clone>(fg: &Grid<T>, bg: &Grid<T>, mask: &Grid<u8>) -> Result<Grid<T>> {
    fg.ensure_same_dims(bg)?;
    fg.ensure_same_dims(mask)?;
    let data = fg
        .data
        .iter()
        .zip(&bg.data)
        .zip(&mask.data)
        .map(|((f, b), &m)| if m != 0 { f.clone() } else { b.clone() })
        .collect();
    Ok(Grid {
        width: fg.width,
        height: fg.height,
        data,
    })
}

/// Keeps only the largest 4-connected foreground component. Ties go to the
/// component whose first pixel comes first in row-major order.
pub fn largest_component(mask: &LabelField) -> LabelField {
    let (w, h) = mask.dims();
    let mut component = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    let mut best: Option<(usize, usize)> = None; // (id, size)
    let mut next_id = 0;
    for start in 0..w * h {
        if mask.data[start] == 0 || component[start] != usize::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        let mut size = 0;
        component[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] != 0 && component[j] == usize::MAX {
                    component[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let keep = best.map(|(id, _)| id);
    Grid {
        width: w,
        height: h,
        data: mask
            .data
            .iter()
            .zip(&component)
            .map(|(&v, &c)| if Some(c) == keep { v } else { 0 })
            .collect(),
    }
}

/// Argmax labels (ties toward class 0) restricted to the largest connected
/// foreground component.
pub fn pseudo_label(probs: &ClassField) -> LabelField {
    let labels = probs.argmax();
    let fg = labels.map(|&l| u8::from(l != 0));
    let kept = largest_component(&fg);
    Grid {
        width: labels.width,
        height: labels.height,
        data: labels
            .data
            .iter()
            .zip(&kept.data)
            .map(|(&l, &k)| if k != 0 { l } else { 0 })
            .collect(),
    }
}
