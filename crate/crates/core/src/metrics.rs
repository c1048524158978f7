//! Overlap and surface-distance metrics for binary 2D masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LabelField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent.
    pub dice: f64,
    /// Percent.
    pub jaccard: f64,
    /// Pixels.
    pub hd95: f64,
    /// Pixels.
    pub asd: f64,
}

/// (Dice %, Jaccard %). Two empty masks score 100 on both.
pub fn overlap_metrics(pred: &LabelField, gt: &LabelField) -> Result<(f64, f64)> {
    pred.ensure_same_dims(gt)?;
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut g = 0usize;
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let (a, b) = (a != 0, b != 0);
        inter += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    if p + g == 0 {
        return Ok((100.0, 100.0));
    }
    let union = p + g - inter;
    Ok((
        200.0 * inter as f64 / (p + g) as f64,
        100.0 * inter as f64 / union as f64,
    ))
}

/// Foreground pixels with a 4-neighbour outside the foreground; the grid
/// border counts as outside.
pub fn surface_points(mask: &LabelField) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let fg = |x: usize, y: usize| *mask.get(x, y) != 0;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !fg(x, y) {
                continue;
            }
            let boundary = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !fg(x - 1, y)
                || !fg(x + 1, y)
                || !fg(x, y - 1)
                || !fg(x, y + 1);
            if boundary {
                out.push((x, y));
            }
        }
    }
    out
}

fn nearest(p: (usize, usize), others: &[(usize, usize)]) -> f64 {
    others
        .iter()
        .map(|q| {
            let dx = p.0 as f64 - q.0 as f64;
            let dy = p.1 as f64 - q.1 as f64;
            dx * dx + dy * dy
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Percentile with linear interpolation between order statistics of a
/// sorted slice (`q` in [0, 1]).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// (HD95, ASD) over the pooled directed surface distances in both directions.
pub fn distance_metrics(pred: &LabelField, gt: &LabelField) -> Result<(f64, f64)> {
    pred.ensure_same_dims(gt)?;
    let sp = surface_points(pred);
    let sg = surface_points(gt);
    if sp.is_empty() || sg.is_empty() {
        return Err(Error::EmptySurface);
    }
    let mut dists: Vec<f64> = sp
        .iter()
        .map(|&p| nearest(p, &sg))
        .chain(sg.iter().map(|&q| nearest(q, &sp)))
        .collect();
    // Summing in sorted order makes the result independent of argument order.
    dists.sort_by(f64::total_cmp);
    let asd = dists.iter().sum::<f64>() / dists.len() as f64;
    Ok((percentile_sorted(&dists, 0.95), asd))
}

pub fn evaluate(pred: &LabelField, gt: &LabelField) -> Result<MetricsReport> {
    let (dice, jaccard) = overlap_metrics(pred, gt)?;
    let (hd95, asd) = distance_metrics(pred, gt)?;
    Ok(MetricsReport {
        dice,
        jaccard,
        hd95,
        asd,
    })
}
