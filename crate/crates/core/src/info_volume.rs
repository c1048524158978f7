//! Deng entropy and the information volume of a mass function.
//!
//! The information volume is the limit of Deng entropy while every focal
//! element with more than one member is repeatedly split in the proportions
//! that maximize Deng entropy. Split fragments stay separate entropy terms;
//! fragments that reach a singleton are settled and never split again.

use serde::{Deserialize, Serialize};

use crate::belief::{Frame, MassFunction, SimpleSupportMass, Subset, MASS_TOLERANCE};
use crate::error::{Error, Result};

/// Default convergence tolerance on the per-loop entropy increase.
pub const DEFAULT_RHO: f64 = 1e-6;

/// Hard cap on split loops.
pub const MAX_LOOPS: usize = 10_000;

/// Separated masses, possibly several fragments per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentList {
    frame: Frame,
    fragments: Vec<(Subset, f64)>,
}

impl FragmentList {
    pub fn new(frame: Frame, fragments: Vec<(Subset, f64)>) -> Result<Self> {
        let mut sum = 0.0;
        for &(subset, mass) in &fragments {
            if !mass.is_finite() || mass <= 0.0 {
                return Err(Error::InvalidMassValue(mass));
            }
            if subset.is_empty() {
                return Err(Error::EmptySetMass(mass));
            }
            if !frame.contains(subset) {
                return Err(Error::SubsetOutOfFrame {
                    subset: subset.0,
                    frame: frame.size(),
                });
            }
            sum += mass;
        }
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::NonUnitSum(sum));
        }
        Ok(Self { frame, fragments })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn fragments(&self) -> &[(Subset, f64)] {
        &self.fragments
    }
}

impl From<&MassFunction> for FragmentList {
    fn from(m: &MassFunction) -> Self {
        Self {
            frame: m.frame(),
            fragments: m.focal_elements().collect(),
        }
    }
}

/// Per-loop record of an information-volume computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvTrace {
    /// E_0 (before any split) through E_i.
    pub entropies: Vec<f64>,
    /// deltas[i - 1] = E_i − E_{i−1}.
    pub deltas: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// One Deng entropy term −m·log₂(m / (2^|A| − 1)).
#[inline]
pub fn deng_term(cardinality: u32, mass: f64) -> f64 {
    if mass <= 0.0 {
        return 0.0;
    }
    let capacity = ((1u64 << cardinality) - 1) as f64;
    -mass * (mass / capacity).log2()
}

pub fn deng_entropy(fragments: &FragmentList) -> f64 {
    fragments
        .fragments
        .iter()
        .map(|&(s, m)| deng_term(s.cardinality(), m))
        .sum()
}

/// Σ over nonempty B ⊆ A of (2^|B| − 1), which is 3^a − 2^a.
fn split_denominator(cardinality: u32) -> f64 {
    3f64.powi(cardinality as i32) - 2f64.powi(cardinality as i32)
}

/// Splits `mass` on `subset` over all of its nonempty subsets B with weight
/// (2^|B| − 1) / Σ_{B'}(2^|B'| − 1).
pub fn max_deng_split(subset: Subset, mass: f64) -> Result<Vec<(Subset, f64)>> {
    if subset.cardinality() < 2 {
        return Err(Error::SingletonSplit);
    }
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::InvalidMassValue(mass));
    }
    let denom = split_denominator(subset.cardinality());
    Ok(subset
        .nonempty_subsets()
        .map(|b| {
            let weight = ((1u64 << b.cardinality()) - 1) as f64 / denom;
            (b, mass * weight)
        })
        .collect())
}

/// Fragments of equal cardinality and bit-identical mass are tracked as one
/// group with a multiplicity; their entropy terms are identical, so this
/// only avoids materializing exponentially many copies.
#[derive(Debug, Clone, Copy)]
struct Group {
    cardinality: u32,
    mass: f64,
    count: f64,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn iterate(
    initial: impl Iterator<Item = (u32, f64)>,
    rho: f64,
    mut trace: Option<&mut IvTrace>,
) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidTolerance(rho));
    }
    let mut settled = 0.0;
    let mut active: Vec<Group> = Vec::new();
    for (cardinality, mass) in initial {
        if mass <= 0.0 {
            continue;
        }
        if cardinality == 1 {
            settled += deng_term(1, mass);
        } else {
            active.push(Group {
                cardinality,
                mass,
                count: 1.0,
            });
        }
    }
    let active_entropy = |groups: &[Group]| -> f64 {
        groups
            .iter()
            .map(|g| g.count * deng_term(g.cardinality, g.mass))
            .sum()
    };

    let mut current = settled + active_entropy(&active);
    if let Some(t) = trace.as_deref_mut() {
        t.entropies.push(current);
    }
    let mut iterations = 0;
    let mut next: Vec<Group> = Vec::new();
    while !active.is_empty() {
        if iterations >= MAX_LOOPS {
            return Err(Error::NonConvergence(MAX_LOOPS));
        }
        iterations += 1;
        next.clear();
        for g in &active {
            let denom = split_denominator(g.cardinality);
            for b in 1..=g.cardinality {
                let mass = g.mass * ((1u64 << b) - 1) as f64 / denom;
                let count = g.count * binomial(g.cardinality, b);
                if b == 1 {
                    settled += count * deng_term(1, mass);
                } else {
                    next.push(Group {
                        cardinality: b,
                        mass,
                        count,
                    });
                }
            }
        }
        if next.len() > 1 {
            next.sort_by(|x, y| {
                (x.cardinality, x.mass.to_bits()).cmp(&(y.cardinality, y.mass.to_bits()))
            });
            next.dedup_by(|later, kept| {
                if later.cardinality == kept.cardinality && later.mass == kept.mass {
                    kept.count += later.count;
                    true
                } else {
                    false
                }
            });
        }
        std::mem::swap(&mut active, &mut next);

        let entropy = settled + active_entropy(&active);
        let delta = entropy - current;
        current = entropy;
        if let Some(t) = trace.as_deref_mut() {
            t.entropies.push(entropy);
            t.deltas.push(delta);
        }
        if delta < rho {
            break;
        }
    }
    if let Some(t) = trace {
        t.converged = true;
        t.iterations = iterations;
    }
    Ok(current)
}

/// Information volume of `m` and the loop-by-loop entropy trace.
pub fn information_volume(m: &MassFunction, rho: f64) -> Result<(f64, IvTrace)> {
    m.validate()?;
    let mut trace = IvTrace {
        entropies: Vec::new(),
        deltas: Vec::new(),
        converged: false,
        iterations: 0,
    };
    let value = iterate(
        m.focal_elements().map(|(s, mass)| (s.cardinality(), mass)),
        rho,
        Some(&mut trace),
    )?;
    Ok((value, trace))
}

/// Information volume of a simple-support mass without building a trace.
pub fn information_volume_simple(m: &SimpleSupportMass, rho: f64) -> Result<f64> {
    let n = m.frame().size() as u32;
    let singletons = m.singletons().iter().map(|&v| (1, v));
    iterate(
        singletons.chain(std::iter::once((n, m.fullset()))),
        rho,
        None,
    )
}

/// IVUM = full-set mass × information volume.
pub fn ivum(m: &SimpleSupportMass, rho: f64) -> Result<f64> {
    if m.fullset() == 0.0 {
        // Still validate the tolerance so bad input is not masked.
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidTolerance(rho));
        }
        return Ok(0.0);
    }
    Ok(m.fullset() * information_volume_simple(m, rho)?)
}
