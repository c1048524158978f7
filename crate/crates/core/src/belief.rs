//! Mass functions over a finite frame of discernment.
//!
//! Subsets are bitmasks over at most 16 propositions. A [`MassFunction`] is
//! a general basic probability assignment; a [`SimpleSupportMass`] is the
//! restricted form produced by subjective-logic evidence, with mass only on
//! singletons and on the whole frame.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::edl::EvidenceRecord;
use crate::error::{Error, Result};

/// Tolerance for Σ masses = 1. Inputs within it are renormalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Combination is refused when 1 − K falls below this.
pub const TOTAL_CONFLICT_TOLERANCE: f64 = 1e-12;

pub const MAX_FRAME: usize = 16;

/// Frame of discernment with `size` mutually exclusive propositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame(usize);

impl Frame {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_FRAME {
            return Err(Error::InvalidFrame(size));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    /// The whole frame S.
    pub fn full(self) -> Subset {
        Subset((1u32 << self.0) - 1)
    }

    pub fn contains(self, subset: Subset) -> bool {
        subset.0 & !self.full().0 == 0
    }

    fn ensure_same(self, other: Frame) -> Result<()> {
        if self != other {
            return Err(Error::FrameMismatch(self.0, other.0));
        }
        Ok(())
    }
}

/// A subset of the frame, bit `i` set iff proposition `i` is a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(pub u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn singleton(index: usize) -> Self {
        Subset(1 << index)
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn intersect(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    /// Iterates over every nonempty subset of `self`.
    pub fn nonempty_subsets(self) -> impl Iterator<Item = Subset> {
        // Standard sub-mask enumeration, descending.
        let full = self.0;
        let mut next = Some(full);
        std::iter::from_fn(move || {
            let current = next?;
            if current == 0 {
                return None;
            }
            next = Some((current - 1) & full);
            Some(Subset(current))
        })
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Checks the two basic probability assignment properties over raw entries.
pub fn validate(frame: Frame, entries: &[(Subset, f64)]) -> Result<()> {
    let mut sum = 0.0;
    for &(subset, mass) in entries {
        if !mass.is_finite() || mass < 0.0 {
            return Err(Error::InvalidMassValue(mass));
        }
        if subset.is_empty() {
            if mass > 0.0 {
                return Err(Error::EmptySetMass(mass));
            }
            continue;
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
    Ok(())
}

/// A basic probability assignment. Only focal elements (positive mass) are
/// stored; the empty set never is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MassFunctionJson", into = "MassFunctionJson")]
pub struct MassFunction {
    frame: Frame,
    masses: BTreeMap<Subset, f64>,
}

impl MassFunction {
    /// Builds a validated mass function. Duplicate subsets are summed and
    /// masses within tolerance of unit sum are renormalized.
    pub fn new(frame: Frame, entries: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Subset, f64> = BTreeMap::new();
        for (subset, mass) in entries {
            *merged.entry(subset).or_insert(0.0) += mass;
        }
        let flat: Vec<(Subset, f64)> = merged.iter().map(|(&s, &m)| (s, m)).collect();
        validate(frame, &flat)?;
        let sum: f64 = flat
            .iter()
            .filter(|(s, _)| !s.is_empty())
            .map(|(_, m)| m)
            .sum();
        let masses = flat
            .into_iter()
            .filter(|&(s, m)| !s.is_empty() && m > 0.0)
            .map(|(s, m)| (s, m / sum))
            .collect();
        Ok(Self { frame, masses })
    }

    /// The vacuous mass function {S: 1}.
    pub fn vacuous(frame: Frame) -> Self {
        Self {
            frame,
            masses: BTreeMap::from([(frame.full(), 1.0)]),
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn mass(&self, subset: Subset) -> f64 {
        self.masses.get(&subset).copied().unwrap_or(0.0)
    }

    /// Focal elements in ascending bitmask order.
    pub fn focal_elements(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.masses.iter().map(|(&s, &m)| (s, m))
    }

    /// True when every focal element is a singleton.
    pub fn is_bayesian(&self) -> bool {
        self.masses.keys().all(|s| s.cardinality() == 1)
    }

    pub fn validate(&self) -> Result<()> {
        let flat: Vec<(Subset, f64)> = self.focal_elements().collect();
        validate(self.frame, &flat)
    }
}

#[derive(Serialize, Deserialize)]
struct MassFunctionJson {
    n: usize,
    masses: BTreeMap<String, f64>,
}

impl TryFrom<MassFunctionJson> for MassFunction {
    type Error = Error;

    fn try_from(raw: MassFunctionJson) -> Result<Self> {
        let frame = Frame::new(raw.n)?;
        let mut entries = Vec::with_capacity(raw.masses.len());
        for (key, mass) in raw.masses {
            let bits: u32 = key
                .trim()
                .parse()
                .map_err(|_| Error::InvalidMass(format!("subset key {key:?} is not a bitmask")))?;
            entries.push((Subset(bits), mass));
        }
        MassFunction::new(frame, entries)
    }
}

impl From<MassFunction> for MassFunctionJson {
    fn from(m: MassFunction) -> Self {
        Self {
            n: m.frame.size(),
            masses: m
                .masses
                .iter()
                .map(|(s, &v)| (s.0.to_string(), v))
                .collect(),
        }
    }
}

/// Conflict coefficient K: total product mass landing on empty intersections.
pub fn conflict_k(m1: &MassFunction, m2: &MassFunction) -> Result<f64> {
    m1.frame.ensure_same(m2.frame)?;
    let mut k = 0.0;
    for (a, ma) in m1.focal_elements() {
        for (b, mb) in m2.focal_elements() {
            if a.intersect(b).is_empty() {
                k += ma * mb;
            }
        }
    }
    Ok(k.clamp(0.0, 1.0))
}

fn combine_pair(m1: &MassFunction, m2: &MassFunction) -> Result<MassFunction> {
    m1.frame.ensure_same(m2.frame)?;
    let mut joint: BTreeMap<Subset, f64> = BTreeMap::new();
    let mut k = 0.0;
    for (a, ma) in m1.focal_elements() {
        for (b, mb) in m2.focal_elements() {
            let c = a.intersect(b);
            if c.is_empty() {
                k += ma * mb;
            } else {
                *joint.entry(c).or_insert(0.0) += ma * mb;
            }
        }
    }
    let norm = 1.0 - k;
    if norm <= TOTAL_CONFLICT_TOLERANCE {
        return Err(Error::TotalConflict);
    }
    let masses = joint
        .into_iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(s, m)| (s, m / norm))
        .collect();
    Ok(MassFunction {
        frame: m1.frame,
        masses,
    })
}

/// Dempster's rule over two or more sources, folded left pairwise.
pub fn dempster_combine(sources: &[MassFunction]) -> Result<MassFunction> {
    let (first, rest) = match sources {
        [first, rest @ ..] if !rest.is_empty() => (first, rest),
        _ => {
            return Err(Error::InvalidMass(
                "combination needs at least two sources".into(),
            ))
        }
    };
    let mut acc = first.clone();
    for m in rest {
        acc = combine_pair(&acc, m)?;
    }
    Ok(acc)
}

/// Pignistic probability BetP(P_i) = Σ_{A ∋ P_i} m(A)/|A|.
pub fn pignistic(m: &MassFunction) -> Result<Vec<f64>> {
    m.validate()
        .map_err(|e| Error::InvalidMass(e.to_string()))?;
    let n = m.frame.size();
    let mut out = vec![0.0; n];
    for (subset, mass) in m.focal_elements() {
        let share = mass / subset.cardinality() as f64;
        for (i, slot) in out.iter_mut().enumerate() {
            if subset.contains(i) {
                *slot += share;
            }
        }
    }
    Ok(out)
}

/// Mass restricted to the singletons and the whole frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleSupportMass {
    frame: Frame,
    singletons: Vec<f64>,
    fullset: f64,
}

impl SimpleSupportMass {
    pub fn new(singletons: Vec<f64>, fullset: f64) -> Result<Self> {
        let frame = Frame::new(singletons.len())?;
        for &v in singletons.iter().chain(std::iter::once(&fullset)) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidMassValue(v));
            }
        }
        let sum: f64 = singletons.iter().sum::<f64>() + fullset;
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::NonUnitSum(sum));
        }
        Ok(Self {
            frame,
            singletons: singletons.iter().map(|v| v / sum).collect(),
            fullset: fullset / sum,
        })
    }

    /// Internal constructor for values already known to sum to 1.
    pub(crate) fn from_parts(frame: Frame, singletons: Vec<f64>, fullset: f64) -> Self {
        Self {
            frame,
            singletons,
            fullset,
        }
    }

    pub fn vacuous(frame: Frame) -> Self {
        Self {
            frame,
            singletons: vec![0.0; frame.size()],
            fullset: 1.0,
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn singletons(&self) -> &[f64] {
        &self.singletons
    }

    pub fn fullset(&self) -> f64 {
        self.fullset
    }

    /// Singleton masses followed by the full-set mass.
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = self.singletons.clone();
        v.push(self.fullset);
        v
    }

    pub fn to_mass_function(&self) -> MassFunction {
        let mut masses = BTreeMap::new();
        for (i, &m) in self.singletons.iter().enumerate() {
            if m > 0.0 {
                masses.insert(Subset::singleton(i), m);
            }
        }
        if self.fullset > 0.0 {
            *masses.entry(self.frame.full()).or_insert(0.0) += self.fullset;
        }
        MassFunction {
            frame: self.frame,
            masses,
        }
    }

    /// Subjective-logic mapping b_k = v_k/T, u = N/T with T = Σ(v_k + 1).
    pub fn from_evidence(evidence: &[f64]) -> Result<Self> {
        let frame = Frame::new(evidence.len())?;
        if let Some(&bad) = evidence.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NegativeEvidence(bad));
        }
        let n = evidence.len() as f64;
        let strength: f64 = evidence.iter().sum::<f64>() + n;
        Ok(Self {
            frame,
            singletons: evidence.iter().map(|v| v / strength).collect(),
            fullset: n / strength,
        })
    }

    /// Inverse of [`Self::from_evidence`]: v_k = N·b_k/u.
    pub fn to_dirichlet(&self) -> Result<EvidenceRecord> {
        if self.fullset <= 0.0 {
            return Err(Error::ZeroUncertainty);
        }
        let n = self.frame.size() as f64;
        let v: Vec<f64> = self
            .singletons
            .iter()
            .map(|b| n * b / self.fullset)
            .collect();
        EvidenceRecord::new(v)
    }
}

impl TryFrom<&MassFunction> for SimpleSupportMass {
    type Error = Error;

    fn try_from(m: &MassFunction) -> Result<Self> {
        let frame = m.frame();
        let full = frame.full();
        let mut singletons = vec![0.0; frame.size()];
        let mut fullset = 0.0;
        for (subset, mass) in m.focal_elements() {
            if subset == full {
                fullset += mass;
            } else if subset.cardinality() == 1 {
                singletons[subset.0.trailing_zeros() as usize] += mass;
            } else {
                return Err(Error::InvalidMass(format!(
                    "focal element {subset} is neither a singleton nor the frame"
                )));
            }
        }
        Ok(Self {
            frame,
            singletons,
            fullset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Subset = Subset(0b01);
    const B: Subset = Subset(0b10);
    const S2: Subset = Subset(0b11);

    fn frame2() -> Frame {
        Frame::new(2).unwrap()
    }

    fn mf(entries: &[(Subset, f64)]) -> MassFunction {
        MassFunction::new(frame2(), entries.iter().copied()).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(validate(frame2(), &[(A, 0.6), (S2, 0.4)]).is_ok());
        assert!(matches!(
            validate(frame2(), &[(A, 0.6), (S2, 0.5)]),
            Err(Error::NonUnitSum(_))
        ));
        assert!(matches!(
            validate(frame2(), &[(Subset::EMPTY, 0.2), (S2, 0.8)]),
            Err(Error::EmptySetMass(_))
        ));
        assert!(matches!(
            validate(frame2(), &[(Subset(0b100), 1.0)]),
            Err(Error::SubsetOutOfFrame { .. })
        ));
    }

    #[test]
    fn near_unit_sums_are_renormalized() {
        let m = mf(&[(A, 0.6 + 5e-10), (S2, 0.4)]);
        let total: f64 = m.focal_elements().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn combine_worked_example() {
        let m1 = mf(&[(A, 0.6), (S2, 0.4)]);
        let m2 = mf(&[(B, 0.5), (S2, 0.5)]);
        let k = conflict_k(&m1, &m2).unwrap();
        assert!((k - 0.3).abs() < 1e-15);
        let fused = dempster_combine(&[m1, m2]).unwrap();
        assert!((fused.mass(A) - 3.0 / 7.0).abs() < 1e-12);
        assert!((fused.mass(B) - 2.0 / 7.0).abs() < 1e-12);
        assert!((fused.mass(S2) - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn combine_total_conflict() {
        let m1 = mf(&[(A, 1.0)]);
        let m2 = mf(&[(B, 1.0)]);
        assert_eq!(conflict_k(&m1, &m2).unwrap(), 1.0);
        assert_eq!(dempster_combine(&[m1, m2]), Err(Error::TotalConflict));
    }

    #[test]
    fn combine_rejects_mixed_frames_and_single_source() {
        let m1 = mf(&[(A, 1.0)]);
        let m3 = MassFunction::vacuous(Frame::new(3).unwrap());
        assert_eq!(
            dempster_combine(&[m1.clone(), m3]),
            Err(Error::FrameMismatch(2, 3))
        );
        assert!(dempster_combine(&[m1]).is_err());
    }

    #[test]
    fn vacuous_is_identity_and_conflict_free() {
        let m = mf(&[(A, 0.3), (B, 0.2), (S2, 0.5)]);
        let v = MassFunction::vacuous(frame2());
        assert_eq!(conflict_k(&m, &v).unwrap(), 0.0);
        let fused = dempster_combine(&[v, m.clone()]).unwrap();
        for (s, mass) in m.focal_elements() {
            assert!((fused.mass(s) - mass).abs() < 1e-12);
        }
    }

    #[test]
    fn pignistic_examples() {
        let bet = pignistic(&mf(&[(A, 0.5), (S2, 0.5)])).unwrap();
        assert!((bet[0] - 0.75).abs() < 1e-15 && (bet[1] - 0.25).abs() < 1e-15);
        let bayes = pignistic(&mf(&[(A, 0.3), (B, 0.7)])).unwrap();
        assert_eq!(bayes, vec![0.3, 0.7]);
        let f4 = Frame::new(4).unwrap();
        let uni = pignistic(&MassFunction::vacuous(f4)).unwrap();
        assert!(uni.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn evidence_mapping_examples() {
        let vac = SimpleSupportMass::from_evidence(&[0.0, 0.0]).unwrap();
        assert_eq!(vac.singletons(), &[0.0, 0.0]);
        assert_eq!(vac.fullset(), 1.0);

        let m = SimpleSupportMass::from_evidence(&[3.0, 1.0]).unwrap();
        assert!((m.singletons()[0] - 0.5).abs() < 1e-15);
        assert!((m.singletons()[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((m.fullset() - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(
            SimpleSupportMass::from_evidence(&[-1.0, 2.0]),
            Err(Error::NegativeEvidence(-1.0))
        );
    }

    #[test]
    fn dirichlet_inverse_examples() {
        let rec = SimpleSupportMass::vacuous(frame2()).to_dirichlet().unwrap();
        assert_eq!(rec.evidence(), &[0.0, 0.0]);

        let m = SimpleSupportMass::new(vec![0.5, 1.0 / 6.0], 1.0 / 3.0).unwrap();
        let rec = m.to_dirichlet().unwrap();
        assert!((rec.evidence()[0] - 3.0).abs() < 1e-9);
        assert!((rec.evidence()[1] - 1.0).abs() < 1e-9);

        let sharp = SimpleSupportMass::new(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(sharp.to_dirichlet(), Err(Error::ZeroUncertainty));
    }

    #[test]
    fn json_round_trip_uses_decimal_bitmask_keys() {
        let m = mf(&[(A, 0.6), (S2, 0.4)]);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"n":2,"masses":{"1":0.6,"3":0.4}}"#);
        let back: MassFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad: std::result::Result<MassFunction, _> =
            serde_json::from_str(r#"{"n":2,"masses":{"1":0.6,"3":0.5}}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn subset_enumeration_covers_all_nonempty_subsets() {
        let subs: Vec<u32> = Subset(0b1011).nonempty_subsets().map(|s| s.0).collect();
        assert_eq!(subs.len(), 7);
        assert!(subs.iter().all(|s| s & !0b1011 == 0 && *s != 0));
    }
}
