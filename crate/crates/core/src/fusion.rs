//! Pignistic-weighted co-evidential fusion and per-voxel IVUM fields.

use serde::{Deserialize, Serialize};

use crate::belief::SimpleSupportMass;
use crate::error::{Error, Result};
use crate::field::{check_dims, ClassField};
use crate::info_volume::ivum;

/// Fuses two simple-support masses on the same frame.
///
/// Singleton terms: d_i·e_i + (1/(N+1))·(d_i·e_S + d_S·e_i).
/// Full-set term: d_S·e_S. The N+1 terms are then normalized.
pub fn pignistic_fuse_pair(
    d: &SimpleSupportMass,
    e: &SimpleSupportMass,
) -> Result<SimpleSupportMass> {
    if d.frame() != e.frame() {
        return Err(Error::FrameMismatch(d.frame().size(), e.frame().size()));
    }
    let n = d.frame().size() as f64;
    let cross = 1.0 / (n + 1.0);
    let (ds, es) = (d.fullset(), e.fullset());
    let raw: Vec<f64> = d
        .singletons()
        .iter()
        .zip(e.singletons())
        .map(|(&di, &ei)| di * ei + cross * (di * es + ds * ei))
        .collect();
    let full = ds * es;
    let total: f64 = raw.iter().sum::<f64>() + full;
    if total <= 0.0 {
        return Err(Error::DegenerateInput);
    }
    Ok(SimpleSupportMass::from_parts(
        d.frame(),
        raw.into_iter().map(|v| v / total).collect(),
        full / total,
    ))
}

/// Fused masses over a grid with raw and max-normalized IVUM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FusedFieldJson", try_from = "FusedFieldJson")]
pub struct FusedEvidenceField {
    pub width: usize,
    pub height: usize,
    pub masses: Vec<SimpleSupportMass>,
    pub ivum: Vec<f64>,
    pub ivum_normalized: Vec<f64>,
}

impl FusedEvidenceField {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.masses.first().map_or(0, |m| m.frame().size())
    }

    /// Builds a field from fused masses and raw IVUM values, normalizing
    /// IVUM by its field maximum.
    pub fn from_parts(
        width: usize,
        height: usize,
        masses: Vec<SimpleSupportMass>,
        ivum: Vec<f64>,
    ) -> Self {
        let ivum_normalized = normalize_by_max(&ivum);
        Self {
            width,
            height,
            masses,
            ivum,
            ivum_normalized,
        }
    }
}

/// Divides by the maximum (sequential scan); all zeros stay zero.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Per voxel: map both evidence vectors to simple-support masses, fuse them,
/// and score the result with IVUM.
pub fn fuse_fields(
    mixed: &ClassField,
    labeled: &ClassField,
    rho: f64,
) -> Result<FusedEvidenceField> {
    check_dims(mixed.dims(), labeled.dims())?;
    if mixed.classes != labeled.classes {
        return Err(Error::FrameMismatch(mixed.classes, labeled.classes));
    }
    let v = mixed.voxels();
    let mut masses = Vec::with_capacity(v);
    let mut scores = Vec::with_capacity(v);
    for j in 0..v {
        let d = SimpleSupportMass::from_evidence(mixed.voxel(j))?;
        let e = SimpleSupportMass::from_evidence(labeled.voxel(j))?;
        let fused = pignistic_fuse_pair(&d, &e)?;
        scores.push(ivum(&fused, rho)?);
        masses.push(fused);
    }
    Ok(FusedEvidenceField::from_parts(
        mixed.width,
        mixed.height,
        masses,
        scores,
    ))
}

#[derive(Serialize, Deserialize)]
struct FusedFieldJson {
    width: usize,
    height: usize,
    classes: usize,
    /// Per voxel: N singleton masses followed by the full-set mass.
    masses: Vec<f64>,
    ivum: Vec<f64>,
    ivum_normalized: Vec<f64>,
}

impl From<FusedEvidenceField> for FusedFieldJson {
    fn from(f: FusedEvidenceField) -> Self {
        Self {
            width: f.width,
            height: f.height,
            classes: f.classes(),
            masses: f.masses.iter().flat_map(|m| m.as_vec()).collect(),
            ivum: f.ivum,
            ivum_normalized: f.ivum_normalized,
        }
    }
}

impl TryFrom<FusedFieldJson> for FusedEvidenceField {
    type Error = Error;

    fn try_from(raw: FusedFieldJson) -> Result<Self> {
        let v = raw.width * raw.height;
        let stride = raw.classes + 1;
        if raw.masses.len() != v * stride || raw.ivum.len() != v || raw.ivum_normalized.len() != v {
            return Err(Error::DimensionMismatch(
                (raw.width, raw.height),
                (raw.ivum.len(), 1),
            ));
        }
        let masses = raw
            .masses
            .chunks_exact(stride)
            .map(|c| SimpleSupportMass::new(c[..raw.classes].to_vec(), c[raw.classes]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width: raw.width,
            height: raw.height,
            masses,
            ivum: raw.ivum,
            ivum_normalized: raw.ivum_normalized,
        })
    }
}
