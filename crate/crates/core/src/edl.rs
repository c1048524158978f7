//! Evidential quantities and every training objective.
//!
//! Evidence is generated from logits by a non-negative activation `G`. Each
//! voxel's evidence `v` defines a Dirichlet with parameters `c = v + 1`,
//! strength `T = Σ c`, uncertainty `U = N/T` and expected belief `v/T`.
//!
//! Loss reductions are means over voxels. The gradient helpers at the bottom
//! return derivatives with respect to logits while treating rank weights
//! and IVUM weights as constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_dims, ClassField, Grid, LabelField};
use crate::fusion::FusedEvidenceField;

/// Additive smoothing of the soft Dice ratio.
pub const DICE_SMOOTH: f64 = 1e-5;

/// Probabilities are clamped below by this inside the cross-entropy log.
pub const CE_FLOOR: f64 = 1e-12;

pub const DEFAULT_PHI: f64 = 0.5;

/// Evidence-generating activation `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

/// Per-voxel evidence with its derived Dirichlet quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    evidence: Vec<f64>,
    alpha: Vec<f64>,
    strength: f64,
    uncertainty: f64,
    belief: Vec<f64>,
}

impl EvidenceRecord {
    pub fn new(evidence: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = evidence.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NegativeEvidence(bad));
        }
        let n = evidence.len() as f64;
        let alpha: Vec<f64> = evidence.iter().map(|v| v + 1.0).collect();
        let strength: f64 = alpha.iter().sum();
        Ok(Self {
            belief: evidence.iter().map(|v| v / strength).collect(),
            uncertainty: n / strength,
            evidence,
            alpha,
            strength,
        })
    }

    pub fn classes(&self) -> usize {
        self.evidence.len()
    }

    pub fn evidence(&self) -> &[f64] {
        &self.evidence
    }

    /// Dirichlet parameters c_k = v_k + 1.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    /// p̃_k = v_k / T.
    pub fn belief(&self) -> &[f64] {
        &self.belief
    }
}

/// U = N / (Σ v + N) for a raw evidence slice.
#[inline]
pub fn uncertainty_of(evidence: &[f64]) -> f64 {
    let n = evidence.len() as f64;
    n / (evidence.iter().sum::<f64>() + n)
}

/// Applies `G` element-wise, producing a flat evidence field.
pub fn evidence_field(logits: &ClassField, activation: Activation) -> Result<ClassField> {
    if logits.data.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut out = logits.clone();
    for z in out.data.iter_mut() {
        *z = activation.apply(*z);
    }
    Ok(out)
}

pub fn generate_evidence(
    logits: &ClassField,
    activation: Activation,
) -> Result<Grid<EvidenceRecord>> {
    let ev = evidence_field(logits, activation)?;
    let data = ev
        .iter_voxels()
        .map(|v| EvidenceRecord::new(v.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Grid::from_vec(logits.width, logits.height, data)
}

fn one_hot_index(y: &[f64], classes: usize) -> Result<usize> {
    if y.len() != classes {
        return Err(Error::MalformedOneHot);
    }
    let mut hot = None;
    for (k, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::MalformedOneHot);
            }
            hot = Some(k);
        } else if v != 0.0 {
            return Err(Error::MalformedOneHot);
        }
    }
    hot.ok_or(Error::MalformedOneHot)
}

/// Negative log marginal likelihood of the Dirichlet: log T − log c_{k*}.
pub fn edl_loss(record: &EvidenceRecord, y: &[f64]) -> Result<f64> {
    let k = one_hot_index(y, record.classes())?;
    Ok(edl_loss_for_class(record.evidence(), k))
}

#[inline]
pub fn edl_loss_for_class(evidence: &[f64], class: usize) -> f64 {
    let strength = evidence.iter().sum::<f64>() + evidence.len() as f64;
    strength.ln() - (evidence[class] + 1.0).ln()
}

/// Epoch/rank schedule for the dynamic weight
/// ϖ = φ·tanh(ξ(r)·λ(h)) + 1 with ξ(r) = 2r/R − 1 and λ(h) = 2h/V − 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub phi: f64,
    pub total_epochs: usize,
    pub epoch: usize,
    pub voxels: usize,
}

impl WeightSchedule {
    pub fn new(phi: f64, total_epochs: usize, epoch: usize, voxels: usize) -> Result<Self> {
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(Error::InvalidConfig(format!("phi must be >= 0, got {phi}")));
        }
        if total_epochs == 0 || epoch == 0 || epoch > total_epochs {
            return Err(Error::EpochOutOfBounds {
                epoch,
                total: total_epochs,
            });
        }
        if voxels == 0 {
            return Err(Error::RankOutOfBounds { rank: 0, voxels });
        }
        Ok(Self {
            phi,
            total_epochs,
            epoch,
            voxels,
        })
    }

    pub fn with_voxels(self, voxels: usize) -> Self {
        Self { voxels, ..self }
    }

    pub fn xi(&self) -> f64 {
        2.0 * self.epoch as f64 / self.total_epochs as f64 - 1.0
    }

    pub fn lambda(&self, rank: usize) -> f64 {
        2.0 * rank as f64 / self.voxels as f64 - 1.0
    }
}

/// ϖ(r, h). Rank 1 is the voxel with the lowest score.
pub fn dynamic_weight(schedule: &WeightSchedule, rank: usize) -> Result<f64> {
    if rank == 0 || rank > schedule.voxels {
        return Err(Error::RankOutOfBounds {
            rank,
            voxels: schedule.voxels,
        });
    }
    Ok(schedule.phi * (schedule.xi() * schedule.lambda(rank)).tanh() + 1.0)
}

/// Ranks `scores` ascending (ties by index) and returns ϖ per voxel.
pub fn rank_weights(scores: &[f64], schedule: &WeightSchedule) -> Vec<f64> {
    let schedule = schedule.with_voxels(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut weights = vec![0.0; scores.len()];
    for (pos, &voxel) in order.iter().enumerate() {
        weights[voxel] = schedule.phi * (schedule.xi() * schedule.lambda(pos + 1)).tanh() + 1.0;
    }
    weights
}

fn check_labels(probs: &ClassField, labels: &LabelField) -> Result<()> {
    check_dims(probs.dims(), labels.dims())?;
    if let Some(&bad) = labels.data.iter().find(|&&l| l as usize >= probs.classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} outside {} classes",
            probs.classes
        )));
    }
    Ok(())
}

/// Weighted mean cross-entropy Σ_j w_j·(−log p_{j,y_j}) / V.
fn weighted_ce(probs: &ClassField, labels: &LabelField, weights: Option<&[f64]>) -> f64 {
    let v = probs.voxels();
    let mut sum = 0.0;
    for j in 0..v {
        let w = weights.map_or(1.0, |w| w[j]);
        let p = probs.voxel(j)[labels.data[j] as usize].max(CE_FLOOR);
        sum += -w * p.ln();
    }
    sum / v as f64
}

struct DiceSums {
    intersection: f64,
    predicted: f64,
    target: f64,
}

fn dice_sums(
    probs: &ClassField,
    labels: &LabelField,
    weights: Option<&[f64]>,
    class: usize,
) -> DiceSums {
    let mut s = DiceSums {
        intersection: 0.0,
        predicted: 0.0,
        target: 0.0,
    };
    for j in 0..probs.voxels() {
        let w = weights.map_or(1.0, |w| w[j]);
        let p = probs.voxel(j)[class];
        let y = if labels.data[j] as usize == class {
            1.0
        } else {
            0.0
        };
        s.intersection += w * p * y;
        s.predicted += w * p;
        s.target += w * y;
    }
    s
}

/// Soft Dice loss averaged over the foreground classes 1..N, with optional
/// per-voxel weights folded into every sum.
fn weighted_dice(probs: &ClassField, labels: &LabelField, weights: Option<&[f64]>) -> f64 {
    let fg = probs.classes.saturating_sub(1).max(1);
    let first = if probs.classes > 1 { 1 } else { 0 };
    let mut total = 0.0;
    for class in first..probs.classes {
        let s = dice_sums(probs, labels, weights, class);
        total +=
            1.0 - (2.0 * s.intersection + DICE_SMOOTH) / (s.predicted + s.target + DICE_SMOOTH);
    }
    total / fg as f64
}

/// Weighted CE + weighted soft Dice with caller-supplied voxel weights.
pub fn weighted_ce_dice(
    probs: &ClassField,
    labels: &LabelField,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_labels(probs, labels)?;
    if let Some(w) = weights {
        if w.len() != probs.voxels() {
            return Err(Error::DimensionMismatch((probs.voxels(), 1), (w.len(), 1)));
        }
    }
    Ok(weighted_ce(probs, labels, weights) + weighted_dice(probs, labels, weights))
}

pub fn ce_loss(probs: &ClassField, labels: &LabelField) -> Result<f64> {
    check_labels(probs, labels)?;
    Ok(weighted_ce(probs, labels, None))
}

pub fn dice_loss(probs: &ClassField, labels: &LabelField) -> Result<f64> {
    check_labels(probs, labels)?;
    Ok(weighted_dice(probs, labels, None))
}

/// ϖ-weighted CE plus ϖ-weighted soft Dice, ranks taken from the per-voxel
/// uncertainty of `evidence`.
pub fn sort_loss(
    evidence: &ClassField,
    probs: &ClassField,
    labels: &LabelField,
    schedule: &WeightSchedule,
) -> Result<f64> {
    evidence.ensure_same_dims(probs)?;
    check_labels(probs, labels)?;
    let weights = uncertainty_rank_weights(evidence, schedule);
    Ok(weighted_ce(probs, labels, Some(&weights)) + weighted_dice(probs, labels, Some(&weights)))
}

/// ϖ per voxel from the uncertainty ordering of an evidence field.
pub fn uncertainty_rank_weights(evidence: &ClassField, schedule: &WeightSchedule) -> Vec<f64> {
    let u: Vec<f64> = evidence.iter_voxels().map(uncertainty_of).collect();
    rank_weights(&u, schedule)
}

/// Per-voxel EDL loss of each fused mass mapped back to Dirichlet evidence.
pub fn fused_edl_terms(fused: &FusedEvidenceField, labels: &LabelField) -> Result<Vec<f64>> {
    check_dims(fused.dims(), labels.dims())?;
    fused
        .masses
        .iter()
        .zip(&labels.data)
        .map(|(m, &y)| {
            let record = m.to_dirichlet()?;
            if y as usize >= record.classes() {
                return Err(Error::MalformedOneHot);
            }
            Ok(edl_loss_for_class(record.evidence(), y as usize))
        })
        .collect()
}

/// IVUM-weighted EDL loss: mean over voxels of (1 − ĨVUM)·L_EDL.
pub fn gl_loss(fused: &FusedEvidenceField, labels: &LabelField) -> Result<f64> {
    let terms = fused_edl_terms(fused, labels)?;
    let sum: f64 = terms
        .iter()
        .zip(&fused.ivum_normalized)
        .map(|(l, iv)| (1.0 - iv) * l)
        .sum();
    Ok(sum / terms.len() as f64)
}

/// As [`gl_loss`] with each voxel further weighted by ϖ from the ĨVUM ranks.
pub fn s_gl_loss(
    fused: &FusedEvidenceField,
    labels: &LabelField,
    schedule: &WeightSchedule,
) -> Result<f64> {
    let terms = fused_edl_terms(fused, labels)?;
    let ranks = rank_weights(&fused.ivum_normalized, schedule);
    let sum: f64 = terms
        .iter()
        .zip(&fused.ivum_normalized)
        .zip(&ranks)
        .map(|((l, iv), w)| w * (1.0 - iv) * l)
        .sum();
    Ok(sum / terms.len() as f64)
}

/// Weights of the IVUM-guided terms: `1 − ĨVUM` and `ϖ·(1 − ĨVUM)`.
pub fn ivum_weights(fused: &FusedEvidenceField, schedule: &WeightSchedule) -> (Vec<f64>, Vec<f64>) {
    let gl: Vec<f64> = fused.ivum_normalized.iter().map(|iv| 1.0 - iv).collect();
    let ranks = rank_weights(&fused.ivum_normalized, schedule);
    let sgl = gl.iter().zip(&ranks).map(|(a, b)| a * b).collect();
    (gl, sgl)
}

// ---------------------------------------------------------------------------
// Gradients with respect to logits
// ---------------------------------------------------------------------------

/// Value and gradient of weighted CE + weighted soft Dice on softmax(logits).
pub fn ce_dice_with_grad(
    logits: &ClassField,
    labels: &LabelField,
    weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    check_labels(logits, labels)?;
    let probs = logits.softmax();
    let n = logits.classes;
    let v = logits.voxels();
    let value = weighted_ce(&probs, labels, weights) + weighted_dice(&probs, labels, weights);

    // dL/dp, then through the softmax Jacobian.
    let mut dp = vec![0.0; v * n];
    for j in 0..v {
        let w = weights.map_or(1.0, |w| w[j]);
        let y = labels.data[j] as usize;
        let p = probs.voxel(j)[y];
        if p > CE_FLOOR {
            dp[j * n + y] -= w / (p * v as f64);
        }
    }
    let first = if n > 1 { 1 } else { 0 };
    let fg = n.saturating_sub(1).max(1) as f64;
    for class in first..n {
        let s = dice_sums(&probs, labels, weights, class);
        let num = 2.0 * s.intersection + DICE_SMOOTH;
        let den = s.predicted + s.target + DICE_SMOOTH;
        for j in 0..v {
            let w = weights.map_or(1.0, |w| w[j]);
            let y = if labels.data[j] as usize == class {
                1.0
            } else {
                0.0
            };
            // d/dp of −num/den
            dp[j * n + class] -= (2.0 * w * y * den - num * w) / (den * den) / fg;
        }
    }
    let mut grad = vec![0.0; v * n];
    for j in 0..v {
        let p = probs.voxel(j);
        let g = &dp[j * n..(j + 1) * n];
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for k in 0..n {
            grad[j * n + k] = p[k] * (g[k] - dot);
        }
    }
    Ok((value, grad))
}

/// Value and gradient of the weighted mean vanilla EDL loss on G(logits).
pub fn edl_with_grad(
    logits: &ClassField,
    activation: Activation,
    labels: &LabelField,
    weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    check_labels(logits, labels)?;
    let evidence = evidence_field(logits, activation)?;
    let n = logits.classes;
    let v = logits.voxels();
    let mut value = 0.0;
    let mut grad = vec![0.0; v * n];
    for j in 0..v {
        let w = weights.map_or(1.0, |w| w[j]) / v as f64;
        let e = evidence.voxel(j);
        let y = labels.data[j] as usize;
        value += w * edl_loss_for_class(e, y);
        let strength = e.iter().sum::<f64>() + n as f64;
        for k in 0..n {
            let mut d = 1.0 / strength;
            if k == y {
                d -= 1.0 / (e[y] + 1.0);
            }
            grad[j * n + k] = w * d * activation.derivative(logits.data[j * n + k]);
        }
    }
    Ok((value, grad))
}

/// Weighted mean EDL loss of the pignistic fusion of G(mixed) with G(reference),
/// with gradients for both logit fields.
///
/// With subjective-logic masses b = v/T, u = N/T the fused mass maps back to
/// Dirichlet evidence v_k = v_d,k·v_e,k/N + (v_d,k + v_e,k)/(N + 1); the
/// normalizer cancels in b/u, so the loss only depends on that expression.
pub fn fused_edl_with_grad(
    mixed_logits: &ClassField,
    reference_logits: &ClassField,
    activation: Activation,
    labels: &LabelField,
    weights: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    mixed_logits.ensure_same_dims(reference_logits)?;
    check_labels(mixed_logits, labels)?;
    let ed = evidence_field(mixed_logits, activation)?;
    let ee = evidence_field(reference_logits, activation)?;
    let n = mixed_logits.classes;
    let nf = n as f64;
    let cross = 1.0 / (nf + 1.0);
    let v = mixed_logits.voxels();
    let mut value = 0.0;
    let mut grad_d = vec![0.0; v * n];
    let mut grad_e = vec![0.0; v * n];
    if weights.len() != v {
        return Err(Error::DimensionMismatch((v, 1), (weights.len(), 1)));
    }
    let mut fused = vec![0.0; n];
    for (j, &wj) in weights.iter().enumerate() {
        let w = wj / v as f64;
        if w == 0.0 {
            continue;
        }
        let d = ed.voxel(j);
        let e = ee.voxel(j);
        for k in 0..n {
            fused[k] = d[k] * e[k] / nf + cross * (d[k] + e[k]);
        }
        let y = labels.data[j] as usize;
        value += w * edl_loss_for_class(&fused, y);
        let strength = fused.iter().sum::<f64>() + nf;
        for k in 0..n {
            let mut dl = 1.0 / strength;
            if k == y {
                dl -= 1.0 / (fused[y] + 1.0);
            }
            let idx = j * n + k;
            grad_d[idx] =
                w * dl * (e[k] / nf + cross) * activation.derivative(mixed_logits.data[idx]);
            grad_e[idx] =
                w * dl * (d[k] / nf + cross) * activation.derivative(reference_logits.data[idx]);
        }
    }
    Ok((value, grad_d, grad_e))
}
