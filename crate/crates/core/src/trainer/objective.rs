//! The full per-network objective: base CE + Dice on each mixed input plus
//! the weighted uncertainty-sort and IVUM-guided evidential terms.
//!
//! Rank weights and IVUM weights are computed once per step by
//! [`Objective::freeze`] and held constant while differentiating.

use serde::{Deserialize, Serialize};

use crate::edl::{
    ce_dice_with_grad, evidence_field, fused_edl_terms, fused_edl_with_grad, ivum_weights,
    uncertainty_rank_weights, weighted_ce_dice, Activation, WeightSchedule,
};
use crate::error::Result;
use crate::field::{ImageField, LabelField};
use crate::fusion::fuse_fields;

use super::model::{Features, ModelGrad, PixelModel};

/// One mixed input, its (possibly pseudo-) label, and the original labeled
/// images whose evidence is fused with the mixed evidence.
#[derive(Debug, Clone)]
pub struct View<'a> {
    pub input: &'a ImageField,
    pub target: &'a LabelField,
    pub references: Vec<&'a ImageField>,
}

/// Coefficients of the sort, gl and s-gl terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermWeights {
    pub sort: f64,
    pub gl: f64,
    pub sgl: f64,
}

impl TermWeights {
    pub const NONE: TermWeights = TermWeights {
        sort: 0.0,
        gl: 0.0,
        sgl: 0.0,
    };
}

/// Per-term values. Terms whose coefficient is zero are not evaluated and
/// read 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub base: f64,
    pub sort: f64,
    pub gl: f64,
    pub sgl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct FrozenView {
    sort: Vec<f64>,
    gl: Vec<Vec<f64>>,
    sgl: Vec<Vec<f64>>,
}

/// Voxel weights held constant within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Frozen {
    views: Vec<FrozenView>,
}

struct PreparedView<'a> {
    view: View<'a>,
    input: Features,
    references: Vec<Features>,
}

pub struct Objective<'a> {
    views: Vec<PreparedView<'a>>,
    terms: TermWeights,
    activation: Activation,
    rho: f64,
    schedule: WeightSchedule,
}

impl<'a> Objective<'a> {
    pub fn new(
        views: Vec<View<'a>>,
        terms: TermWeights,
        activation: Activation,
        rho: f64,
        schedule: WeightSchedule,
    ) -> Self {
        let views = views
            .into_iter()
            .map(|view| PreparedView {
                input: Features::extract(view.input),
                references: view
                    .references
                    .iter()
                    .map(|r| Features::extract(r))
                    .collect(),
                view,
            })
            .collect();
        Self {
            views,
            terms,
            activation,
            rho,
            schedule,
        }
    }

    fn uses_fusion(&self) -> bool {
        self.terms.gl > 0.0 || self.terms.sgl > 0.0
    }

    /// Ranks voxels by uncertainty and by normalized IVUM at `model`.
    pub fn freeze(&self, model: &PixelModel) -> Result<Frozen> {
        let mut views = Vec::with_capacity(self.views.len());
        for pv in &self.views {
            let schedule = self.schedule.with_voxels(pv.input.voxels());
            let evidence = evidence_field(&model.forward(&pv.input), self.activation)?;
            let sort = if self.terms.sort > 0.0 {
                uncertainty_rank_weights(&evidence, &schedule)
            } else {
                Vec::new()
            };
            let mut gl = Vec::new();
            let mut sgl = Vec::new();
            if self.uses_fusion() {
                for r in &pv.references {
                    let ref_evidence = evidence_field(&model.forward(r), self.activation)?;
                    let fused = fuse_fields(&evidence, &ref_evidence, self.rho)?;
                    let (g, s) = ivum_weights(&fused, &schedule);
                    gl.push(g);
                    sgl.push(s);
                }
            }
            views.push(FrozenView { sort, gl, sgl });
        }
        Ok(Frozen { views })
    }

    /// Objective value through the general mass-function path (fusion,
    /// Dirichlet inverse, EDL loss). Used as the finite-difference reference.
    pub fn value(&self, model: &PixelModel, frozen: &Frozen) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        for (pv, fv) in self.views.iter().zip(&frozen.views) {
            let logits = model.forward(&pv.input);
            let probs = logits.softmax();
            out.base += weighted_ce_dice(&probs, pv.view.target, None)?;
            if self.terms.sort > 0.0 {
                out.sort += weighted_ce_dice(&probs, pv.view.target, Some(&fv.sort))?;
            }
            if self.uses_fusion() {
                let evidence = evidence_field(&logits, self.activation)?;
                for (r, feats) in pv.references.iter().enumerate() {
                    let ref_evidence = evidence_field(&model.forward(feats), self.activation)?;
                    let fused = fuse_fields(&evidence, &ref_evidence, self.rho)?;
                    let terms = fused_edl_terms(&fused, pv.view.target)?;
                    let mean = |w: &[f64]| {
                        terms.iter().zip(w).map(|(l, w)| l * w).sum::<f64>() / terms.len() as f64
                    };
                    if self.terms.gl > 0.0 {
                        out.gl += mean(&fv.gl[r]);
                    }
                    if self.terms.sgl > 0.0 {
                        out.sgl += mean(&fv.sgl[r]);
                    }
                }
            }
        }
        out.total = self.total(&out);
        Ok(out)
    }

    fn total(&self, b: &LossBreakdown) -> f64 {
        b.base + self.terms.sort * b.sort + self.terms.gl * b.gl + self.terms.sgl * b.sgl
    }

    /// Objective value and its gradient with respect to the model parameters.
    pub fn value_and_grad(
        &self,
        model: &PixelModel,
        frozen: &Frozen,
    ) -> Result<(LossBreakdown, ModelGrad)> {
        let mut out = LossBreakdown::default();
        let mut grad = PixelModel::zeros();
        for (pv, fv) in self.views.iter().zip(&frozen.views) {
            let logits = model.forward(&pv.input);
            let (base, mut grad_logits) = ce_dice_with_grad(&logits, pv.view.target, None)?;
            out.base += base;
            if self.terms.sort > 0.0 {
                let (sort, g) = ce_dice_with_grad(&logits, pv.view.target, Some(&fv.sort))?;
                out.sort += sort;
                axpy(&mut grad_logits, self.terms.sort, &g);
            }
            if self.uses_fusion() {
                for (r, feats) in pv.references.iter().enumerate() {
                    let ref_logits = model.forward(feats);
                    let mut grad_ref = vec![0.0; ref_logits.data.len()];
                    for (coef, weights, slot) in [
                        (self.terms.gl, &fv.gl[r], &mut out.gl),
                        (self.terms.sgl, &fv.sgl[r], &mut out.sgl),
                    ] {
                        if coef == 0.0 {
                            continue;
                        }
                        let (value, gd, ge) = fused_edl_with_grad(
                            &logits,
                            &ref_logits,
                            self.activation,
                            pv.view.target,
                            weights,
                        )?;
                        *slot += value;
                        axpy(&mut grad_logits, coef, &gd);
                        axpy(&mut grad_ref, coef, &ge);
                    }
                    model.backward(feats, &grad_ref, &mut grad)?;
                }
            }
            model.backward(&pv.input, &grad_logits, &mut grad)?;
        }
        out.total = self.total(&out);
        Ok((out, grad))
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
