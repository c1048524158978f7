//! Two-network evidential pre-training and cross-teaching self-training on
//! synthetic images.
//!
//! One optimization step is taken per epoch. Random draws come from a
//! ChaCha8 generator seeded with `config.seed`: stream 0 builds the dataset,
//! stream 1 drives pre-training, stream 2 initializes the networks and
//! stream 3 drives self-training, so changing the self-training weights
//! leaves the pre-trained networks untouched.

mod config;
mod data;
mod model;
mod objective;

pub use config::TrainConfig;
pub use data::{
    generate_dataset, generate_sample, Dataset, SyntheticSample, BACKGROUND_MEAN, FOREGROUND_MEAN,
    NOISE_STD,
};
pub use model::{Features, ModelGrad, PixelModel, CLASSES, FEATURES};
pub use objective::{Frozen, LossBreakdown, Objective, TermWeights, View};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edl::WeightSchedule;
use crate::error::{Error, Result};
use crate::field::{Grid, ImageField, LabelField};
use crate::metrics::{distance_metrics, overlap_metrics};
use crate::mix::{make_mask_with, mix, pseudo_label};

const PRETRAIN_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SELFTRAIN_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The two sub-networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPair {
    pub net1: PixelModel,
    pub net2: PixelModel,
}

impl NetPair {
    pub fn init(config: &TrainConfig) -> Self {
        let mut rng = stream(config.seed, INIT_STREAM);
        let net1 = PixelModel::random(config.init_scale, &mut rng);
        let net2 = PixelModel::random(config.init_scale, &mut rng);
        Self { net1, net2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Selftrain,
}

/// Losses of both networks at one step, evaluated before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub net1: LossBreakdown,
    pub net2: LossBreakdown,
}

fn schedule(config: &TrainConfig, total: usize, epoch: usize) -> Result<WeightSchedule> {
    let voxels = config.image_size * config.image_size;
    WeightSchedule::new(config.phi, total, epoch, voxels)
}

fn descend(
    net: &mut PixelModel,
    objective: &Objective<'_>,
    learning_rate: f64,
) -> Result<LossBreakdown> {
    let frozen = objective.freeze(net)?;
    let (loss, grad) = objective.value_and_grad(net, &frozen)?;
    if !loss.total.is_finite() || grad.parameters().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    net.step(&grad, learning_rate);
    Ok(loss)
}

/// One pre-training step on labeled images `a` (first half) and `b` (second
/// half). Each network sees its own mixed image and fuses its mixed
/// evidence with the evidence of both originals.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_step(
    nets: &mut NetPair,
    a: &SyntheticSample,
    b: &SyntheticSample,
    mask1: &Grid<u8>,
    mask2: &Grid<u8>,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(LossBreakdown, LossBreakdown)> {
    let sched = schedule(config, config.epochs_pre, epoch)?;
    let terms = TermWeights {
        sort: config.lambda1,
        gl: config.lambda2,
        sgl: config.lambda3,
    };
    let mut losses = [LossBreakdown::default(); 2];
    for (slot, (net, mask)) in [(&mut nets.net1, mask1), (&mut nets.net2, mask2)]
        .into_iter()
        .enumerate()
    {
        let input = mix(&a.image, &b.image, mask)?;
        let target = mix(&a.label, &b.label, mask)?;
        let view = View {
            input: &input,
            target: &target,
            references: vec![&a.image, &b.image],
        };
        let objective = Objective::new(vec![view], terms, config.activation, config.rho, sched);
        losses[slot] = descend(net, &objective, config.learning_rate)?;
    }
    Ok((losses[0], losses[1]))
}

/// Mixed input and label for one network in self-training.
fn self_views(
    labeled_first: bool,
    lab: &SyntheticSample,
    unl: &ImageField,
    pseudo: &LabelField,
    mask: &Grid<u8>,
) -> Result<(ImageField, LabelField)> {
    if labeled_first {
        Ok((mix(&lab.image, unl, mask)?, mix(&lab.label, pseudo, mask)?))
    } else {
        Ok((mix(unl, &lab.image, mask)?, mix(pseudo, &lab.label, mask)?))
    }
}

/// One cross-teaching step. Both mixed images are
/// `X1 = Xl_i ⊙ M + Xu_m ⊙ (1 − M)` and `X2 = Xu_n ⊙ M + Xl_j ⊙ (1 − M)`;
/// each network is supervised on both, with the unlabeled parts labeled by
/// the other network. Net 1 updates first and net 2's pseudo-labels come
/// from the updated net 1.
#[allow(clippy::too_many_arguments)]
pub fn selftrain_step(
    nets: &mut NetPair,
    lab_i: &SyntheticSample,
    lab_j: &SyntheticSample,
    unl_m: &ImageField,
    unl_n: &ImageField,
    mask: &Grid<u8>,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(LossBreakdown, LossBreakdown)> {
    let sched = schedule(config, config.epochs_self, epoch)?;
    let terms = TermWeights {
        sort: config.lambda4,
        gl: config.lambda5,
        sgl: config.lambda6,
    };
    let mut losses = [LossBreakdown::default(); 2];
    for (slot, loss) in losses.iter_mut().enumerate() {
        let teacher = if slot == 0 { &nets.net2 } else { &nets.net1 };
        let pl_m = pseudo_label(&teacher.forward_image(unl_m).softmax());
        let pl_n = pseudo_label(&teacher.forward_image(unl_n).softmax());
        let (x1, y1) = self_views(true, lab_i, unl_m, &pl_m, mask)?;
        let (x2, y2) = self_views(false, lab_j, unl_n, &pl_n, mask)?;
        let views = vec![
            View {
                input: &x1,
                target: &y1,
                references: vec![&lab_i.image],
            },
            View {
                input: &x2,
                target: &y2,
                references: vec![&lab_j.image],
            },
        ];
        let objective = Objective::new(views, terms, config.activation, config.rho, sched);
        let student = if slot == 0 {
            &mut nets.net1
        } else {
            &mut nets.net2
        };
        *loss = descend(student, &objective, config.learning_rate)?;
    }
    Ok((losses[0], losses[1]))
}

/// Runs all pre-training epochs from freshly initialized networks.
pub fn pretrain_stage(
    config: &TrainConfig,
    dataset: &Dataset,
) -> Result<(NetPair, Vec<EpochRecord>)> {
    config.validate()?;
    let mut nets = NetPair::init(config);
    let mut rng = stream(config.seed, PRETRAIN_STREAM);
    let (l1, l2) = dataset.labeled_halves();
    let size = config.image_size;
    let mut log = Vec::with_capacity(config.epochs_pre);
    for epoch in 1..=config.epochs_pre {
        let a = &l1[rng.random_range(0..l1.len())];
        let b = &l2[rng.random_range(0..l2.len())];
        let m1 = make_mask_with(size, size, config.eta, &mut rng)?;
        let m2 = make_mask_with(size, size, config.eta, &mut rng)?;
        let (net1, net2) = pretrain_step(&mut nets, a, b, &m1.grid, &m2.grid, config, epoch)?;
        log.push(EpochRecord {
            stage: Stage::Pretrain,
            epoch,
            net1,
            net2,
        });
    }
    Ok((nets, log))
}

/// Runs all self-training epochs starting from `nets`.
pub fn selftrain_stage(
    config: &TrainConfig,
    dataset: &Dataset,
    mut nets: NetPair,
) -> Result<(NetPair, Vec<EpochRecord>)> {
    config.validate()?;
    let mut rng = stream(config.seed, SELFTRAIN_STREAM);
    let size = config.image_size;
    let labeled = &dataset.labeled;
    let unlabeled = &dataset.unlabeled;
    let mut log = Vec::with_capacity(config.epochs_self);
    for epoch in 1..=config.epochs_self {
        let i = rng.random_range(0..labeled.len());
        let j = rng.random_range(0..labeled.len());
        let mn = sample(&mut rng, unlabeled.len(), 2);
        let mask = make_mask_with(size, size, config.eta, &mut rng)?;
        let (net1, net2) = selftrain_step(
            &mut nets,
            &labeled[i],
            &labeled[j],
            &unlabeled[mn.index(0)].image,
            &unlabeled[mn.index(1)].image,
            &mask.grid,
            config,
            epoch,
        )?;
        log.push(EpochRecord {
            stage: Stage::Selftrain,
            epoch,
            net1,
            net2,
        });
    }
    Ok((nets, log))
}

/// Argmax segmentation of one image.
pub fn predict(net: &PixelModel, image: &ImageField) -> LabelField {
    net.forward_image(image).argmax()
}

/// Test-set averages for one network. Surface distances are averaged over
/// the images where both masks have a surface; the rest are counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetMetrics {
    pub dice: f64,
    pub jaccard: f64,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub undefined_surfaces: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub net1: NetMetrics,
    pub net2: NetMetrics,
}

impl PairMetrics {
    /// Mean of the two networks' test Dice.
    pub fn mean_dice(&self) -> f64 {
        0.5 * (self.net1.dice + self.net2.dice)
    }
}

pub fn evaluate_net(net: &PixelModel, samples: &[SyntheticSample]) -> Result<NetMetrics> {
    let mut dice = 0.0;
    let mut jaccard = 0.0;
    let mut hd95 = 0.0;
    let mut asd = 0.0;
    let mut defined = 0usize;
    for s in samples {
        let pred = predict(net, &s.image);
        let (d, j) = overlap_metrics(&pred, &s.label)?;
        dice += d;
        jaccard += j;
        match distance_metrics(&pred, &s.label) {
            Ok((h, a)) => {
                hd95 += h;
                asd += a;
                defined += 1;
            }
            Err(Error::EmptySurface) => {}
            Err(e) => return Err(e),
        }
    }
    let n = samples.len().max(1) as f64;
    let avg = |v: f64| (defined > 0).then(|| v / defined as f64);
    Ok(NetMetrics {
        dice: dice / n,
        jaccard: jaccard / n,
        hd95: avg(hd95),
        asd: avg(asd),
        undefined_surfaces: samples.len() - defined,
    })
}

pub fn evaluate_pair(nets: &NetPair, samples: &[SyntheticSample]) -> Result<PairMetrics> {
    Ok(PairMetrics {
        net1: evaluate_net(&nets.net1, samples)?,
        net2: evaluate_net(&nets.net2, samples)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub losses: Vec<EpochRecord>,
    pub pretrain_metrics: PairMetrics,
    pub final_metrics: PairMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub nets: NetPair,
    pub dataset: Dataset,
}

/// Pre-training, self-training and test-set evaluation of both networks.
pub fn run_experiment(config: &TrainConfig) -> Result<RunOutput> {
    config.validate()?;
    let dataset = generate_dataset(config);
    let (nets, mut losses) = pretrain_stage(config, &dataset)?;
    let pretrain_metrics = evaluate_pair(&nets, &dataset.test)?;
    let (nets, final_metrics) = if config.epochs_self > 0 {
        let (nets, log) = selftrain_stage(config, &dataset, nets)?;
        losses.extend(log);
        let m = evaluate_pair(&nets, &dataset.test)?;
        (nets, m)
    } else {
        (nets, pretrain_metrics)
    };
    Ok(RunOutput {
        report: RunReport {
            config: config.clone(),
            losses,
            pretrain_metrics,
            final_metrics,
        },
        nets,
        dataset,
    })
}

/// Plain supervised CE + Dice on the labeled images (all of them, one step
/// per epoch, no mixing). Returns the trained model.
pub fn train_supervised(
    config: &TrainConfig,
    dataset: &Dataset,
    epochs: usize,
) -> Result<PixelModel> {
    config.validate()?;
    let mut net = NetPair::init(config).net1;
    for epoch in 1..=epochs {
        let sched = schedule(config, epochs, epoch)?;
        let views = dataset
            .labeled
            .iter()
            .map(|s| View {
                input: &s.image,
                target: &s.label,
                references: Vec::new(),
            })
            .collect();
        let objective = Objective::new(
            views,
            TermWeights::NONE,
            config.activation,
            config.rho,
            sched,
        );
        descend(&mut net, &objective, config.learning_rate)?;
    }
    Ok(net)
}

/// Largest relative gradient error seen by [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub points: usize,
    pub max_rel_error_pretrain: f64,
    pub max_rel_error_selftrain: f64,
    /// Parameter draws rejected because a logit was within 1e-3 of a ReLU kink.
    pub resampled: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_pretrain
            .max(self.max_rel_error_selftrain)
    }
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_FLOOR: f64 = 1e-6;
pub const RELU_KINK_MARGIN: f64 = 1e-3;
const MAX_RESAMPLES: usize = 1000;

/// |a − f| / max(|a|, |f|, floor) over every parameter.
fn max_rel_error(objective: &Objective<'_>, model: &PixelModel) -> Result<f64> {
    let frozen = objective.freeze(model)?;
    let (_, grad) = objective.value_and_grad(model, &frozen)?;
    let analytic = grad.parameters();
    let base = model.parameters();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + GRADCHECK_STEP;
        probe.set_parameters(&p);
        let plus = objective.value(&probe, &frozen)?.total;
        p[i] = base[i] - GRADCHECK_STEP;
        probe.set_parameters(&p);
        let minus = objective.value(&probe, &frozen)?.total;
        let fd = (plus - minus) / (2.0 * GRADCHECK_STEP);
        let a = analytic[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(GRADCHECK_FLOOR));
    }
    Ok(worst)
}

fn near_kink(model: &PixelModel, images: &[&ImageField]) -> bool {
    images.iter().any(|img| {
        model
            .forward_image(img)
            .data
            .iter()
            .any(|z| z.abs() < RELU_KINK_MARGIN)
    })
}

/// Compares the analytic gradients of the full pre-training and
/// self-training objectives with central differences of the general-path
/// objective value at `points` random parameter draws. Rank and IVUM weights
/// are frozen at each draw. Uses a small synthetic batch of the configured
/// size and a mid-schedule epoch so the dynamic weights are non-trivial.
pub fn gradient_check(config: &TrainConfig, points: usize) -> Result<GradCheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.image_size;
    let samples: Vec<SyntheticSample> = (0..4).map(|_| generate_sample(size, &mut rng)).collect();
    let (a, b) = (&samples[0], &samples[1]);
    let (unl_m, unl_n) = (&samples[2].image, &samples[3].image);
    let total = 4;
    let sched = WeightSchedule::new(config.phi, total, 1, size * size)?;
    let mut report = GradCheckReport {
        points,
        max_rel_error_pretrain: 0.0,
        max_rel_error_selftrain: 0.0,
        resampled: 0,
    };
    for _ in 0..points {
        let mask = make_mask_with(size, size, config.eta, &mut rng)?;
        let teacher = PixelModel::random(1.0, &mut rng);
        let model = loop {
            let m = PixelModel::random(1.0, &mut rng);
            let candidates: Vec<&ImageField> = samples.iter().map(|s| &s.image).collect();
            if config.activation == crate::edl::Activation::Softplus {
                break m;
            }
            // Mixed inputs are checked too: their features differ near the
            // mask edge.
            let mixed = [
                mix(&a.image, &b.image, &mask.grid)?,
                mix(&a.image, unl_m, &mask.grid)?,
                mix(unl_n, &b.image, &mask.grid)?,
            ];
            let all: Vec<&ImageField> = candidates.into_iter().chain(mixed.iter()).collect();
            if !near_kink(&m, &all) {
                break m;
            }
            report.resampled += 1;
            if report.resampled > MAX_RESAMPLES * points.max(1) {
                return Err(Error::NonConvergence(report.resampled));
            }
        };

        let input = mix(&a.image, &b.image, &mask.grid)?;
        let target = mix(&a.label, &b.label, &mask.grid)?;
        let pre = Objective::new(
            vec![View {
                input: &input,
                target: &target,
                references: vec![&a.image, &b.image],
            }],
            TermWeights {
                sort: config.lambda1,
                gl: config.lambda2,
                sgl: config.lambda3,
            },
            config.activation,
            config.rho,
            sched,
        );
        report.max_rel_error_pretrain = report
            .max_rel_error_pretrain
            .max(max_rel_error(&pre, &model)?);

        let pl_m = pseudo_label(&teacher.forward_image(unl_m).softmax());
        let pl_n = pseudo_label(&teacher.forward_image(unl_n).softmax());
        let (x1, y1) = self_views(true, a, unl_m, &pl_m, &mask.grid)?;
        let (x2, y2) = self_views(false, b, unl_n, &pl_n, &mask.grid)?;
        let selft = Objective::new(
            vec![
                View {
                    input: &x1,
                    target: &y1,
                    references: vec![&a.image],
                },
                View {
                    input: &x2,
                    target: &y2,
                    references: vec![&b.image],
                },
            ],
            TermWeights {
                sort: config.lambda4,
                gl: config.lambda5,
                sgl: config.lambda6,
            },
            config.activation,
            config.rho,
            sched,
        );
        report.max_rel_error_selftrain = report
            .max_rel_error_selftrain
            .max(max_rel_error(&selft, &model)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            image_size: 12,
            n_labeled: 2,
            n_unlabeled: 4,
            n_test: 3,
            epochs_pre: 3,
            epochs_self: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_lambdas_reduce_pretraining_to_ce_dice() {
        let config = TrainConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..small()
        };
        let d = generate_dataset(&config);
        let mut nets = NetPair::init(&config);
        let mask = Grid::filled(12, 12, 1u8);
        let (l1, _) = pretrain_step(
            &mut nets,
            &d.labeled[0],
            &d.labeled[1],
            &mask,
            &mask,
            &config,
            1,
        )
        .unwrap();
        assert_eq!((l1.sort, l1.gl, l1.sgl), (0.0, 0.0, 0.0));
        assert_eq!(l1.total, l1.base);
    }

    #[test]
    fn epochs_self_zero_reports_pretrain_metrics() {
        let config = TrainConfig {
            epochs_self: 0,
            ..small()
        };
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.report.pretrain_metrics, out.report.final_metrics);
        assert_eq!(out.report.losses.len(), 3);
    }

    #[test]
    fn run_is_deterministic() {
        let a = run_experiment(&small()).unwrap();
        let b = run_experiment(&small()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.report.losses.len(), 6);
    }
}
