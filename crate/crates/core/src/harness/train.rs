//! The training loop: phantom crops → TinyNet → SALT activation → hybrid
//! loss → backward → AdamW.
//!
//! Single-threaded and fully determined by the configuration seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::net::{Precision, Scalar, TinyNet};
use super::optim::{adamw_step, AdamWState};
use super::phantom::{generate_phantom, Phantom};
use super::preprocess::{normalize_intensity, random_crop_with};
use crate::activation::{LogitVolume, ProbVolume, SaltHead};
use crate::loss::HybridLoss;
use crate::metrics::{dice, hierarchical_confusion, BitCodec};
use crate::tree::LabelTree;
use crate::volume::{Intensity, LabelVolume};
use crate::{Error, Result};

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// 1-based step index.
    pub step: usize,
    pub lr: f64,
    pub ce: f64,
    pub dice: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub step: usize,
    pub mean_leaf_dice: f64,
}

/// A trained backbone in either precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    F32(TinyNet<f32>),
    F64(TinyNet<f64>),
}

fn to_scalar<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x)).collect()
}

fn net_logits<T: Scalar>(net: &TinyNet<T>, input: &Intensity) -> Result<LogitVolume> {
    let pass = net.forward(&to_scalar::<T>(input.as_slice()), input.dims());
    LogitVolume::new(
        net.out_channels(),
        input.dims(),
        pass.output.iter().map(|v| v.as_f64()).collect(),
    )
}

impl Model {
    pub fn precision(&self) -> Precision {
        match self {
            Self::F32(_) => Precision::F32,
            Self::F64(_) => Precision::F64,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Self::F32(n) => n.out_channels(),
            Self::F64(n) => n.out_channels(),
        }
    }

    pub fn plan(&self) -> Vec<usize> {
        match self {
            Self::F32(n) => n.plan(),
            Self::F64(n) => n.plan(),
        }
    }

    /// Network output for an already normalised image.
    pub fn logits(&self, normalized: &Intensity) -> Result<LogitVolume> {
        match self {
            Self::F32(n) => net_logits(n, normalized),
            Self::F64(n) => net_logits(n, normalized),
        }
    }
}

/// Model plus activation: raw HU in, labels and per-node probabilities out.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub model: Model,
    pub head: SaltHead,
}

impl Segmenter {
    pub fn new(model: Model, tree: LabelTree) -> Result<Self> {
        if model.out_channels() != tree.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} output channels, tree has {} nodes",
                model.out_channels(),
                tree.len()
            )));
        }
        Ok(Self {
            model,
            head: SaltHead::new(tree),
        })
    }

    /// Log cumulative probabilities for a raw intensity volume.
    pub fn probabilities(&self, intensity: &Intensity) -> Result<ProbVolume> {
        let logits = self.model.logits(&normalize_intensity(intensity))?;
        self.head.forward(&logits)
    }

    pub fn predict(&self, intensity: &Intensity) -> Result<(LabelVolume, ProbVolume)> {
        let probs = self.probabilities(intensity)?;
        let mut labels = crate::activation::predict_labels(&probs, self.head.tree())?;
        labels.set_spacing(intensity.spacing());
        Ok((labels, probs))
    }
}

/// Mean Dice over the leaves of `tree`.
pub fn mean_leaf_dice(gt: &LabelVolume, pred: &LabelVolume, tree: &LabelTree) -> Result<f64> {
    let codec = BitCodec::new(tree);
    let leaves: Vec<usize> = tree.leaves().collect();
    let mut total = 0.0;
    for &leaf in &leaves {
        total += dice(hierarchical_confusion(gt, pred, &codec, leaf)?);
    }
    Ok(total / leaves.len() as f64)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub losses: Vec<LossRecord>,
    pub validation: Vec<ValidationRecord>,
}

impl TrainOutcome {
    /// Training log as `step,lr,ce,dice,total`.
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("step,lr,ce,dice,total\n");
        for r in &self.losses {
            out.push_str(&format!("{},{},{},{},{}\n", r.step, r.lr, r.ce, r.dice, r.total));
        }
        out
    }

    pub fn final_dice(&self) -> Option<f64> {
        self.validation.last().map(|v| v.mean_leaf_dice)
    }
}

/// Phantoms used by a run, derived from the configuration seed.
pub struct Dataset {
    pub train: Vec<Phantom>,
    pub validation: Phantom,
}

pub fn build_dataset(config: &TrainConfig, tree: &LabelTree, rng: &mut impl Rng) -> Result<Dataset> {
    let train = (0..config.train_volumes)
        .map(|_| generate_phantom(&config.phantom, tree, rng.random()))
        .collect::<Result<Vec<_>>>()?;
    let validation = generate_phantom(&config.phantom, tree, rng.random())?;
    Ok(Dataset { train, validation })
}

pub fn train(config: &TrainConfig, tree: &LabelTree) -> Result<TrainOutcome> {
    match config.precision {
        Precision::F32 => train_typed::<f32>(config, tree).map(|(net, l, v)| TrainOutcome {
            model: Model::F32(net),
            losses: l,
            validation: v,
        }),
        Precision::F64 => train_typed::<f64>(config, tree).map(|(net, l, v)| TrainOutcome {
            model: Model::F64(net),
            losses: l,
            validation: v,
        }),
    }
}

type Trained<T> = (TinyNet<T>, Vec<LossRecord>, Vec<ValidationRecord>);

fn train_typed<T: Scalar>(config: &TrainConfig, tree: &LabelTree) -> Result<Trained<T>> {
    config.validate()?;
    let loss_fn = HybridLoss::new(tree);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let data = build_dataset(config, tree, &mut rng)?;
    let train_images: Vec<Intensity> = data.train.iter().map(|p| normalize_intensity(&p.intensity)).collect();

    let mut net = TinyNet::<T>::with_plan(&config.plan(tree.len()), rng.random());
    let shapes: Vec<usize> = net.tensors().iter().map(|t| t.2.len()).collect();
    let mut state = AdamWState::<T>::new(&shapes);
    let optimizer = config.optimizer();
    let batch_scale = T::from_f64(1.0 / config.batch_size as f64);

    let steps = config.steps_to_run();
    let mut losses = Vec::with_capacity(steps);
    let mut validation = Vec::new();
    for step in 0..steps {
        let mut grads = net.zeros_like();
        let (mut ce, mut dl, mut total) = (0.0, 0.0, 0.0);
        for _ in 0..config.batch_size {
            let k = rng.random_range(0..train_images.len());
            let (image, labels, _) = random_crop_with(&train_images[k], &data.train[k].labels, config.crop, &mut rng)?;
            let pass = net.forward(&to_scalar::<T>(image.as_slice()), image.dims());
            let logits = LogitVolume::new(
                tree.len(),
                image.dims(),
                pass.output.iter().map(|v| v.as_f64()).collect(),
            )?;
            let (report, grad) = loss_fn.value_and_grad(&logits, &labels)?;
            if !report.total.is_finite() {
                return Err(Error::Diverged {
                    step: step + 1,
                    loss: report.total,
                });
            }
            ce += report.ce;
            dl += report.dice;
            total += report.total;
            grads.add_assign(&net.backward(&pass, &to_scalar::<T>(grad.as_slice())));
        }
        grads.scale(batch_scale);
        let grad_tensors: Vec<Vec<T>> = grads.tensors().into_iter().map(|t| t.2.to_vec()).collect();
        let grad_refs: Vec<&[T]> = grad_tensors.iter().map(Vec::as_slice).collect();
        let lr = adamw_step(&mut net.tensors_mut(), &grad_refs, &mut state, step, &optimizer)?;
        let b = config.batch_size as f64;
        losses.push(LossRecord {
            step: step + 1,
            lr,
            ce: ce / b,
            dice: dl / b,
            total: total / b,
        });

        let done = step + 1 == steps;
        if (step + 1) % config.steps_per_epoch == 0 || done {
            let image = normalize_intensity(&data.validation.intensity);
            let logits = net_logits(&net, &image)?;
            let pred = loss_fn.head().predict(&logits)?;
            validation.push(ValidationRecord {
                epoch: step / config.steps_per_epoch + 1,
                step: step + 1,
                mean_leaf_dice: mean_leaf_dice(&data.validation.labels, &pred, tree)?,
            });
        }
    }
    Ok((net, losses, validation))
}
