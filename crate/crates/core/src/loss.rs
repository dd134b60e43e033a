//! Reachability-encoded targets and the hybrid cross-entropy + soft Dice loss.
//!
//! Each voxel's target is the reachability column of its label: ones on every
//! node from the root down to the label. Both loss terms are evaluated against
//! that multi-hot target, so a voxel labelled `lung_left` also trains `lungs`,
//! `thoracic_cavity` and `body`.

use crate::activation::{LogitVolume, ProbKind, ProbVolume, SaltHead};
use crate::tree::{BinaryMatrix, LabelTree, TreeMatrices};
use crate::volume::LabelVolume;
use crate::{Error, Result};

/// Smoothing constant of the soft Dice term.
pub const DICE_SMOOTH: f64 = 1e-5;

/// Multi-hot targets, one row per voxel and one column per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedTargets {
    voxels: usize,
    nodes: usize,
    rows: Vec<bool>,
}

impl EncodedTargets {
    pub fn voxels(&self) -> usize {
        self.voxels
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn get(&self, voxel: usize, node: usize) -> bool {
        self.rows[voxel * self.nodes + node]
    }

    pub fn row(&self, voxel: usize) -> &[bool] {
        &self.rows[voxel * self.nodes..(voxel + 1) * self.nodes]
    }
}

/// Row `v` of the result is column `labels[v]` of `reachability`.
pub fn encode_targets(labels: &LabelVolume, reachability: &BinaryMatrix) -> Result<EncodedTargets> {
    let nodes = reachability.size();
    let columns: Vec<Vec<bool>> = (0..nodes).map(|c| reachability.column(c).collect()).collect();
    let mut rows = Vec::with_capacity(labels.len() * nodes);
    for &l in labels.as_slice() {
        let col = columns.get(l as usize).ok_or(Error::NodeOutOfRange {
            id: l as usize,
            len: nodes,
        })?;
        rows.extend_from_slice(col);
    }
    Ok(EncodedTargets {
        voxels: labels.len(),
        nodes,
        rows,
    })
}

fn check_shapes(probs: &ProbVolume, targets: &EncodedTargets) -> Result<()> {
    if probs.channels() != targets.nodes || probs.voxels() != targets.voxels {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {}x{} vs targets {}x{}",
            probs.channels(),
            probs.voxels(),
            targets.nodes,
            targets.voxels
        )));
    }
    if probs.kind() != ProbKind::Cumulative {
        return Err(Error::InvalidArgument("expected cumulative probabilities".into()));
    }
    Ok(())
}

/// Mean over voxels of `-Σ_n y'(v, n) · log P_n(v)`.
///
/// Returns the loss and its gradient with respect to the log probabilities
/// (channel-major). Not normalised by path depth, so deeper labels weigh more.
pub fn cross_entropy(cum: &ProbVolume, targets: &EncodedTargets) -> Result<(f64, Vec<f64>)> {
    check_shapes(cum, targets)?;
    let cum = cum.to_log();
    let voxels = targets.voxels;
    let scale = 1.0 / voxels.max(1) as f64;
    let mut grad = vec![0.0; cum.as_slice().len()];
    let mut total = 0.0;
    for v in 0..voxels {
        for (n, &y) in targets.row(v).iter().enumerate() {
            if y {
                total -= cum.get(n, v);
                grad[n * voxels + v] = -scale;
            }
        }
    }
    Ok((total * scale, grad))
}

/// Soft Dice loss and its pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct DiceTerms {
    /// `1 - mean` of the per-node coefficients over non-root nodes.
    pub loss: f64,
    /// Soft Dice coefficient per node; the root entry is reported but excluded
    /// from the mean.
    pub per_node: Vec<f64>,
    /// Gradient of `loss` with respect to the linear probabilities.
    pub grad: Vec<f64>,
}

/// `d_n = (2 Σ p y' + ε) / (Σ p + Σ y' + ε)`, loss `1 - mean_{n ≠ root} d_n`.
///
/// A single-node tree has no non-root channels and yields a zero loss.
pub fn soft_dice(cum: &ProbVolume, targets: &EncodedTargets) -> Result<DiceTerms> {
    check_shapes(cum, targets)?;
    let cum = cum.to_linear();
    let voxels = targets.voxels;
    let nodes = targets.nodes;
    let mut per_node = Vec::with_capacity(nodes);
    let mut grad = vec![0.0; cum.as_slice().len()];
    let weight = if nodes > 1 { 1.0 / (nodes - 1) as f64 } else { 0.0 };
    for n in 0..nodes {
        let p = cum.channel(n);
        let (mut inter, mut psum, mut ysum) = (0.0, 0.0, 0.0);
        for (v, &pv) in p.iter().enumerate() {
            psum += pv;
            if targets.get(v, n) {
                inter += pv;
                ysum += 1.0;
            }
        }
        let num = 2.0 * inter + DICE_SMOOTH;
        let den = psum + ysum + DICE_SMOOTH;
        per_node.push(num / den);
        if n == 0 {
            continue;
        }
        let den2 = den * den;
        for v in 0..voxels {
            let y = if targets.get(v, n) { 2.0 } else { 0.0 };
            // ∂d/∂p = (2y·den − num) / den², loss = 1 − weight·Σ d
            grad[n * voxels + v] = -weight * (y * den - num) / den2;
        }
    }
    let mean = if nodes > 1 {
        per_node[1..].iter().sum::<f64>() * weight
    } else {
        1.0
    };
    Ok(DiceTerms {
        loss: 1.0 - mean,
        per_node,
        grad,
    })
}

/// Loss values from one evaluation of [`HybridLoss`].
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub ce: f64,
    pub dice: f64,
    pub total: f64,
    pub per_node_dice: Vec<f64>,
}

/// Cross-entropy plus soft Dice (unit weights) on top of the SALT activation.
#[derive(Clone, Debug)]
pub struct HybridLoss {
    head: SaltHead,
    reachability: BinaryMatrix,
}

impl HybridLoss {
    pub fn new(tree: &LabelTree) -> Self {
        Self {
            head: SaltHead::new(tree.clone()),
            reachability: TreeMatrices::new(tree).reachability,
        }
    }

    pub fn head(&self) -> &SaltHead {
        &self.head
    }

    pub fn reachability(&self) -> &BinaryMatrix {
        &self.reachability
    }

    pub fn value(&self, logits: &LogitVolume, labels: &LabelVolume) -> Result<LossReport> {
        self.evaluate(logits, labels, false).map(|(r, _)| r)
    }

    /// Loss report and gradient with respect to the logits.
    pub fn value_and_grad(&self, logits: &LogitVolume, labels: &LabelVolume) -> Result<(LossReport, LogitVolume)> {
        self.evaluate(logits, labels, true)
            .map(|(r, g)| (r, g.expect("gradient requested")))
    }

    fn evaluate(
        &self,
        logits: &LogitVolume,
        labels: &LabelVolume,
        with_grad: bool,
    ) -> Result<(LossReport, Option<LogitVolume>)> {
        if labels.len() != logits.voxels() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} voxels",
                labels.len(),
                logits.voxels()
            )));
        }
        let targets = encode_targets(labels, &self.reachability)?;
        let log_p = self.head.forward(logits)?;
        let (ce, ce_grad) = cross_entropy(&log_p, &targets)?;
        let lin = log_p.to_linear();
        let dice = soft_dice(&lin, &targets)?;
        let report = LossReport {
            ce,
            dice: dice.loss,
            total: ce + dice.loss,
            per_node_dice: dice.per_node,
        };
        if !with_grad {
            return Ok((report, None));
        }
        // chain to log space: ∂/∂log p = p · ∂/∂p
        let upstream: Vec<f64> = ce_grad
            .iter()
            .zip(&dice.grad)
            .zip(lin.as_slice())
            .map(|((g_ce, g_d), p)| g_ce + g_d * p)
            .collect();
        let grad = self.head.backward(logits, &upstream)?;
        Ok((report, Some(grad)))
    }
}

/// One-shot hybrid loss; see [`HybridLoss`] for repeated use.
pub fn hybrid_loss(logits: &LogitVolume, tree: &LabelTree, labels: &LabelVolume) -> Result<(LossReport, LogitVolume)> {
    HybridLoss::new(tree).value_and_grad(logits, labels)
}
