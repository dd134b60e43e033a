//! The SALT activation: softmax within each sibling group, chained along the
//! root-to-node path.
//!
//! For node `c` with path `root = p0, p1, …, pk = c` the cumulative
//! probability is the product of the per-group conditionals,
//!
//! ```text
//! P(c) = Π_i  exp(x_{p_i}) / Σ_{s ∈ group(p_i)} exp(x_s)
//! ```
//!
//! Everything is accumulated in log space. Leaf probabilities sum to one and
//! every internal node carries the total mass of its children.
//!
//! Channel-major layout is used throughout: value `(channel, voxel)` lives at
//! `channel * voxels + voxel`.

use crate::tree::{LabelTree, ROOT};
use crate::volume::{Dims, LabelVolume, Spacing};
use crate::{Error, Result};

/// Raw network output, one channel per tree node (root included).
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVolume {
    channels: usize,
    dims: Dims,
    values: Vec<f64>,
}

impl LogitVolume {
    pub fn new(channels: usize, dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels} channels over {dims}",
                values.len()
            )));
        }
        Ok(Self { channels, dims, values })
    }

    pub fn zeros(channels: usize, dims: Dims) -> Self {
        Self {
            channels,
            dims,
            values: vec![0.0; channels * dims.len()],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let v = self.voxels();
        &self.values[c * v..(c + 1) * v]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let v = self.voxels();
        &mut self.values[c * v..(c + 1) * v]
    }

    #[inline]
    pub fn get(&self, channel: usize, voxel: usize) -> f64 {
        self.values[channel * self.voxels() + voxel]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, voxel: usize, value: f64) {
        let v = self.voxels();
        self.values[channel * v + voxel] = value;
    }
}

/// Whether a [`ProbVolume`] holds per-group conditionals or path products.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbKind {
    Conditional,
    Cumulative,
}

/// Whether values are probabilities or their natural logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbRepr {
    Linear,
    Log,
}

/// Per-node probabilities over a voxel grid, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVolume {
    channels: usize,
    dims: Dims,
    kind: ProbKind,
    repr: ProbRepr,
    values: Vec<f64>,
}

impl ProbVolume {
    pub fn new(channels: usize, dims: Dims, kind: ProbKind, repr: ProbRepr, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels} channels over {dims}",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            dims,
            kind,
            repr,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims.len()
    }

    pub fn kind(&self) -> ProbKind {
        self.kind
    }

    pub fn repr(&self) -> ProbRepr {
        self.repr
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let v = self.voxels();
        &self.values[c * v..(c + 1) * v]
    }

    #[inline]
    pub fn get(&self, channel: usize, voxel: usize) -> f64 {
        self.values[channel * self.voxels() + voxel]
    }

    pub fn to_linear(&self) -> Self {
        match self.repr {
            ProbRepr::Linear => self.clone(),
            ProbRepr::Log => Self {
                values: self.values.iter().map(|v| v.exp()).collect(),
                repr: ProbRepr::Linear,
                ..*self
            },
        }
    }

    pub fn to_log(&self) -> Self {
        match self.repr {
            ProbRepr::Log => self.clone(),
            ProbRepr::Linear => Self {
                values: self.values.iter().map(|v| v.ln()).collect(),
                repr: ProbRepr::Log,
                ..*self
            },
        }
    }

    /// One channel as a linear-space volume (for probability-map dumps).
    pub fn channel_volume(&self, c: usize, spacing: Spacing) -> crate::volume::Volume<f64> {
        let data = match self.repr {
            ProbRepr::Linear => self.channel(c).to_vec(),
            ProbRepr::Log => self.channel(c).iter().map(|v| v.exp()).collect(),
        };
        crate::volume::Volume::from_vec(self.dims, spacing, data).expect("channel length matches dims")
    }
}

/// Partition of the nodes into softmax groups: the root alone, then the
/// children of each internal node in id order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiblingGroups {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl SiblingGroups {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Index into [`SiblingGroups::groups`] of the group holding `node`.
    pub fn group_of(&self, node: usize) -> usize {
        self.group_of[node]
    }

    pub fn node_count(&self) -> usize {
        self.group_of.len()
    }
}

pub fn sibling_groups(tree: &LabelTree) -> SiblingGroups {
    let mut groups = vec![vec![ROOT]];
    let mut group_of = vec![0; tree.len()];
    for node in 0..tree.len() {
        let kids = tree.children(node);
        if kids.is_empty() {
            continue;
        }
        for &k in kids {
            group_of[k] = groups.len();
        }
        groups.push(kids.to_vec());
    }
    SiblingGroups { groups, group_of }
}

fn check_channels(channels: usize, nodes: usize) -> Result<()> {
    if channels == nodes {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{channels} channels for a tree with {nodes} nodes"
        )))
    }
}

/// Log-softmax within each sibling group (log-space conditional probabilities).
///
/// Singleton groups, including the root, come out as exactly `ln 1 = 0`.
pub fn conditional_probs(logits: &LogitVolume, groups: &SiblingGroups) -> Result<ProbVolume> {
    check_channels(logits.channels, groups.node_count())?;
    let voxels = logits.voxels();
    if let Some(pos) = logits.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            channel: pos / voxels.max(1),
            voxel: pos % voxels.max(1),
        });
    }
    let mut out = vec![0.0; logits.values.len()];
    for group in &groups.groups {
        if group.len() == 1 {
            // out is already 0 = ln 1
            continue;
        }
        for v in 0..voxels {
            let max = group
                .iter()
                .map(|&c| logits.get(c, v))
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = group.iter().map(|&c| (logits.get(c, v) - max).exp()).sum();
            let log_norm = max + sum.ln();
            for &c in group {
                out[c * voxels + v] = logits.get(c, v) - log_norm;
            }
        }
    }
    Ok(ProbVolume {
        channels: logits.channels,
        dims: logits.dims,
        kind: ProbKind::Conditional,
        repr: ProbRepr::Log,
        values: out,
    })
}

/// Chains conditionals along root-to-node paths; result is in log space.
pub fn cumulative_probs(cond: &ProbVolume, tree: &LabelTree) -> Result<ProbVolume> {
    check_channels(cond.channels, tree.len())?;
    if cond.kind != ProbKind::Conditional {
        return Err(Error::InvalidArgument("expected conditional probabilities".into()));
    }
    let cond = cond.to_log();
    let voxels = cond.voxels();
    let mut out = cond.values.clone();
    for &node in tree.top_down() {
        if let Some(p) = tree.parent(node) {
            let (lo, hi) = if p < node {
                let (a, b) = out.split_at_mut(node * voxels);
                (&a[p * voxels..(p + 1) * voxels], &mut b[..voxels])
            } else {
                let (a, b) = out.split_at_mut(p * voxels);
                (&b[..voxels], &mut a[node * voxels..(node + 1) * voxels])
            };
            for (dst, &parent) in hi.iter_mut().zip(lo) {
                *dst += parent;
            }
        }
    }
    Ok(ProbVolume {
        channels: cond.channels,
        dims: cond.dims,
        kind: ProbKind::Cumulative,
        repr: ProbRepr::Log,
        values: out,
    })
}

/// Per voxel, the leaf with the largest cumulative probability (lowest id on ties).
pub fn predict_labels(cum: &ProbVolume, tree: &LabelTree) -> Result<LabelVolume> {
    check_channels(cum.channels, tree.len())?;
    if cum.kind != ProbKind::Cumulative {
        return Err(Error::InvalidArgument("expected cumulative probabilities".into()));
    }
    if tree.len() > u16::MAX as usize + 1 {
        return Err(Error::InvalidArgument("label ids must fit in 16 bits".into()));
    }
    let leaves: Vec<usize> = tree.leaves().collect();
    let voxels = cum.voxels();
    let mut best_val = vec![f64::NEG_INFINITY; voxels];
    let mut best = vec![leaves[0] as u16; voxels];
    for &leaf in &leaves {
        for (v, &p) in cum.channel(leaf).iter().enumerate() {
            if p > best_val[v] {
                best_val[v] = p;
                best[v] = leaf as u16;
            }
        }
    }
    LabelVolume::from_vec(cum.dims, Spacing::default(), best)
}

/// Gradient of `Σ upstream · log P` with respect to the logits.
///
/// `upstream` holds `∂f/∂ log P(c)` per node and voxel, channel-major. The
/// mass reaching a node's conditional is the upstream summed over its subtree;
/// each sibling group then applies the softmax Jacobian to that mass.
pub fn backward_logprobs(
    logits: &LogitVolume,
    groups: &SiblingGroups,
    tree: &LabelTree,
    upstream: &[f64],
) -> Result<LogitVolume> {
    check_channels(logits.channels, tree.len())?;
    check_channels(groups.node_count(), tree.len())?;
    if upstream.len() != logits.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} values, logits {}",
            upstream.len(),
            logits.values.len()
        )));
    }
    let voxels = logits.voxels();
    let cond = conditional_probs(logits, groups)?;

    // subtree sums, children before parents
    let mut mass = upstream.to_vec();
    for &node in tree.top_down().iter().rev() {
        if let Some(p) = tree.parent(node) {
            for v in 0..voxels {
                mass[p * voxels + v] += mass[node * voxels + v];
            }
        }
    }

    let mut grad = vec![0.0; mass.len()];
    for group in groups.groups.iter().filter(|g| g.len() > 1) {
        for v in 0..voxels {
            let total: f64 = group.iter().map(|&c| mass[c * voxels + v]).sum();
            for &c in group {
                let i = c * voxels + v;
                grad[i] = mass[i] - cond.values[i].exp() * total;
            }
        }
    }
    LogitVolume::new(logits.channels, logits.dims, grad)
}

/// A tree together with its softmax groups; the forward/backward entry point
/// used by the losses and the training loop.
#[derive(Clone, Debug)]
pub struct SaltHead {
    tree: LabelTree,
    groups: SiblingGroups,
}

impl SaltHead {
    pub fn new(tree: LabelTree) -> Self {
        let groups = sibling_groups(&tree);
        Self { tree, groups }
    }

    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    pub fn groups(&self) -> &SiblingGroups {
        &self.groups
    }

    /// Log cumulative probabilities.
    pub fn forward(&self, logits: &LogitVolume) -> Result<ProbVolume> {
        cumulative_probs(&conditional_probs(logits, &self.groups)?, &self.tree)
    }

    pub fn backward(&self, logits: &LogitVolume, upstream: &[f64]) -> Result<LogitVolume> {
        backward_logprobs(logits, &self.groups, &self.tree, upstream)
    }

    pub fn predict(&self, logits: &LogitVolume) -> Result<LabelVolume> {
        predict_labels(&self.forward(logits)?, &self.tree)
    }
}
