//! Per-class scoring of label volumes and the CSV/JSON report formats.

use serde::Serialize;

use super::bootstrap::bootstrap_ci;
use super::codec::{dice, hierarchical_confusion, BitCodec};
use super::surface::{nsd, NSD_TOLERANCE_MM};
use crate::tree::{descendant_leaf_mask, LabelTree};
use crate::volume::{LabelVolume, Spacing};
use crate::{Error, Result};

/// Dice and NSD per (volume, class).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
    pub volumes: Vec<String>,
    pub spacing: Vec<Spacing>,
    /// `dice[volume][class]`
    pub dice: Vec<Vec<f64>>,
    /// `nsd[volume][class]`
    pub nsd: Vec<Vec<f64>>,
    pub tolerance_mm: f64,
}

/// Scores one ground-truth/prediction pair for every requested class.
///
/// Dice goes through the bit codec, NSD through merged descendant masks.
pub fn evaluate_pair(
    gt: &LabelVolume,
    pred: &LabelVolume,
    tree: &LabelTree,
    classes: &[usize],
    spacing: Spacing,
) -> Result<ScoreSet> {
    evaluate_pair_with_tolerance(gt, pred, tree, classes, spacing, NSD_TOLERANCE_MM)
}

pub fn evaluate_pair_with_tolerance(
    gt: &LabelVolume,
    pred: &LabelVolume,
    tree: &LabelTree,
    classes: &[usize],
    spacing: Spacing,
    tolerance_mm: f64,
) -> Result<ScoreSet> {
    gt.check_same_dims(pred)?;
    let codec = BitCodec::new(tree);
    let mut dice_row = Vec::with_capacity(classes.len());
    let mut nsd_row = Vec::with_capacity(classes.len());
    for &c in classes {
        tree.check_node(c)?;
        dice_row.push(dice(hierarchical_confusion(gt, pred, &codec, c)?));
        let a = descendant_leaf_mask(gt, tree, c)?;
        let b = descendant_leaf_mask(pred, tree, c)?;
        nsd_row.push(nsd(&a, &b, spacing, tolerance_mm)?);
    }
    Ok(ScoreSet {
        classes: classes.to_vec(),
        class_names: classes.iter().map(|&c| tree.name(c).to_string()).collect(),
        volumes: vec!["0".into()],
        spacing: vec![spacing],
        dice: vec![dice_row],
        nsd: vec![nsd_row],
        tolerance_mm,
    })
}

/// Aggregate statistics for one class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassSummary {
    pub id: usize,
    pub name: String,
    pub dice_mean: f64,
    pub nsd_mean: f64,
    pub dice_ci: [f64; 2],
    pub nsd_ci: [f64; 2],
}

/// The aggregate JSON report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub volumes: usize,
    pub bootstrap_iterations: usize,
    pub seed: u64,
    pub nsd_tolerance_mm: f64,
    pub classes: Vec<ClassSummary>,
    /// Mean over classes of the per-class means.
    pub macro_dice: f64,
    pub macro_nsd: f64,
    /// Bootstrap over volumes of the per-volume macro scores.
    pub macro_dice_ci: [f64; 2],
    pub macro_nsd_ci: [f64; 2],
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl ScoreSet {
    /// Renames the (single) volume of a freshly evaluated pair.
    pub fn with_volume_id(mut self, id: impl Into<String>) -> Self {
        let id = id.into();
        for v in &mut self.volumes {
            v.clone_from(&id);
        }
        self
    }

    /// Appends the volumes of `other`, which must score the same classes.
    pub fn append(&mut self, other: ScoreSet) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::InvalidArgument("score sets cover different classes".into()));
        }
        self.volumes.extend(other.volumes);
        self.spacing.extend(other.spacing);
        self.dice.extend(other.dice);
        self.nsd.extend(other.nsd);
        Ok(())
    }

    /// Concatenates score sets in order.
    pub fn concat(sets: impl IntoIterator<Item = ScoreSet>) -> Result<Self> {
        let mut it = sets.into_iter();
        let mut first = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("no score sets".into()))?;
        for s in it {
            first.append(s)?;
        }
        Ok(first)
    }

    /// Per-volume mean Dice over classes.
    pub fn macro_dice_per_volume(&self) -> Vec<f64> {
        self.dice.iter().map(|row| mean(row)).collect()
    }

    pub fn macro_nsd_per_volume(&self) -> Vec<f64> {
        self.nsd.iter().map(|row| mean(row)).collect()
    }

    pub fn macro_dice(&self) -> f64 {
        mean(&self.macro_dice_per_volume())
    }

    pub fn macro_nsd(&self) -> f64 {
        mean(&self.macro_nsd_per_volume())
    }

    /// `volume,class,dice,nsd` with one row per (volume, class).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("volume,class,dice,nsd\n");
        for (v, vol) in self.volumes.iter().enumerate() {
            for (k, name) in self.class_names.iter().enumerate() {
                out.push_str(&format!("{vol},{name},{},{}\n", self.dice[v][k], self.nsd[v][k]));
            }
        }
        out
    }

    pub fn summary(&self, iterations: usize, seed: u64) -> Result<Summary> {
        let column = |table: &[Vec<f64>], k: usize| -> Vec<f64> { table.iter().map(|row| row[k]).collect() };
        let mut classes = Vec::with_capacity(self.classes.len());
        for (k, (&id, name)) in self.classes.iter().zip(&self.class_names).enumerate() {
            let d = column(&self.dice, k);
            let n = column(&self.nsd, k);
            let (dl, dh) = bootstrap_ci(&d, iterations, seed)?;
            let (nl, nh) = bootstrap_ci(&n, iterations, seed)?;
            classes.push(ClassSummary {
                id,
                name: name.clone(),
                dice_mean: mean(&d),
                nsd_mean: mean(&n),
                dice_ci: [dl, dh],
                nsd_ci: [nl, nh],
            });
        }
        let md = self.macro_dice_per_volume();
        let mn = self.macro_nsd_per_volume();
        let (mdl, mdh) = bootstrap_ci(&md, iterations, seed)?;
        let (mnl, mnh) = bootstrap_ci(&mn, iterations, seed)?;
        Ok(Summary {
            volumes: self.volumes.len(),
            bootstrap_iterations: iterations,
            seed,
            nsd_tolerance_mm: self.tolerance_mm,
            macro_dice: mean(&classes.iter().map(|c| c.dice_mean).collect::<Vec<_>>()),
            macro_nsd: mean(&classes.iter().map(|c| c.nsd_mean).collect::<Vec<_>>()),
            classes,
            macro_dice_ci: [mdl, mdh],
            macro_nsd_ci: [mnl, mnh],
        })
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
