//! Label-volume utilities used when assembling hierarchical ground truth:
//! merging descendants, splitting a mask by region, and adding "other" leaves.

use std::collections::{BTreeMap, BTreeSet};

use super::LabelTree;
use crate::volume::{LabelVolume, Mask};
use crate::{Error, Result};

/// Voxels whose label is `node` or one of its descendants.
pub fn descendant_leaf_mask(labels: &LabelVolume, tree: &LabelTree, node: usize) -> Result<Mask> {
    let inside = tree.subtree(node)?;
    if let Some(&bad) = labels.as_slice().iter().find(|&&l| l as usize >= tree.len()) {
        return Err(Error::NodeOutOfRange {
            id: bad as usize,
            len: tree.len(),
        });
    }
    Ok(labels.map(|&l| inside[l as usize]))
}

/// Relabels every voxel under `mask` to `mapping[regions[voxel]]`; other
/// voxels keep their label from `labels`.
pub fn split_mask_by_regions(
    labels: &LabelVolume,
    mask: &Mask,
    regions: &LabelVolume,
    mapping: &BTreeMap<u16, u16>,
) -> Result<LabelVolume> {
    labels.check_same_dims(mask)?;
    labels.check_same_dims(regions)?;
    let mut missing = BTreeSet::new();
    let mut out = labels.clone();
    for ((dst, &m), &r) in out
        .as_mut_slice()
        .iter_mut()
        .zip(mask.as_slice())
        .zip(regions.as_slice())
    {
        if !m {
            continue;
        }
        match mapping.get(&r) {
            Some(&new) => *dst = new,
            None => {
                missing.insert(r);
            }
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::UnmappedRegions(missing.into_iter().collect()))
    }
}

/// Appends a leaf named `<parent>_other` under each listed internal node.
///
/// Existing ids are untouched; new nodes are numbered in ascending parent order.
pub fn insert_other_children(tree: &LabelTree, parents: &BTreeSet<usize>) -> Result<LabelTree> {
    let mut links = tree.parents().to_vec();
    let mut names = tree.names().to_vec();
    for &p in parents {
        tree.check_node(p)?;
        if tree.is_leaf(p) {
            return Err(Error::LeafParent(p));
        }
        links.push(Some(p));
        names.push(format!("{}_other", tree.name(p)));
    }
    LabelTree::new(links, names)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{chain, t1};
    use super::*;
    use crate::volume::{Dims, Spacing};

    fn phantom_labels() -> LabelVolume {
        // leaves of T1 cycled over a 4x4x4 grid
        let leaves = [1u16, 4, 6, 7, 8, 9];
        LabelVolume::from_fn(Dims::cube(4), Spacing::default(), |x, y, z| {
            leaves[(x + 2 * y + 3 * z) % leaves.len()]
        })
    }

    #[test]
    fn root_mask_covers_everything() {
        let labels = phantom_labels();
        let m = descendant_leaf_mask(&labels, &t1(), 0).unwrap();
        assert_eq!(m.count(), labels.len());
    }

    #[test]
    fn leaf_mask_is_equality() {
        let labels = phantom_labels();
        let m = descendant_leaf_mask(&labels, &t1(), 7).unwrap();
        for (&l, &b) in labels.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(b, l == 7);
        }
    }

    #[test]
    fn lungs_mask_is_union_of_lung_leaves() {
        let labels = phantom_labels();
        let m = descendant_leaf_mask(&labels, &t1(), 5).unwrap();
        let expected = labels.as_slice().iter().filter(|&&l| l == 8 || l == 9).count();
        assert_eq!(m.count(), expected);
        for (&l, &b) in labels.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(b, l == 8 || l == 9);
        }
        assert!(descendant_leaf_mask(&labels, &t1(), 10).is_err());
    }

    #[test]
    fn internal_mask_is_union_of_children() {
        let labels = phantom_labels();
        let tree = t1();
        for node in 0..tree.len() {
            if tree.is_leaf(node) {
                continue;
            }
            let whole = descendant_leaf_mask(&labels, &tree, node).unwrap();
            let mut union = vec![false; labels.len()];
            for &c in tree.children(node) {
                let cm = descendant_leaf_mask(&labels, &tree, c).unwrap();
                for (u, &b) in union.iter_mut().zip(cm.as_slice()) {
                    *u |= b;
                }
            }
            assert_eq!(whole.as_slice(), union.as_slice());
        }
    }

    #[test]
    fn split_with_empty_mask_is_identity() {
        let labels = phantom_labels();
        let mask = Mask::filled(labels.dims(), labels.spacing(), false);
        let regions = LabelVolume::filled(labels.dims(), labels.spacing(), 3);
        let out = split_mask_by_regions(&labels, &mask, &regions, &BTreeMap::new()).unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn split_inside_one_region() {
        let dims = Dims::new(6, 3, 3);
        let labels = LabelVolume::filled(dims, Spacing::default(), 0);
        let mask = Mask::from_fn(dims, Spacing::default(), |x, y, z| x < 2 && y == 1 && z == 1);
        let regions = LabelVolume::filled(dims, Spacing::default(), 1);
        let out = split_mask_by_regions(&labels, &mask, &regions, &BTreeMap::from([(1, 7)])).unwrap();
        assert_eq!(out.as_slice().iter().filter(|&&l| l == 7).count(), 2);
    }

    #[test]
    fn vessel_crossing_two_regions() {
        // a tube along x through two boxes split at x = 5
        let dims = Dims::new(12, 5, 5);
        let sp = Spacing::default();
        let labels = LabelVolume::filled(dims, sp, 2);
        let mask = Mask::from_fn(dims, sp, |x, y, z| {
            let (dy, dz) = (y as i64 - 2, z as i64 - 2);
            x >= 1 && x <= 10 && dy * dy + dz * dz <= 1
        });
        let regions = LabelVolume::from_fn(dims, sp, |x, _, _| if x < 5 { 1 } else { 2 });
        let out = split_mask_by_regions(&labels, &mask, &regions, &BTreeMap::from([(1, 10), (2, 11)])).unwrap();

        // per-voxel counting oracle
        let mut in_first = 0;
        let mut in_second = 0;
        for i in 0..dims.len() {
            if mask.as_slice()[i] {
                if regions.as_slice()[i] == 1 {
                    in_first += 1;
                } else {
                    in_second += 1;
                }
            }
        }
        assert_eq!(in_first, 4 * 5);
        assert_eq!(in_second, 6 * 5);
        assert_eq!(out.as_slice().iter().filter(|&&l| l == 10).count(), in_first);
        assert_eq!(out.as_slice().iter().filter(|&&l| l == 11).count(), in_second);
        assert_eq!(out.as_slice().iter().filter(|&&l| l == 2).count(), dims.len() - 50);
    }

    #[test]
    fn split_reports_unmapped_ids() {
        let dims = Dims::cube(2);
        let labels = LabelVolume::filled(dims, Spacing::default(), 0);
        let mask = Mask::filled(dims, Spacing::default(), true);
        let regions = LabelVolume::from_fn(dims, Spacing::default(), |x, y, _| (x + y) as u16);
        let err = split_mask_by_regions(&labels, &mask, &regions, &BTreeMap::from([(0, 5)])).unwrap_err();
        assert!(matches!(err, Error::UnmappedRegions(ids) if ids == vec![1, 2]));
    }

    #[test]
    fn other_children() {
        let t = t1();
        assert_eq!(insert_other_children(&t, &BTreeSet::new()).unwrap(), t);

        let c = chain(2);
        let grown = insert_other_children(&c, &BTreeSet::from([0])).unwrap();
        assert_eq!(grown.len(), 3);
        assert_eq!(grown.parent(2), Some(0));
        assert!(matches!(
            insert_other_children(&c, &BTreeSet::from([1])),
            Err(Error::LeafParent(1))
        ));
    }

    #[test]
    fn other_child_appended_after_t1() {
        let grown = insert_other_children(&t1(), &BTreeSet::from([3])).unwrap();
        assert_eq!(grown.len(), 11);
        assert_eq!(grown.name(10), "thoracic_cavity_other");
        assert_eq!(grown.parent(10), Some(3));
    }

    #[test]
    fn other_child_under_mediastinum_requires_internal_node() {
        // mediastinum is a leaf in T1; give it children first
        let t = t1();
        assert!(matches!(
            insert_other_children(&t, &BTreeSet::from([6])),
            Err(Error::LeafParent(6))
        ));
        let mut parents = t.parents().to_vec();
        let mut names = t.names().to_vec();
        parents.push(Some(6));
        names.push("heart".into());
        let with_heart = LabelTree::new(parents, names).unwrap();
        let grown = insert_other_children(&with_heart, &BTreeSet::from([6])).unwrap();
        assert_eq!(grown.len(), 12);
        assert_eq!(grown.name(11), "mediastinum_other");
        assert_eq!(grown.parent(11), Some(6));
        for id in 0..with_heart.len() {
            assert_eq!(grown.name(id), with_heart.name(id));
            assert_eq!(grown.parent(id), with_heart.parent(id));
        }
    }
}
