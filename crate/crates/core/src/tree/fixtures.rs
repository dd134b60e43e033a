//! Ready-made trees for examples, tests and the toy harness.

use rand::Rng;

use super::LabelTree;

/// Text of the ten-node thorax fixture used throughout the docs and tests.
pub const T1_TEXT: &str = "\
# thorax fixture
0\t-\troot
1\t0\tbackground
2\t0\tbody
3\t2\tthoracic_cavity
4\t2\tother_body
5\t3\tlungs
6\t3\tmediastinum
7\t3\tother_thx
8\t5\tlung_left
9\t5\tlung_right
";

/// The thorax fixture: root → {background, body}; body → {thoracic_cavity,
/// other_body}; thoracic_cavity → {lungs, mediastinum, other_thx};
/// lungs → {lung_left, lung_right}.
pub fn t1() -> LabelTree {
    LabelTree::parse(T1_TEXT).expect("fixture parses")
}

/// A path `0 → 1 → … → n-1`.
pub fn chain(n: usize) -> LabelTree {
    assert!(n > 0);
    let parents = (0..n).map(|i| i.checked_sub(1)).collect();
    let names = (0..n).map(|i| format!("n{i}")).collect();
    LabelTree::new(parents, names).expect("chain is valid")
}

/// Root with `k` leaf children.
pub fn flat(k: usize) -> LabelTree {
    let parents = std::iter::once(None).chain(std::iter::repeat_n(Some(0), k)).collect();
    let names = std::iter::once("root".to_string())
        .chain((1..=k).map(|i| format!("leaf{i}")))
        .collect();
    LabelTree::new(parents, names).expect("flat tree is valid")
}

/// A random tree with `n` nodes and height at most `max_height`.
///
/// Each new node attaches to a uniformly chosen earlier node whose depth is
/// below `max_height`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize, max_height: usize) -> LabelTree {
    assert!(n > 0);
    assert!(max_height > 0 || n == 1);
    let mut parents = vec![None];
    let mut depth = vec![0usize];
    let mut open: Vec<usize> = vec![0];
    for id in 1..n {
        let p = open[rng.random_range(0..open.len())];
        parents.push(Some(p));
        depth.push(depth[p] + 1);
        if depth[id] < max_height {
            open.push(id);
        }
    }
    let names = (0..n).map(|i| format!("node{i}")).collect();
    LabelTree::new(parents, names).expect("generated tree is valid")
}
