//! Label trees: parsing, validation, and structural queries.
//!
//! A tree is a list of nodes with parent links. Node `0` is always the root and
//! node ids are contiguous, so ids double as matrix row/column indices.

mod edit;
pub mod fixtures;
mod matrix;

pub use edit::{descendant_leaf_mask, insert_other_children, split_mask_by_regions};
pub use matrix::{adjacency_matrix, reachability_matrix, sibling_matrix, BinaryMatrix, TreeMatrices};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Id of the root node in every tree.
pub const ROOT: usize = 0;

/// A rooted label hierarchy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTree {
    parent: Vec<Option<usize>>,
    names: Vec<String>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Breadth-first order starting at the root; parents precede children.
    order: Vec<usize>,
}

/// Validation failure attributed to a single node.
struct NodeError {
    node: usize,
    message: String,
}

fn validate(parent: &[Option<usize>], names: &[String]) -> Result<Vec<usize>, NodeError> {
    let n = parent.len();
    if n == 0 {
        return Err(NodeError {
            node: 0,
            message: "tree has no nodes".into(),
        });
    }
    if names.len() != n {
        return Err(NodeError {
            node: 0,
            message: format!("{} names for {n} nodes", names.len()),
        });
    }
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(n);
    for (id, name) in names.iter().enumerate() {
        if name.is_empty() || name.contains(['\t', '\n', '\r']) {
            return Err(NodeError {
                node: id,
                message: format!("invalid name {name:?}"),
            });
        }
        if let Some(first) = seen.insert(name.as_str(), id) {
            return Err(NodeError {
                node: id,
                message: format!("duplicate name {name:?} (first used by node {first})"),
            });
        }
    }
    for (id, p) in parent.iter().enumerate() {
        match (id, p) {
            (ROOT, None) => {}
            (ROOT, Some(_)) => {
                return Err(NodeError {
                    node: id,
                    message: "node 0 must be the root".into(),
                })
            }
            (_, None) => {
                return Err(NodeError {
                    node: id,
                    message: "multiple roots".into(),
                })
            }
            (_, Some(p)) if *p >= n => {
                return Err(NodeError {
                    node: id,
                    message: format!("missing parent {p}"),
                })
            }
            (_, Some(p)) if *p == id => {
                return Err(NodeError {
                    node: id,
                    message: "cycle: node is its own parent".into(),
                })
            }
            _ => {}
        }
    }
    // depth by parent walk with memoisation; a walk longer than n means a cycle
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[ROOT] = Some(0);
    let mut stack = Vec::new();
    for start in 0..n {
        let mut cur = start;
        while depth[cur].is_none() {
            stack.push(cur);
            if stack.len() > n {
                return Err(NodeError {
                    node: start,
                    message: "cycle in parent links".into(),
                });
            }
            cur = parent[cur].expect("non-root has a parent");
        }
        let mut d = depth[cur].unwrap();
        while let Some(node) = stack.pop() {
            d += 1;
            depth[node] = Some(d);
        }
    }
    Ok(depth.into_iter().map(Option::unwrap).collect())
}

impl LabelTree {
    /// Builds a tree from parent links (`None` only for node 0) and node names.
    pub fn new(parent: Vec<Option<usize>>, names: Vec<String>) -> Result<Self> {
        let depth =
            validate(&parent, &names).map_err(|e| Error::InvalidTree(format!("node {}: {}", e.node, e.message)))?;
        Ok(Self::assemble(parent, names, depth))
    }

    fn assemble(parent: Vec<Option<usize>>, names: Vec<String>, depth: Vec<usize>) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        for (id, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(id);
            }
        }
        let mut order = Vec::with_capacity(n);
        order.push(ROOT);
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            order.extend_from_slice(&children[node]);
            head += 1;
        }
        Self {
            parent,
            names,
            children,
            depth,
            order,
        }
    }

    /// Parses the line-based tree format (`id<TAB>parent<TAB>name`).
    ///
    /// Lines without a TAB fall back to whitespace separation, with the name
    /// taking the remainder of the line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parent = Vec::new();
        let mut names = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').collect()
            } else {
                let mut it = line.trim().splitn(2, char::is_whitespace);
                let id = it.next().unwrap_or("");
                let rest = it.next().unwrap_or("").trim_start();
                let mut it = rest.splitn(2, char::is_whitespace);
                let p = it.next().unwrap_or("");
                let name = it.next().unwrap_or("").trim();
                vec![id, p, name]
            };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let id: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid id {:?}", fields[0])))?;
            let expected = parent.len();
            if id < expected {
                return Err(err(format!("duplicate id {id}")));
            }
            if id > expected {
                return Err(err(format!("non-contiguous id {id}, expected {expected}")));
            }
            let p = match fields[1].trim() {
                "-" => None,
                s => Some(s.parse::<usize>().map_err(|_| err(format!("invalid parent {s:?}")))?),
            };
            parent.push(p);
            names.push(fields[2].trim().to_string());
            lines.push(line_no);
        }
        if parent.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no nodes".into(),
            });
        }
        match validate(&parent, &names) {
            Ok(depth) => Ok(Self::assemble(parent, names, depth)),
            Err(e) => Err(Error::Parse {
                line: lines[e.node],
                message: e.message,
            }),
        }
    }

    /// Serializes to the tab-separated text format accepted by [`LabelTree::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for id in 0..self.len() {
            let p = self.parent[id].map_or_else(|| "-".to_string(), |p| p.to_string());
            out.push_str(&format!("{id}\t{p}\t{}\n", self.names[id]));
        }
        out
    }

    /// SHA-256 of the canonical text form; identifies a tree in checkpoints.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    /// Always false; a tree has at least its root.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.children[id].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn depth(&self, id: usize) -> usize {
        self.depth[id]
    }

    /// Length of the longest root-to-leaf path in edges.
    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Nodes in breadth-first order; every parent precedes its children.
    pub fn top_down(&self) -> &[usize] {
        &self.order
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Resolves a node given either its name or its decimal id.
    pub fn resolve(&self, key: &str) -> Result<usize> {
        if let Some(id) = self.find(key) {
            return Ok(id);
        }
        match key.parse::<usize>() {
            Ok(id) => self.check_node(id),
            Err(_) => Err(Error::InvalidArgument(format!("unknown class {key:?}"))),
        }
    }

    pub fn check_node(&self, id: usize) -> Result<usize> {
        if id < self.len() {
            Ok(id)
        } else {
            Err(Error::NodeOutOfRange { id, len: self.len() })
        }
    }

    /// Nodes from the root down to `node`, both inclusive.
    pub fn path_to_root(&self, node: usize) -> Result<Vec<usize>> {
        self.check_node(node)?;
        let mut path = Vec::with_capacity(self.depth[node] + 1);
        let mut cur = Some(node);
        while let Some(c) = cur {
            path.push(c);
            cur = self.parent[c];
        }
        path.reverse();
        Ok(path)
    }

    /// True when `ancestor` lies on the root-to-`node` path (a node is its own ancestor).
    pub fn is_ancestor_or_self(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = node;
        loop {
            if self.depth[cur] < self.depth[ancestor] {
                return false;
            }
            if cur == ancestor {
                return true;
            }
            match self.parent[cur] {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Indicator over node ids of the subtree rooted at `node`.
    pub fn subtree(&self, node: usize) -> Result<Vec<bool>> {
        self.check_node(node)?;
        let mut inside = vec![false; self.len()];
        inside[node] = true;
        for &id in &self.order {
            if let Some(p) = self.parent[id] {
                if inside[p] {
                    inside[id] = true;
                }
            }
        }
        Ok(inside)
    }
}

impl FromStr for LabelTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for LabelTree {
    /// Indented hierarchy, one node per line in depth-first order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut stack = vec![ROOT];
        while let Some(node) = stack.pop() {
            writeln!(f, "{}{} {}", "  ".repeat(self.depth[node]), node, self.names[node])?;
            stack.extend(self.children[node].iter().rev());
        }
        Ok(())
    }
}

/// Parses a tree document; see [`LabelTree::parse`].
pub fn parse_tree(text: &str) -> Result<LabelTree> {
    LabelTree::parse(text)
}

/// Root-to-`node` path; see [`LabelTree::path_to_root`].
pub fn path_to_root(tree: &LabelTree, node: usize) -> Result<Vec<usize>> {
    tree.path_to_root(node)
}

#[cfg(test)]
mod tests {
    use super::fixtures::{chain, t1};
    use super::*;

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn smallest_branching_tree() {
        let t = parse_tree("0\t-\troot\n1\t0\tbackground\n2\t0\tbody").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.children(ROOT), &[1, 2]);
        assert_eq!(t.height(), 1);
    }

    #[test]
    fn whitespace_fallback() {
        let t = parse_tree("0 - root\n1 0 background\n2 0 body part").unwrap();
        assert_eq!(t.children(ROOT), &[1, 2]);
        assert_eq!(t.name(2), "body part");
    }

    #[test]
    fn single_node() {
        let t = parse_tree("0\t-\troot\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.height(), 0);
        assert_eq!(t.path_to_root(0).unwrap(), vec![0]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let t = parse_tree("# header\n\n0\t-\troot\n  \n# x\n1\t0\ta\n").unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn t1_shape() {
        let t = t1();
        assert_eq!(t.len(), 10);
        assert_eq!(t.height(), 4);
        // manual parent table
        let parents = [
            None,
            Some(0),
            Some(0),
            Some(2),
            Some(2),
            Some(3),
            Some(3),
            Some(3),
            Some(5),
            Some(5),
        ];
        assert_eq!(t.parents(), &parents);
        assert_eq!(t.leaves().collect::<Vec<_>>(), vec![1, 4, 6, 7, 8, 9]);
    }

    #[test]
    fn paths() {
        assert_eq!(t1().path_to_root(8).unwrap(), vec![0, 2, 3, 5, 8]);
        assert_eq!(chain(3).path_to_root(2).unwrap(), vec![0, 1, 2]);
        assert!(matches!(
            t1().path_to_root(10),
            Err(Error::NodeOutOfRange { id: 10, len: 10 })
        ));
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\t0\ta\n1\t0\tb").unwrap_err()), 3);
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\t0\ta\n2\t0\ta").unwrap_err()), 3);
        assert_eq!(line_of(parse_tree("0\t-\tr\n\n1\t7\ta").unwrap_err()), 3);
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\t-\ta").unwrap_err()), 2);
        assert_eq!(line_of(parse_tree("0\t-\tr\n2\t0\ta").unwrap_err()), 2);
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\t2\ta\n2\t1\tb").unwrap_err()), 2);
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\t1\ta").unwrap_err()), 2);
        assert_eq!(line_of(parse_tree("0\t1\tr\n1\t0\ta").unwrap_err()), 1);
        assert_eq!(line_of(parse_tree("0\t-\tr\n1\tx\ta").unwrap_err()), 2);
        assert!(parse_tree("# nothing\n").is_err());
    }

    #[test]
    fn forward_parent_reference_is_allowed() {
        let t = parse_tree("0\t-\tr\n1\t2\tleaf\n2\t0\tmid").unwrap();
        assert_eq!(t.path_to_root(1).unwrap(), vec![0, 2, 1]);
        assert_eq!(t.top_down(), &[0, 2, 1]);
    }

    #[test]
    fn ancestors_and_subtrees() {
        let t = t1();
        assert!(t.is_ancestor_or_self(5, 8));
        assert!(t.is_ancestor_or_self(8, 8));
        assert!(!t.is_ancestor_or_self(8, 5));
        assert!(!t.is_ancestor_or_self(6, 8));
        let sub = t.subtree(3).unwrap();
        let ids: Vec<usize> = (0..10).filter(|&i| sub[i]).collect();
        assert_eq!(ids, vec![3, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn show_is_depth_indented() {
        let s = t1().to_string();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "0 root");
        assert_eq!(lines[1], "  1 background");
        assert!(lines.contains(&"        8 lung_left"));
    }

    #[test]
    fn resolve_by_name_or_id() {
        let t = t1();
        assert_eq!(t.resolve("lungs").unwrap(), 5);
        assert_eq!(t.resolve("7").unwrap(), 7);
        assert!(t.resolve("spleen").is_err());
        assert!(t.resolve("42").is_err());
    }
}
