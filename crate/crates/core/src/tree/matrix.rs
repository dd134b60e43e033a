//! Adjacency, reachability and sibling matrices of a label tree.

use std::fmt;

use super::LabelTree;

/// Square 0/1 matrix, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![false; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v != 0);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.n).map(move |i| self.get(i, j))
    }

    /// Row indices of the ones in column `j`.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Product over the boolean semiring (AND for multiply, OR for add).
    pub fn bool_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                if !self.get(i, k) {
                    continue;
                }
                for j in 0..n {
                    if rhs.get(k, j) {
                        out.data[i * n + j] = true;
                    }
                }
            }
        }
        out
    }

    /// Elementwise OR.
    pub fn or_assign(&mut self, rhs: &Self) {
        assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a |= *b;
        }
    }

    pub fn is_zero(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Entries as 0/1 rows.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&b| b as u8).collect())
            .collect()
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

impl fmt::Display for BinaryMatrix {
    /// One row per line, entries separated by spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<&str> = self.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// `A[i][j] = 1` iff `i` is the parent of `j`.
pub fn adjacency_matrix(tree: &LabelTree) -> BinaryMatrix {
    let mut a = BinaryMatrix::zeros(tree.len());
    for (child, parent) in tree.parents().iter().enumerate() {
        if let Some(p) = parent {
            a.set(*p, child, true);
        }
    }
    a
}

/// `R = A^0 + A^1 + … + A^H` over the boolean semiring.
///
/// Column `j` marks every node on the root-to-`j` path; row `i` marks the
/// subtree of `i`.
pub fn reachability_matrix(adjacency: &BinaryMatrix, height: usize) -> BinaryMatrix {
    let n = adjacency.size();
    let mut power = BinaryMatrix::identity(n);
    let mut reach = power.clone();
    for _ in 0..height {
        power = power.bool_mul(adjacency);
        reach.or_assign(&power);
    }
    reach
}

/// `S = Aᵀ A`: `S[i][j] = 1` iff `i` and `j` share a parent.
pub fn sibling_matrix(adjacency: &BinaryMatrix) -> BinaryMatrix {
    adjacency.transpose().bool_mul(adjacency)
}

/// The three structural matrices of a tree, plus its height.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeMatrices {
    pub adjacency: BinaryMatrix,
    pub reachability: BinaryMatrix,
    pub sibling: BinaryMatrix,
    pub height: usize,
}

impl TreeMatrices {
    pub fn new(tree: &LabelTree) -> Self {
        let adjacency = adjacency_matrix(tree);
        let height = tree.height();
        let reachability = reachability_matrix(&adjacency, height);
        let sibling = sibling_matrix(&adjacency);
        Self {
            adjacency,
            reachability,
            sibling,
            height,
        }
    }
}
