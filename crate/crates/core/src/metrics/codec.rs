//! Bit signatures for O(1) "is this label inside class c" tests.
//!
//! Every non-root sibling group owns a contiguous bit field wide enough to
//! store a 1-based child index (0 means "not in this subtree"). A node's
//! encoding writes the child index taken at each group along its root path;
//! its mask sets every bit of those same fields. A label `v` lies inside
//! class `c` exactly when `encoding(v) & mask(c) == encoding(c)`.
//!
//! Codes are stored as little-endian byte strings so trees of any size work.
//! When a code fits in 64 bits the membership test runs on packed words.

use crate::tree::LabelTree;
use crate::volume::LabelVolume;
use crate::{Error, Result};

/// Location of one sibling group's field inside a code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitField {
    /// The internal node whose children share this field.
    pub parent: usize,
    pub offset: usize,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct BitCodec {
    nodes: usize,
    bytes: usize,
    total_bits: usize,
    fields: Vec<BitField>,
    encoding: Vec<u8>,
    mask: Vec<u8>,
    packed: Option<Packed>,
}

#[derive(Clone, Debug)]
struct Packed {
    encoding: Vec<u64>,
    mask: Vec<u64>,
}

fn write_bits(code: &mut [u8], offset: usize, width: usize, value: usize) {
    for b in 0..width {
        if (value >> b) & 1 == 1 {
            let pos = offset + b;
            code[pos / 8] |= 1 << (pos % 8);
        }
    }
}

fn pack(code: &[u8]) -> u64 {
    code.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &byte)| acc | (u64::from(byte) << (8 * i)))
}

/// Bits needed to store the values `0..=m`.
fn field_width(m: usize) -> usize {
    (usize::BITS - m.leading_zeros()) as usize
}

impl BitCodec {
    pub fn new(tree: &LabelTree) -> Self {
        let n = tree.len();
        let mut fields = Vec::new();
        let mut field_of_parent = vec![usize::MAX; n];
        let mut offset = 0;
        for (node, slot) in field_of_parent.iter_mut().enumerate() {
            let m = tree.children(node).len();
            if m == 0 {
                continue;
            }
            let width = field_width(m);
            *slot = fields.len();
            fields.push(BitField {
                parent: node,
                offset,
                width,
            });
            offset += width;
        }
        let total_bits = offset;
        let bytes = total_bits.div_ceil(8).max(1);

        let mut encoding = vec![0u8; n * bytes];
        let mut mask = vec![0u8; n * bytes];
        for c in 0..n {
            let code = &mut encoding[c * bytes..(c + 1) * bytes];
            let m = &mut mask[c * bytes..(c + 1) * bytes];
            let mut node = c;
            while let Some(p) = tree.parent(node) {
                let field = fields[field_of_parent[p]];
                let index = tree
                    .children(p)
                    .iter()
                    .position(|&k| k == node)
                    .expect("child of parent")
                    + 1;
                write_bits(code, field.offset, field.width, index);
                write_bits(m, field.offset, field.width, (1 << field.width) - 1);
                node = p;
            }
        }

        let packed = (bytes <= 8).then(|| Packed {
            encoding: encoding.chunks(bytes).map(pack).collect(),
            mask: mask.chunks(bytes).map(pack).collect(),
        });
        Self {
            nodes: n,
            bytes,
            total_bits,
            fields,
            encoding,
            mask,
            packed,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Bytes per code (`B`).
    pub fn bytes_per_code(&self) -> usize {
        self.bytes
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn fields(&self) -> &[BitField] {
        &self.fields
    }

    /// True when codes are tested as packed 64-bit words.
    pub fn is_packed(&self) -> bool {
        self.packed.is_some()
    }

    pub fn encoding(&self, node: usize) -> &[u8] {
        &self.encoding[node * self.bytes..(node + 1) * self.bytes]
    }

    pub fn mask(&self, node: usize) -> &[u8] {
        &self.mask[node * self.bytes..(node + 1) * self.bytes]
    }

    /// `encoding(label) & mask(class) == encoding(class)`.
    #[inline]
    pub fn contains(&self, class: usize, label: usize) -> bool {
        match &self.packed {
            Some(p) => p.encoding[label] & p.mask[class] == p.encoding[class],
            None => self
                .encoding(label)
                .iter()
                .zip(self.mask(class))
                .zip(self.encoding(class))
                .all(|((&e, &m), &c)| e & m == c),
        }
    }

    /// Byte-wise membership test, regardless of packing.
    pub fn contains_bytewise(&self, class: usize, label: usize) -> bool {
        self.encoding(label)
            .iter()
            .zip(self.mask(class))
            .zip(self.encoding(class))
            .all(|((&e, &m), &c)| e & m == c)
    }
}

/// See [`BitCodec::new`].
pub fn build_bit_codec(tree: &LabelTree) -> BitCodec {
    BitCodec::new(tree)
}

/// True/false positive and false negative voxel counts for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Builds counts from per-voxel memberships (`truth`, `predicted`).
    pub fn from_memberships(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (y, y_hat) in pairs {
            c.tp += u64::from(y_hat && y);
            c.fp += u64::from(y_hat && !y);
            c.fn_ += u64::from(!y_hat && y);
        }
        c
    }
}

/// Counts for class `class` with hierarchical membership given by `codec`.
pub fn hierarchical_confusion(
    gt: &LabelVolume,
    pred: &LabelVolume,
    codec: &BitCodec,
    class: usize,
) -> Result<ConfusionCounts> {
    gt.check_same_dims(pred)?;
    if class >= codec.nodes {
        return Err(Error::NodeOutOfRange {
            id: class,
            len: codec.nodes,
        });
    }
    for &l in gt.as_slice().iter().chain(pred.as_slice()) {
        if l as usize >= codec.nodes {
            return Err(Error::NodeOutOfRange {
                id: l as usize,
                len: codec.nodes,
            });
        }
    }
    Ok(ConfusionCounts::from_memberships(
        gt.as_slice()
            .iter()
            .zip(pred.as_slice())
            .map(|(&y, &y_hat)| (codec.contains(class, y as usize), codec.contains(class, y_hat as usize))),
    ))
}

/// `2·TP / (2·TP + FP + FN)`; 1 when the class is absent from both volumes.
pub fn dice(counts: ConfusionCounts) -> f64 {
    let denom = 2 * counts.tp + counts.fp + counts.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * counts.tp) as f64 / denom as f64
    }
}
