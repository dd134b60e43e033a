//! Hierarchical segmentation over arbitrary label trees.
//!
//! Every node of a label tree gets one output channel. Within each group of
//! siblings the channels are normalised with a softmax, and a node's
//! probability is the product of those conditionals from the root down to
//! it. Leaves therefore form a proper distribution, and every internal node
//! carries exactly the mass of its subtree.
//!
//! The crate is organised as:
//!
//! - [`tree`]: label trees, the adjacency/reachability/sibling matrices and
//!   label-volume editing helpers.
//! - [`activation`]: the chained sibling softmax and its exact gradient.
//! - [`loss`]: reachability-encoded targets, cross-entropy and soft Dice.
//! - [`metrics`]: bit-coded hierarchical Dice, surface Dice and bootstrap
//!   confidence intervals.
//! - [`harness`]: a desk-scale 3D training loop on synthetic phantoms.
//! - [`io`]: the `SALTV001` volume format.

pub mod activation;
mod error;
pub mod harness;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod tree;
pub mod volume;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/label-trees.md")]
    mod label_trees {}
    #[doc = include_str!("../../../book/src/activation.md")]
    mod activation {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
