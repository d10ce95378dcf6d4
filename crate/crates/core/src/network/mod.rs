//! Binary-tree material networks.
//!
//! Nodes are stored in heap order: node `i` has children `2i + 1` and
//! `2i + 2`, the top node is `0` and the bottom layer holds the phases. Each
//! node carries a rotation `R` mapping its parent's frame to its own; a block
//! laminates its two children across the plane normal to its local axis 3.

pub mod laminate;
pub mod params;
pub mod tree;

pub use laminate::{homogenize_block, BlockResponse};
pub use params::{node_weights, transfer_2d_to_3d, NetworkParams, NodeKind, Params2d};
pub use tree::{ForwardToken, Network, OpCounts};
