//! Deep material networks for multiscale strain localization.
//!
//! A network is a binary tree of two-layer laminate building blocks. After
//! offline training on linear-elastic data it is extrapolated online to
//! plasticity and cohesive cracking. Each bottom-layer node owns an
//! ellipsoidal micro-cell obtained by dividing the macroscale cell through
//! the tree, which sets the length scale entering the cohesive cracks.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: Mandel vectors, 6×6 rotations and small eigen-solvers.
//! - [`geometry`]: scale tensors, ellipsoidal cell division and crack areas.
//! - [`network`]: tree topology, laminate homogenization, forward and
//!   backward passes, parameter files and the 2-D → 3-D transfer.
//! - [`training`]: phase sampling, label oracles, cost, analytic gradients
//!   and SGD.
//! - [`materials`]: elastic phases and von Mises plasticity.
//! - [`cohesive`]: the viscous-regularized traction-separation law.
//! - [`activation`]: crack-plane search and crack insertion.
//! - [`solver`]: the implicit material-point solver with adaptive stepping.
//! - [`cli`]: run configurations and the `train`/`run`/`transfer`/`divide`
//!   commands behind the `dmn` binary.
//!
//! Units are GPa, mm and ms throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::large_enum_variant)]

pub mod activation;
pub mod cli;
pub mod cohesive;
pub mod geometry;
pub mod materials;
pub mod network;
pub mod solver;
pub mod tensor;
pub mod training;

pub use geometry::ScaleTensor;
pub use network::{Network, NetworkParams};
pub use tensor::Rotation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular interface system in block {node}")]
    SingularInterface { node: usize },
    #[error("singular matrix: {0}")]
    Singular(&'static str),
    #[error("forward cache is stale or missing")]
    StaleCache,
    #[error("local return map did not converge")]
    ReturnMap,
    #[error("newton iteration did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("load step refinement exhausted after {0} doublings")]
    RefinementExhausted(u32),
    #[error("training diverged at epoch {epoch}: cost {cost}")]
    Diverged { epoch: usize, cost: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
