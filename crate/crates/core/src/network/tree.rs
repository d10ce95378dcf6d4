use nalgebra::Matrix6;

use super::laminate::{homogenize_block_cached, BlockResponse, LaminateCache};
use super::params::{children, NetworkParams, NodeKind};
use crate::tensor::{StrainVec, StressVec};
use crate::{Error, Result};

/// Handle returned by a forward pass; the backward pass only accepts the
/// handle of the latest forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardToken(u64);

/// Operation counts of the last forward/backward passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub homogenizations: usize,
    pub rotations: usize,
    pub splits: usize,
}

/// A network ready for propagation: parameters plus precomputed rotations,
/// node roles and fractions, and the cache of the last forward pass.
#[derive(Debug, Clone)]
pub struct Network {
    params: NetworkParams,
    kinds: Vec<NodeKind>,
    fractions: Vec<f64>,
    q: Vec<Matrix6<f64>>,
    active_leaves: Vec<usize>,
    leaf_slot: Vec<usize>,
    responses: Vec<BlockResponse>,
    laminates: Vec<Option<LaminateCache>>,
    generation: u64,
    cached: bool,
    ops: OpCounts,
}

impl Network {
    pub fn new(params: NetworkParams) -> Self {
        let kinds = params.node_kinds();
        let n = params.node_count();
        let fractions = (0..n)
            .map(|i| params.child_fraction(i).unwrap_or(0.0))
            .collect();
        let q = params.angles().iter().map(|r| r.mandel()).collect();
        let first = params.first_leaf();
        let active_leaves: Vec<usize> = (first..n).filter(|&i| kinds[i] == NodeKind::Leaf).collect();
        let mut leaf_slot = vec![usize::MAX; n];
        for (slot, &node) in active_leaves.iter().enumerate() {
            leaf_slot[node] = slot;
        }
        Network {
            params,
            kinds,
            fractions,
            q,
            active_leaves,
            leaf_slot,
            responses: vec![BlockResponse::elastic(Matrix6::zeros()); n],
            laminates: vec![None; n],
            generation: 0,
            cached: false,
            ops: OpCounts::default(),
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Flat node indices of the active leaves, in bottom-layer order. Leaf
    /// responses are passed and returned in this order.
    pub fn active_leaves(&self) -> &[usize] {
        &self.active_leaves
    }

    /// Normalized weights of the active leaves.
    pub fn leaf_fractions(&self) -> Vec<f64> {
        let w = self.params.node_weights();
        self.active_leaves.iter().map(|&i| w[i]).collect()
    }

    /// Phase id of every active leaf.
    pub fn leaf_phases(&self) -> Vec<usize> {
        let first = self.params.first_leaf();
        self.active_leaves.iter().map(|&i| self.params.phases()[i - first]).collect()
    }

    pub fn active_node_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k != NodeKind::Inactive).count()
    }

    pub fn op_counts(&self) -> OpCounts {
        self.ops
    }

    pub fn reset_op_counts(&mut self) {
        self.ops = OpCounts::default();
    }

    /// Drops the forward cache.
    pub fn invalidate(&mut self) {
        self.cached = false;
        self.generation += 1;
    }

    /// Propagates leaf responses (each in its leaf's local frame) to the top
    /// node and returns the macroscale response in the global frame.
    pub fn forward(&mut self, leaves: &[BlockResponse]) -> Result<(BlockResponse, ForwardToken)> {
        if leaves.len() != self.active_leaves.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} leaf responses, got {}",
                self.active_leaves.len(),
                leaves.len()
            )));
        }
        self.cached = false;
        self.generation += 1;
        for node in (0..self.kinds.len()).rev() {
            match self.kinds[node] {
                NodeKind::Inactive => {}
                NodeKind::Leaf => self.responses[node] = leaves[self.leaf_slot[node]],
                NodeKind::PassThrough { child } => {
                    self.responses[node] = self.responses[child].pulled_back(&self.q[child]);
                    self.ops.rotations += 1;
                }
                NodeKind::Block => {
                    let (a, b) = children(node);
                    let r1 = self.responses[a].pulled_back(&self.q[a]);
                    let r2 = self.responses[b].pulled_back(&self.q[b]);
                    self.ops.rotations += 2;
                    let (r, cache) = homogenize_block_cached(&r1, &r2, self.fractions[node], node)?;
                    self.ops.homogenizations += 1;
                    self.responses[node] = r;
                    self.laminates[node] = Some(cache);
                }
            }
        }
        let top = self.responses[0].pulled_back(&self.q[0]);
        self.ops.rotations += 1;
        self.cached = true;
        Ok((top, ForwardToken(self.generation)))
    }

    /// Distributes a macroscale strain increment (global frame) to the active
    /// leaves. Returns `(Δε, Δσ)` for each leaf in its local frame.
    pub fn backward(&mut self, token: ForwardToken, d_eps: &StrainVec) -> Result<Vec<(StrainVec, StressVec)>> {
        if !self.cached || token.0 != self.generation {
            return Err(Error::StaleCache);
        }
        let n = self.kinds.len();
        let mut eps = vec![StrainVec::zeros(); n];
        eps[0] = self.q[0] * d_eps;
        self.ops.rotations += 1;
        let mut out = vec![(StrainVec::zeros(), StressVec::zeros()); self.active_leaves.len()];
        for node in 0..n {
            match self.kinds[node] {
                NodeKind::Inactive => {}
                NodeKind::Leaf => {
                    let r = &self.responses[node];
                    out[self.leaf_slot[node]] = (eps[node], r.c * eps[node] + r.ds);
                }
                NodeKind::PassThrough { child } => {
                    eps[child] = self.q[child] * eps[node];
                    self.ops.rotations += 1;
                }
                NodeKind::Block => {
                    let r = &self.responses[node];
                    let sig = r.c * eps[node] + r.ds;
                    let cache = self.laminates[node].as_ref().expect("block cached");
                    let [(e1, _), (e2, _)] = cache.split(&eps[node], &sig);
                    self.ops.splits += 1;
                    let (a, b) = children(node);
                    eps[a] = self.q[a] * e1;
                    eps[b] = self.q[b] * e2;
                    self.ops.rotations += 2;
                }
            }
        }
        Ok(out)
    }
}
