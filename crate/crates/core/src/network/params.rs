use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Rotation;
use crate::{Error, Result};

/// Number of nodes of a perfect binary tree with `depth` layers.
pub fn node_count(depth: usize) -> usize {
    (1 << depth) - 1
}

/// Number of bottom-layer nodes.
pub fn leaf_count(depth: usize) -> usize {
    1 << (depth - 1)
}

/// Flat (heap-order) index of the `k`-th node of layer `layer`, both 1-based.
pub fn node_index(layer: usize, k: usize) -> usize {
    (1 << (layer - 1)) - 1 + (k - 1)
}

pub fn children(node: usize) -> (usize, usize) {
    (2 * node + 1, 2 * node + 2)
}

pub fn parent(node: usize) -> Option<usize> {
    (node > 0).then(|| (node - 1) / 2)
}

/// Layer of a flat node index (1-based).
pub fn layer_of(node: usize) -> usize {
    (usize::BITS - (node + 1).leading_zeros()) as usize
}

/// Weights of every node (heap order) obtained by summing `max(0, z)` over the
/// leaves below it, normalized so that the top node has weight one.
pub fn node_weights(depth: usize, z: &[f64]) -> Result<Vec<f64>> {
    let leaves = leaf_count(depth);
    if z.len() != leaves {
        return Err(Error::InvalidInput(format!(
            "expected {leaves} activations, got {}",
            z.len()
        )));
    }
    let mut w = vec![0.0; node_count(depth)];
    let first = leaves - 1;
    for (j, zj) in z.iter().enumerate() {
        w[first + j] = zj.max(0.0);
    }
    for node in (0..first).rev() {
        let (a, b) = children(node);
        w[node] = w[a] + w[b];
    }
    let total = w[0];
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidInput("no positive activation".into()));
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Role of a node in the (possibly compressed) tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Zero weight: the whole subtree is pruned.
    Inactive,
    Leaf,
    /// Both children carry weight: an actual two-layer laminate.
    Block,
    /// Exactly one child carries weight; the node only composes rotations.
    PassThrough { child: usize },
}

/// Trainable parameters of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    depth: usize,
    z: Vec<f64>,
    angles: Vec<Rotation>,
    phases: Vec<usize>,
}

impl NetworkParams {
    /// Builds and validates a parameter set; activations are rescaled so that
    /// `Σ max(0, z) = 1`.
    pub fn new(depth: usize, z: Vec<f64>, angles: Vec<Rotation>, phases: Vec<usize>) -> Result<Self> {
        if depth == 0 || depth > 20 {
            return Err(Error::InvalidInput(format!("unsupported depth {depth}")));
        }
        if angles.len() != node_count(depth) {
            return Err(Error::InvalidInput(format!(
                "expected {} node rotations, got {}",
                node_count(depth),
                angles.len()
            )));
        }
        if phases.len() != leaf_count(depth) {
            return Err(Error::InvalidInput(format!(
                "expected {} phase ids, got {}",
                leaf_count(depth),
                phases.len()
            )));
        }
        if !z.iter().all(|v| v.is_finite()) || !angles.iter().all(Rotation::is_finite) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        let mut params = NetworkParams { depth, z, angles, phases };
        params.normalize()?;
        Ok(params)
    }

    /// Alternating phases `0, 1, 0, 1, …` along the bottom layer.
    pub fn alternating_phases(depth: usize) -> Vec<usize> {
        (0..leaf_count(depth)).map(|j| j % 2).collect()
    }

    /// Uniform activations and zero rotations.
    pub fn uniform(depth: usize) -> Result<Self> {
        let leaves = leaf_count(depth);
        Self::new(
            depth,
            vec![1.0; leaves],
            vec![Rotation::zero(); node_count(depth)],
            Self::alternating_phases(depth),
        )
    }

    /// Random initialization: angles uniform in `[−π, π]`, activations uniform
    /// in `(0, 1]`.
    pub fn random<R: Rng>(depth: usize, rng: &mut R) -> Result<Self> {
        use std::f64::consts::PI;
        let z = (0..leaf_count(depth)).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let angles = (0..node_count(depth))
            .map(|_| {
                Rotation::new(
                    rng.gen_range(-PI..=PI),
                    rng.gen_range(-PI..=PI),
                    rng.gen_range(-PI..=PI),
                )
            })
            .collect();
        Self::new(depth, z, angles, Self::alternating_phases(depth))
    }

    /// Rescales the activations of one phase so that its volume fraction
    /// becomes `fraction`, keeping the relative weights within each phase.
    pub fn with_phase_fraction(mut self, phase: usize, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidInput(format!("volume fraction {fraction} outside (0, 1)")));
        }
        let (mut inside, mut outside) = (0.0, 0.0);
        for (z, &p) in self.z.iter().zip(&self.phases) {
            if p == phase {
                inside += z.max(0.0);
            } else {
                outside += z.max(0.0);
            }
        }
        if !(inside > 0.0 && outside > 0.0) {
            return Err(Error::InvalidInput(format!("phase {phase} is empty or fills the network")));
        }
        for (z, &p) in self.z.iter_mut().zip(&self.phases) {
            *z *= if p == phase { fraction / inside } else { (1.0 - fraction) / outside };
        }
        self.normalize()?;
        Ok(self)
    }

    fn normalize(&mut self) -> Result<()> {
        let total: f64 = self.z.iter().map(|v| v.max(0.0)).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("all activations are non-positive".into()));
        }
        if (total - 1.0).abs() <= 1e-14 {
            return Ok(());
        }
        for v in &mut self.z {
            *v /= total;
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn activations(&self) -> &[f64] {
        &self.z
    }

    pub fn angles(&self) -> &[Rotation] {
        &self.angles
    }

    pub fn phases(&self) -> &[usize] {
        &self.phases
    }

    pub fn set_phases(&mut self, phases: Vec<usize>) -> Result<()> {
        if phases.len() != leaf_count(self.depth) {
            return Err(Error::InvalidInput("phase list length mismatch".into()));
        }
        self.phases = phases;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        node_count(self.depth)
    }

    pub fn leaf_count(&self) -> usize {
        leaf_count(self.depth)
    }

    /// Flat index of the first bottom-layer node.
    pub fn first_leaf(&self) -> usize {
        leaf_count(self.depth) - 1
    }

    /// Normalized weights of every node in heap order.
    pub fn node_weights(&self) -> Vec<f64> {
        node_weights(self.depth, &self.z).expect("validated at construction")
    }

    /// Normalized weights of the bottom layer.
    pub fn leaf_weights(&self) -> Vec<f64> {
        self.z.iter().map(|v| v.max(0.0)).collect()
    }

    /// Volume fraction `w(first child) / w(node)` of a block, `None` for
    /// leaves and zero-weight nodes.
    pub fn child_fraction(&self, node: usize) -> Option<f64> {
        child_fraction(&self.node_weights(), node, self.first_leaf())
    }

    /// Role of every node in heap order.
    pub fn node_kinds(&self) -> Vec<NodeKind> {
        node_kinds(&self.node_weights(), self.first_leaf())
    }

    /// Number of bottom-layer nodes with positive weight.
    pub fn active_leaf_count(&self) -> usize {
        self.z.iter().filter(|v| **v > 0.0).count()
    }

    pub fn active_node_count(&self) -> usize {
        self.node_kinds().iter().filter(|k| **k != NodeKind::Inactive).count()
    }

    /// Leaf-weight multiset, sorted.
    pub fn treemap(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .leaf_weights()
            .into_iter()
            .zip(self.phases.iter().copied())
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, p)| (p, w))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out
    }

    /// Prunes leaves whose normalized weight is below `threshold` by setting
    /// their activation to zero. Blocks left with a single active child
    /// become pass-through nodes. Returns the number of leaves removed.
    pub fn compress(&mut self, threshold: f64) -> Result<usize> {
        let mut removed = 0;
        for v in &mut self.z {
            if *v > 0.0 && *v < threshold {
                *v = 0.0;
                removed += 1;
            }
        }
        self.normalize()?;
        Ok(removed)
    }

    /// Replaces the raw activations and rotations (used by the optimizer).
    pub(crate) fn set_raw(&mut self, z: &[f64], angles: &[Rotation]) -> Result<()> {
        self.z.copy_from_slice(z);
        self.angles.copy_from_slice(angles);
        self.normalize()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ParamFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format != PARAM_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != PARAM_VERSION {
            return Err(Error::Parse(format!("unsupported version {}", file.version)));
        }
        let n = node_count(file.depth);
        if file.alpha.len() != n || file.beta.len() != n || file.gamma.len() != n {
            return Err(Error::Parse("angle arrays must have one entry per node".into()));
        }
        let angles = (0..n)
            .map(|i| Rotation::new(file.alpha[i], file.beta[i], file.gamma[i]))
            .collect();
        let phases = file
            .phase
            .unwrap_or_else(|| Self::alternating_phases(file.depth));
        Self::new(file.depth, file.z, angles, phases)
    }

    pub fn to_toml(&self) -> String {
        let file = ParamFile {
            format: PARAM_FORMAT.into(),
            version: PARAM_VERSION,
            depth: self.depth,
            z: self.z.clone(),
            alpha: self.angles.iter().map(|r| r.alpha).collect(),
            beta: self.angles.iter().map(|r| r.beta).collect(),
            gamma: self.angles.iter().map(|r| r.gamma).collect(),
            phase: Some(self.phases.clone()),
        };
        toml::to_string(&file).expect("parameter file serializes")
    }
}

pub(crate) fn child_fraction(weights: &[f64], node: usize, first_leaf: usize) -> Option<f64> {
    if node >= first_leaf || !(weights[node] > 0.0) {
        return None;
    }
    let (a, _) = children(node);
    Some(weights[a] / weights[node])
}

pub(crate) fn node_kinds(weights: &[f64], first_leaf: usize) -> Vec<NodeKind> {
    (0..weights.len())
        .map(|node| {
            if !(weights[node] > 0.0) {
                NodeKind::Inactive
            } else if node >= first_leaf {
                NodeKind::Leaf
            } else {
                let (a, b) = children(node);
                match (weights[a] > 0.0, weights[b] > 0.0) {
                    (true, true) => NodeKind::Block,
                    (true, false) => NodeKind::PassThrough { child: a },
                    (false, true) => NodeKind::PassThrough { child: b },
                    (false, false) => NodeKind::Inactive,
                }
            }
        })
        .collect()
}

pub const PARAM_FORMAT: &str = "dmn-params";
pub const PARAM_2D_FORMAT: &str = "dmn-params-2d";
pub const PARAM_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    depth: usize,
    z: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase: Option<Vec<usize>>,
}

/// Parameters of a 2-D network: activations and one in-plane angle per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params2d {
    pub format: String,
    pub version: u32,
    pub depth: usize,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Vec<usize>>,
}

impl Params2d {
    pub fn new(depth: usize, z: Vec<f64>, theta: Vec<f64>) -> Self {
        Params2d {
            format: PARAM_2D_FORMAT.into(),
            version: PARAM_VERSION,
            depth,
            z,
            theta,
            phase: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Params2d = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if p.format != PARAM_2D_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag `{}`", p.format)));
        }
        if p.version != PARAM_VERSION {
            return Err(Error::Parse(format!("unsupported version {}", p.version)));
        }
        if p.depth == 0 || p.depth > 20 {
            return Err(Error::Parse(format!("unsupported depth {}", p.depth)));
        }
        if p.theta.len() != node_count(p.depth) || p.z.len() != leaf_count(p.depth) {
            return Err(Error::Parse("array lengths do not match depth".into()));
        }
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("2-D parameter file serializes")
    }
}

/// Lifts a 2-D network to a 3-D unidirectional one.
///
/// Activations are copied; below the top node `α = θ, β = γ = 0`; the top
/// node gets `(θ, π/2, 0)` so that every cutting plane contains axis 3.
pub fn transfer_2d_to_3d(p: &Params2d) -> Result<NetworkParams> {
    let angles = p
        .theta
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            if i == 0 {
                Rotation::new(theta, std::f64::consts::FRAC_PI_2, 0.0)
            } else {
                Rotation::new(theta, 0.0, 0.0)
            }
        })
        .collect();
    let phases = p
        .phase
        .clone()
        .unwrap_or_else(|| NetworkParams::alternating_phases(p.depth));
    NetworkParams::new(p.depth, p.z.clone(), angles, phases)
}
