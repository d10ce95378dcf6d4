//! Offline fitting of network parameters to linear elastic data.
//!
//! Samples pair two orthotropic phase stiffnesses with a homogenized label.
//! The cost is the mean relative squared Frobenius error, minimized by
//! mini-batch SGD with gradients propagated analytically through the
//! partial inversions, the rotations and the volume fractions.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::laminate::{partial_inverse, partial_inverse_adjoint, BlockResponse};
use crate::network::params::children;
use crate::network::{Network, NetworkParams, NodeKind};
use crate::tensor::{is_spd6, orthotropic_compliance, rotation6_derivative, Rotation, Stiffness6};
use crate::{Error, Result};

/// Log-uniform bounds on the nine orthotropic constants of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicRanges {
    /// `E1, E2, E3`.
    pub young: [(f64, f64); 3],
    /// `G12, G13, G23`.
    pub shear: [(f64, f64); 3],
    /// `ν12, ν13, ν23`.
    pub poisson: [(f64, f64); 3],
}

impl OrthotropicRanges {
    /// A single isotropic material.
    pub fn fixed_isotropic(young: f64, poisson: f64) -> Self {
        let g = young / (2.0 * (1.0 + poisson));
        OrthotropicRanges { young: [(young, young); 3], shear: [(g, g); 3], poisson: [(poisson, poisson); 3] }
    }

    fn validate(&self) -> Result<()> {
        let ok = |r: &(f64, f64)| r.0 > 0.0 && r.1 >= r.0 && r.1.is_finite();
        if self.young.iter().chain(&self.shear).chain(&self.poisson).all(ok) {
            Ok(())
        } else {
            Err(Error::InvalidInput("sampling ranges must satisfy 0 < min <= max".into()))
        }
    }
}

/// Sampling ranges for both phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub phases: [OrthotropicRanges; 2],
}

impl Default for SampleRanges {
    fn default() -> Self {
        let first = OrthotropicRanges {
            young: [(1.0, 1.0); 3],
            shear: [(0.25, 0.5); 3],
            poisson: [(0.2, 0.35); 3],
        };
        let second = OrthotropicRanges {
            young: [(1e-2, 1e2); 3],
            shear: [(2.5e-3, 5e1); 3],
            poisson: [(0.2, 0.35); 3],
        };
        SampleRanges { phases: [first, second] }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    }
}

fn sample_orthotropic<R: Rng>(rng: &mut R, r: &OrthotropicRanges) -> Result<Stiffness6> {
    for _ in 0..10_000 {
        let e = r.young.map(|b| log_uniform(rng, b));
        let g = r.shear.map(|b| log_uniform(rng, b));
        let nu = r.poisson.map(|b| log_uniform(rng, b));
        let s = orthotropic_compliance(e, g[0], g[1], g[2], nu[0], nu[1], nu[2]);
        if is_spd6(&s) {
            if let Some(c) = s.try_inverse() {
                if is_spd6(&c) {
                    return Ok(c);
                }
            }
        }
    }
    Err(Error::InvalidInput("sampling ranges admit no positive definite stiffness".into()))
}

/// Draws one pair of phase stiffnesses; inadmissible constants are resampled.
pub fn sample_phases<R: Rng>(rng: &mut R, ranges: &SampleRanges) -> Result<(Stiffness6, Stiffness6)> {
    ranges.phases[0].validate()?;
    ranges.phases[1].validate()?;
    Ok((sample_orthotropic(rng, &ranges.phases[0])?, sample_orthotropic(rng, &ranges.phases[1])?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub phases: [Stiffness6; 2],
    pub label: Stiffness6,
}

/// Layered microstructure with an exact homogenized stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Laminate {
    Phase(usize),
    Layered { normal: [f64; 3], fraction: f64, layers: Box<[Laminate; 2]> },
}

impl Laminate {
    pub fn layered(normal: [f64; 3], fraction: f64, first: Laminate, second: Laminate) -> Self {
        Laminate::Layered { normal, fraction, layers: Box::new([first, second]) }
    }

    /// Homogenized stiffness in the global frame from a dense solve of the
    /// averaging, strain continuity and traction continuity conditions.
    pub fn stiffness(&self, phases: &[Stiffness6; 2]) -> Result<Stiffness6> {
        match self {
            Laminate::Phase(p) => phases
                .get(*p)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("laminate phase {p} out of range"))),
            Laminate::Layered { normal, fraction, layers } => {
                let c1 = layers[0].stiffness(phases)?;
                let c2 = layers[1].stiffness(phases)?;
                laminate_solve(&c1, &c2, *fraction, &Vector3::from(*normal))
            }
        }
    }
}

fn laminate_solve(c1: &Stiffness6, c2: &Stiffness6, f1: f64, normal: &Vector3<f64>) -> Result<Stiffness6> {
    use crate::tensor::from_mandel;
    let n = normal.try_normalize(1e-12).ok_or_else(|| Error::InvalidInput("zero laminate normal".into()))?;
    if !(f1 > 0.0 && f1 < 1.0) {
        return Err(Error::InvalidInput(format!("laminate fraction {f1} outside (0, 1)")));
    }
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    // in-plane strain functionals and traction functionals on Mandel vectors
    let unit = |k: usize| {
        let mut v = nalgebra::Vector6::zeros();
        v[k] = 1.0;
        from_mandel(&v)
    };
    let strain_row = |a: &Vector3<f64>, b: &Vector3<f64>| -> [f64; 6] {
        std::array::from_fn(|k| (a.transpose() * unit(k) * b)[0])
    };
    let rows_p = [strain_row(&t1, &t1), strain_row(&t2, &t2), strain_row(&t1, &t2)];
    let rows_t: [[f64; 6]; 3] = std::array::from_fn(|i| std::array::from_fn(|k| (unit(k) * n)[i]));
    let mut a = DMatrix::<f64>::zeros(12, 12);
    for i in 0..6 {
        a[(i, i)] = f1;
        a[(i, i + 6)] = 1.0 - f1;
    }
    for (r, row) in rows_p.iter().enumerate() {
        for k in 0..6 {
            a[(6 + r, k)] = row[k];
            a[(6 + r, 6 + k)] = -row[k];
        }
    }
    for (r, row) in rows_t.iter().enumerate() {
        for k in 0..6 {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for m in 0..6 {
                s1 += row[m] * c1[(m, k)];
                s2 += row[m] * c2[(m, k)];
            }
            a[(9 + r, k)] = s1;
            a[(9 + r, 6 + k)] = -s2;
        }
    }
    let lu = a.lu();
    let mut c = Stiffness6::zeros();
    for j in 0..6 {
        let mut b = DVector::<f64>::zeros(12);
        b[j] = 1.0;
        let x = lu.solve(&b).ok_or(Error::Singular("laminate oracle"))?;
        let e1 = nalgebra::Vector6::from_iterator(x.iter().take(6).copied());
        let e2 = nalgebra::Vector6::from_iterator(x.iter().skip(6).copied());
        let col = f1 * c1 * e1 + (1.0 - f1) * c2 * e2;
        c.set_column(j, &col);
    }
    Ok(0.5 * (c + c.transpose()))
}

/// Label generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Teacher(NetworkParams),
    Laminate(Laminate),
}

impl Oracle {
    pub fn label(&self, phases: &[Stiffness6; 2]) -> Result<Stiffness6> {
        match self {
            Oracle::Teacher(p) => predict_network(p, phases),
            Oracle::Laminate(l) => l.stiffness(phases),
        }
    }
}

/// Elastic response of a network through the propagation engine.
pub fn predict_network(params: &NetworkParams, phases: &[Stiffness6; 2]) -> Result<Stiffness6> {
    let mut net = Network::new(params.clone());
    let leaves: Vec<BlockResponse> = net
        .leaf_phases()
        .iter()
        .map(|&p| phases.get(p).map(|c| BlockResponse::elastic(*c)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::InvalidInput("network uses a phase id above 1".into()))?;
    Ok(net.forward(&leaves)?.0.c)
}

/// Labels every phase pair; failing samples are skipped and logged.
pub fn oracle_labels(pairs: &[(Stiffness6, Stiffness6)], oracle: &Oracle) -> Vec<TrainingSample> {
    pairs
        .iter()
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let phases = [*a, *b];
            match oracle.label(&phases) {
                Ok(label) => Some(TrainingSample { phases, label }),
                Err(e) => {
                    log::warn!("sample {i} skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Per-node intermediate values of one elastic forward pass.
struct Tape {
    c: Vec<Stiffness6>,
    pulled: Vec<Stiffness6>,
    mixed: Vec<Stiffness6>,
    psi: Vec<Stiffness6>,
    top: Stiffness6,
}

struct Model {
    kinds: Vec<NodeKind>,
    weights: Vec<f64>,
    fractions: Vec<f64>,
    q: Vec<Stiffness6>,
    mats: Vec<Matrix3<f64>>,
    dmats: Vec<[Matrix3<f64>; 3]>,
    phases: Vec<usize>,
    first_leaf: usize,
}

impl Model {
    fn new(p: &NetworkParams) -> Self {
        let weights = p.node_weights();
        let n = p.node_count();
        Model {
            kinds: p.node_kinds(),
            fractions: (0..n).map(|i| p.child_fraction(i).unwrap_or(0.0)).collect(),
            weights,
            q: p.angles().iter().map(Rotation::mandel).collect(),
            mats: p.angles().iter().map(Rotation::matrix).collect(),
            dmats: p.angles().iter().map(Rotation::matrix_derivatives).collect(),
            phases: p.phases().to_vec(),
            first_leaf: p.first_leaf(),
        }
    }

    fn pull(&self, c: &Stiffness6, node: usize) -> Stiffness6 {
        self.q[node].transpose() * c * self.q[node]
    }

    fn forward(&self, phases: &[Stiffness6; 2]) -> Result<Tape> {
        let n = self.kinds.len();
        let z = Stiffness6::zeros();
        let mut t = Tape { c: vec![z; n], pulled: vec![z; n], mixed: vec![z; n], psi: vec![z; n], top: z };
        for node in (0..n).rev() {
            match self.kinds[node] {
                NodeKind::Inactive => {}
                NodeKind::Leaf => t.c[node] = phases[self.phases[node - self.first_leaf]],
                NodeKind::PassThrough { child } => {
                    t.pulled[child] = self.pull(&t.c[child], child);
                    t.c[node] = t.pulled[child];
                }
                NodeKind::Block => {
                    let f = self.fractions[node];
                    let mut mix = Stiffness6::zeros();
                    for (k, w) in [(children(node).0, f), (children(node).1, 1.0 - f)] {
                        t.pulled[k] = self.pull(&t.c[k], k);
                        t.psi[k] = partial_inverse(&t.pulled[k], &nalgebra::Vector6::zeros())
                            .ok_or(Error::SingularInterface { node })?
                            .0;
                        mix += w * t.psi[k];
                    }
                    let c = partial_inverse(&mix, &nalgebra::Vector6::zeros()).ok_or(Error::SingularInterface { node })?.0;
                    t.mixed[node] = mix;
                    t.c[node] = 0.5 * (c + c.transpose());
                }
            }
        }
        t.top = self.pull(&t.c[0], 0);
        Ok(t)
    }

    /// Accumulates `∂j/∂z` and `∂j/∂(α, β, γ)` given `∂j/∂C̄`.
    fn backward(&self, t: &Tape, g_top: &Stiffness6, gz: &mut [f64], ga: &mut [[f64; 3]]) -> Result<()> {
        let n = self.kinds.len();
        let mut g = vec![Stiffness6::zeros(); n];
        // dW(node) per node, distributed to leaves afterwards
        let mut gw = vec![0.0; n];
        let pull_back = |g_out: &Stiffness6, c: &Stiffness6, node: usize, ga: &mut [[f64; 3]]| -> Stiffness6 {
            let q = &self.q[node];
            let gq = c * q * (g_out + g_out.transpose());
            for (k, dr) in self.dmats[node].iter().enumerate() {
                ga[node][k] += gq.component_mul(&rotation6_derivative(&self.mats[node], dr)).sum();
            }
            q * g_out * q.transpose()
        };
        g[0] = pull_back(g_top, &t.c[0], 0, ga);
        for node in 0..n {
            match self.kinds[node] {
                NodeKind::Inactive | NodeKind::Leaf => {}
                NodeKind::PassThrough { child } => {
                    g[child] = pull_back(&g[node], &t.c[child], child, ga);
                }
                NodeKind::Block => {
                    let gs = 0.5 * (g[node] + g[node].transpose());
                    let g_mix = partial_inverse_adjoint(&t.mixed[node], &gs).ok_or(Error::SingularInterface { node })?;
                    let (a, b) = children(node);
                    let df = g_mix.component_mul(&(t.psi[a] - t.psi[b])).sum();
                    let wn = self.weights[node];
                    gw[a] += df * self.weights[b] / (wn * wn);
                    gw[b] -= df * self.weights[a] / (wn * wn);
                    let f = self.fractions[node];
                    for (k, w) in [(a, f), (b, 1.0 - f)] {
                        let g_pulled =
                            partial_inverse_adjoint(&t.pulled[k], &(w * g_mix)).ok_or(Error::SingularInterface { node })?;
                        g[k] = pull_back(&g_pulled, &t.c[k], k, ga);
                    }
                }
            }
        }
        // a leaf weight enters every ancestor weight
        for (j, gzj) in gz.iter_mut().enumerate() {
            let leaf = self.first_leaf + j;
            if self.weights[leaf] <= 0.0 {
                continue;
            }
            let mut node = leaf;
            loop {
                *gzj += gw[node];
                if node == 0 {
                    break;
                }
                node = (node - 1) / 2;
            }
        }
        Ok(())
    }
}

fn sample_cost(pred: &Stiffness6, label: &Stiffness6) -> f64 {
    0.5 * (pred - label).norm_squared() / label.norm_squared()
}

/// Elastic prediction through the training forward pass.
pub fn predict(params: &NetworkParams, phases: &[Stiffness6; 2]) -> Result<Stiffness6> {
    Ok(Model::new(params).forward(phases)?.top)
}

/// `J = (1/2N) Σ ‖C̄_pred − C̄‖² / ‖C̄‖²`.
pub fn cost(params: &NetworkParams, batch: &[TrainingSample]) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let model = Model::new(params);
    let parts: Vec<f64> = batch
        .par_iter()
        .map(|s| model.forward(&s.phases).map(|t| sample_cost(&t.top, &s.label)))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() / batch.len() as f64)
}

/// Mean relative Frobenius error `⟨‖C̄_pred − C̄‖ / ‖C̄‖⟩`.
pub fn test_error(params: &NetworkParams, set: &[TrainingSample]) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let model = Model::new(params);
    let parts: Vec<f64> = set
        .par_iter()
        .map(|s| model.forward(&s.phases).map(|t| (t.top - s.label).norm() / s.label.norm()))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub z: Vec<f64>,
    /// `(∂J/∂α, ∂J/∂β, ∂J/∂γ)` per node.
    pub angles: Vec<[f64; 3]>,
}

/// Cost and its gradient with respect to the raw activations and angles.
pub fn gradient(params: &NetworkParams, batch: &[TrainingSample]) -> Result<(f64, Gradient)> {
    let model = Model::new(params);
    let leaves = params.leaf_count();
    let nodes = params.node_count();
    let parts: Vec<(f64, Vec<f64>, Vec<[f64; 3]>)> = batch
        .par_iter()
        .map(|s| {
            let tape = model.forward(&s.phases)?;
            let inv = 1.0 / s.label.norm_squared();
            let g_top = (tape.top - s.label) * inv;
            let mut gz = vec![0.0; leaves];
            let mut ga = vec![[0.0; 3]; nodes];
            model.backward(&tape, &g_top, &mut gz, &mut ga)?;
            Ok((sample_cost(&tape.top, &s.label), gz, ga))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut j = 0.0;
    let mut g = Gradient { z: vec![0.0; leaves], angles: vec![[0.0; 3]; nodes] };
    for (c, gz, ga) in parts {
        j += c * scale;
        for (a, b) in g.z.iter_mut().zip(gz) {
            *a += b * scale;
        }
        for (a, b) in g.angles.iter_mut().zip(ga) {
            for k in 0..3 {
                a[k] += b[k] * scale;
            }
        }
    }
    Ok((j, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier applied to the activations.
    pub activation_rate: f64,
    /// Heavy-ball momentum coefficient.
    pub momentum: f64,
    /// Mini-batch gradients are rescaled to at most this norm (0 disables).
    pub max_gradient_norm: f64,
    /// The learning rate halves every `decay_every` epochs (0 disables).
    pub decay_every: usize,
    /// Leaves with normalized weight below this are pruned after training.
    pub compression_threshold: f64,
    pub seed: u64,
    /// Random initializations tried by `train_from_scratch`.
    pub restarts: usize,
    /// Epochs spent on each initialization before the best one is kept.
    pub restart_epochs: usize,
    pub ranges: SampleRanges,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            train_samples: 400,
            test_samples: 100,
            epochs: 1000,
            batch_size: 20,
            learning_rate: 0.02,
            activation_rate: 0.1,
            momentum: 0.9,
            max_gradient_norm: 0.1,
            decay_every: 300,
            compression_threshold: 1e-3,
            seed: 0,
            restarts: 6,
            restart_epochs: 100,
            ranges: SampleRanges::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::InvalidInput("sample counts must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.activation_rate >= 0.0) {
            return Err(Error::InvalidInput("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.max_gradient_norm >= 0.0) {
            return Err(Error::InvalidInput("momentum must lie in [0, 1) and the gradient bound be non-negative".into()));
        }
        if !(self.compression_threshold >= 0.0) {
            return Err(Error::InvalidInput("compression threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generates labeled training and test sets from the configured seed.
pub fn generate_dataset(config: &TrainingConfig, oracle: &Oracle) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = config.train_samples + config.test_samples;
    let pairs = (0..total).map(|_| sample_phases(&mut rng, &config.ranges)).collect::<Result<Vec<_>>>()?;
    let (train, test) = pairs.split_at(config.train_samples);
    Ok((oracle_labels(train, oracle), oracle_labels(test, oracle)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_cost: f64,
    pub test_cost: f64,
    pub active_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub pruned_leaves: usize,
    /// Costs of the compressed network.
    pub final_train_cost: f64,
    pub final_test_cost: f64,
    pub final_test_error: f64,
}

const DIVERGENCE_WINDOW: usize = 10;

/// Mini-batch SGD from `init`, followed by compression.
pub fn train(
    config: &TrainingConfig,
    train_set: &[TrainingSample],
    test_set: &[TrainingSample],
    init: NetworkParams,
) -> Result<(NetworkParams, TrainingReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut rising = 0;
    let mut last = f64::INFINITY;
    let mut vz = vec![0.0; params.leaf_count()];
    let mut va = vec![[0.0; 3]; params.node_count()];
    for epoch in 1..=config.epochs {
        let lr = match config.decay_every {
            0 => config.learning_rate,
            k => config.learning_rate * 0.5f64.powi(((epoch - 1) / k) as i32),
        };
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (_, g) = gradient(&params, &batch)?;
            let norm = g
                .z
                .iter()
                .map(|v| v * config.activation_rate.sqrt())
                .chain(g.angles.iter().flatten().copied())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let clip = if config.max_gradient_norm > 0.0 && norm > config.max_gradient_norm {
                config.max_gradient_norm / norm
            } else {
                1.0
            };
            for (v, gz) in vz.iter_mut().zip(&g.z) {
                *v = config.momentum * *v + clip * config.activation_rate * gz;
            }
            for (v, ga) in va.iter_mut().zip(&g.angles) {
                for k in 0..3 {
                    v[k] = config.momentum * v[k] + clip * ga[k];
                }
            }
            let z: Vec<f64> = params.activations().iter().zip(&vz).map(|(z, v)| z - lr * v).collect();
            let angles: Vec<Rotation> = params
                .angles()
                .iter()
                .zip(&va)
                .map(|(r, v)| Rotation::new(r.alpha - lr * v[0], r.beta - lr * v[1], r.gamma - lr * v[2]))
                .collect();
            params.set_raw(&z, &angles)?;
        }
        let train_cost = cost(&params, train_set)?;
        let test_cost = cost(&params, test_set)?;
        log::debug!("epoch {epoch}: train {train_cost:.4e} test {test_cost:.4e}");
        epochs.push(EpochRecord { epoch, train_cost, test_cost, active_nodes: params.active_node_count() });
        if !train_cost.is_finite() {
            return Err(Error::Diverged { epoch, cost: train_cost });
        }
        rising = if train_cost > last { rising + 1 } else { 0 };
        last = train_cost;
        if rising >= DIVERGENCE_WINDOW {
            return Err(Error::Diverged { epoch, cost: train_cost });
        }
    }
    let pruned_leaves = if config.epochs > 0 { params.compress(config.compression_threshold)? } else { 0 };
    let report = TrainingReport {
        epochs,
        pruned_leaves,
        final_train_cost: cost(&params, train_set)?,
        final_test_cost: cost(&params, test_set)?,
        final_test_error: test_error(&params, test_set)?,
    };
    Ok((params, report))
}

/// Trains a network of the given depth from random initializations: each of
/// `restarts` candidates runs `restart_epochs` epochs and the one with the
/// lowest training cost is trained for the full schedule.
pub fn train_from_scratch(
    config: &TrainingConfig,
    train_set: &[TrainingSample],
    test_set: &[TrainingSample],
    depth: usize,
) -> Result<(NetworkParams, TrainingReport)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let candidates = (0..config.restarts.max(1))
        .map(|_| NetworkParams::random(depth, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    if candidates.len() == 1 {
        return train(config, train_set, test_set, candidates.into_iter().next().expect("one candidate"));
    }
    let probe = TrainingConfig { epochs: config.restart_epochs, decay_every: 0, ..config.clone() };
    let mut best: Option<(f64, NetworkParams)> = None;
    for (i, init) in candidates.into_iter().enumerate() {
        let trial = train(&TrainingConfig { seed: config.seed.wrapping_add(i as u64), ..probe.clone() }, train_set, test_set, init.clone());
        match trial {
            Ok((_, report)) => {
                let j = report.epochs.last().map_or(f64::INFINITY, |r| r.train_cost);
                log::debug!("initialization {i}: train cost {j:.4e}");
                if best.as_ref().is_none_or(|(b, _)| j < *b) {
                    best = Some((j, init));
                }
            }
            Err(e) => log::debug!("initialization {i} dropped: {e}"),
        }
    }
    let (_, init) = best.ok_or(Error::Diverged { epoch: config.restart_epochs, cost: f64::INFINITY })?;
    train(config, train_set, test_set, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::isotropic_stiffness;
    use approx::assert_relative_eq;

    fn dataset(n: usize, oracle: &Oracle, seed: u64) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<_> = (0..n).map(|_| sample_phases(&mut rng, &SampleRanges::default()).unwrap()).collect();
        oracle_labels(&pairs, oracle)
    }

    fn random_params(depth: usize, seed: u64) -> NetworkParams {
        NetworkParams::random(depth, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn degenerate_ranges_are_deterministic() {
        let r = OrthotropicRanges::fixed_isotropic(10.0, 0.3);
        let ranges = SampleRanges { phases: [r, r] };
        let (a, b) = sample_phases(&mut ChaCha8Rng::seed_from_u64(1), &ranges).unwrap();
        assert!((a - isotropic_stiffness(10.0, 0.3)).norm() < 1e-12);
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_phases_are_spd_and_reproducible() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = sample_phases(&mut r1, &SampleRanges::default()).unwrap();
            let b = sample_phases(&mut r2, &SampleRanges::default()).unwrap();
            assert!(is_spd6(&a.0) && is_spd6(&a.1));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_node_teacher_returns_phase() {
        let teacher = NetworkParams::new(1, vec![1.0], vec![Rotation::zero()], vec![1]).unwrap();
        let s = dataset(3, &Oracle::Teacher(teacher), 2);
        for x in &s {
            assert!((x.label - x.phases[1]).norm() < 1e-12 * x.label.norm());
        }
    }

    #[test]
    fn equal_phase_laminate_returns_phase() {
        let c = isotropic_stiffness(7.0, 0.2);
        let lam = Laminate::layered([0.3, -0.2, 0.9], 0.5, Laminate::Phase(0), Laminate::Phase(1));
        assert!((lam.stiffness(&[c, c]).unwrap() - c).norm() < 1e-12 * c.norm());
    }

    #[test]
    fn laminate_oracle_matches_network_block() {
        // a depth-2 network with zero rotations laminates across axis 3
        let p = NetworkParams::new(2, vec![0.3, 0.7], vec![Rotation::zero(); 3], vec![0, 1]).unwrap();
        let lam = Laminate::layered([0.0, 0.0, 1.0], 0.3, Laminate::Phase(0), Laminate::Phase(1));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (a, b) = sample_phases(&mut rng, &SampleRanges::default()).unwrap();
            let x = lam.stiffness(&[a, b]).unwrap();
            let y = predict(&p, &[a, b]).unwrap();
            assert!((x - y).norm() < 1e-10 * x.norm());
        }
    }

    #[test]
    fn training_forward_matches_engine() {
        let p = random_params(4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, b) = sample_phases(&mut rng, &SampleRanges::default()).unwrap();
        let x = predict(&p, &[a, b]).unwrap();
        let y = predict_network(&p, &[a, b]).unwrap();
        assert!((x - y).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn cost_examples() {
        let p = random_params(3, 7);
        let s = dataset(5, &Oracle::Teacher(p.clone()), 8);
        assert!(cost(&p, &s).unwrap() < 1e-28);
        let mut zero = s[0].clone();
        zero.label = predict(&p, &zero.phases).unwrap();
        let other = random_params(3, 9);
        let j1 = cost(&other, &s).unwrap();
        let mut rev = s.clone();
        rev.reverse();
        assert_relative_eq!(j1, cost(&other, &rev).unwrap(), max_relative = 1e-14);
        // a zero prediction has unit relative error
        let single = TrainingSample { phases: zero.phases, label: zero.label };
        assert_relative_eq!(sample_cost(&Stiffness6::zeros(), &single.label), 0.5);
    }

    fn numeric_gradient(p: &NetworkParams, s: &[TrainingSample], h: f64) -> Gradient {
        let eval = |z: Vec<f64>, a: Vec<Rotation>| {
            let q = NetworkParams::new(p.depth(), z, a, p.phases().to_vec()).unwrap();
            cost(&q, s).unwrap()
        };
        let z0 = p.activations().to_vec();
        let a0 = p.angles().to_vec();
        let gz = (0..z0.len())
            .map(|j| {
                let (mut up, mut dn) = (z0.clone(), z0.clone());
                up[j] += h;
                dn[j] -= h;
                (eval(up, a0.clone()) - eval(dn, a0.clone())) / (2.0 * h)
            })
            .collect();
        let ga = (0..a0.len())
            .map(|i| {
                std::array::from_fn(|k| {
                    let shift = |d: f64| {
                        let mut a = a0.clone();
                        match k {
                            0 => a[i].alpha += d,
                            1 => a[i].beta += d,
                            _ => a[i].gamma += d,
                        }
                        a
                    };
                    (eval(z0.clone(), shift(h)) - eval(z0.clone(), shift(-h))) / (2.0 * h)
                })
            })
            .collect();
        Gradient { z: gz, angles: ga }
    }

    fn check_gradient(p: &NetworkParams, s: &[TrainingSample]) {
        let (_, g) = gradient(p, s).unwrap();
        let fd = numeric_gradient(p, s, 1e-6);
        let pairs = g.z.iter().zip(&fd.z).chain(
            g.angles.iter().flatten().zip(fd.angles.iter().flatten()),
        );
        for (a, b) in pairs {
            if a.abs() > 1e-8 {
                assert!((a - b).abs() < 1e-5 * a.abs() + 1e-9, "analytic {a} vs numeric {b}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let teacher = random_params(2, 10);
        let s = dataset(4, &Oracle::Teacher(teacher), 11);
        check_gradient(&random_params(3, 12), &s);
    }

    #[test]
    fn dead_leaf_has_zero_gradient() {
        let mut p = random_params(3, 13);
        let mut z = p.activations().to_vec();
        z[2] = -0.1;
        p = NetworkParams::new(3, z, p.angles().to_vec(), p.phases().to_vec()).unwrap();
        let s = dataset(3, &Oracle::Teacher(random_params(2, 14)), 15);
        let (_, g) = gradient(&p, &s).unwrap();
        assert_eq!(g.z[2], 0.0);
        check_gradient(&p, &s);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let p = random_params(3, 16);
        let s = dataset(4, &Oracle::Teacher(random_params(2, 17)), 18);
        let config = TrainingConfig { epochs: 0, ..TrainingConfig::default() };
        let (q, report) = train(&config, &s, &s, p.clone()).unwrap();
        assert_eq!(p, q);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn identifies_single_block_fraction() {
        let lam = Laminate::layered([0.0, 0.0, 1.0], 0.35, Laminate::Phase(0), Laminate::Phase(1));
        let s = dataset(60, &Oracle::Laminate(lam), 19);
        let init = NetworkParams::new(2, vec![0.5, 0.5], vec![Rotation::new(0.1, -0.1, 0.2); 3], vec![0, 1]).unwrap();
        let config = TrainingConfig { epochs: 150, batch_size: 10, decay_every: 100, ..TrainingConfig::default() };
        let (q, report) = train(&config, &s, &s, init).unwrap();
        let f = q.child_fraction(0).unwrap();
        assert!((f - 0.35).abs() < 0.01, "fraction {f}, cost {}", report.final_train_cost);
    }
}
