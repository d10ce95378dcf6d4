//! Implicit material-point solver over a network with cohesive enrichment.
//!
//! Each load step runs a fixed-point iteration on the leaf increments
//! (base strains and layer openings), then searches for new cracks and
//! repeats until no plane exceeds its strength. Failed steps can be
//! subdivided adaptively.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::activation::{try_activate, CellCrackView, NewCrack};
use crate::cohesive::{
    crack_basis, enrich_cell_response, evaluate_cohesive, CohesiveParams, CohesiveState, EnrichedResponse,
    LayerLinearization, TractionResult,
};
use crate::geometry::{propagate_scales, ScaleTensor};
use crate::materials::{BaseResponse, HardeningLaw, Material, MaterialState};
use crate::network::{BlockResponse, Network, NetworkParams};
use crate::tensor::{orthotropic_compliance, rotation6, Stiffness6, StrainVec, StressVec};
use crate::{Error, Result};

/// Control type of one macroscale component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    Strain,
    Stress,
}

/// Boundary data of one increment: strain-controlled components prescribe
/// `Δε_i`, stress-controlled components prescribe `Δσ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroBC {
    pub control: [Control; 6],
    pub values: StrainVec,
    pub dt: f64,
}

impl MacroBC {
    pub fn strain(d_eps: StrainVec, dt: f64) -> Self {
        MacroBC { control: [Control::Strain; 6], values: d_eps, dt }
    }

    /// Strain increment on one component, zero stress increment on the rest.
    pub fn uniaxial(component: usize, d_eps: f64, dt: f64) -> Self {
        let mut control = [Control::Stress; 6];
        control[component] = Control::Strain;
        let mut values = StrainVec::zeros();
        values[component] = d_eps;
        MacroBC { control, values, dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!("time increment {} must be positive", self.dt)));
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite boundary value".into()));
        }
        Ok(())
    }

    /// The same increment split into `n` equal parts.
    pub fn scaled(&self, n: u64) -> Self {
        MacroBC { control: self.control, values: self.values / n as f64, dt: self.dt / n as f64 }
    }
}

/// Phase model: base material plus optional cohesive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub material: Material,
    pub cohesive: Option<CohesiveParams>,
}

impl Phase {
    /// Elastic particles of the particle-reinforced composite.
    pub fn particle() -> Self {
        Phase { material: Material::isotropic(500.0, 0.3), cohesive: None }
    }

    /// Elastoplastic, cracking matrix of the particle-reinforced composite.
    pub fn particle_matrix() -> Self {
        Phase {
            material: Material::VonMises { young: 100.0, poisson: 0.3, hardening: HardeningLaw::particle_matrix() },
            cohesive: Some(CohesiveParams::particle_matrix()),
        }
    }

    /// Transversely isotropic fiber with axis 1.
    pub fn fiber() -> Self {
        let nu12 = 0.023 * 245.0 / 19.8;
        let s = orthotropic_compliance([245.0, 19.8, 19.8], 29.2, 29.2, 5.9, nu12, nu12, 0.67);
        let stiffness = s.try_inverse().expect("fiber compliance is SPD");
        Phase { material: Material::Elastic { stiffness }, cohesive: None }
    }

    /// Elastoplastic, cracking epoxy of the fiber composite.
    pub fn epoxy() -> Self {
        Phase {
            material: Material::VonMises { young: 3.8, poisson: 0.387, hardening: HardeningLaw::epoxy() },
            cohesive: Some(CohesiveParams::epoxy()),
        }
    }
}

/// Depth-4 particle/matrix network with a stress concentration in the
/// matrix under loading along axis 1. A series stack of particle and matrix
/// (normal along axis 1) is laminated in parallel (normal along axis 2) with
/// a matrix block, and the result in series with a thin matrix band whose
/// normal lies at 45° in the 1-2 plane. Phase 0 is the particle, phase 1 the
/// matrix.
pub fn particle_fixture(particle_fraction: f64) -> Result<NetworkParams> {
    use crate::tensor::Rotation;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    const BAND: f64 = 0.1;
    let core = 1.0 - BAND;
    let p = 2.0 * particle_fraction / core;
    if !(particle_fraction > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("particle fraction {particle_fraction} outside (0, {})", core / 2.0)));
    }
    let mut angles = vec![Rotation::zero(); 15];
    angles[0] = Rotation::new(FRAC_PI_2, 0.0, -FRAC_PI_4);
    angles[1] = Rotation::new(0.0, -FRAC_PI_4, 0.0);
    angles[3] = Rotation::new(0.0, FRAC_PI_2, 0.0);
    let z = vec![
        0.5 * core * p,
        0.5 * core * (1.0 - p),
        0.25 * core,
        0.25 * core,
        0.25 * BAND,
        0.25 * BAND,
        0.25 * BAND,
        0.25 * BAND,
    ];
    NetworkParams::new(4, z, angles, vec![0, 1, 1, 1, 1, 1, 1, 1])
}

/// A cohesive layer inside a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Crack {
    /// Normal in the cell frame.
    pub normal: Vector3<f64>,
    /// Normal in the global frame.
    pub normal_global: Vector3<f64>,
    pub basis: Matrix3<f64>,
    pub v_c: f64,
    pub area: f64,
    pub params: CohesiveParams,
    pub state: CohesiveState,
    /// Load step in which the layer was inserted.
    pub step: usize,
}

/// A bottom-layer cell with its committed state.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub node: usize,
    pub phase: usize,
    pub weight: f64,
    /// Scale tensor in the cell frame.
    pub scale: ScaleTensor,
    /// Maps global components to the cell frame.
    pub orientation: Matrix3<f64>,
    pub base: MaterialState,
    pub cracks: Vec<Crack>,
    /// Cumulative strain and stress of the network field (cell frame).
    pub net_strain: StrainVec,
    pub net_stress: StressVec,
}

#[derive(Debug, Clone, PartialEq)]
struct WarmStart {
    dt: f64,
    base: Vec<StrainVec>,
    openings: Vec<Vec<Vector3<f64>>>,
}

/// Committed state of a material point.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub cells: Vec<Cell>,
    pub strain: StrainVec,
    pub stress: StressVec,
    pub time: f64,
    pub step: usize,
    warm: Option<WarmStart>,
}

impl NetworkState {
    /// Total number of layers `M`.
    pub fn crack_count(&self) -> usize {
        self.cells.iter().map(|c| c.cracks.len()).sum()
    }
}

/// Sub-step bookkeeping after a failed sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bookkeeping {
    /// `i_sub` counts completed sub-steps and becomes `2 i_sub − 1` on
    /// failure. A failure before any sub-step completed therefore leads to
    /// `N_sub + 1` sub-steps of the refined size.
    #[default]
    Literal,
    /// The failed sub-step `a` (1-based) of `N` becomes sub-step `2a − 1` of
    /// `2N`, so completed work is kept and the full increment is applied.
    AttemptIndex,
}

/// Convergence and refinement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_refinements: u32,
    pub bookkeeping: Bookkeeping,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tolerance: 1e-6, max_iterations: 40, max_refinements: 10, bookkeeping: Bookkeeping::Literal }
    }
}

/// Macro and micro incremental work of a converged step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkAudit {
    pub macro_work: f64,
    pub base_work: f64,
    pub cohesive_work: f64,
    pub scale: f64,
}

impl WorkAudit {
    pub fn relative_error(&self) -> f64 {
        (self.macro_work - self.base_work - self.cohesive_work).abs() / self.scale.max(f64::MIN_POSITIVE)
    }

    fn add(&mut self, o: &WorkAudit) {
        self.macro_work += o.macro_work;
        self.base_work += o.base_work;
        self.cohesive_work += o.cohesive_work;
        self.scale += o.scale;
    }
}

/// Logged crack insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackEvent {
    pub step: usize,
    pub time: f64,
    pub cell: usize,
    pub normal: Vector3<f64>,
    pub t_m: f64,
    pub v_c: f64,
    pub area: f64,
}

/// Per-cell diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDiagnostics {
    pub weight: f64,
    pub phase: usize,
    pub eps_p: f64,
    /// Released energy per crack area (GPa·mm).
    pub released: f64,
    pub cracks: usize,
}

/// Global diagnostics of a committed state.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Released energy `Π` (GPa·mm³).
    pub released_energy: f64,
    pub mean_plastic_strain: f64,
    pub cells: Vec<CellDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub d_stress: StressVec,
    pub d_strain: StrainVec,
    pub tangent: Stiffness6,
    pub converged: bool,
    /// Number of step doublings.
    pub refinements: u32,
    /// `(N_sub, i_sub)` before every sub-step attempt.
    pub substeps: Vec<(u64, i64)>,
    pub iterations: usize,
    pub audits: Vec<WorkAudit>,
    pub events: Vec<CrackEvent>,
    pub diagnostics: Diagnostics,
}

/// Converged fixed-point solution for a fixed crack configuration.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub iterations: usize,
    pub d_strain: StrainVec,
    pub d_stress: StressVec,
    pub tangent: Stiffness6,
    base_incr: Vec<StrainVec>,
    openings: Vec<Vec<Vector3<f64>>>,
    evals: Vec<CellEval>,
    cell_fields: Vec<(StrainVec, StressVec)>,
}

#[derive(Debug, Clone)]
struct CellEval {
    base: BaseResponse,
    layers: Vec<TractionResult>,
}

/// Solver for one material point.
#[derive(Debug, Clone)]
pub struct Solver {
    network: Network,
    phases: Vec<Phase>,
    /// 6×6 rotation from global to cell frame, per active leaf.
    frames: Vec<Matrix6<f64>>,
    pub settings: SolverSettings,
}

impl Solver {
    /// Builds a solver and the initial state by dividing `macro_cell`
    /// through the network.
    pub fn new(params: NetworkParams, phases: Vec<Phase>, macro_cell: &ScaleTensor) -> Result<(Self, NetworkState)> {
        for p in &phases {
            p.material.validate()?;
            if let Some(c) = &p.cohesive {
                c.validate()?;
            }
        }
        if let Some(&bad) = params.phases().iter().find(|&&p| p >= phases.len()) {
            return Err(Error::InvalidInput(format!("phase id {bad} has no material")));
        }
        let geometry = propagate_scales(&params, macro_cell)?;
        let network = Network::new(params);
        let cells: Vec<Cell> = geometry
            .iter()
            .map(|g| Cell {
                node: g.node,
                phase: g.phase,
                weight: g.weight,
                scale: g.scale.rotated(&g.orientation),
                orientation: g.orientation,
                base: MaterialState::default(),
                cracks: Vec::new(),
                net_strain: StrainVec::zeros(),
                net_stress: StressVec::zeros(),
            })
            .collect();
        debug_assert_eq!(cells.iter().map(|c| c.node).collect::<Vec<_>>(), network.active_leaves());
        let frames = cells.iter().map(|c| rotation6(&c.orientation)).collect();
        let state = NetworkState {
            cells,
            strain: StrainVec::zeros(),
            stress: StressVec::zeros(),
            time: 0.0,
            step: 0,
            warm: None,
        };
        Ok((Solver { network, phases, frames, settings: SolverSettings::default() }, state))
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// Cell stress in the global frame.
    pub fn global_stress(&self, cell: usize, local: &StressVec) -> StressVec {
        self.frames[cell].transpose() * local
    }

    fn evaluate_cells(
        &self,
        state: &NetworkState,
        base_incr: &[StrainVec],
        openings: &[Vec<Vector3<f64>>],
        dt: f64,
    ) -> Result<Vec<CellEval>> {
        state
            .cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let base = self.phases[cell.phase].material.evaluate(&cell.base, &base_incr[i])?;
                let layers = cell
                    .cracks
                    .iter()
                    .zip(&openings[i])
                    .map(|(c, dd)| evaluate_cohesive(&c.params, &c.state, dd, dt))
                    .collect();
                Ok(CellEval { base, layers })
            })
            .collect()
    }

    fn linearize(
        &self,
        state: &NetworkState,
        evals: &[CellEval],
        base_incr: &[StrainVec],
        openings: &[Vec<Vector3<f64>>],
    ) -> Result<Vec<EnrichedResponse>> {
        state
            .cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let e = &evals[i];
                let residual = base_incr[i] - e.base.compliance * (e.base.stress - cell.base.stress);
                let layers: Vec<LayerLinearization> = cell
                    .cracks
                    .iter()
                    .zip(&e.layers)
                    .zip(&openings[i])
                    .map(|((c, tr), dd)| {
                        let r_c = LayerLinearization::r_matrix(&c.normal, &c.basis);
                        LayerLinearization {
                            v_c: c.v_c,
                            r_c,
                            tangent: tr.tangent,
                            residual_traction: tr.traction - r_c.transpose() * cell.base.stress - tr.tangent * dd,
                        }
                    })
                    .collect();
                enrich_cell_response(&e.base.tangent, &residual, &layers)
            })
            .collect()
    }

    /// Resolves the mixed control on the macroscale response.
    fn macro_increment(top: &BlockResponse, bc: &MacroBC) -> Result<StrainVec> {
        let free: Vec<usize> = (0..6).filter(|&i| bc.control[i] == Control::Stress).collect();
        let mut d_eps = StrainVec::zeros();
        for i in 0..6 {
            if bc.control[i] == Control::Strain {
                d_eps[i] = bc.values[i];
            }
        }
        if free.is_empty() {
            return Ok(d_eps);
        }
        let k = free.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[(r, c)] = top.c[(i, j)];
            }
            b[r] = bc.values[i] - top.ds[i] - (top.c.row(i) * d_eps)[0];
        }
        let x = a.lu().solve(&b).ok_or(Error::Singular("macro stress control"))?;
        for (r, &i) in free.iter().enumerate() {
            d_eps[i] = x[r];
        }
        Ok(d_eps)
    }

    fn initial_guess(&self, state: &NetworkState, dt: f64) -> (Vec<StrainVec>, Vec<Vec<Vector3<f64>>>) {
        let zero_open = |s: &NetworkState| s.cells.iter().map(|c| vec![Vector3::zeros(); c.cracks.len()]).collect::<Vec<_>>();
        match &state.warm {
            Some(w) if w.base.len() == state.cells.len() => {
                let f = dt / w.dt;
                let base = w.base.iter().map(|e| e * f).collect();
                let mut openings = zero_open(state);
                for (dst, src) in openings.iter_mut().zip(&w.openings) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s * f;
                    }
                }
                (base, openings)
            }
            _ => (vec![StrainVec::zeros(); state.cells.len()], zero_open(state)),
        }
    }

    /// Fixed-point iteration for a fixed crack configuration, starting from
    /// the warm-start guess.
    pub fn newton_solve(&mut self, state: &NetworkState, bc: &MacroBC) -> Result<NewtonResult> {
        let guess = self.initial_guess(state, bc.dt);
        self.newton_from(state, bc, guess)
    }

    fn newton_from(
        &mut self,
        state: &NetworkState,
        bc: &MacroBC,
        (mut base_incr, mut openings): (Vec<StrainVec>, Vec<Vec<Vector3<f64>>>),
    ) -> Result<NewtonResult> {
        bc.validate()?;
        let tol = self.settings.tolerance;
        for iteration in 1..=self.settings.max_iterations {
            let evals = self.evaluate_cells(state, &base_incr, &openings, bc.dt)?;
            let enriched = self.linearize(state, &evals, &base_incr, &openings)?;
            let leaves: Vec<BlockResponse> = enriched.iter().map(|e| BlockResponse { c: e.c, ds: e.ds }).collect();
            let (top, token) = self.network.forward(&leaves)?;
            let d_strain = Self::macro_increment(&top, bc)?;
            let cell_fields = self.network.backward(token, &d_strain)?;
            let mut new_base = Vec::with_capacity(base_incr.len());
            let mut new_open = Vec::with_capacity(openings.len());
            let (mut de2, mut e2, mut dd2, mut d2) = (0.0, 0.0, 0.0, 0.0);
            for (i, e) in enriched.iter().enumerate() {
                let (b, o) = e.split(&cell_fields[i].0);
                de2 += (b - base_incr[i]).norm_squared();
                e2 += b.norm_squared();
                for (x, y) in o.iter().zip(&openings[i]) {
                    dd2 += (x - y).norm_squared();
                    d2 += x.norm_squared();
                }
                new_base.push(b);
                new_open.push(o);
            }
            if !(de2.is_finite() && dd2.is_finite()) {
                return Err(Error::NotConverged(iteration));
            }
            base_incr = new_base;
            openings = new_open;
            if de2.sqrt() <= tol * e2.sqrt() + 1e-15 && dd2.sqrt() <= tol * d2.sqrt() + 1e-15 {
                let evals = self.evaluate_cells(state, &base_incr, &openings, bc.dt)?;
                return Ok(NewtonResult {
                    iterations: iteration,
                    d_strain,
                    d_stress: top.c * d_strain + top.ds,
                    tangent: top.c,
                    base_incr,
                    openings,
                    evals,
                    cell_fields,
                });
            }
        }
        Err(Error::NotConverged(self.settings.max_iterations))
    }

    fn crack_views<'a>(&self, state: &'a NetworkState, trial: &NewtonResult, normals: &'a [Vec<Vector3<f64>>]) -> Vec<CellCrackView<'a>> {
        state
            .cells
            .iter()
            .enumerate()
            .map(|(i, cell)| CellCrackView {
                stress: trial.evals[i].base.stress,
                previous_stress: cell.base.stress,
                scale: &cell.scale,
                existing: &normals[i],
                strength: self.phases[cell.phase].cohesive.map(|c| (c.t_c, c.beta)),
            })
            .collect()
    }

    fn insert_cracks(&self, state: &mut NetworkState, cell: usize, cracks: &[NewCrack], events: &mut Vec<CrackEvent>) {
        let c = &mut state.cells[cell];
        let phase = &self.phases[c.phase];
        let cohesive = phase.cohesive.expect("only cohesive phases crack");
        for nc in cracks {
            let basis = crack_basis(&nc.normal);
            let k_h = phase.material.directional_modulus(&nc.normal) * nc.v_c;
            let params = CohesiveParams { t_c: nc.t_c, ..cohesive }.with_hardening(k_h);
            let mut st = CohesiveState::intact(&params);
            st.opening = basis.transpose() * nc.opening;
            st.traction = basis.transpose() * (crate::tensor::from_mandel(&c.base.stress) * nc.normal);
            let normal_global = c.orientation.transpose() * nc.normal;
            events.push(CrackEvent {
                step: state.step + 1,
                time: state.time,
                cell,
                normal: normal_global,
                t_m: nc.t_m,
                v_c: nc.v_c,
                area: nc.area,
            });
            c.cracks.push(Crack {
                normal: nc.normal,
                normal_global,
                basis,
                v_c: nc.v_c,
                area: nc.area,
                params,
                state: st,
                step: state.step + 1,
            });
        }
    }

    fn commit(&self, state: &mut NetworkState, bc: &MacroBC, trial: &NewtonResult) -> WorkAudit {
        let mut audit = WorkAudit {
            macro_work: (state.stress + 0.5 * trial.d_stress).dot(&trial.d_strain),
            ..WorkAudit::default()
        };
        for (i, cell) in state.cells.iter_mut().enumerate() {
            let (de, ds) = trial.cell_fields[i];
            let mid = cell.net_stress + 0.5 * ds;
            audit.base_work += cell.weight * mid.dot(&trial.base_incr[i]);
            for (crack, dd) in cell.cracks.iter().zip(&trial.openings[i]) {
                let r = LayerLinearization::r_matrix(&crack.normal, &crack.basis);
                audit.cohesive_work += cell.weight * crack.v_c * (r.transpose() * mid).dot(dd);
            }
            audit.scale += cell.weight * mid.norm() * de.norm();
            cell.net_strain += de;
            cell.net_stress += ds;
            cell.base = trial.evals[i].base.state;
            for (crack, tr) in cell.cracks.iter_mut().zip(&trial.evals[i].layers) {
                crack.state = tr.state;
            }
        }
        audit.scale = audit.scale.max(audit.macro_work.abs());
        state.strain += trial.d_strain;
        state.stress += trial.d_stress;
        state.time += bc.dt;
        state.step += 1;
        state.warm = Some(WarmStart { dt: bc.dt, base: trial.base_incr.clone(), openings: trial.openings.clone() });
        audit
    }

    /// One load step with crack activation. The state is only modified when
    /// the step converges.
    pub fn solve_step(&mut self, state: &mut NetworkState, bc: &MacroBC) -> Result<StepResult> {
        let mut work = state.clone();
        let mut events = Vec::new();
        let mut iterations = 0;
        let mut guess = self.initial_guess(&work, bc.dt);
        let trial = loop {
            let trial = self.newton_from(&work, bc, guess)?;
            iterations += trial.iterations;
            let normals: Vec<Vec<Vector3<f64>>> =
                work.cells.iter().map(|c| c.cracks.iter().map(|k| k.normal).collect()).collect();
            let activation = try_activate(&self.crack_views(&work, &trial, &normals))?;
            let Some(act) = activation else { break trial };
            log::debug!("step {}: {} crack(s) in cell {} (excess {:.3e})", work.step + 1, act.cracks.len(), act.cell, act.excess);
            self.insert_cracks(&mut work, act.cell, &act.cracks, &mut events);
            let mut openings = trial.openings.clone();
            for _ in &act.cracks {
                openings[act.cell].push(Vector3::zeros());
            }
            guess = (trial.base_incr.clone(), openings);
        };
        let audit = self.commit(&mut work, bc, &trial);
        *state = work;
        Ok(StepResult {
            d_stress: trial.d_stress,
            d_strain: trial.d_strain,
            tangent: trial.tangent,
            converged: true,
            refinements: 0,
            substeps: vec![(1, 0)],
            iterations,
            audits: vec![audit],
            events,
            diagnostics: diagnostics(state),
        })
    }

    /// `solve_step` with adaptive subdivision of failing steps.
    pub fn solve_step_adaptive(&mut self, state: &mut NetworkState, bc: &MacroBC) -> Result<StepResult> {
        self.solve_step_adaptive_with(state, bc, |_, _| false)
    }

    /// Adaptive stepping with a failure-injection hook: `fail(N_sub, i_sub)`
    /// returning `true` makes that sub-step attempt fail.
    pub fn solve_step_adaptive_with<F>(&mut self, state: &mut NetworkState, bc: &MacroBC, mut fail: F) -> Result<StepResult>
    where
        F: FnMut(u64, i64) -> bool,
    {
        bc.validate()?;
        let mut work = state.clone();
        let (mut n_sub, mut i_sub) = (1u64, 0i64);
        let mut doublings = 0u32;
        let mut substeps = Vec::new();
        let mut result: Option<StepResult> = None;
        let (mut d_stress, mut d_strain) = (StressVec::zeros(), StrainVec::zeros());
        let mut audits = Vec::new();
        let mut events = Vec::new();
        let mut iterations = 0;
        loop {
            substeps.push((n_sub, i_sub));
            let sub = bc.scaled(n_sub);
            let outcome = if fail(n_sub, i_sub) {
                Err(Error::NotConverged(0))
            } else {
                self.solve_step(&mut work, &sub)
            };
            match outcome {
                Ok(r) => {
                    d_stress += r.d_stress;
                    d_strain += r.d_strain;
                    iterations += r.iterations;
                    audits.extend(r.audits.iter().copied());
                    events.extend(r.events.iter().cloned());
                    result = Some(r);
                    // sub-steps share the load step number
                    work.step = state.step;
                    i_sub += 1;
                }
                Err(e) => {
                    log::debug!("sub-step {i_sub}/{n_sub} failed: {e}");
                    if doublings == self.settings.max_refinements {
                        return Err(Error::RefinementExhausted(doublings));
                    }
                    doublings += 1;
                    n_sub *= 2;
                    i_sub = match self.settings.bookkeeping {
                        Bookkeeping::AttemptIndex => 2 * i_sub,
                        Bookkeeping::Literal => 2 * i_sub - 1,
                    };
                }
            }
            if i_sub == n_sub as i64 {
                break;
            }
        }
        work.step = state.step + 1;
        *state = work;
        let last = result.expect("at least one sub-step converged");
        Ok(StepResult {
            d_stress,
            d_strain,
            tangent: last.tangent,
            converged: true,
            refinements: doublings,
            substeps,
            iterations,
            audits,
            events,
            diagnostics: last.diagnostics,
        })
    }
}

/// Released energy, mean plastic strain and per-cell released energy per
/// crack area.
pub fn diagnostics(state: &NetworkState) -> Diagnostics {
    let mut total = 0.0;
    let mut eps_p = 0.0;
    let cells = state
        .cells
        .iter()
        .map(|c| {
            let mut energy = 0.0;
            let mut area = 0.0;
            for k in &c.cracks {
                let tr = evaluate_cohesive(&k.params, &k.state, &Vector3::zeros(), 1.0);
                energy += k.params.free_energy(k.state.d_0, tr.d_m) * k.area;
                area += k.area;
            }
            total += energy;
            eps_p += c.weight * c.base.plastic.eps_p;
            CellDiagnostics {
                weight: c.weight,
                phase: c.phase,
                eps_p: c.base.plastic.eps_p,
                released: if area > 0.0 { energy / area } else { 0.0 },
                cracks: c.cracks.len(),
            }
        })
        .collect();
    Diagnostics { released_energy: total, mean_plastic_strain: eps_p, cells }
}

/// A straight segment of a load path: `steps` increments moving the
/// controlled components to their end values (total strain for strain
/// control, total stress for stress control).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSegment {
    pub steps: usize,
    pub dt: f64,
    pub control: [Control; 6],
    pub end: [f64; 6],
}

impl LoadSegment {
    /// Uniaxial strain ramp on `component` with the other stresses kept zero.
    pub fn uniaxial(component: usize, end_strain: f64, steps: usize, dt: f64) -> Self {
        let mut control = [Control::Stress; 6];
        control[component] = Control::Strain;
        let mut end = [0.0; 6];
        end[component] = end_strain;
        LoadSegment { steps, dt, control, end }
    }

    fn increment(&self, state: &NetworkState, remaining: usize) -> MacroBC {
        let mut values = StrainVec::zeros();
        for i in 0..6 {
            let start = match self.control[i] {
                Control::Strain => state.strain[i],
                Control::Stress => state.stress[i],
            };
            values[i] = (self.end[i] - start) / remaining as f64;
        }
        MacroBC { control: self.control, values, dt: self.dt }
    }
}

/// One committed step of a load path.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub strain: StrainVec,
    pub stress: StressVec,
    pub released_energy: f64,
    pub mean_plastic_strain: f64,
    pub cracks: usize,
    pub result: StepResult,
}

/// Runs a load path with adaptive stepping. Stops at the first step whose
/// refinement is exhausted and returns the records so far with the error.
pub fn run_load_path(
    solver: &mut Solver,
    state: &mut NetworkState,
    segments: &[LoadSegment],
) -> (Vec<StepRecord>, Option<Error>) {
    let mut records = Vec::new();
    for seg in segments {
        if seg.steps == 0 {
            continue;
        }
        // each increment aims at the segment end over the remaining steps, so
        // the end values are met even after a refined step over- or undershoots
        for k in 0..seg.steps {
            let bc = seg.increment(state, seg.steps - k);
            match solver.solve_step_adaptive(state, &bc) {
                Ok(r) => records.push(StepRecord {
                    step: state.step,
                    time: state.time,
                    strain: state.strain,
                    stress: state.stress,
                    released_energy: r.diagnostics.released_energy,
                    mean_plastic_strain: r.diagnostics.mean_plastic_strain,
                    cracks: state.crack_count(),
                    result: r,
                }),
                Err(e) => return (records, Some(e)),
            }
        }
    }
    (records, None)
}

/// Sum of the audits of all steps.
pub fn total_audit(records: &[StepRecord]) -> WorkAudit {
    let mut a = WorkAudit::default();
    for r in records {
        for x in &r.result.audits {
            a.add(x);
        }
    }
    a
}
