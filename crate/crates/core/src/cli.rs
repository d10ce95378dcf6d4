//! Configuration files and the `train`, `run`, `transfer` and `divide`
//! commands.
//!
//! All configuration files are TOML with a `version` field. Relative paths
//! inside a file are resolved against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohesive::CohesiveParams;
use crate::geometry::{cell_volume, propagate_scales, ScaleTensor};
use crate::materials::{HardeningLaw, Material};
use crate::network::{transfer_2d_to_3d, NetworkParams, Params2d};
use crate::solver::{particle_fixture, run_load_path, CrackEvent, LoadSegment, NetworkState, Phase, Solver, SolverSettings, StepRecord};
use crate::tensor::{isotropic_stiffness, orthotropic_compliance};
use crate::training::{generate_dataset, train, train_from_scratch, Laminate, Oracle, TrainingConfig, TrainingReport};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Exit code for a load path or training run that did not converge.
pub const EXIT_NOT_CONVERGED: i32 = 2;
/// Exit code for unreadable or invalid input.
pub const EXIT_CONFIG: i32 = 3;

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged(_) | Error::RefinementExhausted(_) | Error::Diverged { .. } => EXIT_NOT_CONVERGED,
        Error::Parse(_) | Error::InvalidInput(_) | Error::Io(_) => EXIT_CONFIG,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MaterialSpec {
    Isotropic { young: f64, poisson: f64 },
    /// Constants `E1..E3`, `G12, G13, G23` and major `ν12, ν13, ν23`.
    Orthotropic { young: [f64; 3], shear: [f64; 3], poisson: [f64; 3] },
    VonMises { young: f64, poisson: f64, hardening: HardeningLaw },
}

impl MaterialSpec {
    pub fn build(&self) -> Result<Material> {
        let m = match self {
            MaterialSpec::Isotropic { young, poisson } => Material::Elastic { stiffness: isotropic_stiffness(*young, *poisson) },
            MaterialSpec::Orthotropic { young, shear, poisson } => {
                let s = orthotropic_compliance(*young, shear[0], shear[1], shear[2], poisson[0], poisson[1], poisson[2]);
                let stiffness = s.try_inverse().ok_or_else(|| Error::InvalidInput("singular orthotropic compliance".into()))?;
                Material::Elastic { stiffness }
            }
            MaterialSpec::VonMises { young, poisson, hardening } => {
                Material::VonMises { young: *young, poisson: *poisson, hardening: hardening.clone() }
            }
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub material: MaterialSpec,
    #[serde(default)]
    pub cohesive: Option<CohesiveParams>,
}

/// Network source: a parameter file or the built-in particle fixture with
/// the given particle fraction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub params: Option<PathBuf>,
    pub fixture: Option<f64>,
}

impl NetworkSpec {
    pub fn load(&self, base: &Path) -> Result<NetworkParams> {
        match (&self.params, self.fixture) {
            (Some(p), None) => NetworkParams::load(&base.join(p)),
            (None, Some(f)) => particle_fixture(f),
            _ => Err(Error::Parse("network needs exactly one of `params` or `fixture`".into())),
        }
    }
}

/// Macroscale cell: a sphere of diameter `diameter`, an ellipsoid with axis
/// lengths `lengths`, or a full scale tensor `matrix`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroCellSpec {
    pub diameter: Option<f64>,
    pub lengths: Option<[f64; 3]>,
    pub matrix: Option<[[f64; 3]; 3]>,
}

impl MacroCellSpec {
    pub fn build(&self) -> Result<ScaleTensor> {
        match (self.diameter, self.lengths, self.matrix) {
            (Some(h), None, None) => ScaleTensor::sphere(h),
            (None, Some(l), None) => ScaleTensor::from_lengths(l),
            (None, None, Some(m)) => {
                let a = Matrix3::from_fn(|i, j| m[i][j]);
                if (a - a.transpose()).abs().max() > 1e-12 * a.abs().max() {
                    return Err(Error::InvalidInput("scale tensor is not symmetric".into()));
                }
                ScaleTensor::new(a)
            }
            _ => Err(Error::Parse("macro_cell needs exactly one of `diameter`, `lengths` or `matrix`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOutput {
    pub csv: String,
    pub cracks: String,
    pub cells: String,
}

impl Default for RunOutput {
    fn default() -> Self {
        RunOutput { csv: "stress_strain.csv".into(), cracks: "cracks.csv".into(), cells: "cells.toml".into() }
    }
}

/// Configuration of `run` and `divide`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub network: NetworkSpec,
    #[serde(rename = "phase")]
    pub phases: Vec<PhaseSpec>,
    pub macro_cell: MacroCellSpec,
    #[serde(default)]
    pub load: Vec<LoadSegment>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: RunOutput,
}

fn check_version(v: u32) -> Result<()> {
    if v == CONFIG_VERSION {
        Ok(())
    } else {
        Err(Error::Parse(format!("unsupported config version {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        check_version(c.version)?;
        for seg in &c.load {
            if !(seg.dt > 0.0) || !seg.end.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("load segments need dt > 0 and finite targets".into()));
            }
        }
        Ok(c)
    }

    pub fn phases(&self) -> Result<Vec<Phase>> {
        self.phases
            .iter()
            .map(|p| {
                if let Some(c) = &p.cohesive {
                    c.validate()?;
                }
                Ok(Phase { material: p.material.build()?, cohesive: p.cohesive })
            })
            .collect()
    }
}

fn read_config(path: &Path) -> Result<(String, PathBuf)> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((text, base))
}

/// Result of a `run`: the committed steps and the error that stopped the
/// load path, if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<StepRecord>,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn peak_stress(&self, component: usize) -> f64 {
        self.records.iter().map(|r| r.stress[component]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn write_stress_strain(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((1..=6).map(|i| format!("eps{i}")));
    header.extend((1..=6).map(|i| format!("sig{i}")));
    header.extend(["released_energy", "mean_plastic_strain", "cracks"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.step.to_string(), format!("{:.16e}", r.time)];
        row.extend(r.strain.iter().map(|v| format!("{v:.16e}")));
        row.extend(r.stress.iter().map(|v| format!("{v:.16e}")));
        row.push(format!("{:.16e}", r.released_energy));
        row.push(format!("{:.16e}", r.mean_plastic_strain));
        row.push(r.cracks.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_crack_log(path: &Path, events: &[CrackEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "time", "cell", "n1", "n2", "n3", "t_m", "v_c", "area"])?;
    for e in events {
        let mut row = vec![e.step.to_string(), format!("{:.16e}", e.time), e.cell.to_string()];
        row.extend(e.normal.iter().map(|v| format!("{v:.16e}")));
        row.extend([e.t_m, e.v_c, e.area].map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CellRecord {
    node: usize,
    phase: usize,
    weight: f64,
    released_energy_per_area: f64,
    plastic_strain: f64,
    cracks: usize,
}

#[derive(Debug, Serialize)]
struct CellFile {
    cell: Vec<CellRecord>,
}

fn write_cells(path: &Path, state: &NetworkState) -> Result<()> {
    let d = crate::solver::diagnostics(state);
    let cell = state
        .cells
        .iter()
        .zip(&d.cells)
        .map(|(c, x)| CellRecord {
            node: c.node,
            phase: x.phase,
            weight: x.weight,
            released_energy_per_area: x.released,
            plastic_strain: x.eps_p,
            cracks: x.cracks,
        })
        .collect();
    let text = toml::to_string(&CellFile { cell }).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Runs the load path of `config` and writes the stress-strain table, the
/// crack log and the cell report into `out_dir`. Output is written even
/// when the load path stops early.
pub fn cmd_run(config: &RunConfig, base: &Path, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.network.load(base)?;
    let (mut solver, mut state) = Solver::new(params, config.phases()?, &config.macro_cell.build()?)?;
    solver.settings = config.solver;
    let (records, error) = run_load_path(&mut solver, &mut state, &config.load);
    fs::create_dir_all(out_dir)?;
    write_stress_strain(&out_dir.join(&config.output.csv), &records)?;
    let events: Vec<CrackEvent> = records.iter().flat_map(|r| r.result.events.iter().cloned()).collect();
    write_crack_log(&out_dir.join(&config.output.cracks), &events)?;
    write_cells(&out_dir.join(&config.output.cells), &state)?;
    if let Some(e) = &error {
        log::error!("load path stopped after {} steps: {e}", records.len());
    }
    Ok(RunOutcome { out_dir: out_dir.to_path_buf(), records, error })
}

/// A `key=v1,v2,...` sweep over a dotted TOML path.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s.split_once('=').ok_or_else(|| Error::Parse(format!("sweep `{s}` is not key=v1,v2,...")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if key.is_empty() || values.is_empty() {
            return Err(Error::Parse(format!("sweep `{s}` is not key=v1,v2,...")));
        }
        Ok(Sweep { key: key.trim().to_string(), values })
    }
}

fn parse_scalar(v: &str) -> toml::Value {
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_string())
    }
}

/// Replaces the value at a dotted path; numeric segments index arrays.
pub fn override_key(text: &str, key: &str, value: &str) -> Result<String> {
    let mut root: toml::Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut node = &mut root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_scalar(value));
                    break;
                }
                t.get_mut(*part).ok_or_else(|| Error::Parse(format!("no key `{part}` in sweep path `{key}`")))?
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| Error::Parse(format!("`{part}` is not an array index")))?;
                let slot = a.get_mut(idx).ok_or_else(|| Error::Parse(format!("index {idx} out of range in `{key}`")))?;
                if last {
                    *slot = parse_scalar(value);
                    break;
                }
                slot
            }
            _ => return Err(Error::Parse(format!("sweep path `{key}` runs through a scalar"))),
        };
    }
    toml::to_string(&root).map_err(|e| Error::Parse(e.to_string()))
}

/// Runs one configuration per sweep value in parallel, each into
/// `out_dir/<key>=<value>`.
pub fn cmd_run_sweep(text: &str, base: &Path, out_dir: &Path, sweep: &Sweep) -> Result<Vec<RunOutcome>> {
    let configs = sweep
        .values
        .iter()
        .map(|v| RunConfig::from_toml(&override_key(text, &sweep.key, v)?).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|(v, c)| cmd_run(c, base, &out_dir.join(format!("{}={v}", sweep.key))))
        .collect()
}

/// `run` entry point: reads the config and runs it, or a sweep of it.
pub fn run_from_file(path: &Path, out_dir: &Path, sweep: Option<&Sweep>) -> Result<Vec<RunOutcome>> {
    let (text, base) = read_config(path)?;
    match sweep {
        None => Ok(vec![cmd_run(&RunConfig::from_toml(&text)?, &base, out_dir)?]),
        Some(s) => cmd_run_sweep(&text, &base, out_dir, s),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum OracleSpec {
    /// A frozen teacher network from a parameter file.
    Teacher { params: PathBuf },
    /// A random teacher network of the given depth.
    RandomTeacher { depth: usize, seed: u64 },
    Laminate { laminate: Laminate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOutput {
    pub params: String,
    pub report: String,
}

impl Default for TrainOutput {
    fn default() -> Self {
        TrainOutput { params: "params.toml".into(), report: "training.csv".into() }
    }
}

/// Configuration of `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub version: u32,
    pub depth: usize,
    pub oracle: OracleSpec,
    /// Warm start; random initializations are used when absent.
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub output: TrainOutput,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        check_version(c.version)?;
        c.training.validate()?;
        Ok(c)
    }
}

/// Trains a network and writes the parameter file and the per-epoch report.
pub fn cmd_train(config: &TrainConfig, base: &Path, out_dir: &Path) -> Result<(NetworkParams, TrainingReport)> {
    use rand::SeedableRng;
    let oracle = match &config.oracle {
        OracleSpec::Teacher { params } => Oracle::Teacher(NetworkParams::load(&base.join(params))?),
        OracleSpec::RandomTeacher { depth, seed } => {
            Oracle::Teacher(NetworkParams::random(*depth, &mut rand_chacha::ChaCha8Rng::seed_from_u64(*seed))?)
        }
        OracleSpec::Laminate { laminate } => Oracle::Laminate(laminate.clone()),
    };
    let (train_set, test_set) = generate_dataset(&config.training, &oracle)?;
    let (params, report) = match &config.init {
        Some(p) => {
            let init = NetworkParams::load(&base.join(p))?;
            if init.depth() != config.depth {
                return Err(Error::InvalidInput(format!("warm start has depth {}, expected {}", init.depth(), config.depth)));
            }
            train(&config.training, &train_set, &test_set, init)?
        }
        None => train_from_scratch(&config.training, &train_set, &test_set, config.depth)?,
    };
    fs::create_dir_all(out_dir)?;
    params.save(&out_dir.join(&config.output.params))?;
    let mut w = csv::Writer::from_path(out_dir.join(&config.output.report))?;
    w.write_record(["epoch", "train_cost", "test_cost", "active_nodes"])?;
    for r in &report.epochs {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.16e}", r.train_cost),
            format!("{:.16e}", r.test_cost),
            r.active_nodes.to_string(),
        ])?;
    }
    w.flush()?;
    log::info!(
        "trained depth-{} network: test cost {:.3e}, test error {:.3}%",
        config.depth,
        report.final_test_cost,
        100.0 * report.final_test_error
    );
    Ok((params, report))
}

/// `train` entry point; `seed` overrides the configured seed.
pub fn train_from_file(path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(NetworkParams, TrainingReport)> {
    let (text, base) = read_config(path)?;
    let mut config = TrainConfig::from_toml(&text)?;
    if let Some(s) = seed {
        config.training.seed = s;
    }
    cmd_train(&config, &base, out_dir)
}

/// Converts a 2-D parameter file to 3-D.
pub fn cmd_transfer(input: &Path, output: &Path) -> Result<NetworkParams> {
    let p2 = Params2d::from_toml(&fs::read_to_string(input)?)?;
    let p3 = transfer_2d_to_3d(&p2)?;
    p3.save(output)?;
    Ok(p3)
}

/// Geometry of one bottom-layer cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellGeometryRecord {
    pub node: usize,
    pub phase: usize,
    pub weight: f64,
    pub volume: f64,
    /// Semi-axis lengths, largest first.
    pub semi_axes: [f64; 3],
    /// Unit axis directions (global frame), one per row.
    pub axes: [[f64; 3]; 3],
    /// Rows map global components to the cell frame.
    pub orientation: [[f64; 3]; 3],
}

#[derive(Debug, Serialize)]
struct DivideFile<'a> {
    cell: &'a [CellGeometryRecord],
}

/// Divides the macroscale cell through the network and writes `cells.toml`.
pub fn cmd_divide(config: &RunConfig, base: &Path, out_dir: &Path) -> Result<Vec<CellGeometryRecord>> {
    let params = config.network.load(base)?;
    let cells = propagate_scales(&params, &config.macro_cell.build()?)?;
    let records = cells
        .iter()
        .map(|c| {
            let (len, dirs) = c.scale.semi_axes();
            Ok(CellGeometryRecord {
                node: c.node,
                phase: c.phase,
                weight: c.weight,
                volume: cell_volume(&c.scale)?,
                semi_axes: [len[0], len[1], len[2]],
                axes: std::array::from_fn(|i| std::array::from_fn(|k| dirs[(k, i)])),
                orientation: std::array::from_fn(|i| std::array::from_fn(|k| c.orientation[(i, k)])),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    let text = toml::to_string(&DivideFile { cell: &records }).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(out_dir.join("cells.toml"), text)?;
    Ok(records)
}

pub fn divide_from_file(path: &Path, out_dir: &Path) -> Result<Vec<CellGeometryRecord>> {
    let (text, base) = read_config(path)?;
    cmd_divide(&RunConfig::from_toml(&text)?, &base, out_dir)
}
