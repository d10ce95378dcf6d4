//! Crack initiation: plane search on the outer Mohr circle and insertion of
//! new cohesive layers.

use nalgebra::Vector3;

use crate::cohesive::PENALTY_STIFFNESS;
use crate::geometry::{cutting_area, reciprocal_length, ScaleTensor};
use crate::tensor::{eig_sym3, from_mandel, StressVec};
use crate::Result;

/// Maximum number of layers a cell may hold.
pub const MAX_CRACKS_PER_CELL: usize = 4;
/// New planes must satisfy `|cos(n_new, n_old)| < √2/2`.
pub const MIN_ANGLE_COSINE: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Relative split of the critical traction for simultaneous twin planes.
pub const TWIN_PERTURBATION: f64 = 1e-6;

const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackCandidate {
    pub normal: Vector3<f64>,
    pub t_m: f64,
    /// Angle from the first principal direction towards the third.
    pub theta: f64,
}

fn traction_on_circle(mean: f64, radius: f64, theta: f64, beta: f64) -> f64 {
    let sn = mean + radius * (2.0 * theta).cos();
    let tn = radius * (2.0 * theta).sin().abs();
    if sn > 0.0 {
        (sn * sn + tn * tn / (beta * beta)).sqrt()
    } else {
        tn / beta
    }
}

/// Planes of maximum effective traction for stress `sigma`. Returns one
/// candidate, or two with equal traction for a symmetric pair `±θ`.
pub fn critical_planes(sigma: &StressVec, beta: f64) -> Result<Vec<CrackCandidate>> {
    let (lambda, q) = eig_sym3(&from_mandel(sigma))?;
    let q1: Vector3<f64> = q.column(0).into_owned();
    let q3: Vector3<f64> = q.column(2).into_owned();
    let mean = 0.5 * (lambda[0] + lambda[2]);
    let radius = 0.5 * (lambda[0] - lambda[2]);
    let scale = lambda.abs().max();
    if radius <= TIE_TOL * scale || scale == 0.0 {
        return Ok(vec![CrackCandidate { normal: q1, t_m: mean.max(0.0), theta: 0.0 }]);
    }
    let mut thetas = vec![0.0, std::f64::consts::FRAC_PI_4];
    if beta < 1.0 && mean > 0.0 {
        let ratio = mean / (radius * (1.0 / (beta * beta) - 1.0));
        if ratio > 0.0 && ratio < 1.0 {
            thetas.push(0.5 * ratio.acos());
        }
    }
    let mut best = (0.0, traction_on_circle(mean, radius, 0.0, beta));
    for &theta in &thetas[1..] {
        let t = traction_on_circle(mean, radius, theta, beta);
        if t > best.1 * (1.0 + TIE_TOL) {
            best = (theta, t);
        }
    }
    let plane = |theta: f64| (q1 * theta.cos() + q3 * theta.sin()).normalize();
    let (theta, t_m) = best;
    if theta == 0.0 {
        Ok(vec![CrackCandidate { normal: q1, t_m, theta }])
    } else {
        Ok(vec![
            CrackCandidate { normal: plane(theta), t_m, theta },
            CrackCandidate { normal: plane(-theta), t_m, theta: -theta },
        ])
    }
}

/// What the activation search needs to know about a cell. All vectors are
/// in the cell's local frame.
#[derive(Debug, Clone)]
pub struct CellCrackView<'a> {
    /// Current (trial) stress used for the criterion.
    pub stress: StressVec,
    /// Stress at the end of the previous step, used to initialize openings.
    pub previous_stress: StressVec,
    pub scale: &'a ScaleTensor,
    pub existing: &'a [Vector3<f64>],
    /// Critical traction and ratio of the phase; `None` for phases that
    /// cannot crack.
    pub strength: Option<(f64, f64)>,
}

/// A layer chosen for insertion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewCrack {
    pub normal: Vector3<f64>,
    pub t_m: f64,
    pub v_c: f64,
    pub area: f64,
    /// Initial opening `σ^{n−1} n / K` (local frame vector).
    pub opening: Vector3<f64>,
    /// Critical traction after the twin perturbation.
    pub t_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub cell: usize,
    pub excess: f64,
    pub cracks: Vec<NewCrack>,
}

fn admissible(n: &Vector3<f64>, existing: &[Vector3<f64>]) -> bool {
    existing.iter().all(|e| n.dot(e).abs() < MIN_ANGLE_COSINE)
}

/// Finds the cell and plane with the largest positive excess `t_m − t_c`
/// subject to the per-cell allowances. Ties go to the lowest cell index.
pub fn try_activate(cells: &[CellCrackView<'_>]) -> Result<Option<Activation>> {
    let mut best: Option<(usize, f64, Vec<CrackCandidate>, f64)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let Some((t_c, beta)) = cell.strength else { continue };
        if cell.existing.len() >= MAX_CRACKS_PER_CELL {
            continue;
        }
        let mut chosen: Vec<CrackCandidate> = Vec::new();
        for cand in critical_planes(&cell.stress, beta)? {
            let mut taken: Vec<Vector3<f64>> = cell.existing.to_vec();
            taken.extend(chosen.iter().map(|c| c.normal));
            if taken.len() < MAX_CRACKS_PER_CELL && admissible(&cand.normal, &taken) {
                chosen.push(cand);
            }
        }
        let Some(first) = chosen.first() else { continue };
        let excess = first.t_m - t_c;
        if excess > 0.0 && best.as_ref().is_none_or(|b| excess > b.1) {
            best = Some((i, excess, chosen, t_c));
        }
    }
    let Some((cell, excess, chosen, t_c)) = best else { return Ok(None) };
    let view = &cells[cell];
    let twin = chosen.len() == 2;
    let sigma = from_mandel(&view.previous_stress);
    let mut cracks = Vec::with_capacity(chosen.len());
    for (k, cand) in chosen.iter().enumerate() {
        let n = cand.normal;
        let factor = if twin { 1.0 + TWIN_PERTURBATION * if k == 0 { -1.0 } else { 1.0 } } else { 1.0 };
        cracks.push(NewCrack {
            normal: n,
            t_m: cand.t_m,
            v_c: reciprocal_length(view.scale, &n)?,
            area: cutting_area(view.scale, &n)?,
            opening: sigma * n / PENALTY_STIFFNESS,
            t_c: t_c * factor,
        });
    }
    Ok(Some(Activation { cell, excess, cracks }))
}
