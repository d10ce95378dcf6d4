//! Phase models: linear elasticity and small-strain von Mises plasticity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::tensor::{
    deviatoric_projector, isotropic_stiffness, mandel_identity, to_mandel, Compliance6, Stiffness6, StrainVec,
    StressVec,
};
use crate::{Error, Result};

const RETURN_TOL: f64 = 1e-12;
const RETURN_MAX_ITERS: usize = 60;

/// One linear branch `σ^Y = a + b ε_p`, valid from `start` up to the next
/// branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardeningSegment {
    pub start: f64,
    pub a: f64,
    pub b: f64,
}

/// Isotropic hardening law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum HardeningLaw {
    PiecewiseLinear { segments: Vec<HardeningSegment> },
    /// `σ^Y = (σ^y − σ^u) exp(−a ε_p) + E^h ε_p + σ^u`.
    Exponential { sigma_y: f64, sigma_u: f64, e_h: f64, a: f64 },
}

impl HardeningLaw {
    /// Two-branch law of the particle-composite matrix.
    pub fn particle_matrix() -> Self {
        HardeningLaw::PiecewiseLinear {
            segments: vec![
                HardeningSegment { start: 0.0, a: 0.1, b: 10.0 },
                HardeningSegment { start: 0.01, a: 0.18, b: 2.0 },
            ],
        }
    }

    /// Exponential law of the epoxy matrix.
    pub fn epoxy() -> Self {
        HardeningLaw::Exponential { sigma_y: 0.025, sigma_u: 0.115, e_h: 0.01, a: 140.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HardeningLaw::PiecewiseLinear { segments } => {
                if segments.is_empty() || segments[0].start != 0.0 {
                    return Err(Error::InvalidInput("first hardening branch must start at 0".into()));
                }
                for w in segments.windows(2) {
                    if !(w[1].start > w[0].start) {
                        return Err(Error::InvalidInput("hardening branches must be increasing".into()));
                    }
                    let left = w[0].a + w[0].b * w[1].start;
                    let right = w[1].a + w[1].b * w[1].start;
                    if (left - right).abs() > 1e-12 * left.abs().max(1.0) {
                        return Err(Error::InvalidInput("hardening law is discontinuous".into()));
                    }
                }
                if !(segments[0].a > 0.0) || segments.iter().any(|s| s.b < 0.0) {
                    return Err(Error::InvalidInput("yield stress must stay positive".into()));
                }
            }
            HardeningLaw::Exponential { sigma_y, sigma_u, e_h, a } => {
                if !(*sigma_y > 0.0 && *sigma_u > 0.0 && *e_h >= 0.0 && *a >= 0.0) {
                    return Err(Error::InvalidInput("invalid exponential hardening constants".into()));
                }
            }
        }
        Ok(())
    }

    fn segment(segments: &[HardeningSegment], eps_p: f64) -> usize {
        segments.iter().rposition(|s| eps_p >= s.start).unwrap_or(0)
    }

    /// Yield stress and hardening slope at `eps_p`.
    pub fn eval(&self, eps_p: f64) -> (f64, f64) {
        match self {
            HardeningLaw::PiecewiseLinear { segments } => {
                let s = segments[Self::segment(segments, eps_p)];
                (s.a + s.b * eps_p, s.b)
            }
            HardeningLaw::Exponential { sigma_y, sigma_u, e_h, a } => {
                let ex = (-a * eps_p).exp();
                ((sigma_y - sigma_u) * ex + e_h * eps_p + sigma_u, -a * (sigma_y - sigma_u) * ex + e_h)
            }
        }
    }
}

/// Yield stress `σ^Y(ε_p)` in GPa.
pub fn yield_stress(law: &HardeningLaw, eps_p: f64) -> Result<f64> {
    if !(eps_p >= 0.0) {
        return Err(Error::InvalidInput(format!("negative effective plastic strain {eps_p}")));
    }
    Ok(law.eval(eps_p).0)
}

/// Internal variables of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlasticState {
    pub eps_p: f64,
    pub plastic_strain: StrainVec,
}

/// Committed state of a base material: stress plus internal variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaterialState {
    pub stress: StressVec,
    pub plastic: PlasticState,
}

/// Constitutive model of a phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Material {
    Elastic { stiffness: Stiffness6 },
    VonMises { young: f64, poisson: f64, hardening: HardeningLaw },
}

/// Linearized base-material response at a trial strain increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseResponse {
    /// Total stress at the trial increment.
    pub stress: StressVec,
    /// Consistent tangent.
    pub tangent: Stiffness6,
    /// Algorithmic compliance, the inverse of `tangent`.
    pub compliance: Compliance6,
    /// `δε` such that `Δε = D (σ − σ_prev) + δε`.
    pub residual: StrainVec,
    pub state: MaterialState,
}

impl Material {
    pub fn isotropic(young: f64, poisson: f64) -> Self {
        Material::Elastic { stiffness: isotropic_stiffness(young, poisson) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Material::Elastic { stiffness } => {
                if !crate::tensor::is_spd6(stiffness) {
                    return Err(Error::InvalidInput("elastic stiffness is not SPD".into()));
                }
            }
            Material::VonMises { young, poisson, hardening } => {
                if !(*young > 0.0 && *poisson > -1.0 && *poisson < 0.5) {
                    return Err(Error::InvalidInput("invalid elastic constants".into()));
                }
                hardening.validate()?;
            }
        }
        Ok(())
    }

    pub fn elastic_stiffness(&self) -> Stiffness6 {
        match self {
            Material::Elastic { stiffness } => *stiffness,
            Material::VonMises { young, poisson, .. } => isotropic_stiffness(*young, *poisson),
        }
    }

    /// Young's modulus along direction `n`, `1 / (nn : S : nn)`.
    pub fn directional_modulus(&self, n: &Vector3<f64>) -> f64 {
        let s = self
            .elastic_stiffness()
            .try_inverse()
            .expect("elastic stiffness is invertible");
        let m = to_mandel(&(n * n.transpose()));
        1.0 / (m.transpose() * s * m)[0]
    }

    pub fn is_elastic(&self) -> bool {
        matches!(self, Material::Elastic { .. })
    }

    /// Evaluates the model for a total strain increment from the committed
    /// state `prev`.
    pub fn evaluate(&self, prev: &MaterialState, d_eps: &StrainVec) -> Result<BaseResponse> {
        match self {
            Material::Elastic { stiffness } => {
                let compliance = stiffness.try_inverse().ok_or(Error::Singular("elastic stiffness"))?;
                Ok(BaseResponse {
                    stress: prev.stress + stiffness * d_eps,
                    tangent: *stiffness,
                    compliance,
                    residual: StrainVec::zeros(),
                    state: MaterialState { stress: prev.stress + stiffness * d_eps, plastic: prev.plastic },
                })
            }
            Material::VonMises { young, poisson, hardening } => {
                radial_return(*young, *poisson, hardening, prev, d_eps)
            }
        }
    }
}

/// Solves `q_tr − 3GΔγ = σ^Y(ε_p + Δγ)` for `Δγ > 0`; returns `(Δγ, H)`.
fn plastic_multiplier(law: &HardeningLaw, eps_p: f64, q_tr: f64, g: f64) -> Result<(f64, f64)> {
    match law {
        HardeningLaw::PiecewiseLinear { segments } => {
            for k in HardeningLaw::segment(segments, eps_p)..segments.len() {
                let s = segments[k];
                let dg = (q_tr - s.a - s.b * eps_p) / (3.0 * g + s.b);
                let end = segments.get(k + 1).map_or(f64::INFINITY, |n| n.start);
                if eps_p + dg < end {
                    return Ok((dg.max(0.0), s.b));
                }
            }
            Err(Error::ReturnMap)
        }
        HardeningLaw::Exponential { .. } => {
            let residual = |dg: f64| {
                let (sy, h) = law.eval(eps_p + dg);
                (q_tr - 3.0 * g * dg - sy, -3.0 * g - h)
            };
            let (mut lo, mut hi) = (0.0, q_tr / (3.0 * g));
            let mut dg = 0.0;
            for _ in 0..RETURN_MAX_ITERS {
                let (r, dr) = residual(dg);
                if r.abs() <= RETURN_TOL * q_tr {
                    return Ok((dg, law.eval(eps_p + dg).1));
                }
                if r > 0.0 {
                    lo = dg;
                } else {
                    hi = dg;
                }
                let step = dg - r / dr;
                dg = if dr < 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            }
            let (r, _) = residual(dg);
            if r.abs() <= 1e-9 * q_tr {
                Ok((dg, law.eval(eps_p + dg).1))
            } else {
                Err(Error::ReturnMap)
            }
        }
    }
}

fn radial_return(
    young: f64,
    poisson: f64,
    law: &HardeningLaw,
    prev: &MaterialState,
    d_eps: &StrainVec,
) -> Result<BaseResponse> {
    let c = isotropic_stiffness(young, poisson);
    let bulk = young / (3.0 * (1.0 - 2.0 * poisson));
    let g = young / (2.0 * (1.0 + poisson));
    let pdev = deviatoric_projector();
    let trial = prev.stress + c * d_eps;
    let s_tr = pdev * trial;
    let s_norm = s_tr.norm();
    let q_tr = (1.5f64).sqrt() * s_norm;
    let (sy, _) = law.eval(prev.plastic.eps_p);
    if q_tr - sy <= 1e-12 * sy {
        let compliance = c.try_inverse().ok_or(Error::Singular("elastic stiffness"))?;
        return Ok(BaseResponse {
            stress: trial,
            tangent: c,
            compliance,
            residual: StrainVec::zeros(),
            state: MaterialState { stress: trial, plastic: prev.plastic },
        });
    }
    let (dg, h) = plastic_multiplier(law, prev.plastic.eps_p, q_tr, g)?;
    let n = s_tr / s_norm;
    let d_plastic = n * ((1.5f64).sqrt() * dg);
    let stress = trial - 2.0 * g * d_plastic;
    let theta = 1.0 - 3.0 * g * dg / q_tr;
    let theta_bar = 1.0 / (1.0 + h / (3.0 * g)) - (1.0 - theta);
    let one = mandel_identity();
    let tangent = bulk * one * one.transpose() + 2.0 * g * theta * pdev - 2.0 * g * theta_bar * n * n.transpose();
    let compliance = tangent
        .try_inverse()
        .ok_or(Error::Singular("consistent tangent"))?;
    let residual = d_eps - compliance * (stress - prev.stress);
    Ok(BaseResponse {
        stress,
        tangent,
        compliance,
        residual,
        state: MaterialState {
            stress,
            plastic: PlasticState {
                eps_p: prev.plastic.eps_p + dg,
                plastic_strain: prev.plastic.plastic_strain + d_plastic,
            },
        },
    })
}

/// Von Mises equivalent stress.
pub fn von_mises(stress: &StressVec) -> f64 {
    (1.5f64).sqrt() * (deviatoric_projector() * stress).norm()
}
