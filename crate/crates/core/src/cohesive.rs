//! Mixed-mode cohesive layers with a bilinear backbone and viscous damage.
//!
//! Openings and tractions of a layer are stored in its crack basis
//! `[n, s₁, s₂]` (normal first). The effective law acts on the scalar pair
//! `(d_m, t_m)`; shear enters through the ratio `β`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::tensor::{opening_strain_map, Compliance6, Stiffness6, StrainVec, StressVec};
use crate::{Error, Result};

/// Initial stiffness of an intact layer (GPa/mm).
pub const PENALTY_STIFFNESS: f64 = 1e8;
/// Residual stiffness added to the whole effective curve (GPa/mm).
pub const FLOOR_STIFFNESS: f64 = 1e-4;

/// Material constants of a cohesive layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesiveParams {
    /// Critical effective traction (GPa).
    pub t_c: f64,
    /// Critical energy release rate (GPa·mm).
    pub g_c: f64,
    pub beta: f64,
    /// Relaxation time (ms).
    pub tau: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Hardening stiffness of the reference curve (GPa/mm), set per layer.
    #[serde(default)]
    pub k_h: f64,
}

fn default_k() -> f64 {
    PENALTY_STIFFNESS
}

fn default_kappa() -> f64 {
    FLOOR_STIFFNESS
}

impl CohesiveParams {
    pub fn new(t_c: f64, g_c: f64, beta: f64, tau: f64) -> Self {
        CohesiveParams { t_c, g_c, beta, tau, k: PENALTY_STIFFNESS, kappa: FLOOR_STIFFNESS, k_h: 0.0 }
    }

    /// Matrix layer of the particle composite.
    pub fn particle_matrix() -> Self {
        Self::new(0.15, 6e-4, 1.0, 1e-4)
    }

    /// Matrix layer of the fiber composite.
    pub fn epoxy() -> Self {
        Self::new(0.10, 3e-4, 1.0, 1e-3)
    }

    pub fn with_hardening(mut self, k_h: f64) -> Self {
        self.k_h = k_h;
        self
    }

    /// Opening at the onset of softening.
    pub fn d_c(&self) -> f64 {
        self.t_c / self.k
    }

    /// Opening at complete separation.
    pub fn d_f(&self) -> f64 {
        2.0 * self.g_c / self.t_c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_c > 0.0 && self.g_c > 0.0 && self.tau > 0.0 && self.beta > 0.0 && self.k > 0.0) {
            return Err(Error::InvalidInput("cohesive constants must be positive".into()));
        }
        if !(self.kappa >= 0.0 && self.k_h >= 0.0) {
            return Err(Error::InvalidInput("negative cohesive stiffness".into()));
        }
        if !(self.d_f() > self.d_c()) {
            return Err(Error::InvalidInput("fracture energy too small for the penalty stiffness".into()));
        }
        Ok(())
    }

    /// Inviscid bilinear backbone (without the floor) and its slope.
    pub fn backbone(&self, d: f64) -> (f64, f64) {
        let (dc, df) = (self.d_c(), self.d_f());
        if d < dc {
            (self.k * d, self.k)
        } else if d < df {
            let slope = -self.t_c / (df - dc);
            (self.t_c + slope * (d - dc), slope)
        } else {
            (0.0, 0.0)
        }
    }

    /// Undamaged reference curve beyond the onset of softening.
    pub fn reference(&self, d: f64) -> f64 {
        self.t_c + self.k_h * (d - self.d_c())
    }

    /// Backbone damage at history opening `d0` and its derivative.
    pub fn damage(&self, d0: f64) -> (f64, f64) {
        let (tb, dtb) = self.backbone(d0);
        let tr = self.reference(d0);
        (tb / tr, (dtb * tr - tb * self.k_h) / (tr * tr))
    }

    /// Energy per unit area stored and dissipated by the inviscid backbone
    /// at history `d0` and current effective opening `dm ≤ d0`.
    pub fn free_energy(&self, d0: f64, dm: f64) -> f64 {
        let (dc, df) = (self.d_c(), self.d_f());
        let d0 = d0.max(dc);
        let area = if d0 >= df {
            self.g_c
        } else {
            let tb = self.backbone(d0).0;
            0.5 * self.t_c * dc + 0.5 * (self.t_c + tb) * (d0 - dc)
        };
        let tb = self.backbone(d0).0;
        area - 0.5 * tb * d0 + 0.5 * tb / d0 * dm.min(d0).powi(2)
    }
}

/// Orthonormal crack basis with the normal as first column.
pub fn crack_basis(n: &Vector3<f64>) -> Matrix3<f64> {
    let n = n.normalize();
    let i = (0..3).min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap_or(0);
    let mut e = Vector3::zeros();
    e[i] = 1.0;
    let s1 = (e - n * n.dot(&e)).normalize();
    let s2 = n.cross(&s1);
    Matrix3::from_columns(&[n, s1, s2])
}

/// Effective opening of a displacement jump `d` across the plane `n`.
pub fn effective_opening(d: &Vector3<f64>, n: &Vector3<f64>, beta: f64) -> f64 {
    let dn = d.dot(n);
    let ds = (d - n * dn).norm();
    if dn >= 0.0 {
        (dn * dn + beta * beta * ds * ds).sqrt()
    } else {
        beta * ds
    }
}

/// Effective traction of a traction vector `t` on the plane `n`.
pub fn effective_traction(t: &Vector3<f64>, n: &Vector3<f64>, beta: f64) -> f64 {
    let tn = t.dot(n);
    let ts = (t - n * tn).norm();
    if tn >= 0.0 {
        (tn * tn + ts * ts / (beta * beta)).sqrt()
    } else {
        ts / beta
    }
}

/// Internal state of a layer (crack basis components).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohesiveState {
    pub opening: Vector3<f64>,
    pub traction: Vector3<f64>,
    /// History opening of the state with the maximum effective traction.
    pub d_0: f64,
    /// Backbone traction at `d_0`.
    pub t_0: f64,
    pub d_v: f64,
}

impl CohesiveState {
    /// Undamaged layer at zero opening.
    pub fn intact(params: &CohesiveParams) -> Self {
        CohesiveState { opening: Vector3::zeros(), traction: Vector3::zeros(), d_0: params.d_c(), t_0: params.t_c, d_v: 1.0 }
    }
}

/// Layer response at a trial opening increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionResult {
    pub traction: Vector3<f64>,
    /// `∂t/∂d` in the crack basis.
    pub tangent: Matrix3<f64>,
    pub d_m: f64,
    pub t_m: f64,
    pub state: CohesiveState,
}

impl TractionResult {
    /// Layer compliance `G̃ = (∂t/∂d)⁻¹`, if the tangent is invertible.
    pub fn compliance(&self) -> Option<Matrix3<f64>> {
        self.tangent.try_inverse()
    }

    /// `δd̃` such that `Δd = G̃ (t − t_prev) + δd̃` at this trial state.
    pub fn residual_opening(&self, prev: &CohesiveState) -> Option<Vector3<f64>> {
        let g = self.compliance()?;
        Some(self.state.opening - prev.opening - g * (self.traction - prev.traction))
    }
}

/// Scalar law: returns `(t_m, dt_m/dd_m, secant, state)` with the floor
/// included.
fn effective_law(p: &CohesiveParams, prev: &CohesiveState, dm: f64, dt: f64) -> (f64, f64, bool, f64, f64, f64) {
    let w = dt / (p.tau + dt);
    if dm < prev.d_0 {
        let (d, _) = p.damage(prev.d_0);
        let dv = (1.0 - w) * prev.d_v + w * d;
        let secant = dv * p.reference(prev.d_0) / prev.d_0;
        (secant * dm + p.kappa * dm, secant + p.kappa, true, dv, prev.d_0, prev.t_0)
    } else {
        let (d, dd) = p.damage(dm);
        let dv = (1.0 - w) * prev.d_v + w * d;
        let tr = p.reference(dm);
        let tv = dv * tr;
        let slope = w * dd * tr + dv * p.k_h;
        (tv + p.kappa * dm, slope + p.kappa, false, dv, dm, p.backbone(dm).0)
    }
}

/// Evaluates a layer for the opening increment `dd` (crack basis) over the
/// time increment `dt`.
pub fn evaluate_cohesive(p: &CohesiveParams, prev: &CohesiveState, dd: &Vector3<f64>, dt: f64) -> TractionResult {
    let d = prev.opening + dd;
    let b2 = p.beta * p.beta;
    let dn = d[0];
    let ds = Vector3::new(0.0, d[1], d[2]);
    let tension = dn >= 0.0;
    let dm = if tension { (dn * dn + b2 * ds.norm_squared()).sqrt() } else { p.beta * ds.norm() };
    let (tm, dtm, secant, d_v, d_0, t_0) = effective_law(p, prev, dm, dt);
    let (g, dg) = if dm > 1e-300 {
        let g = tm / dm;
        (g, if secant { 0.0 } else { (dtm - g) / dm })
    } else {
        (dtm, 0.0)
    };
    let m = Matrix3::from_diagonal(&Vector3::new(1.0, b2, b2));
    let (traction, tangent) = if tension {
        let md = m * d;
        let scale = if dm > 1e-300 { dg / dm } else { 0.0 };
        (md * g, m * g + md * md.transpose() * scale)
    } else {
        let mut t = ds * (g * b2);
        t[0] = p.k * dn;
        let scale = if dm > 1e-300 { dg / dm * b2 } else { 0.0 };
        let mut k = (Matrix3::identity() * g + ds * ds.transpose() * scale) * b2;
        k[(0, 0)] = p.k;
        for j in 1..3 {
            k[(0, j)] = 0.0;
            k[(j, 0)] = 0.0;
        }
        (t, k)
    };
    TractionResult {
        traction,
        tangent,
        d_m: dm,
        t_m: tm,
        state: CohesiveState { opening: d, traction, d_0, t_0, d_v },
    }
}

/// Linearized response of one layer inside a cell.
#[derive(Debug, Clone, Copy)]
pub struct LayerLinearization {
    pub v_c: f64,
    /// `N(n) B`: maps crack-basis openings to Mandel strain; its transpose
    /// maps stress to crack-basis traction.
    pub r_c: Matrix6x3<f64>,
    /// `∂t/∂d`.
    pub tangent: Matrix3<f64>,
    /// `δt` such that `Δt = (∂t/∂d) Δd + δt`.
    pub residual_traction: Vector3<f64>,
}

impl LayerLinearization {
    pub fn r_matrix(n: &Vector3<f64>, basis: &Matrix3<f64>) -> Matrix6x3<f64> {
        opening_strain_map(n) * basis
    }
}

/// Condensed response of a cell containing cohesive layers.
#[derive(Debug, Clone)]
pub struct EnrichedResponse {
    pub c: Stiffness6,
    pub ds: StressVec,
    base_c: Stiffness6,
    base_residual: StrainVec,
    coupling: Option<(DMatrix<f64>, DVector<f64>)>,
    layers: Vec<LayerLinearization>,
}

/// Condenses the layer openings out of the cell equations.
///
/// With the base law `Δσ = C (Δε_b − δε_b)`, layer laws
/// `Δt_j = K_j Δd_j + δt_j`, traction continuity `Δt_j = R_jᵀ Δσ` and the
/// kinematics `Δε = Δε_b + Σ v_j R_j Δd_j`, the cell response is
/// `Δσ = C_N Δε + δσ_N`. This equals
/// `C_N = (D + Σ v_j R_j K_j⁻¹ R_jᵀ)⁻¹` whenever the layer tangents are
/// invertible, but only needs the condensed system to be regular.
pub fn enrich_cell_response(
    base_c: &Stiffness6,
    base_residual: &StrainVec,
    layers: &[LayerLinearization],
) -> Result<EnrichedResponse> {
    let m = layers.len();
    if m == 0 {
        return Ok(EnrichedResponse {
            c: *base_c,
            ds: -(base_c * base_residual),
            base_c: *base_c,
            base_residual: *base_residual,
            coupling: None,
            layers: Vec::new(),
        });
    }
    let mut r = DMatrix::<f64>::zeros(6, 3 * m);
    let mut sys = DMatrix::<f64>::zeros(3 * m, 3 * m);
    let mut dt = DVector::<f64>::zeros(3 * m);
    for (j, l) in layers.iter().enumerate() {
        if !(l.v_c > 0.0) {
            return Err(Error::InvalidInput("reciprocal length must be positive".into()));
        }
        r.view_mut((0, 3 * j), (6, 3)).copy_from(&l.r_c);
        sys.view_mut((3 * j, 3 * j), (3, 3)).copy_from(&(l.tangent / l.v_c));
        dt.rows_mut(3 * j, 3).copy_from(&l.residual_traction);
    }
    let c = DMatrix::from_column_slice(6, 6, base_c.as_slice());
    let cr = &c * &r;
    sys += r.transpose() * &cr;
    let lu = sys.lu();
    let inv_rtc = lu.solve(&cr.transpose()).ok_or(Error::Singular("enriched cell system"))?;
    let inv_dt = lu.solve(&dt).ok_or(Error::Singular("enriched cell system"))?;
    let cn = &c - &cr * &inv_rtc;
    let mut c_n = Matrix6::from_column_slice(cn.as_slice());
    c_n = 0.5 * (c_n + c_n.transpose());
    let ds = -(c_n * base_residual) + StressVec::from_column_slice((&cr * &inv_dt).as_slice());
    if !c_n.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("enriched cell system"));
    }
    Ok(EnrichedResponse {
        c: c_n,
        ds,
        base_c: *base_c,
        base_residual: *base_residual,
        coupling: Some((inv_rtc, inv_dt)),
        layers: layers.to_vec(),
    })
}

impl EnrichedResponse {
    /// Splits a cell strain increment into the base-material increment and
    /// the layer opening increments.
    pub fn split(&self, d_eps: &StrainVec) -> (StrainVec, Vec<Vector3<f64>>) {
        let Some((inv_rtc, inv_dt)) = &self.coupling else {
            return (*d_eps, Vec::new());
        };
        let x = DVector::from_column_slice((d_eps - self.base_residual).as_slice());
        let y = inv_rtc * x - inv_dt;
        let mut base = *d_eps;
        let mut openings = Vec::with_capacity(self.layers.len());
        for (j, l) in self.layers.iter().enumerate() {
            let yj = Vector3::new(y[3 * j], y[3 * j + 1], y[3 * j + 2]);
            base -= l.r_c * yj;
            openings.push(yj / l.v_c);
        }
        (base, openings)
    }

    pub fn base_stiffness(&self) -> &Stiffness6 {
        &self.base_c
    }
}

/// Compliance-form evaluation `C_N = (D + Σ v R G̃ Rᵀ)⁻¹`,
/// `δσ_N = −C_N (δε + Σ v R δd̃)`, for invertible layer tangents.
pub fn enrich_cell_compliance(
    d_base: &Compliance6,
    base_residual: &StrainVec,
    layers: &[(f64, Matrix6x3<f64>, Matrix3<f64>, Vector3<f64>)],
) -> Result<(Stiffness6, StressVec)> {
    let mut d = *d_base;
    let mut e = *base_residual;
    for (v, r, g, dd) in layers {
        d += r * g * r.transpose() * *v;
        e += r * dd * *v;
    }
    let c = d.try_inverse().ok_or(Error::Singular("enriched compliance"))?;
    Ok((c, -(c * e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::isotropic_stiffness;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn table() -> CohesiveParams {
        CohesiveParams::particle_matrix().with_hardening(50.0)
    }

    #[test]
    fn effective_opening_branches() {
        let n = Vector3::new(0.0, 0.6, 0.8);
        assert_relative_eq!(effective_opening(&(n * 0.004), &n, 1.0), 0.004, epsilon = 1e-15);
        let s = Vector3::x();
        assert_relative_eq!(effective_opening(&(s * 0.003 - n * 0.001), &n, 1.0), 0.003, epsilon = 1e-15);
        assert_relative_eq!(effective_opening(&(n * 0.003 + s * 0.008), &n, 0.5), 0.005, epsilon = 1e-15);
    }

    #[test]
    fn effective_traction_branches() {
        let n = Vector3::z();
        assert_relative_eq!(effective_traction(&(n * 0.15), &n, 1.0), 0.15);
        let t = Vector3::new(0.1, 0.0, -0.2);
        assert_relative_eq!(effective_traction(&t, &n, 1.0), 0.1, epsilon = 1e-15);
        let t = Vector3::new(0.1, 0.0, 0.3);
        assert_relative_eq!(effective_traction(&t, &n, 1e8), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn elastic_regime_is_penalty_stiffness() {
        let p = table();
        let prev = CohesiveState::intact(&p);
        let dd = Vector3::new(0.5 * p.d_c(), 0.0, 0.0);
        let r = evaluate_cohesive(&p, &prev, &dd, 1e-3);
        assert_relative_eq!(r.t_m, (p.k + p.kappa) * r.d_m, max_relative = 1e-14);
        assert_eq!(r.state.d_v, 1.0);
        assert_relative_eq!(p.damage(r.state.d_0).0, 1.0);
    }

    #[test]
    fn fracture_constants() {
        let p = CohesiveParams::particle_matrix();
        assert_relative_eq!(p.d_f(), 0.008, epsilon = 1e-15);
        assert_relative_eq!(p.free_energy(p.d_f(), 0.0), p.g_c, max_relative = 1e-12);
    }

    #[test]
    fn backward_euler_closed_form() {
        // D = 0.5 with Δt = τ from D_v = 1
        let p = CohesiveParams::particle_matrix().with_hardening(0.0);
        let d0 = p.d_c() + 0.5 * (p.d_f() - p.d_c());
        assert_relative_eq!(p.damage(d0).0, 0.5, epsilon = 1e-12);
        let prev = CohesiveState { d_0: d0 * 1.0000001, ..CohesiveState::intact(&p) };
        let r = evaluate_cohesive(&p, &prev, &Vector3::new(0.5 * d0, 0.0, 0.0), p.tau);
        assert_relative_eq!(r.state.d_v, 0.5 * (1.0 + p.damage(prev.d_0).0), epsilon = 1e-12);
    }

    #[test]
    fn unloading_is_secant_through_origin() {
        let p = table();
        let mut state = CohesiveState::intact(&p);
        let dt = 1e-2;
        for _ in 0..20 {
            state = evaluate_cohesive(&p, &state, &Vector3::new(2e-4, 0.0, 0.0), dt).state;
        }
        let peak = state;
        let r1 = evaluate_cohesive(&p, &peak, &Vector3::new(-0.5 * peak.opening[0], 0.0, 0.0), dt);
        let r2 = evaluate_cohesive(&p, &peak, &Vector3::new(-0.25 * peak.opening[0], 0.0, 0.0), dt);
        let s1 = (r1.t_m - p.kappa * r1.d_m) / r1.d_m;
        let s2 = (r2.t_m - p.kappa * r2.d_m) / r2.d_m;
        assert_relative_eq!(s1, s2, max_relative = 1e-12);
        let r0 = evaluate_cohesive(&p, &peak, &(-peak.opening), dt);
        assert!(r0.t_m.abs() < 1e-12);
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        for beta in [0.5, 1.0, 2.0] {
            let p = CohesiveParams { beta, ..table() };
            for _ in 0..30 {
                let prev = CohesiveState {
                    d_0: rng.gen_range(p.d_c()..p.d_f()),
                    d_v: rng.gen_range(0.2..1.0),
                    ..CohesiveState::intact(&p)
                };
                let dd = Vector3::from_fn(|i, _| {
                    if i == 0 {
                        rng.gen_range(-4e-3..6e-3)
                    } else {
                        rng.gen_range(-3e-3..3e-3)
                    }
                });
                let r = evaluate_cohesive(&p, &prev, &dd, 1e-4);
                let h = 1e-9;
                for j in 0..3 {
                    let mut e = Vector3::zeros();
                    e[j] = h;
                    let fd = (evaluate_cohesive(&p, &prev, &(dd + e), 1e-4).traction
                        - evaluate_cohesive(&p, &prev, &(dd - e), 1e-4).traction)
                        / (2.0 * h);
                    let col = r.tangent.column(j).into_owned();
                    assert!((fd - col).norm() < 1e-5 * r.tangent.norm(), "{fd} vs {col}");
                }
            }
        }
    }

    #[test]
    fn viscous_response_approaches_inviscid() {
        let p = table();
        let dt = 1e-3;
        let visc = CohesiveParams { tau: dt / 100.0, ..p };
        let mut state = CohesiveState::intact(&p);
        let step = p.d_f() / 200.0;
        let mut worst = 0.0f64;
        for _ in 0..220 {
            let r = evaluate_cohesive(&visc, &state, &Vector3::new(step, 0.0, 0.0), dt);
            state = r.state;
            let inviscid = p.backbone(r.d_m).0 + p.kappa * r.d_m;
            worst = worst.max((r.t_m - inviscid).abs());
        }
        assert!(worst < 0.01 * p.t_c, "{worst}");
    }

    #[test]
    fn viscous_damage_follows_backbone_monotonically() {
        let p = table();
        let mut state = CohesiveState::intact(&p);
        for _ in 0..100 {
            let next = evaluate_cohesive(&p, &state, &Vector3::new(1e-4, 0.0, 0.0), 1e-4).state;
            assert!(next.d_v <= state.d_v + 1e-15);
            assert!(next.d_0 >= state.d_0);
            state = next;
        }
    }

    fn layer(n: Vector3<f64>, v: f64, k: Matrix3<f64>, dt: Vector3<f64>) -> LayerLinearization {
        let b = crack_basis(&n);
        LayerLinearization { v_c: v, r_c: LayerLinearization::r_matrix(&n, &b), tangent: k, residual_traction: dt }
    }

    #[test]
    fn no_layers_returns_base() {
        let c = isotropic_stiffness(100.0, 0.3);
        let de = StrainVec::new(1e-4, 0.0, 0.0, 2e-5, 0.0, 0.0);
        let r = enrich_cell_response(&c, &de, &[]).unwrap();
        assert_eq!(r.c, c);
        assert_relative_eq!(r.ds, -(c * de));
    }

    #[test]
    fn intact_layer_barely_changes_stiffness() {
        let c = isotropic_stiffness(100.0, 0.3);
        let l = layer(Vector3::z(), 1.0, Matrix3::identity() * PENALTY_STIFFNESS, Vector3::zeros());
        let r = enrich_cell_response(&c, &StrainVec::zeros(), &[l]).unwrap();
        assert!((r.c - c).norm() < 1e-5 * c.norm());
    }

    #[test]
    fn failed_layer_releases_normal_stiffness() {
        let c = isotropic_stiffness(100.0, 0.3);
        let v = 0.5;
        let l = layer(Vector3::z(), v, Matrix3::identity() * FLOOR_STIFFNESS, Vector3::zeros());
        let r = enrich_cell_response(&c, &StrainVec::zeros(), &[l]).unwrap();
        // the 33 stiffness under lateral stress freedom collapses to κ/v
        let s = r.c.try_inverse().unwrap();
        assert_relative_eq!(1.0 / s[(2, 2)], FLOOR_STIFFNESS / v, max_relative = 1e-3);
        assert!(1.0 / s[(0, 0)] > 50.0);
        assert!(1.0 / s[(5, 5)] > 50.0);
    }

    #[test]
    fn condensed_form_equals_compliance_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let c = isotropic_stiffness(100.0, 0.3);
        let base_res = StrainVec::from_fn(|_, _| rng.gen_range(-1e-4..1e-4));
        let mut layers = Vec::new();
        let mut compliance_layers = Vec::new();
        for _ in 0..3 {
            let n = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
            let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let k = a * a.transpose() * 50.0 + Matrix3::identity();
            let dt = Vector3::from_fn(|_, _| rng.gen_range(-1e-3..1e-3));
            let v = rng.gen_range(0.2..2.0);
            let l = layer(n, v, k, dt);
            let g = k.try_inverse().unwrap();
            compliance_layers.push((v, l.r_c, g, -(g * dt)));
            layers.push(l);
        }
        let r = enrich_cell_response(&c, &base_res, &layers).unwrap();
        let (cc, dsc) = enrich_cell_compliance(&c.try_inverse().unwrap(), &base_res, &compliance_layers).unwrap();
        assert!((r.c - cc).norm() < 1e-10 * cc.norm());
        assert!((r.ds - dsc).norm() < 1e-10 * dsc.norm().max(1e-12));
        // the split reproduces the kinematics and traction continuity
        let de = StrainVec::from_fn(|_, _| rng.gen_range(-1e-3..1e-3));
        let (base, openings) = r.split(&de);
        let sig = r.c * de + r.ds;
        let mut total = base;
        for (l, d) in layers.iter().zip(&openings) {
            total += l.r_c * d * l.v_c;
            let t = l.tangent * d + l.residual_traction;
            assert!((t - l.r_c.transpose() * sig).norm() < 1e-10 * sig.norm());
        }
        assert!((total - de).norm() < 1e-14);
        assert!((c * (base - base_res) - sig).norm() < 1e-10 * sig.norm());
    }

    #[test]
    fn crack_basis_is_orthonormal() {
        let n = Vector3::new(0.3, -0.4, 0.866).normalize();
        let b = crack_basis(&n);
        assert_relative_eq!(b.transpose() * b, Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(b.determinant(), 1.0, epsilon = 1e-14);
        // tractions in the crack basis come from Rᵀσ
        let sigma = StressVec::new(1.0, 2.0, 3.0, 0.4, 0.5, 0.6);
        let r = LayerLinearization::r_matrix(&n, &b);
        let t_global = crate::tensor::from_mandel(&sigma) * n;
        assert_relative_eq!(r.transpose() * sigma, b.transpose() * t_global, epsilon = 1e-14);
    }
}
