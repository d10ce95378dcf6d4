//! Two-layer laminate with interface normal e₃.
//!
//! In-plane strains (11, 22, 12) are shared by both layers and the tractions
//! (33, 23, 13) are continuous. Writing each layer in the mixed form
//! `[σ_p; ε_t] = H [ε_p; σ_t] + h` turns the laminate into a plain volume
//! average of `H` and `h`; the partial inversion mapping `(C, δσ)` to
//! `(H, h)` is an involution, so the same routine converts back.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::tensor::{Stiffness6, StressVec};
use crate::{Error, Result};

/// In-plane Mandel components for the interface normal e₃.
pub const IN_PLANE: [usize; 3] = [0, 1, 5];
/// Traction Mandel components for the interface normal e₃.
pub const TRACTION: [usize; 3] = [2, 3, 4];

/// Linearized response `Δσ = C Δε + δσ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResponse {
    pub c: Stiffness6,
    pub ds: StressVec,
}

impl BlockResponse {
    pub fn elastic(c: Stiffness6) -> Self {
        BlockResponse { c, ds: StressVec::zeros() }
    }

    /// Response expressed in a frame where this frame's components are `Q x`.
    pub fn pulled_back(&self, q: &Matrix6<f64>) -> Self {
        BlockResponse { c: q.transpose() * self.c * q, ds: q.transpose() * self.ds }
    }
}

pub(crate) fn block(m: &Matrix6<f64>, rows: &[usize; 3], cols: &[usize; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[(rows[i], cols[j])])
}

pub(crate) fn set_block(m: &mut Matrix6<f64>, rows: &[usize; 3], cols: &[usize; 3], b: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            m[(rows[i], cols[j])] = b[(i, j)];
        }
    }
}

pub(crate) fn sub(v: &Vector6<f64>, idx: &[usize; 3]) -> Vector3<f64> {
    Vector3::new(v[idx[0]], v[idx[1]], v[idx[2]])
}

pub(crate) fn set_sub(v: &mut Vector6<f64>, idx: &[usize; 3], s: &Vector3<f64>) {
    for i in 0..3 {
        v[idx[i]] = s[i];
    }
}

/// Partial inversion on the traction block. Returns `None` when the traction
/// block is singular.
pub fn partial_inverse(m: &Matrix6<f64>, r: &Vector6<f64>) -> Option<(Matrix6<f64>, Vector6<f64>)> {
    let (p, t) = (&IN_PLANE, &TRACTION);
    let mtt = block(m, t, t);
    let x = mtt.try_inverse()?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mpt = block(m, p, t);
    let mtp = block(m, t, p);
    let a = mpt * x;
    let b = x * mtp;
    let mut out = Matrix6::zeros();
    set_block(&mut out, p, p, &(block(m, p, p) - a * mtp));
    set_block(&mut out, p, t, &a);
    set_block(&mut out, t, p, &(-b));
    set_block(&mut out, t, t, &x);
    let rt = sub(r, t);
    let mut h = Vector6::zeros();
    set_sub(&mut h, p, &(sub(r, p) - a * rt));
    set_sub(&mut h, t, &(-(x * rt)));
    Some((out, h))
}

/// Adjoint of `partial_inverse` on the matrix part: given `∂J/∂Ψ(M)`,
/// returns `∂J/∂M`.
pub fn partial_inverse_adjoint(m: &Matrix6<f64>, g: &Matrix6<f64>) -> Option<Matrix6<f64>> {
    let (p, t) = (&IN_PLANE, &TRACTION);
    let x = block(m, t, t).try_inverse()?;
    let a = block(m, p, t) * x;
    let b = x * block(m, t, p);
    let (gpp, gpt, gtp, gtt) = (block(g, p, p), block(g, p, t), block(g, t, p), block(g, t, t));
    let xt = x.transpose();
    let mut out = Matrix6::zeros();
    set_block(&mut out, p, p, &gpp);
    set_block(&mut out, p, t, &(-gpp * b.transpose() + gpt * xt));
    set_block(&mut out, t, p, &(-a.transpose() * gpp - xt * gtp));
    set_block(
        &mut out,
        t,
        t,
        &(a.transpose() * gpp * b.transpose() - a.transpose() * gpt * xt + xt * gtp * b.transpose() - xt * gtt * xt),
    );
    Some(out)
}

/// Mixed-form data of both layers kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct LaminateCache {
    pub h1: (Matrix6<f64>, Vector6<f64>),
    pub h2: (Matrix6<f64>, Vector6<f64>),
}

impl LaminateCache {
    /// Strains and stresses of both layers from the block strain and stress.
    pub fn split(&self, eps: &Vector6<f64>, sig: &Vector6<f64>) -> [(Vector6<f64>, Vector6<f64>); 2] {
        let mut x = Vector6::zeros();
        set_sub(&mut x, &IN_PLANE, &sub(eps, &IN_PLANE));
        set_sub(&mut x, &TRACTION, &sub(sig, &TRACTION));
        [self.h1, self.h2].map(|(h, r)| {
            let y = h * x + r;
            let mut e = *eps;
            let mut s = *sig;
            set_sub(&mut e, &TRACTION, &sub(&y, &TRACTION));
            set_sub(&mut s, &IN_PLANE, &sub(&y, &IN_PLANE));
            (e, s)
        })
    }
}

/// Homogenizes two layers given in the block frame. `node` is only used to
/// label a singular interface error.
pub fn homogenize_block_cached(
    r1: &BlockResponse,
    r2: &BlockResponse,
    f1: f64,
    node: usize,
) -> Result<(BlockResponse, LaminateCache)> {
    if !(0.0..=1.0).contains(&f1) {
        return Err(Error::InvalidInput(format!("volume fraction {f1} outside [0, 1]")));
    }
    let h1 = partial_inverse(&r1.c, &r1.ds).ok_or(Error::SingularInterface { node })?;
    let h2 = partial_inverse(&r2.c, &r2.ds).ok_or(Error::SingularInterface { node })?;
    let f2 = 1.0 - f1;
    let hm = h1.0 * f1 + h2.0 * f2;
    let hr = h1.1 * f1 + h2.1 * f2;
    let (c, ds) = partial_inverse(&hm, &hr).ok_or(Error::SingularInterface { node })?;
    let c = 0.5 * (c + c.transpose());
    Ok((BlockResponse { c, ds }, LaminateCache { h1, h2 }))
}

/// Exact two-layer laminate response in the block frame.
pub fn homogenize_block(r1: &BlockResponse, r2: &BlockResponse, f1: f64) -> Result<BlockResponse> {
    homogenize_block_cached(r1, r2, f1, 0).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{isotropic_stiffness, orthotropic_compliance, rotate_stiffness, Rotation};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    /// Dense 12-unknown laminate: strains of both layers from six continuity
    /// rows and six averaging rows.
    pub(crate) fn brute_force(r1: &BlockResponse, r2: &BlockResponse, f1: f64) -> BlockResponse {
        let f2 = 1.0 - f1;
        let mut a = DMatrix::<f64>::zeros(12, 12);
        let mut rhs_e = DMatrix::<f64>::zeros(12, 6);
        let mut rhs_r = DVector::<f64>::zeros(12);
        for i in 0..6 {
            a[(i, i)] = f1;
            a[(i, 6 + i)] = f2;
            rhs_e[(i, i)] = 1.0;
        }
        for (row, &k) in [0usize, 1, 5].iter().enumerate() {
            a[(6 + row, k)] = 1.0;
            a[(6 + row, 6 + k)] = -1.0;
        }
        for (row, &k) in [2usize, 3, 4].iter().enumerate() {
            for j in 0..6 {
                a[(9 + row, j)] = r1.c[(k, j)];
                a[(9 + row, 6 + j)] = -r2.c[(k, j)];
            }
            rhs_r[9 + row] = r2.ds[k] - r1.ds[k];
        }
        let lu = a.lu();
        let se = lu.solve(&rhs_e).unwrap();
        let sr = lu.solve(&rhs_r).unwrap();
        let mut c = Matrix6::zeros();
        let mut ds = Vector6::zeros();
        for i in 0..6 {
            for j in 0..6 {
                let mut v = 0.0;
                for k in 0..6 {
                    v += f1 * r1.c[(i, k)] * se[(k, j)] + f2 * r2.c[(i, k)] * se[(6 + k, j)];
                }
                c[(i, j)] = v;
            }
            let mut v = f1 * r1.ds[i] + f2 * r2.ds[i];
            for k in 0..6 {
                v += f1 * r1.c[(i, k)] * sr[k] + f2 * r2.c[(i, k)] * sr[6 + k];
            }
            ds[i] = v;
        }
        BlockResponse { c, ds }
    }

    fn random_phase<R: Rng>(rng: &mut R) -> Stiffness6 {
        let e = [rng.gen_range(1.0..100.0), rng.gen_range(1.0..100.0), rng.gen_range(1.0..100.0)];
        let s = orthotropic_compliance(
            e,
            rng.gen_range(0.5..40.0),
            rng.gen_range(0.5..40.0),
            rng.gen_range(0.5..40.0),
            rng.gen_range(0.0..0.3),
            rng.gen_range(0.0..0.3),
            rng.gen_range(0.0..0.3),
        );
        let c = s.try_inverse().unwrap();
        let r = Rotation::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        rotate_stiffness(&c, &r.mandel())
    }

    fn rand_vec<R: Rng>(rng: &mut R) -> Vector6<f64> {
        Vector6::from_fn(|_, _| rng.gen_range(-0.1..0.1))
    }

    #[test]
    fn identical_layers_are_unchanged() {
        let c = isotropic_stiffness(100.0, 0.3);
        let r = BlockResponse::elastic(c);
        let out = homogenize_block(&r, &r, 0.37).unwrap();
        assert_relative_eq!(out.c, c, max_relative = 1e-12);
        assert!(out.ds.norm() < 1e-14);
    }

    #[test]
    fn isotropic_pair_matches_brute_force() {
        let r1 = BlockResponse::elastic(isotropic_stiffness(500.0, 0.3));
        let r2 = BlockResponse::elastic(isotropic_stiffness(100.0, 0.3));
        let exact = brute_force(&r1, &r2, 0.5);
        let out = homogenize_block(&r1, &r2, 0.5).unwrap();
        assert!((out.c - exact.c).norm() <= 1e-10 * exact.c.norm());
    }

    #[test]
    fn random_pairs_match_brute_force_with_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let r1 = BlockResponse { c: random_phase(&mut rng), ds: rand_vec(&mut rng) };
            let r2 = BlockResponse { c: random_phase(&mut rng), ds: rand_vec(&mut rng) };
            let f1 = rng.gen_range(0.01..0.99);
            let exact = brute_force(&r1, &r2, f1);
            let out = homogenize_block(&r1, &r2, f1).unwrap();
            assert!((out.c - exact.c).norm() <= 1e-10 * exact.c.norm());
            assert!((out.ds - exact.ds).norm() <= 1e-10 * (exact.ds.norm() + 1e-3 * exact.c.norm()));
            assert_relative_eq!(out.c, out.c.transpose(), max_relative = 1e-12);
        }
    }

    #[test]
    fn unit_fraction_returns_first_layer() {
        let r1 = BlockResponse::elastic(isotropic_stiffness(500.0, 0.3));
        let r2 = BlockResponse::elastic(isotropic_stiffness(100.0, 0.2));
        let out = homogenize_block(&r1, &r2, 1.0).unwrap();
        assert_relative_eq!(out.c, r1.c, max_relative = 1e-12);
    }

    #[test]
    fn partial_inverse_is_an_involution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let c = random_phase(&mut rng);
        let r = rand_vec(&mut rng);
        let (h, hr) = partial_inverse(&c, &r).unwrap();
        let (c2, r2) = partial_inverse(&h, &hr).unwrap();
        assert_relative_eq!(c2, c, max_relative = 1e-10);
        assert_relative_eq!(r2, r, epsilon = 1e-12);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let c = random_phase(&mut rng);
        let g = Matrix6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let adj = partial_inverse_adjoint(&c, &g).unwrap();
        let h = 1e-5;
        for i in 0..6 {
            for j in 0..6 {
                let mut cp = c;
                cp[(i, j)] += h;
                let mut cm = c;
                cm[(i, j)] -= h;
                let jp = partial_inverse(&cp, &Vector6::zeros()).unwrap().0.component_mul(&g).sum();
                let jm = partial_inverse(&cm, &Vector6::zeros()).unwrap().0.component_mul(&g).sum();
                let fd = (jp - jm) / (2.0 * h);
                assert!((fd - adj[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()), "{i},{j}: {fd} vs {}", adj[(i, j)]);
            }
        }
    }

    #[test]
    fn layer_split_satisfies_interface_conditions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let r1 = BlockResponse { c: random_phase(&mut rng), ds: rand_vec(&mut rng) };
        let r2 = BlockResponse { c: random_phase(&mut rng), ds: rand_vec(&mut rng) };
        let f1 = 0.3;
        let (out, cache) = homogenize_block_cached(&r1, &r2, f1, 0).unwrap();
        let eps = rand_vec(&mut rng);
        let sig = out.c * eps + out.ds;
        let [(e1, s1), (e2, s2)] = cache.split(&eps, &sig);
        assert!((s1 - (r1.c * e1 + r1.ds)).norm() < 1e-10 * s1.norm().max(1.0));
        assert!((s2 - (r2.c * e2 + r2.ds)).norm() < 1e-10 * s2.norm().max(1.0));
        for k in IN_PLANE {
            assert!((e1[k] - e2[k]).abs() < 1e-14);
        }
        for k in TRACTION {
            assert!((s1[k] - s2[k]).abs() < 1e-10);
        }
        assert!((f1 * e1 + (1.0 - f1) * e2 - eps).norm() < 1e-12);
        assert!((f1 * s1 + (1.0 - f1) * s2 - sig).norm() < 1e-10);
    }

    #[test]
    fn singular_traction_block_flagged() {
        let mut c = isotropic_stiffness(100.0, 0.3);
        for k in TRACTION {
            for j in 0..6 {
                c[(k, j)] = 0.0;
                c[(j, k)] = 0.0;
            }
        }
        let r = BlockResponse::elastic(c);
        assert!(matches!(
            homogenize_block_cached(&r, &r, 0.5, 7),
            Err(Error::SingularInterface { node: 7 })
        ));
    }
}
