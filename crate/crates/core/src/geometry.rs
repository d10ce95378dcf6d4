//! Ellipsoidal cells `xᵀ A x ≤ 1` and their division through the network.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::network::params::{children, NodeKind};
use crate::network::NetworkParams;
use crate::tensor::eig_sym3;
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;
const FRACTION_CLIP: f64 = 1e-9;

/// Symmetric positive-definite scale tensor of an ellipsoidal cell (mm⁻²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleTensor(Matrix3<f64>);

impl ScaleTensor {
    pub fn new(a: Matrix3<f64>) -> Result<Self> {
        let (lambda, _) = eig_sym3(&a)?;
        if !(lambda[2] > 0.0) || !lambda[0].is_finite() {
            return Err(Error::InvalidInput("scale tensor is not positive definite".into()));
        }
        Ok(ScaleTensor(a))
    }

    /// Sphere of diameter `h`.
    pub fn sphere(h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("non-positive cell size {h}")));
        }
        Ok(ScaleTensor(Matrix3::identity() * (4.0 / (h * h))))
    }

    /// Axis-aligned ellipsoid with full lengths `hx`, `hy`, `hz`.
    pub fn from_lengths(h: [f64; 3]) -> Result<Self> {
        if h.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("non-positive cell length".into()));
        }
        Self::new(Matrix3::from_diagonal(&Vector3::new(
            4.0 / (h[0] * h[0]),
            4.0 / (h[1] * h[1]),
            4.0 / (h[2] * h[2]),
        )))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `Q A Qᵀ`, the same ellipsoid seen in a frame rotated by `Q`.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Self {
        let m = q * self.0 * q.transpose();
        ScaleTensor(0.5 * (m + m.transpose()))
    }

    /// Semi-axis lengths (descending) and axis directions as columns.
    pub fn semi_axes(&self) -> (Vector3<f64>, Matrix3<f64>) {
        let (lambda, q) = eig_sym3(&self.0).expect("scale tensor is symmetric");
        let axes = Vector3::new(1.0 / lambda[2].sqrt(), 1.0 / lambda[1].sqrt(), 1.0 / lambda[0].sqrt());
        let dirs = Matrix3::from_columns(&[q.column(2), q.column(1), q.column(0)]);
        (axes, dirs)
    }

    /// `|𝒯ℛᵀn|`, the reciprocal of the ellipsoid's half-width along `n`
    /// measured on its conjugate diameter, from the eigen decomposition.
    pub fn projected_norm(&self, n: &Vector3<f64>) -> f64 {
        let (lambda, q) = eig_sym3(&self.0).expect("scale tensor is symmetric");
        (0..3)
            .map(|i| {
                let c = q.column(i).dot(n);
                c * c / lambda[i]
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Children of one division together with their shared cutting area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDivisionResult {
    pub first: ScaleTensor,
    pub second: ScaleTensor,
    pub area: f64,
}

fn check_unit(n: &Vector3<f64>) -> Result<()> {
    if !((n.norm() - 1.0).abs() < UNIT_TOL) {
        return Err(Error::InvalidInput(format!("normal is not a unit vector (|n| = {})", n.norm())));
    }
    Ok(())
}

/// Splits cell `a0` by the central plane with normal `n` into two ellipsoids
/// holding fractions `f1` and `1 − f1` of its volume.
pub fn divide_cell(a0: &ScaleTensor, f1: f64, n: &Vector3<f64>) -> Result<CellDivisionResult> {
    if !(f1 > 0.0 && f1 < 1.0) {
        return Err(Error::InvalidInput(format!("volume fraction {f1} outside (0, 1)")));
    }
    check_unit(n)?;
    ScaleTensor::new(a0.0)?;
    let f1 = f1.clamp(FRACTION_CLIP, 1.0 - FRACTION_CLIP);
    let p2 = a0.projected_norm(n).powi(2);
    let nn = n * n.transpose();
    let child = |f: f64| {
        let m = a0.0 - nn * ((1.0 - 1.0 / (f * f)) / p2);
        ScaleTensor(0.5 * (m + m.transpose()))
    };
    Ok(CellDivisionResult {
        first: child(f1),
        second: child(1.0 - f1),
        area: cutting_area(a0, n)?,
    })
}

/// `√det A` from the Cholesky factor, which stays accurate for the strongly
/// flattened cells produced by small volume fractions.
fn sqrt_det(a: &ScaleTensor) -> Result<f64> {
    let l = a.0.cholesky().ok_or_else(|| Error::InvalidInput("degenerate scale tensor".into()))?;
    let d = l.l_dirty().diagonal();
    Ok(d[0] * d[1] * d[2])
}

/// Area of the central section of the ellipsoid with normal `n` (mm²).
pub fn cutting_area(a: &ScaleTensor, n: &Vector3<f64>) -> Result<f64> {
    check_unit(n)?;
    Ok(PI / (sqrt_det(a)? * a.projected_norm(n)))
}

/// Ellipsoid volume (mm³).
pub fn cell_volume(a: &ScaleTensor) -> Result<f64> {
    Ok(4.0 * PI / (3.0 * sqrt_det(a)?))
}

/// Reciprocal length `v_c = 2S / 3V` of a cohesive layer with normal `n` (mm⁻¹).
pub fn reciprocal_length(a: &ScaleTensor, n: &Vector3<f64>) -> Result<f64> {
    check_unit(n)?;
    let p = a.projected_norm(n);
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidInput("degenerate scale tensor".into()));
    }
    Ok(0.5 / p)
}

/// Geometry of one active bottom-layer cell after division.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroCellGeometry {
    /// Flat node index of the leaf.
    pub node: usize,
    /// Position along the bottom layer (0-based).
    pub leaf: usize,
    pub phase: usize,
    pub weight: f64,
    /// Scale tensor in the global frame.
    pub scale: ScaleTensor,
    /// Maps global components to the leaf's local (material) frame.
    pub orientation: Matrix3<f64>,
}

/// Propagates the macro cell down the tree. Every dividing block splits its
/// cell by the plane normal to its local axis 3, expressed in the global
/// frame through the accumulated rotations. Pass-through nodes hand their
/// cell to the single active child; inactive subtrees are skipped.
pub fn propagate_scales(params: &NetworkParams, macro_cell: &ScaleTensor) -> Result<Vec<MicroCellGeometry>> {
    let kinds = params.node_kinds();
    let weights = params.node_weights();
    let first_leaf = params.first_leaf();
    let mut cells: Vec<Option<(ScaleTensor, Matrix3<f64>)>> = vec![None; params.node_count()];
    let root_o = params.angles()[0].matrix();
    cells[0] = Some((*macro_cell, root_o));
    let e3 = Vector3::z();
    let mut out = Vec::new();
    for node in 0..params.node_count() {
        let Some((a, o)) = cells[node] else { continue };
        match kinds[node] {
            NodeKind::Inactive => {}
            NodeKind::Leaf => out.push(MicroCellGeometry {
                node,
                leaf: node - first_leaf,
                phase: params.phases()[node - first_leaf],
                weight: weights[node],
                scale: a,
                orientation: o,
            }),
            NodeKind::PassThrough { child } => {
                let oc = params.angles()[child].matrix() * o;
                cells[child] = Some((a, oc));
            }
            NodeKind::Block => {
                let (c1, c2) = children(node);
                let n = o.transpose() * e3;
                let n = n / n.norm();
                let split = divide_cell(&a, weights[c1] / weights[node], &n)?;
                cells[c1] = Some((split.first, params.angles()[c1].matrix() * o));
                cells[c2] = Some((split.second, params.angles()[c2].matrix() * o));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rotation;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    /// `nᵀ A⁻¹ n`, an independent route to `|𝒯ℛᵀn|²`.
    fn inverse_quadratic(a: &ScaleTensor, n: &Vector3<f64>) -> f64 {
        (n.transpose() * a.matrix().try_inverse().unwrap() * n)[0]
    }

    fn random_spd<R: Rng>(rng: &mut R) -> ScaleTensor {
        let r = Rotation::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let d = diag(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        ScaleTensor::new(r.matrix() * d * r.matrix().transpose()).unwrap().rotated(&Matrix3::identity())
    }

    fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
        loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v / v.norm();
            }
        }
    }

    #[test]
    fn equal_split_of_unit_sphere() {
        let a0 = ScaleTensor::new(Matrix3::identity()).unwrap();
        let r = divide_cell(&a0, 0.5, &Vector3::z()).unwrap();
        assert_relative_eq!(*r.first.matrix(), diag(1.0, 1.0, 4.0), epsilon = 1e-14);
        assert_relative_eq!(*r.second.matrix(), diag(1.0, 1.0, 4.0), epsilon = 1e-14);
    }

    #[test]
    fn quarter_split_of_unit_sphere() {
        let a0 = ScaleTensor::new(Matrix3::identity()).unwrap();
        let r = divide_cell(&a0, 0.25, &Vector3::z()).unwrap();
        assert_relative_eq!(*r.first.matrix(), diag(1.0, 1.0, 16.0), epsilon = 1e-13);
        assert_relative_eq!(*r.second.matrix(), diag(1.0, 1.0, 16.0 / 9.0), epsilon = 1e-13);
        let v0 = cell_volume(&a0).unwrap();
        assert_relative_eq!(cell_volume(&r.first).unwrap() / v0, 0.25, epsilon = 1e-14);
        assert_relative_eq!(cell_volume(&r.second).unwrap() / v0, 0.75, epsilon = 1e-14);
    }

    #[test]
    fn near_unit_fraction_keeps_parent() {
        let a0 = ScaleTensor::new(diag(1.0, 2.0, 3.0)).unwrap();
        let r = divide_cell(&a0, 1.0 - 1e-12, &Vector3::x()).unwrap();
        assert_relative_eq!(*r.first.matrix(), *a0.matrix(), epsilon = 1e-8);
    }

    #[test]
    fn invalid_division_inputs() {
        let a0 = ScaleTensor::new(Matrix3::identity()).unwrap();
        assert!(divide_cell(&a0, 0.0, &Vector3::z()).is_err());
        assert!(divide_cell(&a0, 1.0, &Vector3::z()).is_err());
        assert!(divide_cell(&a0, 0.5, &Vector3::new(1.0, 1.0, 0.0)).is_err());
        assert!(ScaleTensor::new(diag(1.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn area_and_volume_closed_forms() {
        let unit = ScaleTensor::new(Matrix3::identity()).unwrap();
        assert_relative_eq!(cutting_area(&unit, &Vector3::z()).unwrap(), PI, epsilon = 1e-15);
        let quad = ScaleTensor::new(Matrix3::identity() * 4.0).unwrap();
        let n = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        assert_relative_eq!(cutting_area(&quad, &n).unwrap(), PI / 4.0, epsilon = 1e-15);
        assert_relative_eq!(cell_volume(&unit).unwrap(), 4.0 * PI / 3.0, epsilon = 1e-15);
        let s2 = ScaleTensor::sphere(2.0).unwrap();
        assert_relative_eq!(cell_volume(&s2).unwrap(), 4.0 * PI / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn reciprocal_length_of_spheres() {
        let s = ScaleTensor::sphere(2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_relative_eq!(reciprocal_length(&s, &random_unit(&mut rng)).unwrap(), 0.5, epsilon = 1e-15);
        }
        let unit = ScaleTensor::new(Matrix3::identity()).unwrap();
        assert_relative_eq!(reciprocal_length(&unit, &Vector3::z()).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn reciprocal_length_equals_area_volume_ratio() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = random_spd(&mut rng);
            let n = random_unit(&mut rng);
            let s = cutting_area(&a, &n).unwrap();
            let v = cell_volume(&a).unwrap();
            assert_relative_eq!(reciprocal_length(&a, &n).unwrap(), 2.0 * s / (3.0 * v), max_relative = 1e-10);
            assert_relative_eq!(a.projected_norm(&n).powi(2), inverse_quadratic(&a, &n), max_relative = 1e-10);
        }
    }

    #[test]
    fn single_node_network_keeps_macro_cell() {
        let p = NetworkParams::uniform(1).unwrap();
        let a = ScaleTensor::new(diag(1.0, 2.0, 3.0)).unwrap();
        let cells = propagate_scales(&p, &a).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].scale, a);
    }

    #[test]
    fn depth_two_equal_split() {
        let p = NetworkParams::uniform(2).unwrap();
        let a = ScaleTensor::new(Matrix3::identity()).unwrap();
        let cells = propagate_scales(&p, &a).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert_relative_eq!(*c.scale.matrix(), diag(1.0, 1.0, 4.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn volumes_telescope_for_random_networks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for depth in [3, 5, 7] {
            let p = NetworkParams::random(depth, &mut rng).unwrap();
            let a = random_spd(&mut rng);
            let cells = propagate_scales(&p, &a).unwrap();
            let total: f64 = cells.iter().map(|c| cell_volume(&c.scale).unwrap()).sum();
            assert_relative_eq!(total, cell_volume(&a).unwrap(), max_relative = 1e-8);
            for c in &cells {
                assert_relative_eq!(
                    cell_volume(&c.scale).unwrap() / cell_volume(&a).unwrap(),
                    c.weight,
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn pruned_subtrees_get_no_cell() {
        let p = NetworkParams::new(
            3,
            vec![1.0, 0.0, 2.0, 1.0],
            vec![Rotation::zero(); 7],
            NetworkParams::alternating_phases(3),
        )
        .unwrap();
        let a = ScaleTensor::new(Matrix3::identity()).unwrap();
        let cells = propagate_scales(&p, &a).unwrap();
        assert_eq!(cells.iter().map(|c| c.leaf).collect::<Vec<_>>(), vec![0, 2, 3]);
        // the pass-through node hands its whole cell to leaf 0
        let r = divide_cell(&a, 0.25, &Vector3::z()).unwrap();
        assert_relative_eq!(*cells[0].scale.matrix(), *r.first.matrix(), epsilon = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn division_conditions(seed in any::<u64>(), f1 in 0.05f64..0.95) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a0 = random_spd(&mut rng);
            let n = random_unit(&mut rng);
            let r = divide_cell(&a0, f1, &n).unwrap();
            let s0 = cutting_area(&a0, &n).unwrap();
            prop_assert!((cutting_area(&r.first, &n).unwrap() / s0 - 1.0).abs() < 1e-10);
            prop_assert!((cutting_area(&r.second, &n).unwrap() / s0 - 1.0).abs() < 1e-10);
            let v0 = cell_volume(&a0).unwrap();
            prop_assert!((cell_volume(&r.first).unwrap() / v0 / f1 - 1.0).abs() < 1e-10);
            prop_assert!((cell_volume(&r.second).unwrap() / v0 / (1.0 - f1) - 1.0).abs() < 1e-10);
            for child in [r.first, r.second] {
                let (lambda, _) = eig_sym3(&(child.matrix() - a0.matrix())).unwrap();
                prop_assert!(lambda[2] > -1e-10 * a0.matrix().norm());
            }
        }

        #[test]
        fn division_is_equivariant(seed in any::<u64>(), f1 in 0.05f64..0.95) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a0 = random_spd(&mut rng);
            let n = random_unit(&mut rng);
            let q = Rotation::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)).matrix();
            let r = divide_cell(&a0, f1, &n).unwrap();
            let rq = divide_cell(&a0.rotated(&q), f1, &(q * n)).unwrap();
            let scale = a0.matrix().norm();
            prop_assert!((rq.first.matrix() - r.first.rotated(&q).matrix()).norm() < 1e-10 * scale * (1.0 / (f1 * f1)));
            prop_assert!((rq.second.matrix() - r.second.rotated(&q).matrix()).norm() < 1e-10 * scale / ((1.0 - f1) * (1.0 - f1)));
            prop_assert!((cutting_area(&a0.rotated(&q), &(q * n)).unwrap() / r.area - 1.0).abs() < 1e-10);
        }

        #[test]
        fn thin_first_child_as_fraction_vanishes(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a0 = random_spd(&mut rng);
            let n = random_unit(&mut rng);
            let thin = divide_cell(&a0, 1e-4, &n).unwrap();
            let (lambda, q) = eig_sym3(thin.first.matrix()).unwrap();
            prop_assert!(lambda[0] > 1e6);
            prop_assert!(q.column(0).dot(&n).abs() > 0.999);
        }
    }
}
