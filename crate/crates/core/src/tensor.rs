//! Small dense tensor kernels.
//!
//! Second-order symmetric tensors are stored as 6-vectors in the orthonormal
//! Mandel basis with component order `[11, 22, 33, 23, 13, 12]`; the three
//! shear entries carry a factor `√2`. With this convention the double
//! contraction `σ:ε` is the plain dot product and the 6×6 representation of a
//! rotation is an orthogonal matrix.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};

use crate::{Error, Result};

/// Stress in Mandel form (GPa).
pub type StressVec = Vector6<f64>;
/// Strain in Mandel form (dimensionless).
pub type StrainVec = Vector6<f64>;
/// 6×6 stiffness in Mandel form (GPa).
pub type Stiffness6 = Matrix6<f64>;
/// 6×6 compliance in Mandel form (GPa⁻¹).
pub type Compliance6 = Matrix6<f64>;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Mandel index of each `(i, j)` pair.
const MANDEL_INDEX: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
/// Tensor indices of each Mandel component.
const MANDEL_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Converts a (symmetrized) 3×3 matrix to its Mandel vector.
pub fn to_mandel(m: &Matrix3<f64>) -> Vector6<f64> {
    let mut v = Vector6::zeros();
    for (k, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        v[k] = if i == j {
            m[(i, i)]
        } else {
            0.5 * (m[(i, j)] + m[(j, i)]) * SQRT_2
        };
    }
    v
}

/// Converts a Mandel vector back to a symmetric 3×3 matrix.
pub fn from_mandel(v: &Vector6<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let k = MANDEL_INDEX[i][j];
            m[(i, j)] = if i == j { v[k] } else { v[k] / SQRT_2 };
        }
    }
    m
}

/// Mandel vector of the second-order identity.
pub fn mandel_identity() -> Vector6<f64> {
    Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
}

/// Deviatoric projector `I − (1/3) 1⊗1` in Mandel form.
pub fn deviatoric_projector() -> Matrix6<f64> {
    let one = mandel_identity();
    Matrix6::identity() - one * one.transpose() / 3.0
}

/// Mandel representation of `sym(d ⊗ n)` as a linear map of `d`.
///
/// The transpose maps a stress to its traction `σ·n`.
pub fn opening_strain_map(n: &Vector3<f64>) -> nalgebra::Matrix6x3<f64> {
    let mut map = nalgebra::Matrix6x3::zeros();
    for a in 0..3 {
        let mut e = Vector3::zeros();
        e[a] = 1.0;
        let m = 0.5 * (e * n.transpose() + n * e.transpose());
        map.set_column(a, &to_mandel(&m));
    }
    map
}

/// Euler angles of a network node (radians).
///
/// The associated rotation is `R = Rx(α) · Ry(β) · Rz(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Rotation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

impl Rotation {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Rotation { alpha, beta, gamma }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }

    /// 3×3 orthogonal matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        rot_x(self.alpha) * rot_y(self.beta) * rot_z(self.gamma)
    }

    /// Derivatives of [`Rotation::matrix`] with respect to `(α, β, γ)`.
    pub fn matrix_derivatives(&self) -> [Matrix3<f64>; 3] {
        let (rx, ry, rz) = (rot_x(self.alpha), rot_y(self.beta), rot_z(self.gamma));
        [
            drot_x(self.alpha) * ry * rz,
            rx * drot_y(self.beta) * rz,
            rx * ry * drot_z(self.gamma),
        ]
    }

    /// 6×6 Mandel rotation, see [`rotation6`].
    pub fn mandel(&self) -> Matrix6<f64> {
        rotation6(&self.matrix())
    }
}

/// 6×6 Mandel matrix `Q` with `Mandel(R S Rᵀ) = Q · Mandel(S)`.
pub fn rotation6(r: &Matrix3<f64>) -> Matrix6<f64> {
    let mut q = Matrix6::zeros();
    for k in 0..6 {
        let mut e = Vector6::zeros();
        e[k] = 1.0;
        let basis = from_mandel(&e);
        q.set_column(k, &to_mandel(&(r * basis * r.transpose())));
    }
    q
}

/// Directional derivative of [`rotation6`] at `r` along `dr`.
pub fn rotation6_derivative(r: &Matrix3<f64>, dr: &Matrix3<f64>) -> Matrix6<f64> {
    let mut q = Matrix6::zeros();
    for k in 0..6 {
        let mut e = Vector6::zeros();
        e[k] = 1.0;
        let basis = from_mandel(&e);
        let d = dr * basis * r.transpose() + r * basis * dr.transpose();
        q.set_column(k, &to_mandel(&d));
    }
    q
}

/// Rotates a stiffness: `C ↦ Q C Qᵀ`.
pub fn rotate_stiffness(c: &Matrix6<f64>, q: &Matrix6<f64>) -> Matrix6<f64> {
    q * c * q.transpose()
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// Eigenvalues are sorted in descending order; each eigenvector is oriented
/// so that its largest-magnitude component is positive.
pub fn eig_sym3(m: &Matrix3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix".into()));
    }
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vector3::zeros();
    let mut vectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut v: Vector3<f64> = eig.eigenvectors.column(src).into_owned();
        let imax = (0..3)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        if v[imax] < 0.0 {
            v = -v;
        }
        vectors.set_column(dst, &v.normalize());
    }
    Ok((values, vectors))
}

/// Isotropic stiffness from Young's modulus and Poisson's ratio.
pub fn isotropic_stiffness(young: f64, poisson: f64) -> Stiffness6 {
    let bulk = young / (3.0 * (1.0 - 2.0 * poisson));
    let shear = young / (2.0 * (1.0 + poisson));
    let one = mandel_identity();
    bulk * one * one.transpose() + 2.0 * shear * deviatoric_projector()
}

/// Orthotropic compliance from engineering constants in the material frame.
///
/// Poisson ratios follow the major convention `ν_ij = −ε_j / ε_i` under
/// uniaxial stress along `i`.
#[allow(clippy::too_many_arguments)]
pub fn orthotropic_compliance(
    e: [f64; 3],
    g12: f64,
    g13: f64,
    g23: f64,
    nu12: f64,
    nu13: f64,
    nu23: f64,
) -> Compliance6 {
    let mut s = Matrix6::zeros();
    s[(0, 0)] = 1.0 / e[0];
    s[(1, 1)] = 1.0 / e[1];
    s[(2, 2)] = 1.0 / e[2];
    s[(0, 1)] = -nu12 / e[0];
    s[(1, 0)] = s[(0, 1)];
    s[(0, 2)] = -nu13 / e[0];
    s[(2, 0)] = s[(0, 2)];
    s[(1, 2)] = -nu23 / e[1];
    s[(2, 1)] = s[(1, 2)];
    s[(3, 3)] = 1.0 / (2.0 * g23);
    s[(4, 4)] = 1.0 / (2.0 * g13);
    s[(5, 5)] = 1.0 / (2.0 * g12);
    s
}

/// Cholesky test for symmetric positive definiteness.
pub fn is_spd6(c: &Matrix6<f64>) -> bool {
    let scale = c.abs().max();
    if !(scale > 0.0) || (c - c.transpose()).abs().max() > 1e-9 * scale {
        return false;
    }
    nalgebra::Cholesky::new(0.5 * (c + c.transpose())).is_some()
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn rel_diff6(a: &Matrix6<f64>, b: &Matrix6<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
