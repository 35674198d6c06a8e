//! Rotation-group arithmetic.
//!
//! Conventions: the so(3) basis `E1, E2, E3` generates right-handed rotations
//! about the x, y and z axes; quaternions are scalar-first `(q0, q1, q2, q3)`
//! with the Hamilton product, and the rotation of a unit quaternion follows
//! the usual active (body-to-inertial) formula. Lie derivatives are taken
//! along right translations, `E·f(x) = d/dτ f(x exp(τE))` at τ = 0.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, StreamKey};

/// so(3) coordinates in the `{E1, E2, E3}` basis.
pub type Tangent = Vector3<f64>;
pub type RotationMatrix = Matrix3<f64>;
pub type CovarianceMatrix = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-8;

/// Basis element `E_{n+1}` of so(3), `n ∈ {0, 1, 2}`.
pub fn basis(n: usize) -> Matrix3<f64> {
    let mut w = Tangent::zeros();
    w[n] = 1.0;
    hat(&w)
}

pub fn hat(w: &Tangent) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

pub fn vee(s: &Matrix3<f64>) -> Result<Tangent> {
    let asym = (s + s.transpose()).norm();
    if asym >= 1e-9 {
        return Err(Error::NonSkewInput(asym));
    }
    Ok(Tangent::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Skew part of `m` expressed in so(3) coordinates.
pub fn vee_skew(m: &Matrix3<f64>) -> Tangent {
    0.5 * Tangent::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Group exponential via the Rodrigues formula.
pub fn exp_so3(w: &Tangent) -> RotationMatrix {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn is_rotation(r: &RotationMatrix, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).norm() < tol && (r.determinant() - 1.0).abs() < tol
}

/// Squared Frobenius distance `|R1 - R2|_F^2`, the chordal metric of SO(3) ⊂ R^9.
pub fn dist_sq_frobenius(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    (r1 - r2).norm_squared()
}

/// `E_n·ζ²(Ri, Rj)`: derivative of the squared distance when `Ri` moves along
/// the right-invariant direction `E_{n+1}`. Equals `-2 Tr(Rjᵀ Ri E_n)`.
pub fn lie_deriv_dist_sq(ri: &RotationMatrix, rj: &RotationMatrix, n: usize) -> f64 {
    assert!(n < 3, "basis index must be 0, 1 or 2");
    -2.0 * (rj.transpose() * ri * basis(n)).trace()
}

/// All three `E_n·ζ²(Ri, Rj)` plus `ζ²` itself, sharing the product `Rjᵀ Ri`.
#[inline]
pub fn dist_sq_with_derivatives(ri: &RotationMatrix, rj: &RotationMatrix) -> (f64, [f64; 3]) {
    let m = rj.transpose() * ri;
    let d = 6.0 - 2.0 * m.trace();
    // -2 Tr(M E_n) = 2 (M - Mᵀ)^∨_n
    let g = [
        2.0 * (m[(2, 1)] - m[(1, 2)]),
        2.0 * (m[(0, 2)] - m[(2, 0)]),
        2.0 * (m[(1, 0)] - m[(0, 1)]),
    ];
    (d.max(0.0), g)
}

/// Scalar-first quaternion. Unit norm is maintained by every operation that
/// produces one; the sign is left alone except where a value is handed back
/// through [`Quat::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        q0: 1.0,
        q1: 0.0,
        q2: 0.0,
        q3: 0.0,
    };

    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self { q0, q1, q2, q3 }
    }

    /// Builds and normalizes.
    pub fn normalized(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self::new(q0, q1, q2, q3).renormalize()
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, a[0] * s, a[1] * s, a[2] * s)
    }

    /// Element of the SO(2) subgroup of rotations about z.
    pub fn from_z_angle(theta: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Self::new(c, 0.0, 0.0, s)
    }

    /// Angle of a z-rotation, wrapped to `[-π, π)`.
    pub fn z_angle(&self) -> f64 {
        wrap_angle(2.0 * self.q3.atan2(self.q0))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.q1, self.q2, self.q3)
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3).sqrt()
    }

    pub fn renormalize(self) -> Self {
        let n = self.norm();
        Self::new(self.q0 / n, self.q1 / n, self.q2 / n, self.q3 / n)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.q0 * other.q0 + self.q1 * other.q1 + self.q2 * other.q2 + self.q3 * other.q3
    }

    /// Representative with `q0 ≥ 0`; when `q0` vanishes, the first nonzero
    /// vector component is made positive.
    pub fn canonical(&self) -> Self {
        const TIE: f64 = 1e-12;
        let flip = if self.q0.abs() > TIE {
            self.q0 < 0.0
        } else {
            [self.q1, self.q2, self.q3]
                .into_iter()
                .find(|c| c.abs() > TIE)
                .is_some_and(|c| c < 0.0)
        };
        if flip {
            self.neg()
        } else {
            *self
        }
    }

    /// Hamilton product `self ⊗ other`, renormalized.
    pub fn mul(&self, other: &Quat) -> Quat {
        self.mul_raw(other).renormalize()
    }

    fn mul_raw(&self, q: &Quat) -> Quat {
        let p = self;
        Quat::new(
            p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
            p.q0 * q.q1 + q.q0 * p.q1 + p.q2 * q.q3 - p.q3 * q.q2,
            p.q0 * q.q2 + q.q0 * p.q2 + p.q3 * q.q1 - p.q1 * q.q3,
            p.q0 * q.q3 + q.q0 * p.q3 + p.q1 * q.q2 - p.q2 * q.q1,
        )
    }

    pub fn inv(&self) -> Quat {
        Quat::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        let Quat { q0, q1, q2, q3 } = *self;
        Matrix3::new(
            2.0 * (q0 * q0 + q1 * q1) - 1.0,
            2.0 * (q1 * q2 - q0 * q3),
            2.0 * (q1 * q3 + q0 * q2),
            2.0 * (q1 * q2 + q0 * q3),
            2.0 * (q0 * q0 + q2 * q2) - 1.0,
            2.0 * (q2 * q3 - q0 * q1),
            2.0 * (q1 * q3 - q0 * q2),
            2.0 * (q2 * q3 + q0 * q1),
            2.0 * (q0 * q0 + q3 * q3) - 1.0,
        )
    }

    /// Shepperd's method: branch on the largest of `trace, R11, R22, R33`.
    pub fn from_rotation(r: &RotationMatrix) -> Quat {
        let tr = r.trace();
        let diag = [r[(0, 0)], r[(1, 1)], r[(2, 2)]];
        let (imax, dmax) = diag
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
            );
        let q = if tr >= dmax {
            let s = 2.0 * (1.0 + tr).sqrt();
            Quat::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else {
            match imax {
                0 => {
                    let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
                    Quat::new(
                        (r[(2, 1)] - r[(1, 2)]) / s,
                        0.25 * s,
                        (r[(0, 1)] + r[(1, 0)]) / s,
                        (r[(0, 2)] + r[(2, 0)]) / s,
                    )
                }
                1 => {
                    let s = 2.0 * (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt();
                    Quat::new(
                        (r[(0, 2)] - r[(2, 0)]) / s,
                        (r[(0, 1)] + r[(1, 0)]) / s,
                        0.25 * s,
                        (r[(1, 2)] + r[(2, 1)]) / s,
                    )
                }
                _ => {
                    let s = 2.0 * (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt();
                    Quat::new(
                        (r[(1, 0)] - r[(0, 1)]) / s,
                        (r[(0, 2)] + r[(2, 0)]) / s,
                        (r[(1, 2)] + r[(2, 1)]) / s,
                        0.25 * s,
                    )
                }
            }
        };
        q.renormalize().canonical()
    }

    /// `self ⊗ [cos(|Δν|/2), Δν/|Δν| sin(|Δν|/2)]`, i.e. right-multiplication
    /// of the rotation by `exp(hat(Δν))`.
    pub fn exp_step(&self, dnu: &Tangent) -> Quat {
        self.mul_raw(&exp_quat(dnu)).renormalize()
    }

    /// Inverse of [`exp_quat`] on the canonical hemisphere: rotation vector in `[0, π]`.
    pub fn log(&self) -> Tangent {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s == 0.0 {
            Tangent::zeros()
        } else {
            v * (2.0 * s.atan2(q.q0) / s)
        }
    }
}

/// Unit quaternion of the rotation vector `w`.
pub fn exp_quat(w: &Tangent) -> Quat {
    let theta = w.norm();
    let half = 0.5 * theta;
    // sin(θ/2)/θ = ½ sinc(θ/2)
    let s = if theta < SMALL_ANGLE {
        0.5 * (1.0 - half * half / 6.0)
    } else {
        half.sin() / theta
    };
    Quat::new(half.cos(), w[0] * s, w[1] * s, w[2] * s)
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// `δφ = 2 arccos |(q̂⁻¹ ⊗ q)_0|`, in `[0, π]`.
pub fn rotation_angle_error(q_hat: &Quat, q_true: &Quat) -> f64 {
    let d = q_hat.inv().mul_raw(q_true);
    let c = (d.q0.abs() / q_hat.norm() / q_true.norm()).min(1.0);
    2.0 * c.acos()
}

/// Symmetric eigen-decomposition of a 4×4 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as columns.
pub fn jacobi_eigen4(a: &[[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut m = *a;
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|p| (p + 1..4).map(move |q| (p, q)))
            .map(|(p, q)| m[p][q] * m[p][q])
            .sum();
        if off.sqrt() <= 1e-16 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..4 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let mut vals = [0.0; 4];
    let mut vecs = [[0.0; 4]; 4];
    for (col, &k) in order.iter().enumerate() {
        vals[col] = m[k][k];
        for r in 0..4 {
            vecs[r][col] = v[r][k];
        }
    }
    (vals, vecs)
}

/// Principal eigenvector of `Q = (1/N) Σ q qᵀ` together with the gap between
/// the two largest eigenvalues.
pub fn quat_mean_with_gap(ensemble: &[Quat]) -> (Quat, f64) {
    assert!(!ensemble.is_empty(), "quaternion mean of an empty ensemble");
    let mut q = [[0.0; 4]; 4];
    for p in ensemble {
        let a = p.as_array();
        for r in 0..4 {
            for c in r..4 {
                q[r][c] += a[r] * a[c];
            }
        }
    }
    let inv_n = 1.0 / ensemble.len() as f64;
    for r in 0..4 {
        for c in r..4 {
            q[r][c] *= inv_n;
            q[c][r] = q[r][c];
        }
    }
    let (vals, vecs) = jacobi_eigen4(&q);
    let mean = Quat::new(vecs[0][0], vecs[1][0], vecs[2][0], vecs[3][0])
        .renormalize()
        .canonical();
    (mean, vals[0] - vals[1])
}

/// Quaternion average (Markley's eigenvector method).
pub fn quat_mean(ensemble: &[Quat]) -> Result<Quat> {
    let (mean, gap) = quat_mean_with_gap(ensemble);
    if gap < 1e-12 {
        return Err(Error::DegenerateSpectrum { gap });
    }
    Ok(mean)
}

/// Scatter matrix `(1/N) Σ q qᵀ` as a nalgebra matrix, for diagnostics.
pub fn scatter_matrix(ensemble: &[Quat]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for p in ensemble {
        let a = nalgebra::Vector4::from(p.as_array());
        m += a * a.transpose();
    }
    m / ensemble.len() as f64
}

/// Symmetric square root factor `L` with `L Lᵀ = Σ` (negative eigenvalues clipped).
pub fn psd_factor(sigma: &CovarianceMatrix) -> Matrix3<f64> {
    let sym = 0.5 * (sigma + sigma.transpose());
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&d)
}

/// Symmetrize and clip negative eigenvalues to zero.
pub fn project_psd(sigma: &CovarianceMatrix) -> CovarianceMatrix {
    let sym = 0.5 * (sigma + sigma.transpose());
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0));
    let p = eig.eigenvectors * Matrix3::from_diagonal(&d) * eig.eigenvectors.transpose();
    0.5 * (p + p.transpose())
}

/// Draws `n` attitudes `mean ⊗ exp(v)`, `v ~ N(0, sigma)`; particle `i` uses
/// its own sub-stream `key.rng(i)`.
pub fn sample_concentrated(
    mean: &Quat,
    sigma: &CovarianceMatrix,
    n: usize,
    key: &StreamKey,
) -> Vec<Quat> {
    let l = psd_factor(sigma);
    crate::par::map_indexed(n, |i| {
        let mut rng = key.rng(i as u64);
        let z = Tangent::new(
            standard_normal(&mut rng),
            standard_normal(&mut rng),
            standard_normal(&mut rng),
        );
        mean.exp_step(&(l * z))
    })
}

/// Tangent offsets `log(μ⁻¹ ⊗ qⁱ)` of an ensemble around `mean`.
pub fn tangent_offsets(mean: &Quat, ensemble: &[Quat]) -> Vec<Tangent> {
    let inv = mean.inv();
    ensemble.iter().map(|q| inv.mul(q).log()).collect()
}

/// Sample covariance (1/N, centered) of the tangent offsets around `mean`.
pub fn tangent_covariance(mean: &Quat, ensemble: &[Quat]) -> CovarianceMatrix {
    let offs = tangent_offsets(mean, ensemble);
    let n = offs.len() as f64;
    let m = offs.iter().fold(Tangent::zeros(), |a, x| a + x) / n;
    let c = offs
        .iter()
        .fold(Matrix3::zeros(), |a, x| a + (x - m) * (x - m).transpose())
        / n;
    0.5 * (c + c.transpose())
}
