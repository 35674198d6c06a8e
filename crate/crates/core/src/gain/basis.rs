//! Galerkin basis functions: the lowest non-trivial Laplacian eigenfunctions.

use super::Group;
use crate::lie::Quat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Nine degree-one Wigner functions on SO(3) (the entries of `R`, recombined).
    So3Wigner,
    /// `sin θ, cos θ` on the z-rotation subgroup.
    So2Fourier,
}

/// Basis functions `ψ_l` with their Lie derivatives `E_n·ψ_l`, all in
/// quaternion coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GalerkinBasis {
    kind: BasisKind,
}

pub fn so3_wigner_basis() -> GalerkinBasis {
    GalerkinBasis {
        kind: BasisKind::So3Wigner,
    }
}

pub fn so2_fourier_basis() -> GalerkinBasis {
    GalerkinBasis {
        kind: BasisKind::So2Fourier,
    }
}

impl GalerkinBasis {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn group(&self) -> Group {
        match self.kind {
            BasisKind::So3Wigner => Group::So3,
            BasisKind::So2Fourier => Group::So2,
        }
    }

    pub fn len(&self) -> usize {
        match self.kind {
            BasisKind::So3Wigner => 9,
            BasisKind::So2Fourier => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `ψ_l(q)` into `out[l]`.
    pub fn values(&self, q: &Quat, out: &mut [f64]) {
        match self.kind {
            BasisKind::So3Wigner => {
                let Quat { q0, q1, q2, q3 } = *q;
                out[0] = 2.0 * (q0 * q0 + q3 * q3) - 1.0;
                out[1] = 2.0 * (q0 * q2 + q1 * q3);
                out[2] = 2.0 * (q0 * q1 - q2 * q3);
                out[3] = 2.0 * (-q0 * q2 + q1 * q3);
                out[4] = 2.0 * (q0 * q1 + q2 * q3);
                out[5] = 2.0 * q0 * q3;
                out[6] = q0 * q0 - q3 * q3;
                out[7] = 2.0 * q1 * q2;
                out[8] = q1 * q1 - q2 * q2;
            }
            BasisKind::So2Fourier => {
                let (s, c) = q.z_angle().sin_cos();
                out[0] = s;
                out[1] = c;
            }
        }
    }

    /// Writes `E_n·ψ_l(q)` into `out[l * d + k]`, where `k` indexes the
    /// group's Lie-algebra directions.
    pub fn derivatives(&self, q: &Quat, out: &mut [f64]) {
        match self.kind {
            BasisKind::So3Wigner => {
                let Quat { q0, q1, q2, q3 } = *q;
                let rows: [[f64; 3]; 9] = [
                    [2.0 * (-q0 * q1 - q2 * q3), 2.0 * (-q0 * q2 + q1 * q3), 0.0],
                    [
                        2.0 * (q0 * q3 - q1 * q2),
                        2.0 * (q0 * q0 + q1 * q1) - 1.0,
                        0.0,
                    ],
                    [
                        2.0 * (q0 * q0 + q2 * q2) - 1.0,
                        2.0 * (-q0 * q3 - q1 * q2),
                        0.0,
                    ],
                    [
                        0.0,
                        -2.0 * (q0 * q0 + q3 * q3) + 1.0,
                        2.0 * (q0 * q1 + q2 * q3),
                    ],
                    [
                        2.0 * (q0 * q0 + q3 * q3) - 1.0,
                        0.0,
                        2.0 * (q0 * q2 - q1 * q3),
                    ],
                    [-q0 * q2 - q1 * q3, q0 * q1 - q2 * q3, q0 * q0 - q3 * q3],
                    [-q0 * q1 + q2 * q3, -q0 * q2 - q1 * q3, -2.0 * q0 * q3],
                    [q0 * q2 + q1 * q3, q0 * q1 - q2 * q3, q2 * q2 - q1 * q1],
                    [q0 * q1 - q2 * q3, -q0 * q2 - q1 * q3, 2.0 * q1 * q2],
                ];
                for (l, row) in rows.iter().enumerate() {
                    out[l * 3..l * 3 + 3].copy_from_slice(row);
                }
            }
            BasisKind::So2Fourier => {
                let (s, c) = q.z_angle().sin_cos();
                out[0] = c;
                out[1] = -s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{Quat, Tangent};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn fd_check(basis: &GalerkinBasis, q: &Quat) -> f64 {
        let l = basis.len();
        let group = basis.group();
        let d = group.dim();
        let mut derivs = vec![0.0; l * d];
        basis.derivatives(q, &mut derivs);
        let tau = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, &axis) in group.axes().iter().enumerate() {
            let mut e = Tangent::zeros();
            e[axis] = tau;
            let (mut plus, mut minus) = (vec![0.0; l], vec![0.0; l]);
            basis.values(&q.exp_step(&e), &mut plus);
            basis.values(&q.exp_step(&-e), &mut minus);
            for li in 0..l {
                let fd = (plus[li] - minus[li]) / (2.0 * tau);
                worst = worst.max((fd - derivs[li * d + k]).abs());
            }
        }
        worst
    }

    #[test]
    fn wigner_table_spot_values() {
        let b = so3_wigner_basis();
        let mut v = [0.0; 9];
        b.values(&Quat::IDENTITY, &mut v);
        assert_eq!(v[0], 1.0);
        let q = Quat::normalized(0.3, -0.5, 0.7, 0.2);
        let mut d = [0.0; 27];
        b.derivatives(&q, &mut d);
        assert_eq!([d[2], d[5], d[8]], [0.0, 0.0, 0.0]);
        // ψ values against the rotation-matrix column of the table
        let r = q.to_rotation();
        b.values(&q, &mut v);
        let from_r = [
            r[(2, 2)],
            r[(0, 2)],
            -r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            0.5 * (r[(1, 0)] - r[(0, 1)]),
            0.5 * (r[(0, 0)] + r[(1, 1)]),
            0.5 * (r[(1, 0)] + r[(0, 1)]),
            0.5 * (r[(0, 0)] - r[(1, 1)]),
        ];
        for l in 0..9 {
            assert!((v[l] - from_r[l]).abs() < 1e-14, "psi_{}", l + 1);
        }
    }

    #[test]
    fn fourier_spot_values() {
        let b = so2_fourier_basis();
        let mut v = [0.0; 2];
        b.values(&Quat::IDENTITY, &mut v);
        assert_eq!(v, [0.0, 1.0]);
        let mut d = [0.0; 2];
        b.derivatives(&Quat::from_z_angle(FRAC_PI_2), &mut d);
        assert!(d[0].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn wigner_derivatives_match_finite_differences(
            a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, d in -1.0..1.0f64
        ) {
            prop_assume!(a * a + b * b + c * c + d * d > 1e-2);
            let q = Quat::normalized(a, b, c, d);
            prop_assert!(fd_check(&so3_wigner_basis(), &q) < 1e-6);
        }

        #[test]
        fn fourier_derivatives_match_finite_differences(theta in -3.1..3.1f64) {
            prop_assert!(fd_check(&so2_fourier_basis(), &Quat::from_z_angle(theta)) < 1e-6);
        }
    }
}
