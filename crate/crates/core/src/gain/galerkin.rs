//! Galerkin approximation: `φ = Σ κ_l ψ_l` with `A κ = b`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{GainField, GainWarning, GalerkinBasis, ObservationChannel};
use crate::lie::Quat;
use crate::par;

/// Condition number above which the system is Tikhonov-regularized.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Ridge added to the diagonal, relative to `trace(A) / L`.
pub const RIDGE: f64 = 1e-8;

/// Basis evaluations and the stiffness matrix for one ensemble. `A` does not
/// depend on the observation, so it is shared by all channels of a step.
#[derive(Debug, Clone)]
pub struct GalerkinSolver {
    basis: GalerkinBasis,
    n: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
    a: DMatrix<f64>,
    condition: f64,
    factor: Option<Cholesky<f64, nalgebra::Dyn>>,
    regularized: bool,
}

#[derive(Debug, Clone)]
pub struct GalerkinSolution {
    pub kappa: DVector<f64>,
    pub b: DVector<f64>,
    pub field: GainField,
}

impl GalerkinSolver {
    pub fn new(ensemble: &[Quat], basis: GalerkinBasis) -> Self {
        let n = ensemble.len();
        let l = basis.len();
        let d = basis.group().dim();
        assert!(
            n >= l,
            "Galerkin solve needs at least as many particles ({n}) as basis functions ({l})"
        );

        let per_particle = par::map_indexed(n, |i| {
            let mut v = vec![0.0; l];
            let mut g = vec![0.0; l * d];
            basis.values(&ensemble[i], &mut v);
            basis.derivatives(&ensemble[i], &mut g);
            (v, g)
        });
        let mut values = Vec::with_capacity(n * l);
        let mut derivs = Vec::with_capacity(n * l * d);
        for (v, g) in per_particle {
            values.extend(v);
            derivs.extend(g);
        }

        let mut a = DMatrix::zeros(l, l);
        for g in derivs.chunks_exact(l * d) {
            for k in 0..l {
                for m in k..l {
                    let s: f64 = (0..d).map(|c| g[k * d + c] * g[m * d + c]).sum();
                    a[(k, m)] += s;
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for k in 0..l {
            for m in k..l {
                a[(k, m)] *= inv_n;
                a[(m, k)] = a[(k, m)];
            }
        }

        let eigenvalues = a.symmetric_eigenvalues();
        let lmax = eigenvalues.max();
        let lmin = eigenvalues.min();
        let condition = if lmin > 0.0 {
            lmax / lmin
        } else {
            f64::INFINITY
        };
        let trace = a.trace();

        let (factor, regularized) = if trace <= 0.0 {
            (None, false)
        } else if condition > CONDITION_LIMIT {
            let mut reg = a.clone();
            let ridge = RIDGE * trace / l as f64;
            for k in 0..l {
                reg[(k, k)] += ridge;
            }
            (Cholesky::new(reg), true)
        } else {
            match Cholesky::new(a.clone()) {
                Some(c) => (Some(c), false),
                None => {
                    let mut reg = a.clone();
                    let ridge = RIDGE * trace / l as f64;
                    for k in 0..l {
                        reg[(k, k)] += ridge;
                    }
                    (Cholesky::new(reg), true)
                }
            }
        };

        Self {
            basis,
            n,
            values,
            derivs,
            a,
            condition,
            factor,
            regularized,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn is_regularized(&self) -> bool {
        self.regularized
    }

    /// Mass matrix `(1/N) Σ ψ_k ψ_l` on the ensemble.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let l = self.basis.len();
        let mut m = DMatrix::zeros(l, l);
        for v in self.values.chunks_exact(l) {
            for k in 0..l {
                for j in 0..l {
                    m[(k, j)] += v[k] * v[j];
                }
            }
        }
        m / self.n as f64
    }

    /// Right-hand side `b_k = (1/N) Σ (h - ĥ) ψ_k / σ_W²`.
    pub fn rhs(&self, channel: &ObservationChannel) -> DVector<f64> {
        assert_eq!(
            channel.len(),
            self.n,
            "channel length does not match the ensemble"
        );
        let l = self.basis.len();
        let centered = channel.scaled_centered();
        let mut b = DVector::zeros(l);
        for (v, c) in self.values.chunks_exact(l).zip(&centered) {
            for k in 0..l {
                b[k] += c * v[k];
            }
        }
        b / self.n as f64
    }

    pub fn solve(&self, channel: &ObservationChannel) -> GalerkinSolution {
        let group = self.basis.group();
        let l = self.basis.len();
        let d = group.dim();
        let b = self.rhs(channel);
        let kappa = match &self.factor {
            Some(f) => f.solve(&b),
            None => DVector::zeros(l),
        };
        let mut coords = vec![0.0; self.n * d];
        for (i, g) in self.derivs.chunks_exact(l * d).enumerate() {
            for c in 0..d {
                coords[i * d + c] = (0..l).map(|k| kappa[k] * g[k * d + c]).sum();
            }
        }
        let warning = self.regularized.then_some(GainWarning::IllConditioned {
            condition: self.condition,
        });
        GalerkinSolution {
            kappa,
            b,
            field: GainField {
                group,
                coords,
                warning,
            },
        }
    }

    /// Largest weak-form mismatch over the basis:
    /// `max_k |(1/N) Σ_i Σ_n k_n(xⁱ) E_n·ψ_k(xⁱ) - b_k|`.
    pub fn weak_form_residual(&self, field: &GainField, b: &DVector<f64>) -> f64 {
        let l = self.basis.len();
        let d = self.basis.group().dim();
        let mut lhs = DVector::zeros(l);
        for (i, g) in self.derivs.chunks_exact(l * d).enumerate() {
            for k in 0..l {
                lhs[k] += (0..d)
                    .map(|c| field.coords[i * d + c] * g[k * d + c])
                    .sum::<f64>();
            }
        }
        lhs /= self.n as f64;
        (lhs - b).amax()
    }
}

/// Single-channel convenience wrapper around [`GalerkinSolver`].
pub fn galerkin_gain(
    ensemble: &[Quat],
    channel: &ObservationChannel,
    basis: GalerkinBasis,
) -> GainField {
    GalerkinSolver::new(ensemble, basis).solve(channel).field
}
