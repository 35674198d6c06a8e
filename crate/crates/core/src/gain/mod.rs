//! Gain-function approximations.
//!
//! The gain is the gradient (in so(3) coordinates) of the solution `φ` of the
//! weighted Poisson equation `π(⟨grad φ, grad ψ⟩) = π((h - ĥ) ψ) / σ_W²`.
//! Each observation coordinate is solved independently.

mod basis;
mod constant;
mod galerkin;
mod kernel;

pub use basis::{so2_fourier_basis, so3_wigner_basis, BasisKind, GalerkinBasis};
pub use constant::{constant_gain, empirical_constant_gain};
pub use galerkin::{galerkin_gain, GalerkinSolution, GalerkinSolver};
pub use kernel::{kernel_gain, KernelConfig, KernelSolution, KernelSolver};

use serde::{Deserialize, Serialize};

use crate::lie::Tangent;

/// The group the ensemble lives on. `So2` is the subgroup of rotations about z;
/// its single Lie-algebra direction is `E3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    So3,
    So2,
}

impl Group {
    pub fn dim(self) -> usize {
        self.axes().len()
    }

    /// so(3) basis indices spanned by the group's Lie algebra.
    pub fn axes(self) -> &'static [usize] {
        match self {
            Group::So3 => &[0, 1, 2],
            Group::So2 => &[2],
        }
    }
}

/// One scalar observation coordinate evaluated on the ensemble.
#[derive(Debug, Clone)]
pub struct ObservationChannel {
    pub h_values: Vec<f64>,
    pub h_hat: f64,
    pub noise_scale: f64,
    /// `E_n·h` at every particle, when known in closed form.
    pub derivatives: Option<Vec<Tangent>>,
}

impl ObservationChannel {
    pub fn new(h_values: Vec<f64>, noise_scale: f64) -> Self {
        assert!(noise_scale > 0.0, "noise scale must be positive");
        let h_hat = crate::par::ordered_sum(h_values.iter().copied()) / h_values.len() as f64;
        Self {
            h_values,
            h_hat,
            noise_scale,
            derivatives: None,
        }
    }

    /// Same as [`ObservationChannel::new`] but with a precomputed mean.
    pub fn with_mean(h_values: Vec<f64>, h_hat: f64, noise_scale: f64) -> Self {
        Self {
            h_values,
            h_hat,
            noise_scale,
            derivatives: None,
        }
    }

    pub fn with_derivatives(mut self, derivatives: Vec<Tangent>) -> Self {
        assert_eq!(derivatives.len(), self.h_values.len());
        self.derivatives = Some(derivatives);
        self
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }

    /// `(h(xⁱ) - ĥ) / σ_W²`.
    pub(crate) fn scaled_centered(&self) -> Vec<f64> {
        let s = 1.0 / (self.noise_scale * self.noise_scale);
        self.h_values.iter().map(|h| (h - self.h_hat) * s).collect()
    }
}

/// Non-fatal conditions raised while computing a gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainWarning {
    /// The Galerkin matrix exceeded the condition threshold and was regularized.
    IllConditioned { condition: f64 },
    /// The kernel derivative term was requested but the channel has no `E_n·h`.
    MissingDerivative,
}

/// Gain coordinates `k_n(xⁱ)` for a single observation channel.
#[derive(Debug, Clone)]
pub struct GainField {
    pub group: Group,
    /// `N × d`, row-major.
    pub coords: Vec<f64>,
    pub warning: Option<GainWarning>,
}

impl GainField {
    pub fn zeros(group: Group, n: usize) -> Self {
        Self {
            group,
            coords: vec![0.0; n * group.dim()],
            warning: None,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.group.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, i: usize, k: usize) -> f64 {
        self.coords[i * self.group.dim() + k]
    }

    /// Gain at particle `i` embedded in so(3).
    pub fn tangent(&self, i: usize) -> Tangent {
        let d = self.group.dim();
        let mut t = Tangent::zeros();
        for (k, &axis) in self.group.axes().iter().enumerate() {
            t[axis] = self.coords[i * d + k];
        }
        t
    }

    pub fn mean_tangent(&self) -> Tangent {
        let n = self.len();
        (0..n).fold(Tangent::zeros(), |acc, i| acc + self.tangent(i)) / n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}
