//! Kernel (diffusion-map) gain approximation.
//!
//! The Markov matrix `T` is built from a Gaussian kernel on the chordal
//! distance `ζ²(Ri, Rj) = |Ri - Rj|_F²`, double-normalized and then
//! row-normalized. `Φ = TΦ + εH` is solved by successive approximation on the
//! mean-zero subspace, and the gain is the analytic Lie derivative of the
//! fixed-point map at the particles.

use serde::{Deserialize, Serialize};

use super::{GainField, GainWarning, Group, ObservationChannel};
use crate::lie::{dist_sq_with_derivatives, Quat, RotationMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Kernel bandwidth ε.
    pub epsilon: f64,
    /// Maximum number of fixed-point sweeps K.
    pub max_sweeps: usize,
    /// Sweeps stop once `max |Φ_{k+1} - Φ_k|` drops below this.
    pub tolerance: f64,
    /// Include the `ε E_n·h` term of the gain formula (needs channel derivatives).
    pub derivative_term: bool,
}

impl KernelConfig {
    pub fn so3_default() -> Self {
        Self {
            epsilon: 1.0,
            max_sweeps: 100,
            tolerance: 1e-9,
            derivative_term: false,
        }
    }

    pub fn so2_default() -> Self {
        Self {
            epsilon: 0.2,
            ..Self::so3_default()
        }
    }

    pub fn for_group(group: Group) -> Self {
        match group {
            Group::So3 => Self::so3_default(),
            Group::So2 => Self::so2_default(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.epsilon > 0.0) || self.max_sweeps == 0 {
            return Err(crate::Error::InvalidConfig(format!(
                "kernel needs epsilon > 0 and at least one sweep (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub field: GainField,
    /// Mean-zero fixed point `Φ_K`.
    pub phi: Vec<f64>,
    /// `max |Φ_{k+1} - Φ_k|` per sweep.
    pub residuals: Vec<f64>,
}

/// Markov matrix for one ensemble; reusable across observation channels.
#[derive(Debug, Clone)]
pub struct KernelSolver {
    group: Group,
    config: KernelConfig,
    n: usize,
    rotations: Vec<RotationMatrix>,
    /// Row-major `N × N`.
    t: Vec<f64>,
}

impl KernelSolver {
    pub fn new(ensemble: &[Quat], group: Group, config: KernelConfig) -> Self {
        let n = ensemble.len();
        assert!(n >= 2, "kernel gain needs at least two particles");
        let rotations: Vec<RotationMatrix> = ensemble.iter().map(Quat::to_rotation).collect();
        let eps = config.epsilon;
        let d = group.dim() as f64;
        let prefactor = (4.0 * std::f64::consts::PI * eps).powf(-0.5 * d);
        let inv4eps = 1.0 / (4.0 * eps);

        let mut t = vec![0.0; n * n];
        par::fill_rows(&mut t, n, |i, row| {
            let ri = &rotations[i];
            for (j, out) in row.iter_mut().enumerate() {
                let dist = (ri - rotations[j]).norm_squared();
                *out = prefactor * (-dist * inv4eps).exp();
            }
        });
        // (1/N) Σ_l k(xⁱ, xˡ), summed in index order per row
        let inv_n = 1.0 / n as f64;
        let root_mass: Vec<f64> = t
            .chunks_exact(n)
            .map(|row| (par::ordered_sum(row.iter().copied()) * inv_n).sqrt())
            .collect();
        par::fill_rows(&mut t, n, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v /= root_mass[i] * root_mass[j];
            }
            let s = par::ordered_sum(row.iter().copied());
            row.iter_mut().for_each(|v| *v /= s);
        });

        Self {
            group,
            config,
            n,
            rotations,
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    /// Row-major Markov matrix.
    pub fn markov(&self) -> &[f64] {
        &self.t
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        par::map_indexed(n, |i| {
            let row = &self.t[i * n..(i + 1) * n];
            row.iter().zip(x).fold(0.0, |acc, (a, b)| acc + a * b)
        })
    }

    /// Successive approximation of `Φ = TΦ + εH` with mean removal each sweep.
    /// `forcing` is `H` (already centered and noise-scaled).
    pub fn fixed_point(&self, forcing: &[f64], warm_start: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let eps = self.config.epsilon;
        let mut phi = match warm_start {
            Some(w) if w.len() == n && w.iter().all(|x| x.is_finite()) => w.to_vec(),
            _ => vec![0.0; n],
        };
        remove_mean(&mut phi);
        let mut residuals = Vec::new();
        for _ in 0..self.config.max_sweeps {
            let mut next = self.apply(&phi);
            for (x, h) in next.iter_mut().zip(forcing) {
                *x += eps * h;
            }
            remove_mean(&mut next);
            let r = next
                .iter()
                .zip(&phi)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            phi = next;
            residuals.push(r);
            if r < self.config.tolerance {
                break;
            }
        }
        (phi, residuals)
    }

    pub fn solve(
        &self,
        channel: &ObservationChannel,
        warm_start: Option<&[f64]>,
    ) -> KernelSolution {
        self.solve_many(
            std::slice::from_ref(channel),
            &[warm_start.map(<[f64]>::to_vec)],
        )
        .pop()
        .expect("one channel in, one solution out")
    }

    /// Solves every channel against the shared Markov matrix. `warm_starts`
    /// may be shorter than `channels`; missing entries start from zero.
    pub fn solve_many(
        &self,
        channels: &[ObservationChannel],
        warm_starts: &[Option<Vec<f64>>],
    ) -> Vec<KernelSolution> {
        let n = self.n;
        let m = channels.len();
        let eps = self.config.epsilon;
        let axes = self.group.axes();
        let d = axes.len();

        let mut phis = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        let mut tphis = Vec::with_capacity(m);
        for (c, ch) in channels.iter().enumerate() {
            assert_eq!(ch.len(), n, "channel length does not match the ensemble");
            let forcing = ch.scaled_centered();
            let warm = warm_starts.get(c).and_then(|w| w.as_deref());
            let (phi, res) = self.fixed_point(&forcing, warm);
            tphis.push(self.apply(&phi));
            phis.push(phi);
            residuals.push(res);
        }

        // Υ_n = ε H̃_n - (1/4ε) [S_n Φ - (S_n 1) ∘ (T Φ)],  S_n = T ∘ Z̃_n
        let rows = par::map_indexed(n, |i| {
            let ri = &self.rotations[i];
            let trow = &self.t[i * n..(i + 1) * n];
            let mut s1 = [0.0; 3];
            let mut sphi = vec![[0.0; 3]; m];
            for j in 0..n {
                let (_, grad) = dist_sq_with_derivatives(ri, &self.rotations[j]);
                for (k, &axis) in axes.iter().enumerate() {
                    let s = trow[j] * grad[axis];
                    s1[k] += s;
                    for c in 0..m {
                        sphi[c][k] += s * phis[c][j];
                    }
                }
            }
            (s1, sphi)
        });

        let mut out = Vec::with_capacity(m);
        for (c, ch) in channels.iter().enumerate() {
            let mut coords = vec![0.0; n * d];
            let mut warning = None;
            let scale = 1.0 / (ch.noise_scale * ch.noise_scale);
            let derivs = if self.config.derivative_term {
                if ch.derivatives.is_none() {
                    warning = Some(GainWarning::MissingDerivative);
                }
                ch.derivatives.as_ref()
            } else {
                None
            };
            for (i, (s1, sphi)) in rows.iter().enumerate() {
                for (k, &axis) in axes.iter().enumerate() {
                    let bracket = sphi[c][k] - s1[k] * tphis[c][i];
                    let direct = derivs.map_or(0.0, |dv| eps * scale * dv[i][axis]);
                    coords[i * d + k] = direct - bracket / (4.0 * eps);
                }
            }
            out.push(KernelSolution {
                field: GainField {
                    group: self.group,
                    coords,
                    warning,
                },
                phi: std::mem::take(&mut phis[c]),
                residuals: std::mem::take(&mut residuals[c]),
            });
        }
        out
    }
}

fn remove_mean(x: &mut [f64]) {
    let mean = par::ordered_sum(x.iter().copied()) / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Single-channel convenience wrapper, cold start.
pub fn kernel_gain(
    ensemble: &[Quat],
    group: Group,
    channel: &ObservationChannel,
    config: KernelConfig,
) -> GainField {
    KernelSolver::new(ensemble, group, config)
        .solve(channel, None)
        .field
}
