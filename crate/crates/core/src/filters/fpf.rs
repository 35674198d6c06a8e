//! Feedback particle filter in quaternion coordinates.

use serde::{Deserialize, Serialize};

use super::{jacobian_rows, ObservationIncrement, ObservationModel};
use crate::error::{Error, Result};
use crate::gain::{
    so2_fourier_basis, so3_wigner_basis, GainField, GainWarning, GalerkinSolver, Group,
    KernelConfig, KernelSolver, ObservationChannel,
};
use crate::lie::{quat_mean, tangent_covariance, Quat, Tangent};
use crate::par;
use crate::rng::{standard_normal, NoiseRng, StreamKey};

/// How the gain is approximated at each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainBackend {
    /// Wigner (SO(3)) or Fourier (SO(2)) Galerkin basis.
    Galerkin,
    Kernel(KernelConfig),
    /// `Σ̄ Jᵀ / σ_W²` from the ensemble mean and tangent covariance.
    Constant,
}

#[derive(Debug, Clone)]
struct Particle {
    q: Quat,
    rng: NoiseRng,
}

enum Gains {
    Field(Vec<GainField>),
    Constant(Vec<Tangent>),
}

impl Gains {
    fn at(&self, i: usize, j: usize) -> Tangent {
        match self {
            Gains::Field(f) => f[j].tangent(i),
            Gains::Constant(k) => k[j],
        }
    }
}

/// Particle ensemble plus everything needed to advance it. No weights and
/// no resampling: the particle count is fixed for the life of the state.
#[derive(Debug, Clone)]
pub struct FpfState {
    particles: Vec<Particle>,
    backend: GainBackend,
    group: Group,
    sigma_b: f64,
    sigma_w: f64,
    warm: Vec<Option<Vec<f64>>>,
    warning: Option<GainWarning>,
}

impl FpfState {
    /// Particle `i` draws its process noise from `key.rng(i)`.
    pub fn new(
        particles: Vec<Quat>,
        group: Group,
        backend: GainBackend,
        sigma_b: f64,
        sigma_w: f64,
        key: StreamKey,
    ) -> Result<Self> {
        if !(sigma_w > 0.0) || !(sigma_b >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid noise scales sigma_b={sigma_b}, sigma_w={sigma_w}"
            )));
        }
        let needed = match backend {
            GainBackend::Galerkin => match group {
                Group::So3 => so3_wigner_basis().len(),
                Group::So2 => so2_fourier_basis().len(),
            },
            GainBackend::Kernel(cfg) => {
                cfg.validate()?;
                2
            }
            GainBackend::Constant => 2,
        };
        if particles.len() < needed {
            return Err(Error::InvalidConfig(format!(
                "{backend:?} gain needs at least {needed} particles, got {}",
                particles.len()
            )));
        }
        let particles = particles
            .into_iter()
            .enumerate()
            .map(|(i, q)| Particle {
                q,
                rng: key.rng(i as u64),
            })
            .collect();
        Ok(Self {
            particles,
            backend,
            group,
            sigma_b,
            sigma_w,
            warm: Vec::new(),
            warning: None,
        })
    }

    pub fn particles(&self) -> Vec<Quat> {
        self.particles.iter().map(|p| p.q).collect()
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn backend(&self) -> GainBackend {
        self.backend
    }

    /// Most recent non-fatal gain warning, if any.
    pub fn last_warning(&self) -> Option<GainWarning> {
        self.warning
    }

    pub fn estimate(&self) -> Result<Quat> {
        quat_mean(&self.particles())
    }

    /// One propagation-update step. The gain is solved once from the
    /// pre-update ensemble; each particle then moves by
    /// `Δν = ω Δt + σ_B ΔB + K (ΔZ - ½(h + ĥ) Δt)`.
    ///
    /// On error the ensemble is left partially updated and should be discarded.
    pub fn step(
        &mut self,
        model: &dyn ObservationModel,
        omega: &Tangent,
        obs: &ObservationIncrement,
    ) -> Result<()> {
        let n = self.particles.len();
        let m = model.dim();
        assert_eq!(
            obs.dz.len(),
            m,
            "observation increment has the wrong dimension"
        );
        let ensemble = self.particles();

        let mut h = vec![0.0; n * m];
        par::fill_rows(&mut h, m, |i, row| model.eval(&ensemble[i], row));
        let h_hat: Vec<f64> = (0..m)
            .map(|j| par::ordered_sum((0..n).map(|i| h[i * m + j])) / n as f64)
            .collect();

        let gains = self.gains(model, &ensemble, &h, &h_hat)?;

        let group = self.group;
        let dt = obs.dt;
        let sqrt_dt = dt.sqrt();
        let sigma_b = self.sigma_b;
        let drift = match group {
            Group::So3 => omega * dt,
            Group::So2 => Tangent::new(0.0, 0.0, omega[2] * dt),
        };
        let outcomes = par::map_mut(&mut self.particles, |i, p| {
            let hi = &h[i * m..(i + 1) * m];
            let mut feedback = Tangent::zeros();
            for j in 0..m {
                let di = obs.dz[j] - 0.5 * (hi[j] + h_hat[j]) * dt;
                feedback += gains.at(i, j) * di;
            }
            let db = match group {
                Group::So3 => Tangent::new(
                    standard_normal(&mut p.rng),
                    standard_normal(&mut p.rng),
                    standard_normal(&mut p.rng),
                ),
                Group::So2 => Tangent::new(0.0, 0.0, standard_normal(&mut p.rng)),
            };
            let dnu = drift + db * (sigma_b * sqrt_dt) + feedback;
            if !dnu.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    particle: i,
                    detail: format!("increment {dnu:?}"),
                });
            }
            let next = p.q.exp_step(&dnu);
            if group == Group::So2 {
                let off = next.q1.abs().max(next.q2.abs());
                if off > 1e-9 {
                    return Err(Error::SubgroupViolation {
                        particle: i,
                        magnitude: off,
                    });
                }
            }
            p.q = next;
            Ok(())
        });
        outcomes.into_iter().collect()
    }

    fn gains(
        &mut self,
        model: &dyn ObservationModel,
        ensemble: &[Quat],
        h: &[f64],
        h_hat: &[f64],
    ) -> Result<Gains> {
        let n = ensemble.len();
        let m = h_hat.len();
        let channels = || -> Vec<ObservationChannel> {
            (0..m)
                .map(|j| {
                    ObservationChannel::with_mean(
                        (0..n).map(|i| h[i * m + j]).collect(),
                        h_hat[j],
                        self.sigma_w,
                    )
                })
                .collect()
        };
        self.warning = None;
        match self.backend {
            GainBackend::Galerkin => {
                let basis = match self.group {
                    Group::So3 => so3_wigner_basis(),
                    Group::So2 => so2_fourier_basis(),
                };
                let solver = GalerkinSolver::new(ensemble, basis);
                let fields: Vec<GainField> =
                    channels().iter().map(|c| solver.solve(c).field).collect();
                self.warning = fields.iter().find_map(|f| f.warning);
                Ok(Gains::Field(fields))
            }
            GainBackend::Kernel(cfg) => {
                let mut chans = channels();
                if cfg.derivative_term {
                    for (j, ch) in chans.iter_mut().enumerate() {
                        let d: Option<Vec<Tangent>> =
                            ensemble.iter().map(|q| model.gradient(q, j)).collect();
                        if let Some(d) = d {
                            ch.derivatives = Some(d);
                        }
                    }
                }
                let solver = KernelSolver::new(ensemble, self.group, cfg);
                let sols = solver.solve_many(&chans, &self.warm);
                self.warning = sols.iter().find_map(|s| s.field.warning);
                let mut fields = Vec::with_capacity(m);
                self.warm = sols
                    .into_iter()
                    .map(|s| {
                        fields.push(s.field);
                        Some(s.phi)
                    })
                    .collect();
                Ok(Gains::Field(fields))
            }
            GainBackend::Constant => {
                let mu = quat_mean(ensemble)?;
                let sigma = tangent_covariance(&mu, ensemble);
                let scale = 1.0 / (self.sigma_w * self.sigma_w);
                let rows = jacobian_rows(model, &mu, "constant gain")?;
                let axes = self.group.axes();
                Ok(Gains::Constant(
                    rows.iter()
                        .map(|row| {
                            let k = sigma * row * scale;
                            let mut masked = Tangent::zeros();
                            for &a in axes {
                                masked[a] = k[a];
                            }
                            masked
                        })
                        .collect(),
                ))
            }
        }
    }
}

/// Static FPF step on the z-rotation subgroup (`ω = 0`).
pub fn so2_fpf_step(
    state: &mut FpfState,
    model: &dyn ObservationModel,
    obs: &ObservationIncrement,
) -> Result<()> {
    if state.group() != Group::So2 {
        return Err(Error::InvalidConfig(
            "so2_fpf_step needs an SO(2) ensemble".into(),
        ));
    }
    state.step(model, &Tangent::zeros(), obs)
}
