//! Mean/covariance filter obtained from the FPF under the concentrated
//! Gaussian ansatz. Its mean equation is the left-invariant EKF.

use serde::{Deserialize, Serialize};

use super::{jacobian_rows, ObservationIncrement, ObservationModel};
use crate::error::{Error, Result};
use crate::lie::{hat, project_psd, CovarianceMatrix, Quat, Tangent};
use nalgebra::Matrix3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentMode {
    /// Keeps the innovation-driven `-hat(KΔI) Σ̄ - Σ̄ hat(KΔI)ᵀ` covariance terms.
    Stochastic,
    /// Classical Riccati equation.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub mu: Quat,
    pub sigma: CovarianceMatrix,
}

impl MomentState {
    pub fn new(mu: Quat, sigma: CovarianceMatrix) -> Self {
        Self { mu, sigma }
    }

    /// Euler step of
    /// `dμ = μ Ω dt + μ hat(K dI)`,
    /// `dΣ̄ = (A dt - hat(K dI)) Σ̄ + Σ̄ (A dt - hat(K dI))ᵀ + σ_B² I dt - Σ̄ JᵀJ Σ̄ dt / σ_W²`
    /// with `A = -hat(ω)`, `K = Σ̄ Jᵀ / σ_W²` and `dI = ΔZ - h(μ) Δt`.
    pub fn step(
        &mut self,
        model: &dyn ObservationModel,
        omega: &Tangent,
        obs: &ObservationIncrement,
        sigma_b: f64,
        sigma_w: f64,
        mode: MomentMode,
    ) -> Result<()> {
        let m = model.dim();
        assert_eq!(
            obs.dz.len(),
            m,
            "observation increment has the wrong dimension"
        );
        let dt = obs.dt;
        let inv_r = 1.0 / (sigma_w * sigma_w);
        let rows = jacobian_rows(model, &self.mu, "moment filter")?;
        let h = model.eval_vec(&self.mu);

        let mut correction = Tangent::zeros();
        let mut info = Matrix3::zeros();
        for (j, row) in rows.iter().enumerate() {
            let di = obs.dz[j] - h[j] * dt;
            correction += self.sigma * row * (inv_r * di);
            info += row * row.transpose();
        }

        let a = -hat(omega) * dt;
        let f = match mode {
            MomentMode::Stochastic => a - hat(&correction),
            MomentMode::Deterministic => a,
        };
        let s = self.sigma;
        let next = s + f * s + s * f.transpose() + Matrix3::identity() * (sigma_b * sigma_b * dt)
            - s * info * s * (dt * inv_r);
        let dnu = omega * dt + correction;
        if !dnu.iter().all(|x| x.is_finite()) || !next.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                particle: 0,
                detail: format!("moment filter increment {dnu:?}"),
            });
        }
        self.mu = self.mu.exp_step(&dnu);
        self.sigma = project_psd(&next);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::AttitudeSensors;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let sensors = AttitudeSensors::nominal();
        let mu = Quat::normalized(0.9, 0.1, -0.2, 0.3);
        let s0 = 0.01 * Matrix3::identity();
        let mut st = MomentState::new(mu, s0);
        let dt = 0.01;
        let dz: Vec<f64> = sensors.eval_vec(&mu).iter().map(|h| h * dt).collect();
        let obs = ObservationIncrement::new(dz, dt).unwrap();
        st.step(
            &sensors,
            &Tangent::zeros(),
            &obs,
            0.0,
            0.1,
            MomentMode::Stochastic,
        )
        .unwrap();
        assert_eq!(st.mu, mu.exp_step(&Tangent::zeros()));
        let rows = jacobian_rows(&sensors, &mu, "").unwrap();
        let info: Matrix3<f64> = rows.iter().map(|r| r * r.transpose()).sum();
        let expect = s0 - s0 * info * s0 * (dt / 0.01);
        assert!((st.sigma - expect).norm() < 1e-15);
        assert!(st.sigma.trace() < s0.trace());
    }

    #[test]
    fn infinite_noise_is_pure_propagation() {
        let sensors = AttitudeSensors::nominal();
        let s0 = Matrix3::new(0.02, 0.001, 0.0, 0.001, 0.01, 0.0, 0.0, 0.0, 0.03);
        let omega = Tangent::new(0.5, -0.2, 1.0);
        let mut st = MomentState::new(Quat::IDENTITY, s0);
        let obs = ObservationIncrement::new(vec![0.3; 6], 0.01).unwrap();
        st.step(
            &sensors,
            &omega,
            &obs,
            0.2,
            1e150,
            MomentMode::Deterministic,
        )
        .unwrap();
        let a = -hat(&omega);
        let expect = s0 + (a * s0 + s0 * a.transpose()) * 0.01 + Matrix3::identity() * 0.04 * 0.01;
        assert!((st.sigma - expect).norm() < 1e-15);
        assert!(
            (st.mu.to_rotation() - Quat::IDENTITY.exp_step(&(omega * 0.01)).to_rotation()).norm()
                < 1e-15
        );
    }

    /// Three-state Kalman–Bucy filter on the tangent error `x = log(μ₀⁻¹ μ)`,
    /// linearized around a fixed `μ₀` with `ω = 0`: `dx = K (dZ - h(μ₀)dt - J x dt)`.
    #[test]
    fn small_angle_regime_matches_tangent_kalman_filter() {
        let sensors = AttitudeSensors::nominal();
        let mu0 = Quat::normalized(0.8, 0.3, -0.1, 0.5);
        let sigma_w = 0.05;
        let sigma_b = 1e-4;
        let dt = 0.01;
        let rows = jacobian_rows(&sensors, &mu0, "").unwrap();
        let j = DMatrix::from_fn(6, 3, |r, c| rows[r][c]);
        let h0 = DVector::from_vec(sensors.eval_vec(&mu0));

        let mut st = MomentState::new(mu0, 1e-3 * Matrix3::identity());
        let mut x = DVector::<f64>::zeros(3);
        let mut p = DMatrix::<f64>::identity(3, 3) * 1e-3;
        let truth = mu0.exp_step(&Tangent::new(2e-5, -1e-5, 1.5e-5));
        let y = DVector::from_vec(sensors.eval_vec(&truth)) * dt;
        for _ in 0..50 {
            let obs = ObservationIncrement::new(y.as_slice().to_vec(), dt).unwrap();
            st.step(
                &sensors,
                &Tangent::zeros(),
                &obs,
                sigma_b,
                sigma_w,
                MomentMode::Deterministic,
            )
            .unwrap();

            let k = &p * j.transpose() / (sigma_w * sigma_w);
            let innov = &y - (&h0 + &j * &x) * dt;
            let p_next = &p + DMatrix::identity(3, 3) * (sigma_b * sigma_b * dt)
                - &p * j.transpose() * &j * &p * (dt / (sigma_w * sigma_w));
            x += &k * innov;
            p = p_next;

            let err = mu0.inv().mul(&st.mu).log();
            let dx = (err - Tangent::new(x[0], x[1], x[2])).norm();
            assert!(dx < 1e-8, "mean deviates from the tangent filter by {dx}");
            let dp = (st.sigma - Matrix3::from_fn(|r, c| p[(r, c)])).norm();
            assert!(dp < 1e-8, "covariance deviates by {dp}");
        }
        // the filter has actually moved towards the truth
        assert!(mu0.inv().mul(&st.mu).log().norm() > 1e-6);
    }
}
