//! Attitude filters: the quaternion FPF, the moment (invariant EKF-type)
//! filter, and the exact Bayes posterior for the static SO(2) problem.

mod fpf;
mod moment;
mod so2;

pub use fpf::{so2_fpf_step, FpfState, GainBackend};
pub use moment::{MomentMode, MomentState};
pub use so2::{histogram, MixturePrior, So2Posterior, SO2_GRID};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::lie::{hat, Quat, Tangent};

/// Observation map `h` with optional analytic Lie derivatives.
pub trait ObservationModel: Sync {
    fn dim(&self) -> usize;

    /// Writes `h(q)` into `out[..dim]`.
    fn eval(&self, q: &Quat, out: &mut [f64]);

    /// `(E_1·h_j, E_2·h_j, E_3·h_j)` at `q`, if known in closed form.
    fn gradient(&self, q: &Quat, j: usize) -> Option<Tangent>;

    fn eval_vec(&self, q: &Quat) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(q, &mut out);
        out
    }
}

/// Accelerometer plus magnetometer: `h(q) = (-R(q)ᵀ r_g, R(q)ᵀ r_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSensors {
    pub r_g: Vector3<f64>,
    pub r_b: Vector3<f64>,
}

impl AttitudeSensors {
    pub fn new(r_g: Vector3<f64>, r_b: Vector3<f64>) -> Self {
        Self { r_g, r_b }
    }

    /// Gravity along z, magnetic field in the x-z plane at 45°.
    pub fn nominal() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(s, 0.0, s))
    }
}

impl ObservationModel for AttitudeSensors {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, q: &Quat, out: &mut [f64]) {
        let rt = q.to_rotation().transpose();
        let g = rt * self.r_g;
        let b = rt * self.r_b;
        out[..3].copy_from_slice(&[-g[0], -g[1], -g[2]]);
        out[3..6].copy_from_slice(b.as_slice());
    }

    fn gradient(&self, q: &Quat, j: usize) -> Option<Tangent> {
        // E_n·(Rᵀr) = -E_n Rᵀr = hat(Rᵀr) e_n
        let rt = q.to_rotation().transpose();
        Some(if j < 3 {
            -hat(&(rt * self.r_g)).row(j).transpose()
        } else {
            hat(&(rt * self.r_b)).row(j - 3).transpose()
        })
    }
}

pub fn attitude_h(q: &Quat, r_g: &Vector3<f64>, r_b: &Vector3<f64>) -> [f64; 6] {
    let mut out = [0.0; 6];
    AttitudeSensors::new(*r_g, *r_b).eval(q, &mut out);
    out
}

/// Planar sensor on the z-rotation subgroup: `h(θ) = (cos θ, -sin θ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct So2Sensor;

impl ObservationModel for So2Sensor {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, q: &Quat, out: &mut [f64]) {
        let (s, c) = q.z_angle().sin_cos();
        out[0] = c;
        out[1] = -s;
    }

    fn gradient(&self, q: &Quat, j: usize) -> Option<Tangent> {
        let (s, c) = q.z_angle().sin_cos();
        Some(Tangent::new(0.0, 0.0, if j == 0 { -s } else { -c }))
    }
}

/// `ΔZ` over a step of length `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationIncrement {
    pub dz: Vec<f64>,
    pub dt: f64,
}

impl ObservationIncrement {
    pub fn new(dz: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "observation step must be positive, got {dt}"
            )));
        }
        Ok(Self { dz, dt })
    }

    /// One of `parts` equal sub-increments.
    pub fn split(&self, parts: usize) -> Self {
        let k = parts as f64;
        Self {
            dz: self.dz.iter().map(|z| z / k).collect(),
            dt: self.dt / k,
        }
    }
}

/// Rows `E_n·h_j(q)` of the observation Jacobian, `m × 3`.
pub(crate) fn jacobian_rows(
    model: &dyn ObservationModel,
    q: &Quat,
    what: &'static str,
) -> Result<Vec<Tangent>> {
    (0..model.dim())
        .map(|j| model.gradient(q, j).ok_or(Error::MissingJacobian(what)))
        .collect()
}
