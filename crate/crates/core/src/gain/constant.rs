//! Constant-gain approximation for concentrated distributions.

use nalgebra::{Matrix3, Matrix3xX, Vector3};

use super::ObservationChannel;
use crate::lie::{hat, quat_mean_with_gap, tangent_offsets, CovarianceMatrix, Quat};

/// Closed-form gain `sign · Σ̄ hat(μᵀr)ᵀ / σ_W²` for the sensor
/// `h(R) = sign · Rᵀ r` (accelerometer: sign = -1, magnetometer: sign = +1).
/// Column `j` is the gain of observation coordinate `j`.
pub fn constant_gain(
    mean: &Quat,
    sigma: &CovarianceMatrix,
    r: &Vector3<f64>,
    noise_scale: f64,
    sign: f64,
) -> Matrix3<f64> {
    let v = mean.to_rotation().transpose() * r;
    sigma * hat(&v).transpose() * (sign / (noise_scale * noise_scale))
}

/// Particle estimate of `E[K | Z]`: column `j` is
/// `(1/N) Σ (h_j(xⁱ) - ĥ_j) ξⁱ / σ_W²`, with `ξⁱ` the tangent offset of
/// particle `i` from the ensemble mean.
pub fn empirical_constant_gain(
    ensemble: &[Quat],
    channels: &[ObservationChannel],
) -> Matrix3xX<f64> {
    assert!(
        ensemble.len() >= 2,
        "constant gain needs at least two particles"
    );
    let (mean, _) = quat_mean_with_gap(ensemble);
    let offsets = tangent_offsets(&mean, ensemble);
    let n = ensemble.len() as f64;
    let mut k = Matrix3xX::zeros(channels.len());
    for (j, ch) in channels.iter().enumerate() {
        let centered = ch.scaled_centered();
        let col = offsets
            .iter()
            .zip(&centered)
            .fold(Vector3::zeros(), |acc, (x, c)| acc + x * *c)
            / n;
        k.set_column(j, &col);
    }
    k
}
