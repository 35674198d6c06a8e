//! Exact posterior for the static planar problem, evaluated on a grid.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ObservationIncrement;
use crate::lie::{wrap_angle, Quat};
use crate::rng::{standard_normal, StreamKey};

/// Grid resolution of [`So2Posterior`].
pub const SO2_GRID: usize = 2048;

/// Equal-or-weighted mixture of wrapped Gaussians on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    /// `(weight, mean, standard deviation)`; weights need not be normalized.
    pub components: Vec<(f64, f64, f64)>,
}

impl MixturePrior {
    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Self {
            components: vec![(1.0, mean, sd)],
        }
    }

    /// Two equally weighted modes at `±mean`.
    pub fn symmetric_bimodal(mean: f64, sd: f64) -> Self {
        Self {
            components: vec![(0.5, mean, sd), (0.5, -mean, sd)],
        }
    }

    fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.0).sum()
    }

    /// Normalized density at `theta`, summing the wraps `k = -3..=3`.
    pub fn density(&self, theta: f64) -> f64 {
        let w = self.total_weight();
        self.components
            .iter()
            .map(|&(a, m, s)| {
                let norm = a / (w * s * TAU.sqrt());
                (-3..=3)
                    .map(|k| {
                        let d = theta - m + TAU * f64::from(k);
                        (-0.5 * d * d / (s * s)).exp()
                    })
                    .sum::<f64>()
                    * norm
            })
            .sum()
    }

    /// Mean and variance of the mixture on the line (wrapping ignored).
    pub fn moments(&self) -> (f64, f64) {
        let w = self.total_weight();
        let mean = self.components.iter().map(|&(a, m, _)| a * m).sum::<f64>() / w;
        let second = self
            .components
            .iter()
            .map(|&(a, m, s)| a * (m * m + s * s))
            .sum::<f64>()
            / w;
        (mean, second - mean * mean)
    }

    /// Draws `n` angles; sample `i` uses its own stream `key.rng(i)`.
    pub fn sample(&self, n: usize, key: &StreamKey) -> Vec<f64> {
        let w = self.total_weight();
        crate::par::map_indexed(n, |i| {
            let mut rng = key.rng(i as u64);
            let u: f64 = rng.random::<f64>() * w;
            let mut acc = 0.0;
            let mut pick = self.components.len() - 1;
            for (c, comp) in self.components.iter().enumerate() {
                acc += comp.0;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            let (_, m, s) = self.components[pick];
            wrap_angle(m + s * standard_normal(&mut rng))
        })
    }

    pub fn sample_quats(&self, n: usize, key: &StreamKey) -> Vec<Quat> {
        self.sample(n, key)
            .into_iter()
            .map(Quat::from_z_angle)
            .collect()
    }
}

/// Posterior `∝ exp(hᵀ(θ) Z_t / σ_W²) ρ₀(θ)` for `h(θ) = (cos θ, -sin θ)`.
/// The `|h|² t` term of the likelihood is constant on the circle and drops
/// out under normalization.
#[derive(Debug, Clone)]
pub struct So2Posterior {
    grid: Vec<f64>,
    log_prior: Vec<f64>,
    density: Vec<f64>,
    z: [f64; 2],
    t: f64,
    sigma_w: f64,
}

impl So2Posterior {
    pub fn new(prior: &MixturePrior, sigma_w: f64) -> Self {
        Self::with_grid(prior, sigma_w, SO2_GRID)
    }

    pub fn with_grid(prior: &MixturePrior, sigma_w: f64, points: usize) -> Self {
        let grid: Vec<f64> = (0..points)
            .map(|k| -PI + TAU * k as f64 / points as f64)
            .collect();
        let log_prior = grid.iter().map(|&th| prior.density(th).ln()).collect();
        let mut post = Self {
            grid,
            log_prior,
            density: Vec::new(),
            z: [0.0; 2],
            t: 0.0,
            sigma_w,
        };
        post.recompute();
        post
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn z(&self) -> [f64; 2] {
        self.z
    }

    fn cell(&self) -> f64 {
        TAU / self.grid.len() as f64
    }

    /// Periodic trapezoid rule.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell()
    }

    pub fn update(&mut self, obs: &ObservationIncrement) {
        assert_eq!(obs.dz.len(), 2, "planar observation has two components");
        self.z[0] += obs.dz[0];
        self.z[1] += obs.dz[1];
        self.t += obs.dt;
        self.recompute();
    }

    fn recompute(&mut self) {
        let s2 = self.sigma_w * self.sigma_w;
        let logs: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.log_prior)
            .map(|(&th, lp)| lp + (th.cos() * self.z[0] - th.sin() * self.z[1]) / s2)
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let un: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mass = un.iter().sum::<f64>() * self.cell();
        self.density = un.into_iter().map(|d| d / mass).collect();
    }

    pub fn mode(&self) -> f64 {
        let k = (0..self.density.len())
            .max_by(|&a, &b| self.density[a].total_cmp(&self.density[b]))
            .unwrap();
        self.grid[k]
    }

    /// Mean and variance of `θ` unwrapped into `[center - π, center + π)`.
    pub fn moments(&self, center: f64) -> (f64, f64) {
        let c = self.cell();
        let shifted: Vec<f64> = self
            .grid
            .iter()
            .map(|&th| center + wrap_angle(th - center))
            .collect();
        let mean = shifted
            .iter()
            .zip(&self.density)
            .map(|(x, d)| x * d)
            .sum::<f64>()
            * c;
        let var = shifted
            .iter()
            .zip(&self.density)
            .map(|(x, d)| (x - mean).powi(2) * d)
            .sum::<f64>()
            * c;
        (mean, var)
    }

    /// Probability mass of `bins` equal bins on `[-π, π)`, from the
    /// piecewise-linear density.
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        let g = self.grid.len();
        let c = self.cell();
        // cdf at grid node k, and at the wrap point 2π
        let mut cdf = Vec::with_capacity(g + 1);
        cdf.push(0.0);
        for k in 0..g {
            let next = self.density[(k + 1) % g];
            cdf.push(cdf[k] + 0.5 * (self.density[k] + next) * c);
        }
        let at = |x: f64| -> f64 {
            // x in [0, 2π] measured from -π
            let pos = (x / c).clamp(0.0, g as f64);
            let k = (pos.floor() as usize).min(g - 1);
            let f = pos - k as f64;
            let (d0, d1) = (self.density[k], self.density[(k + 1) % g]);
            cdf[k] + c * (d0 * f + 0.5 * (d1 - d0) * f * f)
        };
        let width = TAU / bins as f64;
        (0..bins)
            .map(|b| at(width * (b + 1) as f64) - at(width * b as f64))
            .collect()
    }
}

/// Fraction of `angles` in each of `bins` equal bins on `[-π, π)`.
pub fn histogram(angles: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &a in angles {
        let x = (wrap_angle(a) + PI) / TAU * bins as f64;
        h[(x.floor() as usize).min(bins - 1)] += 1.0;
    }
    let n = angles.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}
