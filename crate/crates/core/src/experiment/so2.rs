//! Static planar problem: particle histogram against the exact posterior
//! and against the (necessarily unimodal) moment filter.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    histogram, so2_fpf_step, FpfState, GainBackend, MixturePrior, MomentMode, MomentState,
    ObservationIncrement, ObservationModel, So2Posterior, So2Sensor,
};
use crate::gain::{Group, KernelConfig};
use crate::lie::{wrap_angle, Quat};
use crate::rng::{standard_normal, Domain, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct So2Spec {
    pub prior: MixturePrior,
    /// True (static) angle.
    pub truth: f64,
    pub particles: usize,
    pub sigma_w: f64,
    pub dt: f64,
    pub horizon: f64,
    pub backend: GainBackend,
    /// Steps starting before `transient` are split into `substeps` sub-steps.
    pub transient: f64,
    pub substeps: usize,
    pub bins: usize,
    pub seed: u64,
}

impl So2Spec {
    /// Modes at ±90° (σ = 30°), truth at +90°, σ_W = 0.12, T = 0.2, N = 500,
    /// kernel gain with ε = 0.2. The whole horizon lies inside the default
    /// transient `T_f = 0.2`, so every step is split into 100 sub-steps.
    pub fn bimodal(seed: u64) -> Self {
        Self {
            prior: MixturePrior::symmetric_bimodal(FRAC_PI_2, 30f64.to_radians()),
            truth: FRAC_PI_2,
            particles: 500,
            sigma_w: 0.12,
            dt: 0.01,
            horizon: 0.2,
            backend: GainBackend::Kernel(KernelConfig::so2_default()),
            transient: 0.2,
            substeps: 100,
            bins: 20,
            seed,
        }
    }

    /// One Gaussian prior mode.
    pub fn unimodal(seed: u64, mean: f64, sd: f64, truth: f64) -> Self {
        Self {
            prior: MixturePrior::gaussian(mean, sd),
            truth,
            ..Self::bimodal(seed)
        }
    }

    fn steps(&self) -> Result<usize> {
        let r = self.horizon / self.dt;
        if !(self.dt > 0.0)
            || (r - r.round()).abs() > 1e-9
            || r < 1.0
            || self.bins == 0
            || self.substeps == 0
        {
            return Err(Error::InvalidConfig(format!(
                "invalid planar experiment setup {self:?}"
            )));
        }
        Ok(r.round() as usize)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct So2Result {
    pub times: Vec<f64>,
    /// Per time: fraction of particles in each bin.
    pub histograms: Vec<Vec<f64>>,
    /// Per time: exact posterior mass of each bin.
    pub oracle: Vec<Vec<f64>>,
    /// Per time: bin masses of the moment filter's Gaussian.
    pub moment: Vec<Vec<f64>>,
    /// Per time: `Σ |histogram - oracle|` over bins.
    pub l1: Vec<f64>,
    pub initial_angles: Vec<f64>,
    pub final_angles: Vec<f64>,
    /// Exact posterior at the final time.
    #[serde(skip)]
    pub posterior: So2Posterior,
}

fn angles(state: &FpfState) -> Vec<f64> {
    state.particles().iter().map(Quat::z_angle).collect()
}

fn gaussian_bins(mean: f64, var: f64, bins: usize) -> Vec<f64> {
    So2Posterior::new(&MixturePrior::gaussian(mean, var.max(1e-300).sqrt()), 1.0).bin_masses(bins)
}

/// Sample mean and variance of angles, unwrapped around `center`.
pub fn circular_moments(angles: &[f64], center: f64) -> (f64, f64) {
    let n = angles.len() as f64;
    let d: Vec<f64> = angles.iter().map(|a| wrap_angle(a - center)).collect();
    let m = d.iter().sum::<f64>() / n;
    let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (center + m, v)
}

pub fn so2_experiment(spec: &So2Spec) -> Result<So2Result> {
    let steps = spec.steps()?;
    let initial = spec.prior.sample_quats(
        spec.particles,
        &StreamKey::new(spec.seed, Domain::InitialSampling, 0),
    );
    let mut fpf = FpfState::new(
        initial,
        Group::So2,
        spec.backend,
        0.0,
        spec.sigma_w,
        StreamKey::new(spec.seed, Domain::ParticleProcess, 0),
    )?;
    let mut oracle = So2Posterior::new(&spec.prior, spec.sigma_w);
    // Gaussian matched to the prior's first two moments
    let (prior_mean, prior_var) = spec.prior.moments();
    let mut moment = MomentState::new(
        Quat::from_z_angle(prior_mean),
        Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, prior_var)),
    );
    // explicit Euler on the Riccati term needs Σ dt / σ_W² well below 1
    let moment_substeps =
        ((20.0 * prior_var * spec.dt / (spec.sigma_w * spec.sigma_w)).ceil() as usize).max(1);

    let sensor = So2Sensor;
    let h0 = sensor.eval_vec(&Quat::from_z_angle(spec.truth));
    let mut rw = StreamKey::new(spec.seed, Domain::TruthObservation, 0).rng(0);
    let sqrt_dt = spec.dt.sqrt();

    let mut out = So2Result {
        times: Vec::with_capacity(steps + 1),
        histograms: Vec::new(),
        oracle: Vec::new(),
        moment: Vec::new(),
        l1: Vec::new(),
        initial_angles: angles(&fpf),
        final_angles: Vec::new(),
        posterior: oracle.clone(),
    };
    let record = |t: f64,
                  fpf: &FpfState,
                  oracle: &So2Posterior,
                  moment: &MomentState,
                  out: &mut So2Result| {
        let h = histogram(&angles(fpf), spec.bins);
        let o = oracle.bin_masses(spec.bins);
        out.l1
            .push(h.iter().zip(&o).map(|(a, b)| (a - b).abs()).sum());
        out.times.push(t);
        out.histograms.push(h);
        out.oracle.push(o);
        out.moment.push(gaussian_bins(
            moment.mu.z_angle(),
            moment.sigma[(2, 2)],
            spec.bins,
        ));
    };
    record(0.0, &fpf, &oracle, &moment, &mut out);

    for n in 0..steps {
        let t = n as f64 * spec.dt;
        let dz: Vec<f64> = h0
            .iter()
            .map(|h| h * spec.dt + spec.sigma_w * sqrt_dt * standard_normal(&mut rw))
            .collect();
        let obs = ObservationIncrement::new(dz, spec.dt)?;
        let parts = if t < spec.transient { spec.substeps } else { 1 };
        let part = obs.split(parts);
        for _ in 0..parts {
            so2_fpf_step(&mut fpf, &sensor, &part)?;
        }
        oracle.update(&obs);
        let mpart = obs.split(moment_substeps);
        for _ in 0..moment_substeps {
            moment.step(
                &sensor,
                &Vector3::zeros(),
                &mpart,
                0.0,
                spec.sigma_w,
                MomentMode::Deterministic,
            )?;
        }
        record((n + 1) as f64 * spec.dt, &fpf, &oracle, &moment, &mut out);
    }
    out.final_angles = angles(&fpf);
    out.posterior = oracle;
    Ok(out)
}

/// Number of clusters of consecutive (periodic) bins holding at least
/// `min_mass` each, separated by at least one lighter bin.
pub fn count_modes(bins: &[f64], min_mass: f64) -> usize {
    let k = bins.len();
    let heavy = |i: usize| bins[i % k] >= min_mass;
    let starts = (0..k).filter(|&i| heavy(i) && !heavy(i + k - 1)).count();
    if starts == 0 && (0..k).all(heavy) {
        1
    } else {
        starts
    }
}
