//! Monte Carlo harness: attitude experiments, parameter sweeps, the timing
//! study and the bimodal SO(2) study.

mod output;
mod so2;
mod timing;

pub use output::{write_attitude, write_so2, write_sweep, write_timing, write_truth};
pub use so2::{circular_moments, count_modes, so2_experiment, So2Result, So2Spec};
pub use timing::{loglog_slope, timing_slopes, timing_study, TimingRow, TimingSpec};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    FpfState, GainBackend, MomentMode, MomentState, ObservationIncrement, ObservationModel,
};
use crate::gain::{Group, KernelConfig};
use crate::lie::{rotation_angle_error, Quat, Tangent};
use crate::par;
use crate::rng::{Domain, StreamKey};
use crate::sim::{simulate_truth, ScenarioConfig, TruthRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// FPF with the Galerkin gain.
    FpfG,
    /// FPF with the kernel gain.
    FpfK,
    /// FPF with the constant gain.
    FpfC,
    /// Moment filter, deterministic covariance equation.
    LiekfDet,
    /// Moment filter with the innovation-driven covariance terms.
    LiekfStoch,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] = [
        FilterKind::FpfG,
        FilterKind::FpfK,
        FilterKind::FpfC,
        FilterKind::LiekfDet,
        FilterKind::LiekfStoch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::FpfG => "fpf-g",
            FilterKind::FpfK => "fpf-k",
            FilterKind::FpfC => "fpf-c",
            FilterKind::LiekfDet => "liekf-det",
            FilterKind::LiekfStoch => "liekf-stoch",
        }
    }

    pub fn is_particle_filter(self) -> bool {
        matches!(self, FilterKind::FpfG | FilterKind::FpfK | FilterKind::FpfC)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown filter {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub filters: Vec<FilterKind>,
    /// Monte Carlo runs `M`.
    pub runs: usize,
    /// Particles `N`.
    pub particles: usize,
    /// Steps starting before `T_f` are split into `N_f` sub-steps.
    pub transient: f64,
    pub substeps: usize,
    pub kernel: KernelConfig,
}

impl ExperimentSpec {
    /// Desk-scale defaults around a scenario: every filter, N = 100, M = 100,
    /// `T_f = 0.2`, `N_f = 100`.
    pub fn new(name: impl Into<String>, scenario: ScenarioConfig) -> Self {
        Self {
            name: name.into(),
            scenario,
            filters: FilterKind::ALL.to_vec(),
            runs: 100,
            particles: 100,
            transient: 0.2,
            substeps: 100,
            kernel: KernelConfig::so3_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.kernel.validate()?;
        if self.runs == 0 || self.particles == 0 || self.substeps == 0 {
            return Err(Error::InvalidConfig(
                "runs, particles and substeps must all be at least 1".into(),
            ));
        }
        if !(0.0..=self.scenario.horizon).contains(&self.transient) {
            return Err(Error::InvalidConfig(format!(
                "transient horizon {} outside [0, T]",
                self.transient
            )));
        }
        if self.filters.is_empty() {
            return Err(Error::InvalidConfig("no filters selected".into()));
        }
        Ok(())
    }
}

/// Results of one filter over all Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterMetrics {
    pub filter: FilterKind,
    /// Indices of the runs that completed.
    pub completed: Vec<usize>,
    /// `δφ_t` per completed run, on the record's time grid.
    pub errors: Vec<Vec<f64>>,
    /// `(run, message)` for every failed run.
    pub failures: Vec<(usize, String)>,
    /// `δφ̂_t`, averaged over completed runs.
    pub mean_error: Vec<f64>,
    /// `⟨δφʲ⟩_T` per completed run.
    pub time_averages: Vec<f64>,
    /// `⟨δφ̂⟩_T`.
    pub ta_error: f64,
    /// Sample standard deviation of `⟨δφʲ⟩_T` across runs.
    pub ta_std: f64,
    /// Mean wall time of one propagation-update step (including sub-steps).
    pub step_seconds: f64,
}

impl FilterMetrics {
    /// Per completed run, the first time `δφ_t < ½ δφ_0`.
    pub fn halving_times(&self, times: &[f64]) -> Vec<Option<f64>> {
        self.errors.iter().map(|e| halving_time(e, times)).collect()
    }

    /// Median halving time over completed runs; runs that never halve count as +∞.
    pub fn median_halving_time(&self, times: &[f64]) -> f64 {
        let mut v: Vec<f64> = self
            .halving_times(times)
            .into_iter()
            .map(|t| t.unwrap_or(f64::INFINITY))
            .collect();
        median(&mut v)
    }
}

pub fn halving_time(errors: &[f64], times: &[f64]) -> Option<f64> {
    let target = 0.5 * errors[0];
    errors
        .iter()
        .zip(times)
        .find(|(e, _)| **e < target)
        .map(|(_, t)| *t)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable {
    pub times: Vec<f64>,
    pub filters: Vec<FilterMetrics>,
}

impl MetricTable {
    pub fn get(&self, kind: FilterKind) -> Option<&FilterMetrics> {
        self.filters.iter().find(|f| f.filter == kind)
    }
}

enum Running {
    Fpf(FpfState),
    Moment(MomentState, MomentMode),
}

impl Running {
    fn step(
        &mut self,
        model: &dyn ObservationModel,
        omega: &Tangent,
        obs: &ObservationIncrement,
        sigma_b: f64,
        sigma_w: f64,
    ) -> Result<()> {
        match self {
            Running::Fpf(s) => s.step(model, omega, obs),
            Running::Moment(s, mode) => s.step(model, omega, obs, sigma_b, sigma_w, *mode),
        }
    }

    fn estimate(&self) -> Result<Quat> {
        match self {
            Running::Fpf(s) => s.estimate(),
            Running::Moment(s, _) => Ok(s.mu),
        }
    }
}

fn start_filter(
    spec: &ExperimentSpec,
    kind: FilterKind,
    initial: &[Quat],
    run: u64,
) -> Result<Running> {
    let sc = &spec.scenario;
    let fpf = |backend| {
        let key = StreamKey::new(sc.seed, Domain::ParticleProcess, run);
        FpfState::new(
            initial.to_vec(),
            Group::So3,
            backend,
            sc.sigma_b,
            sc.sigma_w,
            key,
        )
        .map(Running::Fpf)
    };
    let moment = |mode| {
        Ok(Running::Moment(
            MomentState::new(sc.prior.mean, sc.prior.covariance()),
            mode,
        ))
    };
    match kind {
        FilterKind::FpfG => fpf(GainBackend::Galerkin),
        FilterKind::FpfK => fpf(GainBackend::Kernel(spec.kernel)),
        FilterKind::FpfC => fpf(GainBackend::Constant),
        FilterKind::LiekfDet => moment(MomentMode::Deterministic),
        FilterKind::LiekfStoch => moment(MomentMode::Stochastic),
    }
}

/// Runs one filter against one truth record and returns `δφ_t` on the
/// record's grid plus the mean wall time per step.
fn track(
    spec: &ExperimentSpec,
    mut filter: Running,
    truth: &TruthRecord,
) -> Result<(Vec<f64>, f64)> {
    let sc = &spec.scenario;
    let model = sc.sensors();
    let mut errors = Vec::with_capacity(truth.q.len());
    errors.push(rotation_angle_error(&filter.estimate()?, &truth.q[0]));
    let mut elapsed = 0.0;
    for n in 0..truth.steps() {
        let t = truth.t[n];
        let omega = sc.omega.at(t, n);
        let obs = ObservationIncrement::new(truth.dz[n].clone(), truth.dt)?;
        let start = Instant::now();
        if t < spec.transient && spec.substeps > 1 {
            let part = obs.split(spec.substeps);
            for _ in 0..spec.substeps {
                filter.step(&model, &omega, &part, sc.sigma_b, sc.sigma_w)?;
            }
        } else {
            filter.step(&model, &omega, &obs, sc.sigma_b, sc.sigma_w)?;
        }
        elapsed += start.elapsed().as_secs_f64();
        errors.push(rotation_angle_error(&filter.estimate()?, &truth.q[n + 1]));
    }
    Ok((errors, elapsed / truth.steps() as f64))
}

/// Left-Riemann time average `(1/T) Σ_{n<steps} δφ_n Δt`.
pub fn time_average(errors: &[f64], dt: f64) -> f64 {
    let steps = errors.len() - 1;
    par::ordered_sum(errors[..steps].iter().copied()) * dt / (steps as f64 * dt)
}

type RunResult = Vec<Result<(Vec<f64>, f64)>>;

/// All filters over all runs. Every filter of run `j` sees the same truth,
/// the same observations and the same initial ensemble.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricTable> {
    spec.validate()?;
    let sc = &spec.scenario;
    let steps = sc.steps()?;

    let per_run: Vec<Result<(TruthRecord, RunResult)>> = par::map_indexed(spec.runs, |j| {
        let run = j as u64;
        let truth = simulate_truth(sc, run)?;
        let initial = sc.prior.sample(
            spec.particles,
            &StreamKey::new(sc.seed, Domain::InitialSampling, run),
        );
        let results = spec
            .filters
            .iter()
            .map(|&kind| {
                start_filter(spec, kind, &initial, run).and_then(|f| track(spec, f, &truth))
            })
            .collect();
        Ok((truth, results))
    });

    let mut times = Vec::new();
    let mut collected: Vec<RunResult> = Vec::with_capacity(spec.runs);
    for r in per_run {
        let (truth, results) = r?;
        if times.is_empty() {
            times = truth.t;
        }
        collected.push(results);
    }

    let filters = spec
        .filters
        .iter()
        .enumerate()
        .map(|(fi, &kind)| {
            let mut m = FilterMetrics {
                filter: kind,
                completed: Vec::new(),
                errors: Vec::new(),
                failures: Vec::new(),
                mean_error: vec![0.0; steps + 1],
                time_averages: Vec::new(),
                ta_error: f64::NAN,
                ta_std: f64::NAN,
                step_seconds: 0.0,
            };
            let mut secs = 0.0;
            for (j, results) in collected.iter_mut().enumerate() {
                match std::mem::replace(&mut results[fi], Err(Error::InvalidConfig(String::new())))
                {
                    Ok((e, s)) => {
                        m.completed.push(j);
                        m.time_averages.push(time_average(&e, sc.dt));
                        m.errors.push(e);
                        secs += s;
                    }
                    Err(err) => m.failures.push((j, err.to_string())),
                }
            }
            let done = m.completed.len();
            if done > 0 {
                for (n, slot) in m.mean_error.iter_mut().enumerate() {
                    *slot = par::ordered_sum(m.errors.iter().map(|e| e[n])) / done as f64;
                }
                m.ta_error = par::ordered_sum(m.time_averages.iter().copied()) / done as f64;
                m.ta_std = if done > 1 {
                    let ss =
                        par::ordered_sum(m.time_averages.iter().map(|a| (a - m.ta_error).powi(2)));
                    (ss / (done - 1) as f64).sqrt()
                } else {
                    0.0
                };
                m.step_seconds = secs / done as f64;
            } else {
                m.mean_error.iter_mut().for_each(|x| *x = f64::NAN);
            }
            m
        })
        .collect();
    Ok(MetricTable { times, filters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SigmaB,
    SigmaW,
    N,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SigmaB => "sigma_b",
            SweepParam::SigmaW => "sigma_w",
            SweepParam::N => "n",
        }
    }

    /// The grid studied for each parameter.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::SigmaB => vec![0.05, 0.2, 0.5, 1.0],
            SweepParam::SigmaW => vec![0.01745, 0.03491, 0.05236, 0.08727],
            SweepParam::N => vec![20.0, 50.0, 100.0, 200.0],
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigma_b" => Ok(SweepParam::SigmaB),
            "sigma_w" => Ok(SweepParam::SigmaW),
            "n" => Ok(SweepParam::N),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {s:?} (sigma_b, sigma_w or n)"
            ))),
        }
    }
}

/// One experiment per value. The seed is shared, so the noise draws are
/// paired across values.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    spec: &ExperimentSpec,
) -> Result<Vec<(f64, MetricTable)>> {
    values
        .iter()
        .map(|&v| {
            let mut s = spec.clone();
            match param {
                SweepParam::SigmaB => s.scenario.sigma_b = v,
                SweepParam::SigmaW => s.scenario.sigma_w = v,
                SweepParam::N => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "particle count must be a positive integer, got {v}"
                        )));
                    }
                    s.particles = v as usize;
                }
            }
            run_experiment(&s).map(|t| (v, t))
        })
        .collect()
}

/// Standard deviation in degrees of the sampled observation `ΔZ/Δt`.
pub fn discrete_noise_degrees(sigma_w: f64, dt: f64) -> f64 {
    (sigma_w / dt.sqrt()).to_degrees()
}
