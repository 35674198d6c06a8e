//! Ground-truth attitude trajectories and sensor increments.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{AttitudeSensors, ObservationModel};
use crate::lie::{sample_concentrated, Quat, Tangent};
use crate::rng::{standard_normal, Domain, StreamKey};

/// Body angular velocity used by the truth and passed to every filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OmegaProfile {
    /// `(sin(2πt/15), -sin(2πt/18 + π/20), cos(2πt/17))`.
    Sinusoidal,
    Zero,
    /// One sample per step, held constant over the step; the last sample
    /// is held past the end.
    Samples(Vec<[f64; 3]>),
}

impl OmegaProfile {
    pub fn at(&self, t: f64, step: usize) -> Tangent {
        match self {
            OmegaProfile::Sinusoidal => omega_profile(t),
            OmegaProfile::Zero => Tangent::zeros(),
            OmegaProfile::Samples(s) => {
                let w = s.get(step).or(s.last()).copied().unwrap_or([0.0; 3]);
                Tangent::from(w)
            }
        }
    }
}

pub fn omega_profile(t: f64) -> Tangent {
    Tangent::new(
        (2.0 * PI * t / 15.0).sin(),
        -(2.0 * PI * t / 18.0 + PI / 20.0).sin(),
        (2.0 * PI * t / 17.0).cos(),
    )
}

/// Concentrated Gaussian prior `mean ⊗ exp(v)`, `v ~ N(0, σ₀² I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: Quat,
    pub sigma0: f64,
}

impl Prior {
    pub fn covariance(&self) -> Matrix3<f64> {
        self.sigma0 * self.sigma0 * Matrix3::identity()
    }

    pub fn sample(&self, n: usize, key: &StreamKey) -> Vec<Quat> {
        sample_concentrated(&self.mean, &self.covariance(), n, key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruthInit {
    Fixed(Quat),
    /// One draw from the prior per run.
    FromPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Horizon `T` (s).
    pub horizon: f64,
    pub dt: f64,
    pub sigma_b: f64,
    pub sigma_w: f64,
    pub r_g: [f64; 3],
    pub r_b: [f64; 3],
    pub omega: OmegaProfile,
    pub truth_init: TruthInit,
    pub prior: Prior,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Small initial uncertainty (σ₀ = 30°), truth drawn from the prior.
    pub fn case_a(seed: u64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            horizon: 3.0,
            dt: 0.01,
            sigma_b: 0.2,
            sigma_w: 0.05236,
            r_g: [0.0, 0.0, 1.0],
            r_b: [s, 0.0, s],
            omega: OmegaProfile::Sinusoidal,
            truth_init: TruthInit::FromPrior,
            prior: Prior {
                mean: Quat::IDENTITY,
                // 30°, rounded as published
                #[allow(clippy::approx_constant)]
                sigma0: 0.5236,
            },
            seed,
        }
    }

    /// Large initial uncertainty (σ₀ = 60°), truth at 180° about (3, 1, 4).
    pub fn case_b(seed: u64) -> Self {
        Self {
            truth_init: TruthInit::Fixed(Quat::from_axis_angle(&Vector3::new(3.0, 1.0, 4.0), PI)),
            prior: Prior {
                mean: Quat::IDENTITY,
                #[allow(clippy::approx_constant)]
                sigma0: 1.0472,
            },
            ..Self::case_a(seed)
        }
    }

    pub fn sensors(&self) -> AttitudeSensors {
        AttitudeSensors::new(Vector3::from(self.r_g), Vector3::from(self.r_b))
    }

    /// Number of steps `T / dt`, which must be an integer to within 1e-9.
    pub fn steps(&self) -> Result<usize> {
        if !(self.horizon > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon {} and dt {} must be positive",
                self.horizon, self.dt
            )));
        }
        if !(self.sigma_b >= 0.0) || !(self.sigma_w >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise scales must be non-negative".into(),
            ));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 || steps < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps().map(|_| ())
    }
}

/// Truth trajectory on the grid `t_n = n Δt`, `n = 0..=steps`, with the
/// observation increment `ΔZ_n` over `[t_n, t_{n+1}]` for `n < steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub dt: f64,
    pub t: Vec<f64>,
    pub q: Vec<Quat>,
    pub dz: Vec<Vec<f64>>,
}

impl TruthRecord {
    pub fn steps(&self) -> usize {
        self.dz.len()
    }

    /// Writes `t, q0..q3, dZ1..dZm`, 17 significant digits. The terminal row
    /// has empty `dZ` cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let m = self.dz.first().map_or(0, Vec::len);
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "t".to_string(),
            "q0".into(),
            "q1".into(),
            "q2".into(),
            "q3".into(),
        ];
        header.extend((1..=m).map(|j| format!("dZ{j}")));
        out.write_record(&header)?;
        for (n, (t, q)) in self.t.iter().zip(&self.q).enumerate() {
            let mut row: Vec<String> = std::iter::once(*t).chain(q.as_array()).map(fmt17).collect();
            match self.dz.get(n) {
                Some(d) => row.extend(d.iter().copied().map(fmt17)),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let m = rd.headers()?.len().saturating_sub(5);
        let (mut t, mut q, mut dz) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("bad number {:?}: {e}", &rec[k])))
            };
            t.push(num(0)?);
            q.push(Quat::new(num(1)?, num(2)?, num(3)?, num(4)?));
            if m > 0 && !rec[5].is_empty() {
                dz.push((5..5 + m).map(num).collect::<Result<Vec<_>>>()?);
            }
        }
        let dt = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
        Ok(Self { dt, t, q, dz })
    }
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Truth for Monte Carlo run `run` under the scenario's attitude sensors.
pub fn simulate_truth(cfg: &ScenarioConfig, run: u64) -> Result<TruthRecord> {
    simulate_with_model(cfg, &cfg.sensors(), run)
}

/// `q_{n+1} = q_n ⊗ exp(ω(t_n) Δt + σ_B ΔB_n)`, `ΔZ_n = h(q_n) Δt + σ_W ΔW_n`.
pub fn simulate_with_model(
    cfg: &ScenarioConfig,
    model: &dyn ObservationModel,
    run: u64,
) -> Result<TruthRecord> {
    let steps = cfg.steps()?;
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let m = model.dim();
    let mut q = match cfg.truth_init {
        TruthInit::Fixed(q) => q,
        TruthInit::FromPrior => cfg
            .prior
            .sample(1, &StreamKey::new(cfg.seed, Domain::TruthInit, run))[0],
    };
    let mut rb = StreamKey::new(cfg.seed, Domain::TruthProcess, run).rng(0);
    let mut rw = StreamKey::new(cfg.seed, Domain::TruthObservation, run).rng(0);

    let mut rec = TruthRecord {
        dt,
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        dz: Vec::with_capacity(steps),
    };
    let mut h = vec![0.0; m];
    for n in 0..steps {
        let t = n as f64 * dt;
        rec.t.push(t);
        rec.q.push(q);
        model.eval(&q, &mut h);
        rec.dz.push(
            h.iter()
                .map(|hj| hj * dt + cfg.sigma_w * sqrt_dt * standard_normal(&mut rw))
                .collect(),
        );
        let db = Tangent::new(
            standard_normal(&mut rb),
            standard_normal(&mut rb),
            standard_normal(&mut rb),
        );
        q = q.exp_step(&(cfg.omega.at(t, n) * dt + db * (cfg.sigma_b * sqrt_dt)));
    }
    rec.t.push(steps as f64 * dt);
    rec.q.push(q);
    Ok(rec)
}

/// Sampled observation `Y_n = ΔZ_n / Δt`.
pub fn discrete_observation(record: &TruthRecord, n: usize) -> Vec<f64> {
    record.dz[n].iter().map(|z| z / record.dt).collect()
}
