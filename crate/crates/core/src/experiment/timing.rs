//! Wall-clock cost of one filter step as a function of the particle count.

use serde::{Deserialize, Serialize};

use super::{start_filter, track, ExperimentSpec, FilterKind};
use crate::error::Result;
use crate::gain::KernelConfig;
use crate::par;
use crate::rng::{Domain, StreamKey};
use crate::sim::{simulate_truth, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSpec {
    pub scenario: ScenarioConfig,
    pub filters: Vec<FilterKind>,
    pub n_values: Vec<usize>,
    /// Steps timed per repeat (the scenario horizon is overridden).
    pub steps: usize,
    pub repeats: usize,
    pub kernel: KernelConfig,
}

impl TimingSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            scenario: ScenarioConfig::case_a(seed),
            filters: vec![FilterKind::FpfG, FilterKind::FpfK, FilterKind::FpfC],
            n_values: vec![20, 50, 100, 200, 500],
            steps: 20,
            repeats: 5,
            kernel: KernelConfig::so3_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRow {
    pub filter: FilterKind,
    pub n: usize,
    /// Seconds per propagation-update step, fastest repeat.
    pub seconds: f64,
}

/// Times every `(filter, N)` pair on a one-thread pool, without sub-stepping.
pub fn timing_study(spec: &TimingSpec) -> Result<Vec<TimingRow>> {
    let mut scenario = spec.scenario.clone();
    scenario.horizon = spec.steps as f64 * scenario.dt;
    let mut exp = ExperimentSpec::new("timing", scenario);
    exp.transient = 0.0;
    exp.substeps = 1;
    exp.kernel = spec.kernel;
    exp.validate()?;
    par::single_threaded(|| {
        let mut rows = Vec::new();
        for &kind in &spec.filters {
            for &n in &spec.n_values {
                let mut best = f64::INFINITY;
                for rep in 0..spec.repeats.max(1) {
                    let run = rep as u64;
                    let truth = simulate_truth(&exp.scenario, run)?;
                    let initial = exp.scenario.prior.sample(
                        n,
                        &StreamKey::new(exp.scenario.seed, Domain::InitialSampling, run),
                    );
                    let filter = start_filter(&exp, kind, &initial, run)?;
                    best = best.min(track(&exp, filter, &truth)?.1);
                }
                rows.push(TimingRow {
                    filter: kind,
                    n,
                    seconds: best,
                });
            }
        }
        Ok(rows)
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log slope per filter, in the order the filters first appear.
pub fn timing_slopes(rows: &[TimingRow]) -> Vec<(FilterKind, f64)> {
    let mut kinds: Vec<FilterKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.filter) {
            kinds.push(r.filter);
        }
    }
    kinds
        .into_iter()
        .map(|k| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.filter == k)
                .map(|r| (r.n as f64, r.seconds))
                .collect();
            (k, loglog_slope(&pts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let lin: Vec<(f64, f64)> = [20.0, 50.0, 100.0].iter().map(|&n| (n, 3e-6 * n)).collect();
        assert!((loglog_slope(&lin) - 1.0).abs() < 1e-12);
        let quad: Vec<(f64, f64)> = [20.0, 50.0, 100.0, 500.0]
            .iter()
            .map(|&n| (n, 7e-9 * n * n))
            .collect();
        assert!((loglog_slope(&quad) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_study_runs() {
        let spec = TimingSpec {
            n_values: vec![10, 20],
            steps: 2,
            repeats: 1,
            ..TimingSpec::new(1)
        };
        let rows = timing_study(&spec).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.seconds > 0.0));
        assert_eq!(timing_slopes(&rows).len(), 3);
    }
}
