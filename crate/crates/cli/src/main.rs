//! `bench`: Monte Carlo runs of the feedback particle filter and its
//! moment-filter baselines, written as CSV plus a JSON manifest.
//!
//! `FPF_THREADS` sets the worker-thread count; everything else is a flag.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpf_core::experiment::{
    run_experiment, so2_experiment, sweep, timing_slopes, timing_study, write_attitude, write_so2,
    write_sweep, write_timing, ExperimentSpec, FilterKind, So2Spec, SweepParam, TimingSpec,
};
use fpf_core::filters::GainBackend;
use fpf_core::gain::KernelConfig;
use fpf_core::par;
use fpf_core::sim::ScenarioConfig;

const THREADS_VAR: &str = "FPF_THREADS";

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Feedback particle filter benchmarks on SO(3) and SO(2)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attitude estimation, case a (truth drawn from the prior) or b (truth at 180°).
    Attitude(AttitudeArgs),
    /// Repeat the attitude experiment over a grid of one parameter.
    Sweep(SweepArgs),
    /// Per-step wall-clock cost against N on one thread.
    Timing(TimingArgs),
    /// Static SO(2) problem with a bimodal prior against the exact posterior.
    Bimodal(BimodalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    A,
    B,
}

#[derive(Args)]
struct Common {
    /// Comma-separated subset of fpf-g, fpf-k, fpf-c, liekf-det, liekf-stoch.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "fpf-g,fpf-k,fpf-c,liekf-det,liekf-stoch"
    )]
    filters: Vec<String>,
    /// Particles per filter.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Monte Carlo runs.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Steps before this time are sub-stepped.
    #[arg(long, default_value_t = 0.2)]
    transient: f64,
    /// Sub-steps per step during the transient.
    #[arg(long, default_value_t = 100)]
    substeps: usize,
    /// Kernel bandwidth for fpf-k.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Overrides the horizon T in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AttitudeArgs {
    #[arg(long, value_enum, default_value = "a")]
    case: Case,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    /// sigma_b, sigma_w or n.
    #[arg(long)]
    param: String,
    /// Comma-separated values; defaults to the standard grid for the parameter.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, value_enum, default_value = "a")]
    case: Case,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, value_delimiter = ',', default_value = "fpf-g,fpf-k,fpf-c")]
    filters: Vec<String>,
    #[arg(
        long = "n-values",
        value_delimiter = ',',
        default_value = "20,50,100,200,500"
    )]
    n_values: Vec<usize>,
    /// Steps timed per repeat.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Repeats per (filter, N); the fastest one is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum So2Gain {
    Kernel,
    Galerkin,
}

#[derive(Args)]
struct BimodalArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_enum, default_value = "kernel")]
    gain: So2Gain,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Sub-steps per observation step during the transient (here the whole horizon).
    #[arg(long, default_value_t = 100)]
    substeps: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_filters(names: &[String]) -> Result<Vec<FilterKind>, String> {
    names
        .iter()
        .map(|s| s.trim().parse::<FilterKind>().map_err(|e| e.to_string()))
        .collect()
}

fn scenario(case: Case, seed: u64) -> ScenarioConfig {
    match case {
        Case::A => ScenarioConfig::case_a(seed),
        Case::B => ScenarioConfig::case_b(seed),
    }
}

fn experiment_spec(name: &str, case: Case, c: &Common) -> Result<ExperimentSpec, String> {
    let mut sc = scenario(case, c.seed);
    if let Some(t) = c.horizon {
        sc.horizon = t;
    }
    let mut spec = ExperimentSpec::new(name, sc);
    spec.filters = parse_filters(&c.filters)?;
    spec.particles = c.n;
    spec.runs = c.runs;
    spec.transient = c.transient.min(spec.scenario.horizon);
    spec.substeps = c.substeps;
    spec.kernel = KernelConfig {
        epsilon: c.epsilon,
        ..KernelConfig::so3_default()
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn case_name(case: Case) -> &'static str {
    match case {
        Case::A => "a",
        Case::B => "b",
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let err = |e: fpf_core::Error| e.to_string();
    match cli.command {
        Command::Attitude(a) => {
            let spec = experiment_spec(
                &format!("attitude_{}", case_name(a.case)),
                a.case,
                &a.common,
            )?;
            let table = run_experiment(&spec).map_err(err)?;
            for f in &table.filters {
                println!(
                    "{:<12} time-averaged error {:.5} rad (std {:.5}), {} failed runs",
                    f.filter.name(),
                    f.ta_error,
                    f.ta_std,
                    f.failures.len()
                );
            }
            report(&write_attitude(&a.common.out, &spec, &table).map_err(err)?);
        }
        Command::Sweep(s) => {
            let param: SweepParam = s.param.parse().map_err(err)?;
            let values = if s.values.is_empty() {
                param.default_values()
            } else {
                s.values.clone()
            };
            let name = format!("sweep_{}_{}", param.name(), case_name(s.case));
            let spec = experiment_spec(&name, s.case, &s.common)?;
            let results = sweep(param, &values, &spec).map_err(err)?;
            for (v, table) in &results {
                for f in &table.filters {
                    println!(
                        "{}={v:<10} {:<12} {:.5} ± {:.5}",
                        param.name(),
                        f.filter.name(),
                        f.ta_error,
                        f.ta_std
                    );
                }
            }
            report(&write_sweep(&s.common.out, &name, param, &spec, &results).map_err(err)?);
        }
        Command::Timing(t) => {
            let spec = TimingSpec {
                filters: parse_filters(&t.filters)?,
                n_values: t.n_values.clone(),
                steps: t.steps,
                repeats: t.repeats,
                ..TimingSpec::new(t.seed)
            };
            let rows = timing_study(&spec).map_err(err)?;
            for r in &rows {
                println!(
                    "{:<6} N={:<5} {:.3e} s/step",
                    r.filter.name(),
                    r.n,
                    r.seconds
                );
            }
            let slopes = timing_slopes(&rows);
            for (k, s) in &slopes {
                println!("{:<6} log-log slope {s:.2}", k.name());
            }
            report(&write_timing(&t.out, "timing", &spec, &rows, &slopes).map_err(err)?);
        }
        Command::Bimodal(b) => {
            let backend = match b.gain {
                So2Gain::Kernel => GainBackend::Kernel(KernelConfig {
                    epsilon: b.epsilon,
                    ..KernelConfig::so2_default()
                }),
                So2Gain::Galerkin => GainBackend::Galerkin,
            };
            let spec = So2Spec {
                particles: b.n,
                backend,
                substeps: b.substeps,
                bins: b.bins,
                ..So2Spec::bimodal(b.seed)
            };
            let result = so2_experiment(&spec).map_err(err)?;
            if let Some(l1) = result.l1.last() {
                println!("final L1 distance to the exact posterior: {l1:.4}");
            }
            report(&write_so2(&b.out, "bimodal", &spec, &result).map_err(err)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = par::init_global_threads(n) {
                    eprintln!("error: {THREADS_VAR}: {e}");
                    return ExitCode::FAILURE;
                }
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::FAILURE;
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
