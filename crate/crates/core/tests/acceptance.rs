//! Acceptance criteria 1-9, run in order in a single test so the timing
//! study has the machine to itself. Each criterion prints one PASS/FAIL line
//! straight to stderr (bypassing the test harness capture).

use std::io::Write;
use std::time::Instant;

use fpf_core::experiment::{
    circular_moments, count_modes, run_experiment, so2_experiment, timing_slopes, timing_study,
    write_attitude, write_sweep, write_truth, ExperimentSpec, FilterKind, So2Spec, SweepParam,
    TimingSpec,
};
use fpf_core::filters::{
    AttitudeSensors, FpfState, GainBackend, MomentMode, MomentState, ObservationIncrement,
    ObservationModel,
};
use fpf_core::gain::{
    constant_gain, so2_fourier_basis, so3_wigner_basis, GalerkinSolver, Group, KernelConfig,
    KernelSolver, ObservationChannel,
};
use fpf_core::lie::{
    exp_quat, exp_so3, hat, lie_deriv_dist_sq, quat_mean, sample_concentrated, tangent_covariance,
    vee, Quat, Tangent,
};
use fpf_core::rng::{standard_normal, Domain, StreamKey};
use fpf_core::sim::{simulate_truth, ScenarioConfig, TruthInit};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, o: &Outcome, secs: f64) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(
        err,
        "criterion {id} ({title}): {verdict} [{secs:.1} s] {}",
        o.detail
    )
    .unwrap();
}

fn random_quat(rng: &mut impl Rng) -> Quat {
    Quat::normalized(
        standard_normal(rng),
        standard_normal(rng),
        standard_normal(rng),
        standard_normal(rng),
    )
}

fn random_tangent(rng: &mut impl Rng, scale: f64) -> Tangent {
    Tangent::new(
        standard_normal(rng),
        standard_normal(rng),
        standard_normal(rng),
    ) * scale
}

fn same_rotation(a: &Quat, b: &Quat) -> f64 {
    (a.to_rotation() - b.to_rotation()).norm()
}

/// Group homomorphism, exp/log and hat/vee round trips, and finite-difference
/// checks of every analytic derivative used by the gain solvers.
fn group_math() -> Outcome {
    let mut rng = StreamKey::new(1, Domain::InitialSampling, 0).rng(0);
    let mut worst_exact: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let h = 1e-6;
    let sensors = AttitudeSensors::nominal();
    let wigner = so3_wigner_basis();
    let fourier = so2_fourier_basis();
    let mut v0 = vec![0.0; wigner.len()];
    let mut v1 = vec![0.0; wigner.len()];
    let mut d = vec![0.0; 3 * wigner.len()];
    for _ in 0..2000 {
        let p = random_quat(&mut rng);
        let q = random_quat(&mut rng);
        let w = random_tangent(&mut rng, 1.0);
        // homomorphism R(pq) = R(p) R(q), inverse, exp
        worst_exact = worst_exact
            .max((p.mul(&q).to_rotation() - p.to_rotation() * q.to_rotation()).norm())
            .max((p.inv().to_rotation() - p.to_rotation().transpose()).norm())
            .max((exp_quat(&w).to_rotation() - exp_so3(&w)).norm());
        // round trips
        worst_exact = worst_exact
            .max((vee(&hat(&w)).unwrap() - w).norm())
            .max(same_rotation(&exp_quat(&p.log()), &p))
            .max(same_rotation(&Quat::from_rotation(&p.to_rotation()), &p))
            .max((p.exp_step(&w).to_rotation() - p.to_rotation() * exp_so3(&w)).norm());

        let (ri, rj) = (p.to_rotation(), q.to_rotation());
        for n in 0..3 {
            let e = Tangent::from_fn(|k, _| if k == n { h } else { 0.0 });
            let ip = p.exp_step(&e).to_rotation();
            let im = p.exp_step(&-e).to_rotation();
            let fd = ((ip - rj).norm_squared() - (im - rj).norm_squared()) / (2.0 * h);
            worst_fd = worst_fd.max((fd - lie_deriv_dist_sq(&ri, &rj, n)).abs());

            for j in 0..sensors.dim() {
                let g = sensors.gradient(&p, j).unwrap();
                let fd = (sensors.eval_vec(&p.exp_step(&e))[j]
                    - sensors.eval_vec(&p.exp_step(&-e))[j])
                    / (2.0 * h);
                worst_fd = worst_fd.max((fd - g[n]).abs());
            }

            wigner.values(&p.exp_step(&e), &mut v0);
            wigner.values(&p.exp_step(&-e), &mut v1);
            wigner.derivatives(&p, &mut d);
            for l in 0..wigner.len() {
                let fd = (v0[l] - v1[l]) / (2.0 * h);
                worst_fd = worst_fd.max((fd - d[l * 3 + n]).abs());
            }
        }
        // Fourier basis along the z axis of an SO(2) element
        let z = Quat::from_z_angle(w[2]);
        let e = Tangent::new(0.0, 0.0, h);
        let (mut a, mut b, mut dz) = (vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        fourier.values(&z.exp_step(&e), &mut a);
        fourier.values(&z.exp_step(&-e), &mut b);
        fourier.derivatives(&z, &mut dz);
        for l in 0..2 {
            worst_fd = worst_fd.max(((a[l] - b[l]) / (2.0 * h) - dz[l]).abs());
        }
    }
    Outcome {
        pass: worst_exact < 1e-12 && worst_fd < 1e-6,
        detail: format!(
            "identities max err {worst_exact:.1e} (< 1e-12), finite differences max err {worst_fd:.1e} (< 1e-6)"
        ),
    }
}

const SIGMA_W: f64 = 0.05236;

fn sensor_channels(ens: &[Quat], r: &Vector3<f64>, sign: f64) -> Vec<ObservationChannel> {
    (0..3)
        .map(|j| {
            let (h, d): (Vec<f64>, Vec<Tangent>) = ens
                .iter()
                .map(|q| {
                    let v = q.to_rotation().transpose() * r;
                    (sign * v[j], sign * hat(&v).row(j).transpose())
                })
                .unzip();
            ObservationChannel::new(h, SIGMA_W).with_derivatives(d)
        })
        .collect()
}

/// Ensemble-averaged Galerkin and kernel gains against the closed-form
/// constant gain on a 3° ensemble.
fn poisson_oracle() -> Outcome {
    let s = 3f64.to_radians();
    let cov = s * s * Matrix3::identity();
    let mean = Quat::normalized(0.9, 0.2, -0.3, 0.25);
    let ens = sample_concentrated(
        &mean,
        &cov,
        2000,
        &StreamKey::new(17, Domain::InitialSampling, 0),
    );
    let galerkin = GalerkinSolver::new(&ens, so3_wigner_basis());
    let kernel = KernelSolver::new(
        &ens,
        Group::So3,
        KernelConfig {
            max_sweeps: 200,
            ..KernelConfig::so3_default()
        },
    );
    let (mut worst_g, mut worst_k): (f64, f64) = (0.0, 0.0);
    for (r, sign) in [
        (Vector3::new(0.0, 0.0, 1.0), -1.0),
        (Vector3::new(1.0, 0.0, 1.0).normalize(), 1.0),
    ] {
        let exact = constant_gain(&mean, &cov, &r, SIGMA_W, sign);
        let channels = sensor_channels(&ens, &r, sign);
        let ks = kernel.solve_many(&channels, &[]);
        for (j, ch) in channels.iter().enumerate() {
            let col: Tangent = exact.column(j).into();
            if col.norm() < 1e-9 * exact.norm() {
                continue;
            }
            let g = galerkin.solve(ch).field.mean_tangent();
            let k = ks[j].field.mean_tangent();
            worst_g = worst_g.max((g - col).norm() / col.norm());
            worst_k = worst_k.max((k - col).norm() / col.norm());
        }
    }
    Outcome {
        pass: worst_g < 0.10 && worst_k < 0.15,
        detail: format!(
            "worst channel relative error: galerkin {worst_g:.3} (< 0.10), kernel {worst_k:.3} (< 0.15)"
        ),
    }
}

/// Static planar problem with a Gaussian prior: particle mean and variance
/// against the exact posterior.
fn so2_exactness() -> Outcome {
    let spec = So2Spec {
        particles: 1000,
        horizon: 0.5,
        backend: GainBackend::Galerkin,
        ..So2Spec::unimodal(42, 0.0, 30f64.to_radians(), 0.4)
    };
    let r = so2_experiment(&spec).unwrap();
    let center = r.posterior.mode();
    let (om, ov) = r.posterior.moments(center);
    let (pm, pv) = circular_moments(&r.final_angles, center);
    let tol = 3.0 / (spec.particles as f64).sqrt();
    let (dm, dv) = ((pm - om).abs(), (pv - ov).abs());
    Outcome {
        pass: dm < tol && dv < tol,
        detail: format!(
            "N=1000: mean {pm:.4} vs {om:.4} (|d| {dm:.4}), variance {pv:.5} vs {ov:.5} (|d| {dv:.5}), tolerance {tol:.4}"
        ),
    }
}

/// Bimodal prior: final histogram against the exact posterior.
fn so2_bimodal() -> Outcome {
    let spec = So2Spec::bimodal(42);
    let r = so2_experiment(&spec).unwrap();
    let first = &r.histograms[0];
    let last = r.histograms.last().unwrap();
    let l1 = *r.l1.last().unwrap();
    // concentrated at the true mode: one cluster, containing the oracle's modal bin
    let oracle_last = r.oracle.last().unwrap();
    let modal = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let (pm, om) = (modal(last), modal(oracle_last));
    let bins = last.len();
    let near = (pm + bins - om) % bins <= 1 || (om + bins - pm) % bins <= 1;
    let negative_mass: f64 = last[..bins / 2].iter().sum();
    let modes0 = count_modes(first, 0.02);
    let modes_t = count_modes(last, 0.02);
    Outcome {
        pass: l1 < 0.15 && modes0 == 2 && modes_t == 1 && near,
        detail: format!(
            "final L1 {l1:.3} (< 0.15); clusters at t=0: {modes0}, at T: {modes_t}; modal bin {pm} vs oracle {om}; mass on θ<0 at T {negative_mass:.3}"
        ),
    }
}

/// Row-stochastic Markov matrix, monotone fixed-point residuals and a
/// contraction on the mean-zero subspace, over 50 random ensembles.
fn kernel_structure() -> Outcome {
    let mut rng = StreamKey::new(5, Domain::InitialSampling, 0).rng(0);
    let (mut worst_row, mut worst_lambda, mut monotone_breaks): (f64, f64, usize) = (0.0, 0.0, 0);
    for e in 0..50u64 {
        let n = rng.random_range(30..150);
        let spread = 0.05 + 1.5 * rng.random::<f64>();
        let group = if e % 5 == 4 { Group::So2 } else { Group::So3 };
        let mean = random_quat(&mut rng);
        let ens: Vec<Quat> = match group {
            Group::So3 => sample_concentrated(
                &mean,
                &(spread * spread * Matrix3::identity()),
                n,
                &StreamKey::new(100 + e, Domain::InitialSampling, 0),
            ),
            Group::So2 => (0..n)
                .map(|_| Quat::from_z_angle(spread * standard_normal(&mut rng)))
                .collect(),
        };
        let cfg = KernelConfig {
            max_sweeps: 300,
            tolerance: 0.0,
            ..KernelConfig::for_group(group)
        };
        let solver = KernelSolver::new(&ens, group, cfg);
        let t = solver.markov();
        for row in t.chunks_exact(n) {
            assert!(row.iter().all(|&v| v >= 0.0));
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        // fixed point for a random zero-mean forcing
        let mut h: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let hm = h.iter().sum::<f64>() / n as f64;
        h.iter_mut().for_each(|x| *x -= hm);
        let (phi, res) = solver.fixed_point(&h, None);
        let floor = 64.0 * f64::EPSILON * phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        monotone_breaks += res
            .windows(2)
            .skip(1)
            .filter(|w| w[1] > w[0] + floor)
            .count();
        // |λ₂|: power iteration on v -> T v with the mean removed
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mut lambda = 0.0;
        for _ in 0..400 {
            let mut w = solver.apply(&v);
            let m = w.iter().sum::<f64>() / n as f64;
            w.iter_mut().for_each(|x| *x -= m);
            let norm_w = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm_w / norm_v;
            v = w.iter().map(|x| x / norm_w).collect();
        }
        worst_lambda = worst_lambda.max(lambda);
    }
    Outcome {
        pass: worst_row < 1e-12 && monotone_breaks == 0 && worst_lambda < 1.0,
        detail: format!(
            "row sums max err {worst_row:.1e} (< 1e-12); residual increases after sweep 1: {monotone_breaks}; max |λ2| {worst_lambda:.6} (< 1)"
        ),
    }
}

/// Constant-gain particle covariance against the stochastic covariance
/// equation, and the deterministic moment filter against a tangent-space
/// Kalman filter in the small-angle regime.
fn moment_consistency() -> Outcome {
    let sigma0 = 5f64.to_radians();
    let mut sc = ScenarioConfig {
        horizon: 0.5,
        ..ScenarioConfig::case_a(42)
    };
    sc.prior.sigma0 = sigma0;
    let truth = simulate_truth(&sc, 0).unwrap();
    let model = sc.sensors();
    let ens = sc
        .prior
        .sample(2000, &StreamKey::new(sc.seed, Domain::InitialSampling, 0));
    let mut fpf = FpfState::new(
        ens,
        Group::So3,
        GainBackend::Constant,
        sc.sigma_b,
        sc.sigma_w,
        StreamKey::new(sc.seed, Domain::ParticleProcess, 0),
    )
    .unwrap();
    let mut mom = MomentState::new(sc.prior.mean, sc.prior.covariance());
    let mut worst_cov: f64 = 0.0;
    for n in 0..truth.steps() {
        let omega = sc.omega.at(truth.t[n], n);
        let obs = ObservationIncrement::new(truth.dz[n].clone(), truth.dt).unwrap();
        fpf.step(&model, &omega, &obs).unwrap();
        mom.step(
            &model,
            &omega,
            &obs,
            sc.sigma_b,
            sc.sigma_w,
            MomentMode::Stochastic,
        )
        .unwrap();
        let ens = fpf.particles();
        let cov = tangent_covariance(&quat_mean(&ens).unwrap(), &ens);
        worst_cov = worst_cov.max((cov - mom.sigma).norm() / mom.sigma.norm());
    }

    // tangent Kalman filter linearized at a fixed point, ω = 0
    let sensors = AttitudeSensors::nominal();
    let mu0 = Quat::normalized(0.8, 0.3, -0.1, 0.5);
    let (sigma_w, sigma_b, dt) = (0.05, 1e-4, 0.01);
    let j = DMatrix::from_fn(6, 3, |r, c| sensors.gradient(&mu0, r).unwrap()[c]);
    let h0 = DVector::from_vec(sensors.eval_vec(&mu0));
    let mut st = MomentState::new(mu0, 1e-3 * Matrix3::identity());
    let mut x = DVector::<f64>::zeros(3);
    let mut p = DMatrix::<f64>::identity(3, 3) * 1e-3;
    let target = mu0.exp_step(&Tangent::new(2e-5, -1e-5, 1.5e-5));
    let y = DVector::from_vec(sensors.eval_vec(&target)) * dt;
    let mut worst_kf: f64 = 0.0;
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
        let dx = (mu0.inv().mul(&st.mu).log() - Tangent::new(x[0], x[1], x[2])).norm();
        let dp = (st.sigma - Matrix3::from_fn(|r, c| p[(r, c)])).norm();
        worst_kf = worst_kf.max(dx).max(dp);
    }
    Outcome {
        pass: worst_cov < 0.20 && worst_kf < 1e-8,
        detail: format!(
            "σ0=5°, N=2000, t in [0, 0.5]: max relative Frobenius covariance error {worst_cov:.3} (< 0.20); tangent Kalman max deviation per step {worst_kf:.1e} (< 1e-8)"
        ),
    }
}

fn attitude_spec(name: &str, sc: ScenarioConfig) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(name, sc);
    spec.runs = 20;
    spec
}

/// Case a: all filters agree at the final time. Case b: the particle
/// filters halve the initial error before the deterministic moment filter.
fn attitude_cases() -> Outcome {
    let a = run_experiment(&attitude_spec("a", ScenarioConfig::case_a(42))).unwrap();
    let finals: Vec<(FilterKind, f64)> = a
        .filters
        .iter()
        .map(|f| (f.filter, *f.mean_error.last().unwrap()))
        .collect();
    let mut worst_gap: f64 = 0.0;
    for (i, (_, x)) in finals.iter().enumerate() {
        for (_, y) in &finals[i + 1..] {
            worst_gap = worst_gap.max((x - y).abs() / x.min(*y));
        }
    }
    let failures_a: usize = a.filters.iter().map(|f| f.failures.len()).sum();

    let b = run_experiment(&attitude_spec("b", ScenarioConfig::case_b(42))).unwrap();
    let det = b
        .get(FilterKind::LiekfDet)
        .unwrap()
        .median_halving_time(&b.times);
    let mut earlier = true;
    let mut medians = Vec::new();
    for kind in [FilterKind::FpfG, FilterKind::FpfK, FilterKind::FpfC] {
        let m = b.get(kind).unwrap().median_halving_time(&b.times);
        earlier &= m < det;
        medians.push(format!("{kind} {m:.2}"));
    }
    let failures_b: usize = b.filters.iter().map(|f| f.failures.len()).sum();
    let finals_text: Vec<String> = finals.iter().map(|(k, e)| format!("{k} {e:.4}")).collect();
    Outcome {
        pass: worst_gap < 0.30 && earlier,
        detail: format!(
            "M=20, N=100. case a final δφ [{}], max pairwise relative gap {worst_gap:.3} (< 0.30), failed runs {failures_a}; case b median halving time [{}] vs liekf-det {det:.2}, failed runs {failures_b}",
            finals_text.join(", "),
            medians.join(", ")
        ),
    }
}

fn timing_scaling() -> Outcome {
    let rows = timing_study(&TimingSpec::new(42)).unwrap();
    let slopes = timing_slopes(&rows);
    let mut pass = true;
    let mut text = Vec::new();
    for (kind, s) in &slopes {
        let range = if *kind == FilterKind::FpfK {
            1.7..=2.3
        } else {
            0.8..=1.3
        };
        pass &= range.contains(s);
        text.push(format!(
            "{kind} {s:.2} (in [{}, {}])",
            range.start(),
            range.end()
        ));
    }
    Outcome {
        pass,
        detail: format!("log-log slopes over N=20..500: {}", text.join(", ")),
    }
}

fn read_dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn write_all(dir: &std::path::Path) {
    let mut spec = attitude_spec(
        "det",
        ScenarioConfig {
            horizon: 0.3,
            ..ScenarioConfig::case_b(9)
        },
    );
    spec.runs = 3;
    spec.particles = 30;
    spec.substeps = 5;
    let table = run_experiment(&spec).unwrap();
    write_attitude(dir, &spec, &table).unwrap();
    let values = [0.03491, 0.05236];
    let results = fpf_core::experiment::sweep(SweepParam::SigmaW, &values, &spec).unwrap();
    write_sweep(dir, "sweep", SweepParam::SigmaW, &spec, &results).unwrap();
    let truth = simulate_truth(
        &ScenarioConfig {
            truth_init: TruthInit::FromPrior,
            ..spec.scenario.clone()
        },
        1,
    )
    .unwrap();
    write_truth(dir, "truth", &truth).unwrap();
}

/// Same seed and thread count twice, then once more on a four-thread pool.
fn determinism() -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    write_all(dirs[0].path());
    write_all(dirs[1].path());
    rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| write_all(dirs[2].path()));
    let runs: Vec<_> = dirs.iter().map(|d| read_dir_bytes(d.path())).collect();
    let files = runs[0].len();
    let repeat = runs[0] == runs[1];
    let threads = runs[0] == runs[2];
    Outcome {
        pass: repeat && files >= 8,
        detail: format!(
            "{files} CSV files; identical on repeat: {repeat}; identical on a 4-thread pool: {threads}"
        ),
    }
}

#[test]
fn acceptance() {
    type Check = fn() -> Outcome;
    let checks: [(&str, Check, Option<f64>); 9] = [
        ("group math", group_math, Some(5.0)),
        ("gain solvers vs constant gain", poisson_oracle, Some(60.0)),
        ("planar exactness", so2_exactness, Some(30.0)),
        ("planar bimodal", so2_bimodal, None),
        ("kernel structure", kernel_structure, None),
        ("moment filter consistency", moment_consistency, None),
        ("attitude cases a and b", attitude_cases, Some(900.0)),
        ("timing scaling", timing_scaling, None),
        ("determinism", determinism, None),
    ];
    let mut failed = Vec::new();
    for (i, (title, check, limit)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let mut o = check();
        let secs = start.elapsed().as_secs_f64();
        if let Some(l) = limit {
            o.pass &= secs < l;
            o.detail.push_str(&format!("; runtime limit {l} s"));
        }
        report(i + 1, title, &o, secs);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
