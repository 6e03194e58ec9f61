//! Acceptance suite: one test per release gate, each printing a PASS line
//! with its key numbers. Run with `cargo test -p mglbo-core --test acceptance
//! -- --nocapture` to see them.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mglbo_core::benchmarks::{gp_sample_objective, optimal_hyperparameters, quadratic_2d, InsertedRegion};
use mglbo_core::harness::{run_experiment, trace_to_csv, ExperimentConfig};
use mglbo_core::regions::quadratic_unknowns;
use mglbo_core::{
    ei, fit_posterior, identify_regions, k_se, length_scale_lower_bound, run_bo, BoConfig, Dataset,
    KernelConfig, KernelMode, LmriConfig,
};

fn pass(name: &str, started: Instant, details: &str) {
    println!("[acceptance] {name}: PASS ({:.2}s) — {details}", started.elapsed().as_secs_f64());
}

/// The 1D best-case design: grid points `i/n`, minimum pairwise distance
/// found exhaustively, then the length-scale solved from the correlation
/// equation by bisection on the kernel itself.
fn grid_oracle_lower_bound(n: usize, min_correlation: f64) -> f64 {
    let grid: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
    let delta = if grid.len() >= 2 {
        let mut min = f64::INFINITY;
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                min = min.min((grid[i] - grid[j]).abs());
            }
        }
        min
    } else {
        // A single design point leaves only the construction's spacing.
        1.0 / n as f64
    };
    let zero = DVector::from_column_slice(&[0.0]);
    let probe = DVector::from_column_slice(&[delta]);
    let correlation = |l: f64| k_se(&zero, &probe, l, 1.0);
    let (mut lo, mut hi) = (1e-9, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if correlation(mid) < min_correlation {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn a1_lower_bound_matches_grid_oracle() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 2..=50 {
        for c in [0.1, 0.2, 0.5] {
            let formula = length_scale_lower_bound(1, n, c).unwrap();
            let oracle = grid_oracle_lower_bound(n, c);
            let rel = (formula - oracle).abs() / oracle;
            assert!(rel <= 1e-12, "n={n}, c={c}: formula {formula} vs oracle {oracle} (rel {rel:.2e})");
            worst = worst.max(rel);
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "budget exceeded");
    pass("lower-bound oracle equivalence", started, &format!("worst relative error {worst:.2e}"));
}

fn dense_oracle(
    data: &Dataset,
    kernel: &KernelConfig,
    c_mu: f64,
    jitter: f64,
    x: &DVector<f64>,
) -> (f64, f64) {
    let n = data.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.evaluate(data.point(i), data.point(j)));
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    let kinv = k.try_inverse().expect("oracle inverse");
    let kv = DVector::from_fn(n, |i, _| kernel.evaluate(data.point(i), x));
    let resid = DVector::from_fn(n, |i, _| data.value(i) - c_mu);
    let mean = c_mu + kv.dot(&(&kinv * &resid));
    let var = kernel.evaluate(x, x) - kv.dot(&(&kinv * &kv));
    (mean, var.max(0.0))
}

#[test]
fn a2_posterior_matches_dense_inverse() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for instance in 0..50 {
        let d = 1 + instance % 3;
        let n = 3 + (instance * 11) % 28;
        let mut data = Dataset::new(d);
        for _ in 0..n {
            let x = DVector::from_fn(d, |_, _| rng.gen::<f64>());
            let y = 2.0 * x.iter().map(|&v| (5.0 * v).sin()).sum::<f64>() + rng.gen::<f64>();
            data.push(x, y).unwrap();
        }
        let kernel = KernelConfig::se(0.25 + 0.02 * (instance % 5) as f64, 1.3);
        let gp = fit_posterior(&data, kernel.clone(), 0.4, 1e-6).unwrap();
        for _ in 0..10 {
            let x = DVector::from_fn(d, |_, _| rng.gen::<f64>());
            let (mu, var) = gp.mean_var(&x);
            let (mu_o, var_o) = dense_oracle(&data, &kernel, 0.4, gp.jitter(), &x);
            let err = (mu - mu_o).abs().max((var - var_o).abs());
            assert!(err <= 1e-8, "instance {instance} (d={d}, n={n}): deviation {err:.2e}");
            worst = worst.max(err);
        }
    }
    assert!(started.elapsed().as_secs_f64() < 5.0, "budget exceeded");
    pass("posterior dense-inverse equivalence", started, &format!("50 instances, worst deviation {worst:.2e}"));
}

/// Simpson quadrature of the truncated Gaussian expectation
/// `E[min(f - best, 0)]` for `f ~ N(mean, std^2)`.
fn ei_quadrature(mean: f64, std: f64, best: f64) -> f64 {
    let u = (best - mean) / std;
    let lo = u.min(0.0) - 40.0;
    if u <= lo {
        return 0.0;
    }
    let steps = 20_000usize; // even
    let h = (u - lo) / steps as f64;
    let integrand = |t: f64| std * (t - u) * (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = integrand(lo) + integrand(u);
    for i in 1..steps {
        let t = lo + i as f64 * h;
        sum += integrand(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn a3_ei_matches_numerical_integration() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mean = rng.gen::<f64>() * 10.0 - 5.0;
        let best = rng.gen::<f64>() * 10.0 - 5.0;
        let std = 1e-3 + rng.gen::<f64>() * 3.0;
        let got = ei(mean, std, best);
        let expect = ei_quadrature(mean, std, best);
        let err = (got - expect).abs();
        assert!(err <= 1e-6, "ei({mean}, {std}, {best}) = {got} vs quadrature {expect}");
        worst = worst.max(err);
    }
    // Degenerate branch is exact.
    for (mean, best) in [(2.0, 1.0), (1.0, 2.0), (0.0, 0.0), (-3.5, 4.0)] {
        assert_eq!(ei(mean, 0.0, best), (mean - best).min(0.0));
    }
    assert!(started.elapsed().as_secs_f64() < 10.0, "budget exceeded");
    pass("expected improvement vs quadrature", started, &format!("1000 triples, worst deviation {worst:.2e}"));
}

/// Exact quadratic with a prescribed positive-definite Hessian, sampled as a
/// tight core of exactly as many points as the model has coefficients plus an
/// outer ring, so one candidate ball passes every selection criterion.
fn quadratic_recovery_case(d: usize, concave: bool) -> (Dataset, DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(900 + d as u64);
    let center = DVector::from_element(d, 0.5);
    let mut hessian = DMatrix::from_fn(d, d, |i, j| if i == j { 4.0 + 2.0 * i as f64 } else { 0.5 });
    if concave {
        hessian = -hessian;
    }
    let beta1 = -(&hessian * &center);
    let beta0 = 1.2;
    let objective = |x: &DVector<f64>| {
        beta0 + beta1.dot(x) + 0.5 * (x.transpose() * &hessian * x)[(0, 0)]
    };

    let n_u = quadratic_unknowns(d);
    let mut data = Dataset::new(d);
    for _ in 0..n_u {
        let x = DVector::from_fn(d, |j, _| center[j] + 0.03 * (rng.gen::<f64>() * 2.0 - 1.0));
        let y = objective(&x);
        data.push(x, y).unwrap();
    }
    for _ in 0..(n_u + 2) {
        let dir: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let dir = &dir / dir.norm();
        let x = (&center + dir * 0.25).map(|v| v.clamp(0.0, 1.0));
        let y = objective(&x);
        data.push(x, y).unwrap();
    }
    (data, hessian, center)
}

#[test]
fn a4_lmri_recovers_exact_quadratics() {
    let started = Instant::now();
    for d in 1..=3 {
        let (data, hessian, minimizer) = quadratic_recovery_case(d, false);
        let found = identify_regions(&data, &LmriConfig::default());
        assert_eq!(found.len(), 1, "d={d}: expected one region, got {}", found.len());
        let region = &found[0];
        let hessian_err = (&region.hessian - &hessian).abs().max();
        let min_err = (&region.predicted_min_point - &minimizer).abs().max();
        assert!(hessian_err <= 1e-6, "d={d}: Hessian deviation {hessian_err:.2e}");
        assert!(min_err <= 1e-6, "d={d}: minimizer deviation {min_err:.2e}");

        let (concave_data, _, _) = quadratic_recovery_case(d, true);
        let none = identify_regions(&concave_data, &LmriConfig::default());
        assert!(none.is_empty(), "d={d}: concave data produced {} regions", none.len());
    }
    assert!(started.elapsed().as_secs_f64() < 2.0, "budget exceeded");
    pass("local region recovery", started, "d in 1..=3: one exact region; concave rejected");
}

#[test]
fn a5_cool_down_contract() {
    let started = Instant::now();
    let mut total_reductions = 0usize;
    for seed in 0..20u64 {
        let objective = gp_sample_objective(0.1, 1000 + seed, 128, 1, vec![]).unwrap();
        let mut cfg = BoConfig::new(KernelMode::SeAr, 40, seed);
        cfg.known_optimum = objective.known_optimum_value;
        let trace = run_bo(&objective.unit_objective(), 1, &cfg).unwrap();

        let mut prev = cfg.cool_down.initial_length_scale;
        let mut reductions = 0usize;
        for r in trace.records.iter().filter(|r| r.iteration > 0) {
            assert!(r.length_scale <= prev + 1e-15, "seed {seed}: length-scale increased");
            // The decision at iteration k saw the initial design plus k-1
            // queried points.
            let n_obs = cfg.initial_design_size + r.iteration - 1;
            let bound = length_scale_lower_bound(1, n_obs, cfg.cool_down.min_correlation).unwrap();
            assert!(
                r.length_scale >= bound - 1e-12,
                "seed {seed}, iteration {}: l = {} below bound {bound}",
                r.iteration,
                r.length_scale
            );
            prev = r.length_scale;
            reductions += usize::from(r.reduced);
        }
        assert!(reductions >= 1, "seed {seed}: no cool-down event in 40 iterations");
        total_reductions += reductions;
    }
    assert!(started.elapsed().as_secs_f64() < 120.0, "budget exceeded");
    pass(
        "cool-down contract",
        started,
        &format!("20 runs monotone and bounded, {total_reductions} reduction events"),
    );
}

#[test]
fn a6_mgl_end_to_end_on_quadratic() {
    let started = Instant::now();
    let bench = quadratic_2d();
    let seeds: Vec<u64> = (0..16).collect();

    let mut mgl_finals = Vec::new();
    let mut hits = 0usize;
    for &seed in &seeds {
        let mut cfg = BoConfig::new(KernelMode::MglAr, 30, seed);
        cfg.known_optimum = bench.known_optimum_value;
        let trace = run_bo(&bench.unit_objective(), 2, &cfg).unwrap();
        let regret = trace.final_regret();
        if regret <= 1e-6 {
            hits += 1;
        }
        mgl_finals.push(regret);
    }
    assert!(hits >= 12, "only {hits}/16 runs reached regret <= 1e-6");

    let hyper = optimal_hyperparameters(&bench, 1000, 999, 300, 0.2).unwrap();
    let mut se_finals = Vec::new();
    for &seed in &seeds {
        let mut cfg = BoConfig::new(KernelMode::SeFixed, 30, seed);
        cfg.known_optimum = bench.known_optimum_value;
        cfg.fixed_hyper = Some(hyper.clone());
        let trace = run_bo(&bench.unit_objective(), 2, &cfg).unwrap();
        se_finals.push(trace.final_regret());
    }

    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[7] + v[8])
    };
    let mgl_median = median(&mut mgl_finals);
    let se_median = median(&mut se_finals);
    assert!(
        mgl_median < se_median,
        "MGL median {mgl_median:.3e} not below fixed-baseline median {se_median:.3e}"
    );
    assert!(started.elapsed().as_secs_f64() < 600.0, "budget exceeded");
    pass(
        "MGL end-to-end on the quadratic",
        started,
        &format!("{hits}/16 runs below 1e-6; medians {mgl_median:.2e} vs {se_median:.2e}"),
    );
}

#[test]
fn a7_cool_down_beats_loocv_on_hidden_region() {
    let started = Instant::now();
    // Smooth field with one deep, narrow convex region: a stationary fit to
    // the sampled data sees no reason to look closer.
    let region = InsertedRegion {
        center: vec![0.7],
        radius: 0.05,
        min_point: vec![0.7],
        min_value: -4.0,
        curvature: vec![4000.0],
    };
    let mut ar_finals = Vec::new();
    let mut loocv_finals = Vec::new();
    for seed in 0..16u64 {
        let objective = gp_sample_objective(0.3, 500 + seed, 128, 1, vec![region.clone()]).unwrap();
        for (mode, finals) in [(KernelMode::SeAr, &mut ar_finals), (KernelMode::SeLoocv, &mut loocv_finals)] {
            let mut cfg = BoConfig::new(mode, 40, seed);
            cfg.known_optimum = objective.known_optimum_value;
            let trace = run_bo(&objective.unit_objective(), 1, &cfg).unwrap();
            finals.push(trace.final_regret());
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[7] + v[8])
    };
    let ar_median = median(&mut ar_finals);
    let loocv_median = median(&mut loocv_finals);
    assert!(
        ar_median <= loocv_median,
        "cool-down median {ar_median:.3e} exceeds LOO-CV median {loocv_median:.3e}"
    );
    assert!(started.elapsed().as_secs_f64() < 300.0, "budget exceeded");
    pass(
        "cool-down vs LOO-CV on hidden region",
        started,
        &format!("medians {ar_median:.2e} vs {loocv_median:.2e}"),
    );
}

#[test]
fn a8_experiments_are_byte_identical() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        benchmarks: vec!["quadratic-2d".into()],
        methods: vec![KernelMode::SeAr, KernelMode::MglAr],
        repetitions: 2,
        iterations: Some(4),
        output_dir: tmp.path().join("exp"),
        jobs: 2,
        ..ExperimentConfig::default()
    };

    let snapshot = |outcome: &mglbo_core::harness::ExperimentOutcome| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = outcome
            .trace_files
            .iter()
            .chain(&outcome.summary_files)
            .chain(std::iter::once(&outcome.manifest_file))
            .map(|p| (p.display().to_string(), std::fs::read(p).unwrap()))
            .collect();
        files.sort();
        files
    };

    let first = run_experiment(&cfg).unwrap();
    assert_eq!(first.failures, 0);
    let before = snapshot(&first);
    let second = run_experiment(&cfg).unwrap();
    let after = snapshot(&second);
    assert_eq!(before.len(), after.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in before.iter().zip(&after) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between identical runs");
    }
    pass(
        "byte-identical experiment re-runs",
        started,
        &format!("{} files compared", before.len()),
    );
}

#[test]
fn a9_mgl_collapses_to_se_without_detection() {
    let started = Instant::now();
    let objective = |x: &DVector<f64>| 3.0 * (x[0] - 0.55).powi(2) + 2.0 * (x[1] - 0.45).powi(2);
    for seed in 11..16u64 {
        let mut mgl = BoConfig::new(KernelMode::MglAr, 12, seed);
        mgl.detect_regions = false;
        mgl.known_optimum = Some(0.0);
        let mut se = BoConfig::new(KernelMode::SeAr, 12, seed);
        se.known_optimum = Some(0.0);
        let mgl_trace = run_bo(&objective, 2, &mgl).unwrap();
        let se_trace = run_bo(&objective, 2, &se).unwrap();
        assert_eq!(
            trace_to_csv(&mgl_trace),
            trace_to_csv(&se_trace),
            "seed {seed}: traces diverge with detection disabled"
        );
    }
    pass("MGL collapse to SE", started, "5 seeds bit-identical");
}
