//! Acceptance suite: one test per criterion, each printing its verdict line.
//! Run with `cargo test -p nmot-cli --test acceptance -- --nocapture`.

use nmot_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn pass(name: &str, t0: Instant) {
    println!("[PASS] {name} ({:.2?})", t0.elapsed());
}

fn random_measure(rng: &mut ChaCha8Rng, max_height: f64) -> Measure1D {
    let cells = rng.gen_range(2..5);
    let mut breaks = vec![rng.gen_range(-0.5..0.5)];
    let mut heights = Vec::new();
    for _ in 0..cells {
        let h: f64 = rng.gen_range(0.05..max_height);
        breaks.push(breaks.last().unwrap() + rng.gen_range(0.3..1.2));
        heights.push(h);
    }
    let mass: f64 = heights
        .iter()
        .zip(breaks.windows(2))
        .map(|(h, w)| h * (w[1] - w[0]))
        .sum();
    for h in &mut heights {
        *h /= mass;
    }
    // keep the density cap by stretching the support if renormalizing overshot
    let hmax = heights.iter().cloned().fold(0.0_f64, f64::max);
    if hmax > max_height {
        let stretch = hmax / max_height;
        let b0 = breaks[0];
        for b in breaks.iter_mut() {
            *b = b0 + (*b - b0) * stretch;
        }
        for h in heights.iter_mut() {
            *h /= stretch;
        }
    }
    Measure1D::pcd(breaks, heights).unwrap()
}

fn random_config(rng: &mut ChaCha8Rng, n: usize, m: f64) -> ParticleConfig {
    let bound = 1.0 / (n as f64 * m);
    let mut x = vec![rng.gen_range(-1.0..1.0)];
    for _ in 0..n {
        let f: f64 = rng.gen_range(1.5..4.0);
        x.push(x.last().unwrap() + bound * f);
    }
    ParticleConfig::new(x, m).unwrap()
}

/// Criterion 1: translation exactness under the linear mobility, with the
/// Wasserstein lower bound meeting the straight-line upper bound.
#[test]
fn acceptance_01_linear_mobility_exactness() {
    let t0 = Instant::now();
    let density = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
    let mobility = density.mobility().clone();
    let mu = Measure1D::uniform(0.0, 2.0).unwrap();
    let opts = SolverOptions::default();
    for n in [4usize, 16, 64] {
        let a = sample_from_quantile(&mu, n, &mobility).unwrap();
        for c in [0.75, -0.4] {
            let b = a.translate(c);
            let res = solve_geodesic_lenient(&a, &b, &density, RhoStarRule::LookBack, &opts)
                .unwrap();
            let rel = (res.distance - c.abs()).abs() / c.abs();
            assert!(rel < 1e-6, "N={n} c={c}: distance {} ({rel:.2e})", res.distance);
            // sandwich: the lower bound meets the straight-line upper bound
            assert!(distance_lower_bound_check(
                &a,
                &b,
                &density,
                RhoStarRule::LookBack,
                &opts,
                1e-8
            )
            .unwrap());
            let line = ParticlePath::straight_line(&a, &b, opts.time_steps).unwrap();
            let upper = path_action(&line, &density, RhoStarRule::LookBack)
                .unwrap()
                .sqrt();
            assert!(res.distance <= upper + 1e-9);
            assert!((upper - c.abs()).abs() < 1e-12);
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 5.0, "budget exceeded: {:?}", t0.elapsed());
    pass("criterion 1: linear-mobility translation exactness", t0);
}

/// Criterion 2: constant-speed action profiles on random logistic problems
/// (smooth sampled endpoints; quadrature at interval midpoints so the profile
/// is second-order accurate).
#[test]
fn acceptance_02_constant_speed_geodesics() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let mobility = Mobility::logistic(1.0).unwrap();
    let density = ActionDensity::new(2.0, mobility.clone()).unwrap();
    let opts = SolverOptions {
        midpoint: true,
        ..Default::default()
    };
    let mut converged = 0;
    for trial in 0..20 {
        let mu0 = random_measure(&mut rng, 0.20);
        let c: f64 = rng.gen_range(0.2..0.6);
        let mu1 = random_measure(&mut rng, 0.20).translate(c);
        let a = sample_from_quantile(&mu0, 16, &mobility).unwrap();
        let b = sample_from_quantile(&mu1, 16, &mobility).unwrap();
        if let Ok(res) = solve_geodesic(&a, &b, &density, RhoStarRule::ConstArgmaxTheta, &opts) {
            converged += 1;
            assert!(
                check_constant_speed(&res, 1e-3),
                "trial {trial}: profile spread above 1e-3"
            );
        }
    }
    // the check must not pass vacuously
    assert!(converged >= 16, "only {converged}/20 runs converged");
    assert!(t0.elapsed().as_secs_f64() < 120.0, "budget exceeded: {:?}", t0.elapsed());
    pass(
        &format!("criterion 2: constant-speed geodesics ({converged}/20 converged)"),
        t0,
    );
}

/// Criterion 3: the discrete distance dominates the classical Wasserstein
/// distance scaled by `sup theta`.
#[test]
fn acceptance_03_comparison_bound() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let lin = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
    let log = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
    let opts = SolverOptions {
        time_steps: 8,
        ..Default::default()
    };
    for _ in 0..50 {
        let n = rng.gen_range(3..8);
        let a = random_config(&mut rng, n, 1.0);
        let b = random_config(&mut rng, n, 1.0);
        for density in [&lin, &log] {
            assert!(distance_lower_bound_check(
                &a,
                &b,
                density,
                RhoStarRule::LookBack,
                &opts,
                1e-8
            )
            .unwrap());
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 60.0, "budget exceeded: {:?}", t0.elapsed());
    pass("criterion 3: Wasserstein comparison bound (100 pairs)", t0);
}

/// Criterion 4: the continuous action of the embedded measures never exceeds
/// `(N+1)/N` times the discrete action (cellwise closed form).
#[test]
fn acceptance_04_action_comparison() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lin = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
    let log = ActionDensity::new(2.5, Mobility::logistic(1.0).unwrap()).unwrap();
    for _ in 0..100 {
        let n = rng.gen_range(2..12);
        let cfg = random_config(&mut rng, n, 1.0);
        let v: Vec<f64> = (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for density in [&lin, &log] {
            for rule in [RhoStarRule::LookBack, RhoStarRule::ConstArgmaxTheta] {
                let disc = discrete_action(&cfg, &v, density, rule).unwrap();
                let cont = nmot_core::geodesic::continuous_action_of_embedding(&cfg, &v, density);
                if disc.is_finite() {
                    let rhs = (n as f64 + 1.0) / n as f64 * disc;
                    assert!(cont <= rhs * (1.0 + 1e-12) + 1e-12, "{cont} > {rhs}");
                }
            }
        }
    }
    // translation equality case: the continuous side misses exactly the last term
    let cfg = random_config(&mut rng, 6, 1.0);
    let v = vec![0.9; 7];
    let disc = discrete_action(&cfg, &v, &lin, RhoStarRule::LookBack).unwrap();
    let cont = nmot_core::geodesic::continuous_action_of_embedding(&cfg, &v, &lin);
    assert!((cont - disc).abs() < 1e-12);
    assert!(t0.elapsed().as_secs_f64() < 10.0, "budget exceeded: {:?}", t0.elapsed());
    pass("criterion 4: embedded action comparison (100 fields)", t0);
}

/// Criterion 5: distance trend over N for the congested translation problem,
/// strictly contracting and inside the analytic bracket [1, sqrt(2)].
#[test]
fn acceptance_05_gamma_trend() {
    let t0 = Instant::now();
    let mu0 = Measure1D::uniform(0.0, 2.0).unwrap();
    let mu1 = Measure1D::uniform(1.0, 3.0).unwrap();
    let density = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
    let opts = SolverOptions::default();
    let report = run_gamma_study(
        &mu0,
        &mu1,
        &density,
        RhoStarRule::ConstArgmaxTheta,
        &opts,
        &[8, 16, 32, 64],
    )
    .unwrap();
    for r in &report.records {
        assert!(r.converged, "N={} did not converge", r.n);
    }
    for w in report.gaps.windows(2) {
        assert!(w[1] < w[0], "gaps not strictly decreasing: {:?}", report.gaps);
    }
    let d = report.continuum_estimate;
    assert!((1.0..=2.0_f64.sqrt()).contains(&d), "final distance {d} outside [1, sqrt 2]");
    assert!(t0.elapsed().as_secs_f64() < 300.0, "budget exceeded: {:?}", t0.elapsed());
    pass(
        &format!("criterion 5: distance trend {:?} -> {d:.6}", report.gaps),
        t0,
    );
}

/// Criterion 6: analytic gradient of the transcribed action against central
/// finite differences at random interior points.
#[test]
fn acceptance_06_gradient_check() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let density = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
    let mut worst = 0.0f64;
    for point in 0..10 {
        let n = 6;
        let a = random_config(&mut rng, n, 1.0);
        let b = random_config(&mut rng, n, 1.0);
        let opts = SolverOptions {
            time_steps: 8,
            midpoint: point % 2 == 1,
            ..Default::default()
        };
        let k = opts.time_steps;
        let dim = (k - 1) * (n + 1);
        let mut interior = Vec::with_capacity(dim);
        for row in 1..k {
            let t = row as f64 / k as f64;
            for i in 0..=n {
                let x = (1.0 - t) * a.positions()[i] + t * b.positions()[i];
                interior.push(x + 0.005 * rng.gen_range(-1.0..1.0));
            }
        }
        let scale = a.scale().max(b.scale());
        let h = 1e-6 * scale;
        let rule = if point % 3 == 0 {
            RhoStarRule::LookBack
        } else {
            RhoStarRule::ConstArgmaxTheta
        };
        let (_, grad) = transcribed_action(&a, &b, &density, rule, &opts, &interior).unwrap();
        for j in 0..dim {
            let mut plus = interior.clone();
            plus[j] += h;
            let mut minus = interior.clone();
            minus[j] -= h;
            let (fp, _) = transcribed_action(&a, &b, &density, rule, &opts, &plus).unwrap();
            let (fm, _) = transcribed_action(&a, &b, &density, rule, &opts, &minus).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let err = (grad[j] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-5, "max relative gradient error {worst:.3e}");
    pass(
        &format!("criterion 6: gradient check (max rel err {worst:.2e})"),
        t0,
    );
}

/// Criterion 7: minimizing movements under the linear drift translate exactly,
/// with the descent inequality at every step.
#[test]
fn acceptance_07_jko_linear_drift() {
    let t0 = Instant::now();
    let mobility = Mobility::linear(2.0).unwrap();
    let density = ActionDensity::new(2.0, mobility.clone()).unwrap();
    let mu0 = Measure1D::uniform(0.0, 2.0).unwrap();
    let init = sample_from_quantile(&mu0, 16, &mobility).unwrap();
    let tau = 0.1;
    // two extra barrier reductions keep the soft end-gap modes (no energy
    // curvature under the linear drift) below the stated tolerance
    let opts = SolverOptions {
        max_outer: 10,
        ..Default::default()
    };
    let traj = jko_run(
        &init,
        &EnergyFunctional::linear_drift(),
        tau,
        5,
        &density,
        RhoStarRule::LookBack,
        &opts,
    )
    .unwrap();
    for (step_idx, step) in traj.steps.iter().enumerate() {
        for (y, x0) in step.config.positions().iter().zip(init.positions()) {
            let expect = x0 - step_idx as f64 * tau;
            assert!(
                (y - expect).abs() < 1e-6,
                "step {step_idx}: {y} vs {expect}"
            );
        }
    }
    for pair in traj.steps.windows(2) {
        let lhs = pair[1].energy + pair[1].transport_cost.powi(2) / (2.0 * tau);
        assert!(lhs <= pair[0].energy + 1e-12, "descent violated: {lhs} > {}", pair[0].energy);
    }
    assert!(t0.elapsed().as_secs_f64() < 60.0, "budget exceeded: {:?}", t0.elapsed());
    pass("criterion 7: linear-drift minimizing movements translate exactly", t0);
}

/// Criterion 8: the quadratic potential's step is the proximal contraction
/// `prev -> prev/(1+tau)` while the cone stays inactive.
#[test]
fn acceptance_08_jko_quadratic_proximal() {
    let t0 = Instant::now();
    let density = ActionDensity::new(2.0, Mobility::linear(2.0).unwrap()).unwrap();
    let x: Vec<f64> = (0..=6).map(|i| 10.0 + i as f64).collect();
    let init = ParticleConfig::new(x, 2.0).unwrap();
    let tau = 0.2;
    let opts = SolverOptions {
        max_outer: 10,
        ..Default::default()
    };
    let traj = jko_run(
        &init,
        &EnergyFunctional::quadratic(),
        tau,
        3,
        &density,
        RhoStarRule::LookBack,
        &opts,
    )
    .unwrap();
    for (step_idx, step) in traj.steps.iter().enumerate() {
        let factor = (1.0 + tau).powi(step_idx as i32);
        for (y, x0) in step.config.positions().iter().zip(init.positions()) {
            assert!(
                (y - x0 / factor).abs() < 1e-6,
                "step {step_idx}: {y} vs {}",
                x0 / factor
            );
        }
    }
    pass("criterion 8: quadratic proximal contraction", t0);
}

/// Criterion 9: cross-resolution convergence of the congested drift scheme.
#[test]
fn acceptance_09_jko_cross_resolution() {
    let t0 = Instant::now();
    let density = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
    let mu0 = Measure1D::uniform(0.0, 2.5).unwrap();
    let report = jko_convergence_study(
        &mu0,
        &EnergyFunctional::linear_drift(),
        0.1,
        3,
        &[8, 16, 32, 64],
        1.5,
        &density,
        RhoStarRule::ConstArgmaxTheta,
        &SolverOptions::default(),
    )
    .unwrap();
    // every step index: distance to the finest run nonincreasing in N
    for step in 0..=3usize {
        let seq: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|n| {
                report
                    .rows
                    .iter()
                    .find(|r| r.n == *n && r.step == step)
                    .unwrap()
                    .wq_to_ref
            })
            .collect();
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "step {step}: {seq:?} not nonincreasing");
        }
    }
    assert!(report.monotone);
    assert!(t0.elapsed().as_secs_f64() < 600.0, "budget exceeded: {:?}", t0.elapsed());
    pass("criterion 9: cross-resolution minimizing movements", t0);
}

/// Criterion 10: follow-the-leader converges to the entropy rarefaction.
#[test]
fn acceptance_10_ftl_entropy_convergence() {
    let t0 = Instant::now();
    let law = VelocityLaw::traffic(1.0).unwrap();
    let mut prev = f64::INFINITY;
    let mut last = f64::INFINITY;
    for n in [16usize, 32, 64] {
        let err = ftl_vs_entropy(1.0, 0.0, &law, RhoStarRule::ConstArgmaxTheta, n, 0.5).unwrap();
        assert!(err < prev, "error did not decrease at N={n}: {err} >= {prev}");
        prev = err;
        last = err;
    }
    assert!(last < 0.05, "N=64 error {last}");
    assert!(t0.elapsed().as_secs_f64() < 120.0, "budget exceeded: {:?}", t0.elapsed());
    pass(&format!("criterion 10: entropy convergence (N=64 error {last:.4})"), t0);
}

/// Criterion 11: measure utilities: the compactification error inequality on
/// random measures and the quantile/Wasserstein round-trip identities.
#[test]
fn acceptance_11_measure_utilities() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for _ in 0..50 {
        let mu = random_measure(&mut rng, 0.9);
        let eps = rng.gen_range(0.02..0.45);
        assert!(compactification_error_check(&mu, eps, 2.0, 2.0).unwrap());
        assert!(compactification_error_check(&mu, eps, 2.0, 1.0).unwrap());
    }
    for _ in 0..20 {
        let mu = random_measure(&mut rng, 0.9);
        // identical measures are at distance zero
        assert_eq!(wasserstein_p(&mu, &mu, 2.0, 1024).unwrap(), 0.0);
        // translation identity
        let c: f64 = rng.gen_range(-3.0..3.0);
        let d = wasserstein_p(&mu, &mu.translate(c), 1.0, 4096).unwrap();
        assert!((d - c.abs()).abs() < 1e-10, "{d} vs {}", c.abs());
        // quantile and CDF invert each other at continuity points
        for k in 1..20 {
            let z = k as f64 / 20.0;
            let x = mu.quantile_at(z).unwrap();
            let f = mu.cdf(x).unwrap().clamp(1e-12, 1.0 - 1e-12);
            let back = mu.quantile_at(f).unwrap();
            assert!((back - x).abs() < 1e-10);
        }
    }
    // empirical transport is exact in quantile coordinates
    let e1 = Measure1D::empirical(vec![0.0, 1.0]).unwrap();
    let e2 = Measure1D::empirical(vec![0.0, 2.0]).unwrap();
    let d = wasserstein_p(&e1, &e2, 2.0, 512).unwrap();
    assert!((d - 0.5_f64.sqrt()).abs() < 1e-10);
    pass("criterion 11: measure utilities", t0);
}
