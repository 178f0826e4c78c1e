//! Embedded invariant suite: quick randomized checks of the load-bearing
//! identities, printed one per line.

use nmot_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Suite {
    rng: ChaCha8Rng,
    failures: usize,
}

impl Suite {
    fn check(&mut self, name: &str, ok: bool) {
        if ok {
            println!("ok   {name}");
        } else {
            println!("FAIL {name}");
            self.failures += 1;
        }
    }

    fn random_config(&mut self, n: usize, m: f64) -> ParticleConfig {
        let bound = 1.0 / (n as f64 * m);
        let mut x = vec![self.rng.gen_range(-1.0..1.0)];
        for _ in 0..n {
            let f: f64 = self.rng.gen_range(1.5..4.0);
            x.push(x.last().unwrap() + bound * f);
        }
        ParticleConfig::new(x, m).unwrap()
    }
}

pub fn run(seed: u64) -> i32 {
    let mut suite = Suite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        failures: 0,
    };

    // action density: the two algebraic forms agree
    {
        let d = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
        let mut ok = true;
        for _ in 0..200 {
            let rho: f64 = suite.rng.gen_range(0.01..0.95);
            let j: f64 = suite.rng.gen_range(-2.0..2.0);
            let a = d.phi(rho, j);
            let b = d.phi_theta_form(rho, j);
            ok &= (a - b).abs() <= 1e-12 * a.max(1.0);
        }
        suite.check("phi two forms agree", ok);
    }

    // quantile transport: translation moves W_p by |c|
    {
        let u = Measure1D::uniform(0.0, 1.0).unwrap();
        let c: f64 = suite.rng.gen_range(-2.0..2.0);
        let v = u.translate(c);
        let d = wasserstein_p(&u, &v, 2.0, 1024).unwrap();
        suite.check("wasserstein translation identity", (d - c.abs()).abs() < 1e-10);
    }

    // compactification: uniform restriction stays uniform with unit mass
    {
        let u = Measure1D::uniform(0.0, 1.0).unwrap();
        let cu = compactify(&u, 0.25).unwrap();
        suite.check(
            "compactification of the uniform measure",
            cu == Measure1D::uniform(0.25, 0.75).unwrap(),
        );
    }

    // geodesic translation exactness under linear mobility
    {
        let density = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
        let a = suite.random_config(8, 1.0);
        let c: f64 = suite.rng.gen_range(0.2..1.0);
        let opts = SolverOptions {
            time_steps: 8,
            ..Default::default()
        };
        let ok = match solve_geodesic_lenient(&a, &a.translate(c), &density, RhoStarRule::LookBack, &opts)
        {
            Ok(res) => (res.distance - c).abs() < 1e-6,
            Err(_) => false,
        };
        suite.check("translation geodesic distance", ok);
    }

    // action comparison inequality on random fields
    {
        let density = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
        let mut ok = true;
        for _ in 0..50 {
            let a = suite.random_config(6, 1.0);
            let b = suite.random_config(6, 1.0);
            let path = ParticlePath::straight_line(&a, &b, 3).unwrap();
            ok &= action_comparison_check(&path, &density, RhoStarRule::LookBack).unwrap_or(false);
        }
        suite.check("embedded action comparison", ok);
    }

    // minimizing movement: linear drift translates by -tau
    {
        let density = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
        let a = suite.random_config(6, 1.0);
        let opts = SolverOptions {
            time_steps: 8,
            ..Default::default()
        };
        let ok = match jko_step(
            &a,
            &EnergyFunctional::linear_drift(),
            0.1,
            &density,
            RhoStarRule::LookBack,
            &opts,
        ) {
            Ok(step) => step
                .config
                .positions()
                .iter()
                .zip(a.positions())
                .all(|(y, x)| (y - (x - 0.1)).abs() < 1e-6),
            Err(_) => false,
        };
        suite.check("minimizing movement linear drift", ok);
    }

    // follow-the-leader: mass conservation and ordering
    {
        let law = VelocityLaw::traffic(1.0).unwrap();
        let x: Vec<f64> = (0..=16).map(|i| -1.0 + i as f64 / 16.0).collect();
        let init = FtlState {
            t: 0.0,
            cfg: ParticleConfig::new(x, 1.0).unwrap(),
        };
        let ok = match ftl_integrate(&init, &law, RhoStarRule::ConstArgmaxTheta, 0.4, 0.01) {
            Ok(states) => states.iter().all(|s| {
                let x = s.cfg.positions();
                let n = s.cfg.n() as f64;
                let mass: f64 = x.windows(2).map(|w| (w[1] - w[0]) / (n * (w[1] - w[0]))).sum();
                x.windows(2).all(|w| w[1] > w[0]) && (mass - 1.0).abs() < 1e-12
            }),
            Err(_) => false,
        };
        suite.check("follow-the-leader mass and ordering", ok);
    }

    if suite.failures == 0 {
        println!("selftest: all checks passed");
        crate::EXIT_OK
    } else {
        println!("selftest: {} check(s) failed", suite.failures);
        crate::EXIT_VERDICT
    }
}
