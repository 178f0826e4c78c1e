//! Study runners: config in, CSV/JSON reports out, verdict as exit code.

use crate::config::{self, DistanceConfig, FtlConfig, GammaConfig, JkoConfig};
use crate::output::{fmt, Report};
use crate::{CommonArgs, EXIT_CONFIG, EXIT_OK, EXIT_VERDICT};
use nmot_core::ftl::{density_profile, riemann_particles, riemann_window};
use nmot_core::*;

fn fail_config(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

pub fn run_distance(args: &CommonArgs, dump_path: bool) -> i32 {
    let loaded = match config::load::<DistanceConfig>(&args.config) {
        Ok(l) => l,
        Err(e) => return fail_config(&e),
    };
    match distance_inner(args, &loaded.config, &loaded.hash, dump_path) {
        Ok(code) => code,
        Err(e) => fail_config(&e),
    }
}

fn distance_inner(
    args: &CommonArgs,
    cfg: &DistanceConfig,
    hash: &str,
    dump_path: bool,
) -> Result<i32> {
    cfg.mu0.validate()?;
    cfg.mu1.validate()?;
    let density = config::action_density(&cfg.mobility, cfg.p)?;
    let a = sample_from_quantile(&cfg.mu0, cfg.n, density.mobility())?;
    let b = sample_from_quantile(&cfg.mu1, cfg.n, density.mobility())?;
    let res = solve_geodesic_lenient(&a, &b, &density, cfg.rule, &cfg.solver)?;

    let report = Report::new(&args.out, hash, args.seed)?;
    report.json(
        "summary.json",
        serde_json::json!({
            "study": "distance",
            "n": cfg.n,
            "p": cfg.p,
            "rule": cfg.rule,
            "distance": res.distance,
            "converged": res.solver_report.converged,
            "kkt_residual": res.solver_report.kkt_residual,
            "iterations": res.solver_report.iterations,
            "lambda_schedule": res.solver_report.lambda_schedule,
            "endpoint_a": a.positions(),
            "endpoint_b": b.positions(),
        }),
    )?;

    if dump_path {
        dump_geodesic(&report, &res, &density, cfg.rule)?;
        dump_config(&report, "config_a.csv", &a, cfg.rule, density.mobility())?;
        dump_config(&report, "config_b.csv", &b, cfg.rule, density.mobility())?;
    }
    println!("distance = {}", res.distance);
    Ok(if res.solver_report.converged {
        EXIT_OK
    } else {
        EXIT_VERDICT
    })
}

fn dump_config(
    report: &Report,
    name: &str,
    cfg: &ParticleConfig,
    rule: RhoStarRule,
    mobility: &Mobility,
) -> Result<()> {
    let r = reconstruct_density(cfg, rule, mobility)?;
    let rows: Vec<Vec<String>> = cfg
        .positions()
        .iter()
        .zip(&r)
        .enumerate()
        .map(|(i, (x, ri))| vec![i.to_string(), fmt(*x), fmt(*ri)])
        .collect();
    report.csv(name, "i,x_i,R_i", &rows)?;
    Ok(())
}

/// Path dump: one row per (time node, particle); `phi_term` is the particle's
/// contribution to the action of the interval starting at that node (empty on
/// the final node).
fn dump_geodesic(
    report: &Report,
    res: &GeodesicResult,
    density: &ActionDensity,
    rule: RhoStarRule,
) -> Result<()> {
    let mut rows = Vec::new();
    let path = &res.path;
    let k = path.intervals();
    let n = path.n();
    let p = density.p();
    let mobility = density.mobility();
    for (j, state) in path.states().iter().enumerate() {
        let r = reconstruct_density(state, rule, mobility)?;
        let v = if j < k { Some(path.velocity(j)) } else { None };
        for i in 0..=n {
            let phi_term = v.as_ref().map(|v| {
                let theta = mobility.theta(r[i].min(mobility.max_density())).unwrap_or(0.0);
                if theta > 0.0 {
                    v[i].abs().powf(p) / theta.powf(p - 1.0) / (n + 1) as f64
                } else if v[i] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            });
            rows.push(vec![
                fmt(path.times()[j]),
                i.to_string(),
                fmt(state.positions()[i]),
                fmt(r[i]),
                phi_term.map(fmt).unwrap_or_default(),
            ]);
        }
    }
    report.csv("path.csv", "t,i,x,R,phi_term", &rows)?;
    Ok(())
}

pub fn run_gamma(args: &CommonArgs) -> i32 {
    let loaded = match config::load::<GammaConfig>(&args.config) {
        Ok(l) => l,
        Err(e) => return fail_config(&e),
    };
    match gamma_inner(args, &loaded.config, &loaded.hash) {
        Ok(code) => code,
        Err(e) => fail_config(&e),
    }
}

fn gamma_inner(args: &CommonArgs, cfg: &GammaConfig, hash: &str) -> Result<i32> {
    cfg.mu0.validate()?;
    cfg.mu1.validate()?;
    let density = config::action_density(&cfg.mobility, cfg.p)?;
    let study = run_gamma_study(&cfg.mu0, &cfg.mu1, &density, cfg.rule, &cfg.solver, &cfg.n_list)?;

    let report = Report::new(&args.out, hash, args.seed)?;
    let mut rows = Vec::new();
    for (i, r) in study.records.iter().enumerate() {
        let gap = if i == 0 {
            String::new()
        } else {
            fmt(study.gaps[i - 1])
        };
        rows.push(vec![
            r.n.to_string(),
            fmt(r.distance),
            fmt(r.lower_bound),
            fmt(r.upper_bound),
            gap,
        ]);
    }
    report.csv("gamma.csv", "N,distance,lower_bound,upper_bound,gap", &rows)?;
    let all_converged = study.records.iter().all(|r| r.converged);
    report.json(
        "gamma.json",
        serde_json::json!({
            "study": "gamma",
            "rule": cfg.rule,
            "p": cfg.p,
            "records": study.records,
            "gaps": study.gaps,
            "cauchy": study.cauchy,
            "sandwiched": study.sandwiched,
            "all_converged": all_converged,
            "continuum_estimate": study.continuum_estimate,
        }),
    )?;
    println!(
        "gamma: continuum estimate {} (cauchy={}, sandwiched={})",
        study.continuum_estimate, study.cauchy, study.sandwiched
    );
    Ok(if study.cauchy && study.sandwiched && all_converged {
        EXIT_OK
    } else {
        EXIT_VERDICT
    })
}

pub fn run_jko(args: &CommonArgs) -> i32 {
    let loaded = match config::load::<JkoConfig>(&args.config) {
        Ok(l) => l,
        Err(e) => return fail_config(&e),
    };
    match jko_inner(args, &loaded.config, &loaded.hash) {
        Ok(code) => code,
        Err(e) => fail_config(&e),
    }
}

fn jko_inner(args: &CommonArgs, cfg: &JkoConfig, hash: &str) -> Result<i32> {
    cfg.mu0.validate()?;
    cfg.functional.validate()?;
    let density = config::action_density(&cfg.mobility, 2.0)?;
    let study = jko_convergence_study(
        &cfg.mu0,
        &cfg.functional,
        cfg.tau,
        cfg.n_steps,
        &cfg.n_list,
        cfg.q,
        &density,
        cfg.rule,
        &cfg.solver,
    )?;

    let report = Report::new(&args.out, hash, args.seed)?;
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.step.to_string(),
                fmt(r.j_value),
                fmt(r.energy),
                fmt(r.transport_cost),
                fmt(r.second_moment),
                fmt(r.wq_to_ref),
            ]
        })
        .collect();
    report.csv("jko.csv", "N,n,J,F,dist,second_moment,wq_to_ref", &rows)?;
    report.json(
        "jko.json",
        serde_json::json!({
            "study": "jko",
            "q": study.q,
            "tau": cfg.tau,
            "n_steps": cfg.n_steps,
            "rule": cfg.rule,
            "monotone": study.monotone,
        }),
    )?;
    println!("jko: monotone={}", study.monotone);
    Ok(if study.monotone { EXIT_OK } else { EXIT_VERDICT })
}

pub fn run_ftl(args: &CommonArgs) -> i32 {
    let loaded = match config::load::<FtlConfig>(&args.config) {
        Ok(l) => l,
        Err(e) => return fail_config(&e),
    };
    match ftl_inner(args, &loaded.config, &loaded.hash) {
        Ok(code) => code,
        Err(e) => fail_config(&e),
    }
}

fn ftl_inner(args: &CommonArgs, cfg: &FtlConfig, hash: &str) -> Result<i32> {
    let law = VelocityLaw::traffic(cfg.max_density)?;
    if cfg.n_list.is_empty() {
        return Err(Error::domain("N_list must not be empty"));
    }
    let mut errors = Vec::new();
    for &n in &cfg.n_list {
        let err = ftl_vs_entropy(cfg.rho_l, cfg.rho_r, &law, cfg.rule, n, cfg.t)?;
        errors.push((n, err));
    }

    let report = Report::new(&args.out, hash, args.seed)?;
    let rows: Vec<Vec<String>> = errors
        .iter()
        .map(|(n, e)| vec![n.to_string(), fmt(*e)])
        .collect();
    report.csv("ftl_errors.csv", "N,l1_error", &rows)?;

    // trajectory and profile dumps at the finest resolution
    let n = *cfg.n_list.last().unwrap();
    let window = riemann_window(cfg.rho_l, cfg.rho_r, 1.0)?;
    let particles = riemann_particles(cfg.rho_l, cfg.rho_r, &window, n, cfg.max_density)?;
    let states = ftl_integrate(
        &FtlState {
            t: 0.0,
            cfg: particles,
        },
        &law,
        cfg.rule,
        cfg.t,
        cfg.t / (20.0 * n as f64),
    )?;
    let stride = (states.len() / 32).max(1);
    let mut rows = Vec::new();
    for state in states.iter().step_by(stride).chain(states.last()) {
        let r = gap_densities(&state.cfg);
        for (i, x) in state.cfg.positions().iter().enumerate() {
            let ri = if i < r.len() { r[i] } else { *r.last().unwrap() };
            rows.push(vec![fmt(state.t), i.to_string(), fmt(*x), fmt(ri)]);
        }
    }
    report.csv("ftl_path.csv", "t,i,x,R", &rows)?;

    let final_cfg = &states.last().unwrap().cfg;
    let lo = window.left.min(final_cfg.positions()[0]) - 0.1;
    let hi = window.right.max(*final_cfg.positions().last().unwrap()) + 0.1;
    let grid: Vec<f64> = (0..512).map(|i| lo + (hi - lo) * i as f64 / 511.0).collect();
    let ftl_rho = density_profile(final_cfg, &grid);
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&ftl_rho)
        .map(|(x, rf)| {
            let exact = riemann_entropy_density(cfg.rho_l, cfg.rho_r, cfg.max_density, *x, cfg.t);
            vec![fmt(*x), fmt(exact), fmt(*rf)]
        })
        .collect();
    report.csv("ftl_profile.csv", "x,rho_exact,rho_ftl", &rows)?;

    let decreasing = errors.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9));
    report.json(
        "ftl.json",
        serde_json::json!({
            "study": "ftl",
            "rho_l": cfg.rho_l,
            "rho_r": cfg.rho_r,
            "M": cfg.max_density,
            "t": cfg.t,
            "rule": cfg.rule,
            "errors": errors.iter().map(|(n, e)| serde_json::json!({"N": n, "l1_error": e})).collect::<Vec<_>>(),
            "decreasing": decreasing,
        }),
    )?;
    for (n, e) in &errors {
        println!("ftl: N={n} l1_error={e}");
    }
    Ok(if decreasing { EXIT_OK } else { EXIT_VERDICT })
}
