//! Minimizing movements for energies on the particle cone: the implicit Euler
//! step in the discrete transport metric (quadratic case), trajectories, and
//! the coercivity safety checks.

use crate::cone::{embed_empirical, ParticleConfig, RhoStarRule};
use crate::error::{Error, Result};
use crate::geodesic::{
    path_action_with, solve_geodesic_lenient, solve_stages, ParticlePath, SolverOptions, StateEval,
};
use crate::mobility::{ActionDensity, Mobility};
use crate::solver::{minimize, MinimizeOptions};
use crate::transcription::{interiorize, PinMasks, Transcription, Workspace};
use serde::{Deserialize, Serialize};

/// Scalar potential entering a potential energy `F(mu) = int f dmu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialFn {
    /// `f(x) = x`.
    Linear,
    /// `f(x) = x^2 / 2`.
    Quadratic,
    /// Piecewise-linear interpolation of a sample table, extended by its edge
    /// slopes.
    Table { x: Vec<f64>, f: Vec<f64> },
}

impl PotentialFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialFn::Linear => x,
            PotentialFn::Quadratic => 0.5 * x * x,
            PotentialFn::Table { x: xs, f: fs } => {
                let seg = table_segment(xs, x);
                let slope = (fs[seg + 1] - fs[seg]) / (xs[seg + 1] - xs[seg]);
                fs[seg] + slope * (x - xs[seg])
            }
        }
    }

    pub fn prime(&self, x: f64) -> f64 {
        match self {
            PotentialFn::Linear => 1.0,
            PotentialFn::Quadratic => x,
            PotentialFn::Table { x: xs, f: fs } => {
                let seg = table_segment(xs, x);
                (fs[seg + 1] - fs[seg]) / (xs[seg + 1] - xs[seg])
            }
        }
    }
}

fn table_segment(xs: &[f64], x: f64) -> usize {
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[xs.len() - 1] {
        return xs.len() - 2;
    }
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i - 1,
    }
}

/// Energy functional on the cone, evaluated through the empirical embedding:
/// `F_N(x) = 1/(N+1) sum f(x_i)`. The growth certificate bounds the negative
/// part, `[f]_- <= C |x|^s + D` with `s < 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnergyFunctional {
    Zero,
    Potential {
        f: PotentialFn,
        #[serde(rename = "C")]
        c: f64,
        #[serde(rename = "D")]
        d: f64,
        s: f64,
    },
}

impl EnergyFunctional {
    /// `f(x) = x` with certificate `C = 1, D = 0, s = 1`.
    pub fn linear_drift() -> Self {
        EnergyFunctional::Potential {
            f: PotentialFn::Linear,
            c: 1.0,
            d: 0.0,
            s: 1.0,
        }
    }

    /// `f(x) = x^2/2`, nonnegative, so `C = 0`.
    pub fn quadratic() -> Self {
        EnergyFunctional::Potential {
            f: PotentialFn::Quadratic,
            c: 0.0,
            d: 0.0,
            s: 1.0,
        }
    }

    /// Check the growth certificate on a probe grid.
    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyFunctional::Zero => Ok(()),
            EnergyFunctional::Potential { f, c, d, s } => {
                if !(*s > 0.0 && *s < 2.0) {
                    return Err(Error::domain(format!("growth exponent s must be in (0,2), got {s}")));
                }
                if *c < 0.0 || *d < 0.0 {
                    return Err(Error::domain("growth constants must be nonnegative"));
                }
                if let PotentialFn::Table { x, f: fv } = f {
                    if x.len() != fv.len() || x.len() < 2 {
                        return Err(Error::domain("potential table needs two matching columns"));
                    }
                    for w in x.windows(2) {
                        if !(w[1] > w[0]) {
                            return Err(Error::domain("potential table abscissae must increase"));
                        }
                    }
                }
                for k in 0..=400 {
                    let x = -20.0 + 40.0 * k as f64 / 400.0;
                    let neg = (-f.eval(x)).max(0.0);
                    let bound = c * x.abs().powf(*s) + d;
                    if neg > bound + 1e-12 * bound.max(1.0) {
                        return Err(Error::domain(format!(
                            "growth certificate fails at x = {x}: [f]_- = {neg} > {bound}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn growth(&self) -> (f64, f64, f64) {
        match self {
            EnergyFunctional::Zero => (0.0, 0.0, 1.0),
            EnergyFunctional::Potential { c, d, s, .. } => (*c, *d, *s),
        }
    }

    pub(crate) fn eval_positions(&self, x: &[f64]) -> f64 {
        match self {
            EnergyFunctional::Zero => 0.0,
            EnergyFunctional::Potential { f, .. } => {
                x.iter().map(|v| f.eval(*v)).sum::<f64>() / x.len() as f64
            }
        }
    }

    /// `F(x) - F(reference)` with the cancellation done per particle, keeping
    /// the optimizer's objective near zero at the warm start (absolute energy
    /// offsets would otherwise cap the representable decrease).
    pub(crate) fn eval_positions_shifted(&self, x: &[f64], reference: &[f64]) -> f64 {
        match self {
            EnergyFunctional::Zero => 0.0,
            EnergyFunctional::Potential { f, .. } => {
                x.iter()
                    .zip(reference)
                    .map(|(v, r)| f.eval(*v) - f.eval(*r))
                    .sum::<f64>()
                    / x.len() as f64
            }
        }
    }

    /// Accumulate the gradient of `eval_positions` into `out`.
    pub(crate) fn grad_positions(&self, x: &[f64], out: &mut [f64]) {
        if let EnergyFunctional::Potential { f, .. } = self {
            let inv = 1.0 / x.len() as f64;
            for (o, v) in out.iter_mut().zip(x) {
                *o += inv * f.prime(*v);
            }
        }
    }

    pub fn eval_config(&self, cfg: &ParticleConfig) -> f64 {
        self.eval_positions(cfg.positions())
    }
}

/// One accepted minimizing-movement step.
#[derive(Debug, Clone)]
pub struct JkoStep {
    pub config: ParticleConfig,
    /// `F_N` at this step.
    pub energy: f64,
    /// Discrete transport distance to the previous step.
    pub transport_cost: f64,
    /// `F_N + d^2 / (2 tau)` with the previous step as base point.
    pub j_value: f64,
}

/// A minimizing-movement trajectory with its defining data.
#[derive(Debug, Clone)]
pub struct JkoTrajectory {
    pub tau: f64,
    pub steps: Vec<JkoStep>,
    pub functional: EnergyFunctional,
    pub rule: RhoStarRule,
    pub mobility: Mobility,
}

fn check_jko_inputs(tau: f64, density: &ActionDensity) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("time step must be positive, got {tau}")));
    }
    if (density.p() - 2.0).abs() > 1e-12 {
        return Err(Error::domain(
            "minimizing movements are defined for the quadratic action (p = 2)",
        ));
    }
    Ok(())
}

struct StepOutcome {
    step: JkoStep,
    converged: bool,
    residual: f64,
}

/// Joint transcription: endpoint and interior path states form one decision
/// vector.
fn jko_step_joint(
    prev: &ParticleConfig,
    functional: &EnergyFunctional,
    tau: f64,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    let n = prev.n();
    let k = opts.time_steps.max(1);
    let w = n + 1;
    let eval = opts.state_eval();
    let scale = prev.scale();
    let grad_tol = opts.tol * scale;
    let bound = prev.gap_bound();

    let pins = if matches!(eval, StateEval::Midpoint) {
        PinMasks::none(n, k)
    } else {
        PinMasks::from_jams(&super::geodesic::initial_jams(prev, density, rule)?, rule, k)
    };

    // constant path at `prev`, interiorized row by row
    let mut states = vec![0.0; (k + 1) * w];
    for row in 0..=k {
        states[row * w..(row + 1) * w].copy_from_slice(prev.positions());
        if row >= 1 {
            let frozen = &pins.masks[row];
            interiorize(&mut states[row * w..(row + 1) * w], frozen, bound, 1e-3);
        }
    }

    let make = |lambda: f64| -> Result<Transcription<'_>> {
        let stage_density = if lambda > 1.0 {
            density.dilate(lambda)?
        } else {
            density.clone()
        };
        Ok(Transcription::new(
            n,
            k,
            prev.positions().to_vec(),
            None,
            stage_density,
            rule,
            prev.max_density(),
            pins.clone(),
            eval,
            1.0 / (2.0 * tau),
            Some(functional),
        ))
    };

    let probe = make(1.0)?;
    let map = probe.var_map();
    let init_vars = probe.gather(&states, &map);
    let solved = solve_stages(make, init_vars, opts, grad_tol, scale)?;

    // rebuild the endpoint and the path
    let final_trans = make(1.0)?;
    let mut ws = Workspace::new(n, k);
    let _ = final_trans.eval(&solved.vars, &map, &mut ws, None);
    let mut cfgs = Vec::with_capacity(k + 1);
    for row in 0..=k {
        cfgs.push(ParticleConfig::new(
            ws.states()[row * w..(row + 1) * w].to_vec(),
            prev.max_density(),
        )?);
    }
    let path = ParticlePath::new(cfgs)?;
    let y = path.states().last().unwrap().clone();
    let action = path_action_with(&path, density, rule, eval)?;
    let j_candidate = functional.eval_config(&y) + action / (2.0 * tau);
    let j_prev = functional.eval_config(prev);

    // the previous point is always a feasible competitor with zero cost
    let step = if j_candidate <= j_prev {
        JkoStep {
            config: y,
            energy: functional.eval_config(path.states().last().unwrap()),
            transport_cost: action.max(0.0).sqrt(),
            j_value: j_candidate,
        }
    } else {
        JkoStep {
            config: prev.clone(),
            energy: j_prev,
            transport_cost: 0.0,
            j_value: j_prev,
        }
    };
    Ok(StepOutcome {
        step,
        converged: solved.converged,
        residual: solved.outcome.grad_norm,
    })
}

/// Nested formulation (cross-validation): outer minimization over the
/// endpoint, inner geodesic solves providing the transport term and its
/// envelope gradient.
fn jko_step_nested(
    prev: &ParticleConfig,
    functional: &EnergyFunctional,
    tau: f64,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    let n = prev.n();
    let w = n + 1;
    let bound = prev.gap_bound();
    let scale = prev.scale();
    let mobility = density.mobility().clone();
    let inner_opts = SolverOptions {
        max_outer: 4,
        tol: opts.tol * 10.0,
        midpoint: false,
        ..opts.clone()
    };

    let mut y0 = prev.positions().to_vec();
    interiorize(&mut y0, &vec![false; w], bound, 1e-3);

    let mut barrier_weight = opts.barrier0;
    let mut y = y0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _outer in 0..opts.max_outer.max(1) {
        let outcome = minimize(
            |yv: &[f64], g: &mut [f64]| {
                for gap in yv.windows(2) {
                    if !(gap[1] - gap[0] > bound) {
                        return f64::INFINITY;
                    }
                }
                let cfg = match ParticleConfig::new(yv.to_vec(), prev.max_density()) {
                    Ok(c) => c,
                    Err(_) => return f64::INFINITY,
                };
                let res = match solve_geodesic_lenient(prev, &cfg, density, rule, &inner_opts) {
                    Ok(r) => r,
                    Err(_) => return f64::INFINITY,
                };
                let action = res.distance * res.distance;
                let mut f = functional.eval_positions(yv) + action / (2.0 * tau);
                g.iter_mut().for_each(|v| *v = 0.0);
                functional.grad_positions(yv, g);
                // envelope gradient of the inner optimum through the last interval
                let kk = res.path.intervals();
                let xk = res.path.states()[kk - 1].positions();
                let r = crate::cone::reconstruct_density(
                    &res.path.states()[kk - 1],
                    rule,
                    &mobility,
                )
                .unwrap_or_else(|_| vec![0.0; w]);
                for i in 0..w {
                    let theta = mobility.theta_unchecked(r[i].min(mobility.max_density()));
                    if theta > 0.0 {
                        let v = (yv[i] - xk[i]) * kk as f64;
                        g[i] += (1.0 / w as f64) * (2.0 * v / theta) / (2.0 * tau);
                    }
                }
                // barrier on the endpoint gaps
                for i in 0..n {
                    let slack = yv[i + 1] - yv[i] - bound;
                    f -= barrier_weight * slack.ln();
                    g[i] += barrier_weight / slack;
                    g[i + 1] -= barrier_weight / slack;
                }
                f
            },
            y.clone(),
            &MinimizeOptions {
                grad_tol: opts.tol * scale * 1e2,
                max_iters: 60,
                memory: 8,
            },
        );
        y = outcome.x.clone();
        converged = crate::geodesic::effective_convergence(&outcome, opts.tol * scale * 1e2, scale);
        residual = outcome.grad_norm;
        barrier_weight *= 0.1;
    }

    let cfg = ParticleConfig::new(y, prev.max_density())?;
    let res = solve_geodesic_lenient(prev, &cfg, density, rule, &inner_opts)?;
    let cost = res.distance * res.distance;
    let j_candidate = functional.eval_config(&cfg) + cost / (2.0 * tau);
    let j_prev = functional.eval_config(prev);
    let step = if j_candidate <= j_prev {
        JkoStep {
            energy: functional.eval_config(&cfg),
            config: cfg,
            transport_cost: res.distance,
            j_value: j_candidate,
        }
    } else {
        JkoStep {
            config: prev.clone(),
            energy: j_prev,
            transport_cost: 0.0,
            j_value: j_prev,
        }
    };
    Ok(StepOutcome {
        step,
        converged,
        residual,
    })
}

fn jko_step_inner(
    prev: &ParticleConfig,
    functional: &EnergyFunctional,
    tau: f64,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    check_jko_inputs(tau, density)?;
    functional.validate()?;
    if opts.jko_nested {
        jko_step_nested(prev, functional, tau, density, rule, opts)
    } else {
        jko_step_joint(prev, functional, tau, density, rule, opts)
    }
}

/// One minimizing-movement step: locally minimize
/// `F_N(y) + d^N(prev, y)^2 / (2 tau)` over the cone. The previous point is a
/// zero-cost competitor, so the returned step never increases the objective.
pub fn jko_step(
    prev: &ParticleConfig,
    functional: &EnergyFunctional,
    tau: f64,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<JkoStep> {
    let out = jko_step_inner(prev, functional, tau, density, rule, opts)?;
    if out.converged {
        Ok(out.step)
    } else {
        let partial = JkoTrajectory {
            tau,
            steps: vec![out.step],
            functional: functional.clone(),
            rule,
            mobility: density.mobility().clone(),
        };
        Err(Error::JkoNonConvergence {
            step: 0,
            residual: out.residual,
            partial: Box::new(partial),
        })
    }
}

/// Iterate the scheme, recording per-step diagnostics. Aborts cleanly with the
/// partial trajectory if a step fails to converge.
pub fn jko_run(
    init: &ParticleConfig,
    functional: &EnergyFunctional,
    tau: f64,
    n_steps: usize,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<JkoTrajectory> {
    check_jko_inputs(tau, density)?;
    functional.validate()?;
    let mut traj = JkoTrajectory {
        tau,
        steps: vec![JkoStep {
            config: init.clone(),
            energy: functional.eval_config(init),
            transport_cost: 0.0,
            j_value: functional.eval_config(init),
        }],
        functional: functional.clone(),
        rule,
        mobility: density.mobility().clone(),
    };
    for step_idx in 1..=n_steps {
        let prev = traj.steps.last().unwrap().config.clone();
        let out = jko_step_inner(&prev, functional, tau, density, rule, opts)?;
        let converged = out.converged;
        let residual = out.residual;
        traj.steps.push(out.step);
        if !converged {
            return Err(Error::JkoNonConvergence {
                step: step_idx,
                residual,
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// Coercivity safety net: along the trajectory, the second moments stay below
/// the bound assembled from the descent value, the previous moment, and the
/// growth certificate (Young's inequality with explicit constants).
pub fn second_moment_bound_check(traj: &JkoTrajectory) -> bool {
    let theta_sup = traj.mobility.theta_sup();
    let (c_growth, d_growth, s) = traj.functional.growth();
    let tau = traj.tau;
    // J >= (1/(2 tau theta_sup)) (E_mu/2 - E_prev) - C E_mu^{s/2} - D
    //   >= c E_mu - E_prev/(2 tau theta_sup) - D'
    let eps = 1.0 / (8.0 * tau * theta_sup);
    let c = 1.0 / (4.0 * tau * theta_sup) - eps; // = eps
    let young = if c_growth == 0.0 {
        0.0
    } else {
        let u_star = (c_growth * s / (2.0 * eps)).powf(2.0 / (2.0 - s));
        c_growth * u_star.powf(s / 2.0) - eps * u_star
    };
    let d_prime = d_growth + young;

    for pair in traj.steps.windows(2) {
        let prev_m2 = match embed_empirical(&pair[0].config) {
            Ok(m) => m.second_moment(1),
            Err(_) => return false,
        };
        let cur_m2 = match embed_empirical(&pair[1].config) {
            Ok(m) => m.second_moment(1),
            Err(_) => return false,
        };
        let rhs = (pair[1].j_value + prev_m2 / (2.0 * tau * theta_sup) + d_prime) / c;
        if cur_m2 > rhs * (1.0 + 1e-9) + 1e-9 {
            return false;
        }
    }
    true
}
