//! Convergence studies across particle counts: the distance trend probing the
//! discrete-to-continuum limit and the cross-resolution comparison of
//! minimizing-movement trajectories.

use crate::cone::{embed_empirical, sample_from_quantile, RhoStarRule};
use crate::error::{Error, Result};
use crate::geodesic::{
    path_action_with, solve_geodesic_lenient, ParticlePath, SolverOptions,
};
use crate::jko::{jko_run, EnergyFunctional, JkoTrajectory};
use crate::measure::{wasserstein_p, Measure1D};
use crate::mobility::ActionDensity;
use rayon::prelude::*;
use serde::Serialize;

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::domain("the particle-count list is empty"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("the particle-count list must strictly increase"));
        }
    }
    Ok(())
}

/// One row of the distance study.
#[derive(Debug, Clone, Serialize)]
pub struct GammaRecord {
    pub n: usize,
    pub distance: f64,
    /// Classical-Wasserstein lower bound through `sup theta`.
    pub lower_bound: f64,
    /// Action of the straight-line path (may be infinite).
    pub upper_bound: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    pub records: Vec<GammaRecord>,
    /// Successive differences `|d_N - d_{N'}|` along the list.
    pub gaps: Vec<f64>,
    /// Successive gaps strictly decreasing.
    pub cauchy: bool,
    /// Every distance between its lower and upper bound.
    pub sandwiched: bool,
    /// Largest-resolution distance, the continuum surrogate.
    pub continuum_estimate: f64,
}

/// Distance trend over increasing particle counts: sample both measures at
/// each resolution, solve the geodesic problem, and record the two-sided
/// bracket (Wasserstein lower bound, straight-line upper bound).
pub fn run_gamma_study(
    mu0: &Measure1D,
    mu1: &Measure1D,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
    n_list: &[usize],
) -> Result<GammaReport> {
    check_n_list(n_list)?;
    let p = density.p();
    let theta_sup = density.mobility().theta_sup();

    let records: Vec<GammaRecord> = n_list
        .par_iter()
        .map(|&n| -> Result<GammaRecord> {
            let a = sample_from_quantile(mu0, n, density.mobility())?;
            let b = sample_from_quantile(mu1, n, density.mobility())?;
            let solved = solve_geodesic_lenient(&a, &b, density, rule, opts)?;
            let atoms = n + 1;
            let quad = atoms * (4096 / atoms + 1);
            let wp = wasserstein_p(&embed_empirical(&a)?, &embed_empirical(&b)?, p, quad)?;
            let lower = wp / theta_sup.powf((p - 1.0) / p);
            let line = ParticlePath::straight_line(&a, &b, opts.time_steps.max(1))?;
            let upper = path_action_with(&line, density, rule, opts.state_eval())?
                .powf(1.0 / p);
            Ok(GammaRecord {
                n,
                distance: solved.distance,
                lower_bound: lower,
                upper_bound: upper,
                converged: solved.solver_report.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gaps: Vec<f64> = records
        .windows(2)
        .map(|w| (w[0].distance - w[1].distance).abs())
        .collect();
    // strictly decreasing, with a floor so exactly-flat sequences count
    let noise = 1e-9
        * records
            .last()
            .map(|r| r.distance.abs().max(1.0))
            .unwrap_or(1.0);
    let cauchy = gaps.windows(2).all(|w| w[1] < w[0] || w[1] <= noise);
    let sandwiched = records.iter().all(|r| {
        let tol = 1e-7 * r.distance.abs().max(1.0);
        r.distance >= r.lower_bound - tol
            && (!r.upper_bound.is_finite() || r.distance <= r.upper_bound + tol)
    });
    let continuum_estimate = records.last().map(|r| r.distance).unwrap_or(f64::NAN);
    Ok(GammaReport {
        records,
        gaps,
        cauchy,
        sandwiched,
        continuum_estimate,
    })
}

/// One row of the minimizing-movement study: a trajectory step at one
/// resolution, compared against the finest trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct JkoStudyRow {
    pub n: usize,
    pub step: usize,
    pub j_value: f64,
    pub energy: f64,
    pub transport_cost: f64,
    pub second_moment: f64,
    /// `W_q` to the matching step of the largest-resolution trajectory.
    pub wq_to_ref: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JkoStudyReport {
    pub rows: Vec<JkoStudyRow>,
    /// For every step, the distance to the reference is nonincreasing in `N`.
    pub monotone: bool,
    pub q: f64,
}

/// Cross-resolution convergence of minimizing movements: run the scheme at
/// every `N`, embed each step empirically, and compare against the finest run
/// at matching step indices.
#[allow(clippy::too_many_arguments)]
pub fn jko_convergence_study(
    mu0: &Measure1D,
    functional: &EnergyFunctional,
    tau: f64,
    n_steps: usize,
    n_list: &[usize],
    q: f64,
    density: &ActionDensity,
    rule: RhoStarRule,
    opts: &SolverOptions,
) -> Result<JkoStudyReport> {
    check_n_list(n_list)?;
    if !(q < 2.0 && q >= 1.0) {
        return Err(Error::domain(format!("the comparison order q must lie in [1,2), got {q}")));
    }

    let trajectories: Vec<(usize, JkoTrajectory)> = n_list
        .par_iter()
        .map(|&n| -> Result<(usize, JkoTrajectory)> {
            let init = sample_from_quantile(mu0, n, density.mobility())?;
            let traj = jko_run(&init, functional, tau, n_steps, density, rule, opts)?;
            Ok((n, traj))
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = &trajectories.last().unwrap().1;
    let mut rows = Vec::new();
    for (n, traj) in &trajectories {
        for (step_idx, step) in traj.steps.iter().enumerate() {
            let here = embed_empirical(&step.config)?;
            let there = embed_empirical(&reference.steps[step_idx].config)?;
            let wq = wasserstein_p(&here, &there, q, 4096)?;
            rows.push(JkoStudyRow {
                n: *n,
                step: step_idx,
                j_value: step.j_value,
                energy: step.energy,
                transport_cost: step.transport_cost,
                second_moment: here.second_moment(1),
                wq_to_ref: wq,
            });
        }
    }

    // monotone in N for every step index, reference excluded (it is zero)
    let mut monotone = true;
    for step_idx in 0..=n_steps {
        let mut prev = f64::INFINITY;
        for (n, _) in trajectories.iter().take(trajectories.len() - 1) {
            let row = rows
                .iter()
                .find(|r| r.n == *n && r.step == step_idx)
                .expect("row exists");
            if row.wq_to_ref > prev + 1e-12 {
                monotone = false;
            }
            prev = row.wq_to_ref;
        }
    }

    Ok(JkoStudyReport {
        rows,
        monotone,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Mobility;

    #[test]
    fn gamma_translation_is_flat_for_linear_mobility() {
        let mu0 = Measure1D::uniform(0.0, 1.0).unwrap();
        let mu1 = Measure1D::uniform(0.4, 1.4).unwrap();
        let density = ActionDensity::new(2.0, Mobility::linear(2.0).unwrap()).unwrap();
        let opts = SolverOptions {
            time_steps: 8,
            ..Default::default()
        };
        let report = run_gamma_study(
            &mu0,
            &mu1,
            &density,
            RhoStarRule::LookBack,
            &opts,
            &[4, 8, 16],
        )
        .unwrap();
        for r in &report.records {
            assert!((r.distance - 0.4).abs() < 1e-6, "N={}: {}", r.n, r.distance);
        }
        assert!(report.sandwiched);
    }

    #[test]
    fn gamma_identical_measures_vanish() {
        let mu = Measure1D::uniform(0.0, 2.0).unwrap();
        let density = ActionDensity::new(2.0, Mobility::logistic(2.0).unwrap()).unwrap();
        let opts = SolverOptions {
            time_steps: 8,
            ..Default::default()
        };
        let report =
            run_gamma_study(&mu, &mu, &density, RhoStarRule::LookBack, &opts, &[4, 8]).unwrap();
        for r in &report.records {
            assert!(r.distance.abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_n_list() {
        let mu = Measure1D::uniform(0.0, 1.0).unwrap();
        let density = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
        assert!(run_gamma_study(
            &mu,
            &mu,
            &density,
            RhoStarRule::LookBack,
            &SolverOptions::default(),
            &[8, 8]
        )
        .is_err());
    }

    #[test]
    fn jko_study_translation_case() {
        // linear drift: every resolution translates identically, so the
        // cross-resolution gaps reduce to the sampling error of the initial
        // datum (M = 2 keeps the sampled gaps away from the cone bound)
        let mu0 = Measure1D::uniform(0.0, 2.0).unwrap();
        let density = ActionDensity::new(2.0, Mobility::linear(2.0).unwrap()).unwrap();
        let opts = SolverOptions {
            time_steps: 8,
            ..Default::default()
        };
        let report = jko_convergence_study(
            &mu0,
            &EnergyFunctional::linear_drift(),
            0.1,
            2,
            &[4, 8, 16],
            1.5,
            &density,
            RhoStarRule::LookBack,
            &opts,
        )
        .unwrap();
        assert!(report.monotone);
        // sampling gap at step 0 equals the gap at later steps (translation)
        let g0: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.step == 0)
            .map(|r| r.wq_to_ref)
            .collect();
        let g2: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.step == 2)
            .map(|r| r.wq_to_ref)
            .collect();
        for (a, b) in g0.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn jko_study_zero_steps() {
        let mu0 = Measure1D::uniform(0.0, 2.0).unwrap();
        let density = ActionDensity::new(2.0, Mobility::linear(1.0).unwrap()).unwrap();
        let report = jko_convergence_study(
            &mu0,
            &EnergyFunctional::Zero,
            0.1,
            0,
            &[4, 8],
            1.0,
            &density,
            RhoStarRule::LookBack,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(report.rows.iter().all(|r| r.step == 0));
        assert!(report.monotone);
    }
}
