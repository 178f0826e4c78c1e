//! Follow-the-leader particle dynamics for scalar conservation laws:
//! `dx_j/dt = v(R_j)` with the gap-reconstructed density, an adaptive RK4
//! integrator preserving the particle order, and the exact Riemann solution
//! of the traffic flux as an internal oracle.

use crate::cone::{grid_argmax, ParticleConfig, RhoStarRule};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Eulerian velocity law `v(rho) = f(rho)/rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VelocityLaw {
    /// `v(rho) = 1 - rho/M`, the traffic law with flux `f(rho) = rho (1 - rho/M)`.
    Traffic {
        #[serde(rename = "M")]
        max_density: f64,
    },
    /// Piecewise-linear sample table, clamped at the edges.
    Custom { rho: Vec<f64>, v: Vec<f64> },
}

impl VelocityLaw {
    pub fn traffic(max_density: f64) -> Result<Self> {
        if !(max_density > 0.0) {
            return Err(Error::domain("traffic law needs a positive maximal density"));
        }
        Ok(VelocityLaw::Traffic { max_density })
    }

    pub fn max_density(&self) -> f64 {
        match self {
            VelocityLaw::Traffic { max_density } => *max_density,
            VelocityLaw::Custom { rho, .. } => *rho.last().unwrap(),
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            VelocityLaw::Traffic { max_density } => 1.0 - rho / max_density,
            VelocityLaw::Custom { rho: xs, v: vs } => {
                if rho <= xs[0] {
                    return vs[0];
                }
                if rho >= *xs.last().unwrap() {
                    return *vs.last().unwrap();
                }
                let idx = xs.partition_point(|r| *r <= rho) - 1;
                let t = (rho - xs[idx]) / (xs[idx + 1] - xs[idx]);
                vs[idx] + t * (vs[idx + 1] - vs[idx])
            }
        }
    }

    /// Density maximizing the velocity on `[0, (1-d)M]` (the leader's density
    /// under the constant rule).
    pub fn argmax_density(&self) -> f64 {
        grid_argmax(|rho| self.eval(rho), self.max_density())
    }
}

/// A configuration at a time instant. The dynamics needs strict ordering only,
/// not the transport cone's minimal gap.
#[derive(Debug, Clone)]
pub struct FtlState {
    pub t: f64,
    pub cfg: ParticleConfig,
}

fn strict_ordering(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] > w[0] && w[0].is_finite())
}

fn rhs_positions(x: &[f64], law: &VelocityLaw, rule: RhoStarRule) -> Vec<f64> {
    let n = x.len() - 1;
    let mut out = Vec::with_capacity(n + 1);
    let mut r_last = 0.0;
    for i in 0..n {
        let r = 1.0 / (n as f64 * (x[i + 1] - x[i]));
        out.push(law.eval(r));
        r_last = r;
    }
    let leader_rho = match rule {
        RhoStarRule::ConstArgmaxTheta => law.argmax_density(),
        RhoStarRule::LookBack => r_last,
    };
    out.push(law.eval(leader_rho));
    out
}

/// Velocity field of the particle system: `v(R_j)` for the followers and the
/// rule-selected density for the leader (the constant rule maximizes `v`, so
/// the leader travels at top speed).
pub fn ftl_rhs(state: &FtlState, law: &VelocityLaw, rule: RhoStarRule) -> Result<Vec<f64>> {
    let x = state.cfg.positions();
    if !strict_ordering(x) {
        return Err(Error::cone("particles must be strictly ordered"));
    }
    Ok(rhs_positions(x, law, rule))
}

fn rk4_step(x: &[f64], dt: f64, law: &VelocityLaw, rule: RhoStarRule) -> Option<Vec<f64>> {
    let add = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + c * ki).collect()
    };
    let k1 = rhs_positions(x, law, rule);
    let x2 = add(x, &k1, 0.5 * dt);
    if !strict_ordering(&x2) {
        return None;
    }
    let k2 = rhs_positions(&x2, law, rule);
    let x3 = add(x, &k2, 0.5 * dt);
    if !strict_ordering(&x3) {
        return None;
    }
    let k3 = rhs_positions(&x3, law, rule);
    let x4 = add(x, &k3, dt);
    if !strict_ordering(&x4) {
        return None;
    }
    let k4 = rhs_positions(&x4, law, rule);
    let out: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if strict_ordering(&out) {
        Some(out)
    } else {
        None
    }
}

/// Integrate the particle system to `t_end` with step `dt`, halving the step
/// whenever it would break the ordering. Returns the accepted states,
/// starting with the initial one.
pub fn ftl_integrate(
    init: &FtlState,
    law: &VelocityLaw,
    rule: RhoStarRule,
    t_end: f64,
    dt: f64,
) -> Result<Vec<FtlState>> {
    if !(dt > 0.0) || !(t_end > init.t) {
        return Err(Error::domain("need dt > 0 and t_end past the initial time"));
    }
    if !strict_ordering(init.cfg.positions()) {
        return Err(Error::cone("initial particles must be strictly ordered"));
    }
    let dt_min = 1e-12 * t_end;
    let mut states = vec![init.clone()];
    let mut t = init.t;
    let mut x = init.cfg.positions().to_vec();
    let max_density = init.cfg.max_density();

    while t < t_end - 1e-15 * t_end.max(1.0) {
        let mut step = dt.min(t_end - t);
        loop {
            match rk4_step(&x, step, law, rule) {
                Some(next) => {
                    x = next;
                    t += step;
                    break;
                }
                None => {
                    step *= 0.5;
                    if step < dt_min {
                        return Err(Error::StepFailure(format!(
                            "time step underflow at t = {t}: ordering cannot be preserved"
                        )));
                    }
                }
            }
        }
        states.push(FtlState {
            t,
            cfg: ParticleConfig::new_unchecked(x.clone(), max_density),
        });
    }
    Ok(states)
}

/// Exact entropy solution of the Riemann problem for the traffic flux
/// `f(rho) = rho (1 - rho/M)` with data `rho_l` (left) / `rho_r` (right)
/// jumping at the origin. Concave flux: decreasing jumps open rarefaction
/// fans, increasing jumps travel as shocks at the Rankine-Hugoniot speed.
pub fn riemann_entropy_density(rho_l: f64, rho_r: f64, max_density: f64, x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return if x < 0.0 { rho_l } else { rho_r };
    }
    let fprime = |rho: f64| 1.0 - 2.0 * rho / max_density;
    if rho_l > rho_r {
        // rarefaction between the characteristic speeds
        let (sl, sr) = (fprime(rho_l), fprime(rho_r));
        let xi = x / t;
        if xi <= sl {
            rho_l
        } else if xi >= sr {
            rho_r
        } else {
            0.5 * max_density * (1.0 - xi)
        }
    } else if rho_l < rho_r {
        let flux = |rho: f64| rho * (1.0 - rho / max_density);
        let speed = (flux(rho_r) - flux(rho_l)) / (rho_r - rho_l);
        if x < speed * t {
            rho_l
        } else {
            rho_r
        }
    } else {
        rho_l
    }
}

/// Spatial kinks of the exact solution at time `t`.
fn riemann_kinks(rho_l: f64, rho_r: f64, max_density: f64, t: f64) -> Vec<f64> {
    let fprime = |rho: f64| 1.0 - 2.0 * rho / max_density;
    if rho_l > rho_r {
        vec![fprime(rho_l) * t, fprime(rho_r) * t]
    } else if rho_l < rho_r {
        let flux = |rho: f64| rho * (1.0 - rho / max_density);
        vec![(flux(rho_r) - flux(rho_l)) / (rho_r - rho_l) * t]
    } else {
        vec![]
    }
}

/// The window of Riemann data truncated to unit mass, and the padding used on
/// a vacuum side.
#[derive(Debug, Clone, Copy)]
pub struct RiemannWindow {
    pub left: f64,
    pub right: f64,
    /// Right edge of the sampled mass (differs from `right` on a right vacuum).
    pub mass_right: f64,
    pub mass_left: f64,
}

/// Truncate the two-state profile to unit mass around the jump. With mass on
/// both sides, half sits on each; a vacuum side only contributes padding for
/// the comparison region.
pub fn riemann_window(rho_l: f64, rho_r: f64, pad: f64) -> Result<RiemannWindow> {
    if rho_l < 0.0 || rho_r < 0.0 {
        return Err(Error::domain("densities must be nonnegative"));
    }
    if rho_l == 0.0 && rho_r == 0.0 {
        return Err(Error::domain("no mass in the Riemann data"));
    }
    Ok(if rho_r == 0.0 {
        RiemannWindow {
            left: -1.0 / rho_l,
            right: pad,
            mass_left: -1.0 / rho_l,
            mass_right: 0.0,
        }
    } else if rho_l == 0.0 {
        RiemannWindow {
            left: -pad,
            right: 1.0 / rho_r,
            mass_left: 0.0,
            mass_right: 1.0 / rho_r,
        }
    } else {
        RiemannWindow {
            left: -0.5 / rho_l,
            right: 0.5 / rho_r,
            mass_left: -0.5 / rho_l,
            mass_right: 0.5 / rho_r,
        }
    })
}

/// Particles at the exact quantiles of the windowed Riemann profile,
/// endpoints included.
pub fn riemann_particles(
    rho_l: f64,
    rho_r: f64,
    window: &RiemannWindow,
    n: usize,
    max_density: f64,
) -> Result<ParticleConfig> {
    let mut x = Vec::with_capacity(n + 1);
    let mass_left = -window.mass_left * rho_l; // mass sitting left of the jump
    for j in 0..=n {
        let z = j as f64 / n as f64;
        let pos = if z <= mass_left && rho_l > 0.0 {
            window.mass_left + z / rho_l
        } else {
            (z - mass_left) / rho_r.max(1e-300)
        };
        x.push(pos);
    }
    if !strict_ordering(&x) {
        return Err(Error::cone("riemann quantiles are not strictly ordered"));
    }
    Ok(ParticleConfig::new_unchecked(x, max_density))
}

/// Piecewise-constant reconstructed density of a configuration, evaluated at
/// the given points (zero outside the particle span).
pub fn density_profile(cfg: &ParticleConfig, points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|p| pc_density(cfg.positions(), *p))
        .collect()
}

/// Piecewise-constant reconstruction of the particle density at a point.
fn pc_density(x: &[f64], pos: f64) -> f64 {
    let n = x.len() - 1;
    if pos < x[0] || pos >= x[n] {
        return 0.0;
    }
    let idx = x.partition_point(|v| *v <= pos) - 1;
    let idx = idx.min(n - 1);
    1.0 / (n as f64 * (x[idx + 1] - x[idx]))
}

/// Exact integral of `|rho_pc - rho_exact|` over `[lo, hi]`: both profiles are
/// piecewise affine between the merged breakpoints, so each piece integrates
/// in closed form (splitting at a sign change).
fn l1_between(
    x: &[f64],
    rho_l: f64,
    rho_r: f64,
    max_density: f64,
    t: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let mut cuts: Vec<f64> = vec![lo, hi];
    cuts.extend(x.iter().copied().filter(|v| *v > lo && *v < hi));
    cuts.extend(
        riemann_kinks(rho_l, rho_r, max_density, t)
            .into_iter()
            .filter(|v| *v > lo && *v < hi),
    );
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v - u <= 0.0 {
            continue;
        }
        let mid = 0.5 * (u + v);
        let c = pc_density(x, mid);
        // exact density is affine on this piece: g(s) = alpha s + beta
        let gu = riemann_entropy_density(rho_l, rho_r, max_density, u + 1e-14 * (v - u), t);
        let gv = riemann_entropy_density(rho_l, rho_r, max_density, v - 1e-14 * (v - u), t);
        let alpha = (gv - gu) / (v - u);
        let beta = gu - alpha * u;
        // integrate |c - (alpha s + beta)| over [u, v]
        let h = |s: f64| c - (alpha * s + beta);
        let (hu, hv) = (h(u), h(v));
        if hu * hv >= 0.0 {
            acc += 0.5 * (hu.abs() + hv.abs()) * (v - u);
        } else {
            let root = u + hu / (hu - hv) * (v - u);
            acc += 0.5 * hu.abs() * (root - u) + 0.5 * hv.abs() * (v - root);
        }
    }
    acc
}

/// Integrate follow-the-leader from quantile-sampled Riemann data and return
/// the `L^1` distance of the reconstructed density to the exact entropy
/// solution, measured on the window shrunk by the maximal wave speed.
pub fn ftl_vs_entropy(
    rho_l: f64,
    rho_r: f64,
    law: &VelocityLaw,
    rule: RhoStarRule,
    n: usize,
    t: f64,
) -> Result<f64> {
    let m = law.max_density();
    if rho_l > m || rho_r > m {
        return Err(Error::domain("riemann data exceeds the maximal density"));
    }
    let window = riemann_window(rho_l, rho_r, 1.0)?;
    let cfg = riemann_particles(rho_l, rho_r, &window, n, m)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let dt = t / (20.0 * n as f64);
    let states = ftl_integrate(&FtlState { t: 0.0, cfg }, law, rule, t, dt)?;
    let x = states.last().unwrap().cfg.positions();

    // region untouched by the truncation waves; vacuum sides carry no wave
    let c_max = 1.0_f64; // traffic: |f'| <= 1 on [0, M]
    let lo = if rho_l == 0.0 {
        window.left
    } else {
        window.left + c_max * t
    };
    let hi = if rho_r == 0.0 {
        window.right
    } else {
        window.right - c_max * t
    };
    if hi <= lo {
        return Err(Error::domain(
            "comparison window is empty: reduce t or enlarge the mass window",
        ));
    }
    Ok(l1_between(x, rho_l, rho_r, m, t, lo, hi))
}
