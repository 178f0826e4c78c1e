//! Direct transcription of the path-action problem on a uniform time grid.
//!
//! Decision variables are the interior states (and, for minimizing-movement
//! steps, the free right endpoint). The minimal-gap constraint is enforced by
//! a log barrier. Where the action weight is singular (`theta = 0` at a gap
//! sitting exactly on the bound), the infinite branch of the action forces
//! zero velocity; those coordinates are eliminated from the decision vector,
//! row by row, following the melt of the jammed block.

use crate::cone::{grid_argmax, RhoStarRule};
use crate::jko::EnergyFunctional;
use crate::mobility::ActionDensity;

/// Where the state factor of each time interval is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateEval {
    Left,
    Midpoint,
}

/// Per-row masks of coordinates pinned to the left endpoint value.
/// `masks[r][j]` refers to time row `r` (rows `1..=k`); row 0 is the fixed
/// left endpoint itself.
#[derive(Debug, Clone)]
pub(crate) struct PinMasks {
    pub masks: Vec<Vec<bool>>,
}

impl PinMasks {
    pub fn none(n: usize, k: usize) -> Self {
        PinMasks {
            masks: vec![vec![false; n + 1]; k + 1],
        }
    }

    /// Build the melt table from the singular gaps of the left endpoint.
    /// `jam0[i]` marks gap `i` of the start configuration as singular
    /// (`theta(R_i) = 0`). A jammed gap stays jammed while both of its
    /// particles are frozen; with the look-back rule the leader reads the last
    /// gap, so an end jam never melts, while the constant rule frees the
    /// leader immediately and the jam melts one gap per time step.
    pub fn from_jams(jam0: &[bool], rule: RhoStarRule, k: usize) -> Self {
        let n = jam0.len();
        let mut jam = jam0.to_vec();
        let mut masks = vec![vec![false; n + 1]];
        for _row in 1..=k {
            let frozen = |jam: &[bool], j: usize| -> bool {
                if j < n {
                    jam[j]
                } else {
                    match rule {
                        RhoStarRule::LookBack => jam[n - 1],
                        RhoStarRule::ConstArgmaxTheta => false,
                    }
                }
            };
            let mask: Vec<bool> = (0..=n).map(|j| frozen(&jam, j)).collect();
            let next_jam: Vec<bool> = (0..n).map(|i| mask[i] && mask[i + 1]).collect();
            masks.push(mask);
            jam = next_jam;
        }
        PinMasks { masks }
    }

    pub fn pinned(&self, row: usize, j: usize) -> bool {
        self.masks[row][j]
    }

    /// Whether any coordinate of the final row is still frozen.
    pub fn final_row(&self) -> &[bool] {
        self.masks.last().unwrap()
    }
}

pub(crate) struct Transcription<'a> {
    pub n: usize,
    pub k: usize,
    pub a: Vec<f64>,
    /// Fixed right endpoint; `None` leaves it as a decision variable.
    pub b: Option<Vec<f64>>,
    pub density: ActionDensity,
    pub rule: RhoStarRule,
    /// Cached leader density for the constant rule (depends on the stage
    /// mobility, searched inside the cone's own density cap).
    pub rho_star: f64,
    pub gap_bound: f64,
    pub pins: PinMasks,
    pub eval: StateEval,
    /// Multiplies the action in the objective (1 for geodesics, `1/(2 tau)`
    /// for minimizing movements).
    pub action_scale: f64,
    pub energy: Option<&'a EnergyFunctional>,
    pub barrier_weight: f64,
}

pub(crate) struct Workspace {
    states: Vec<f64>,
    gmat: Vec<f64>,
    rvals: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize, k: usize) -> Self {
        Workspace {
            states: vec![0.0; (k + 1) * (n + 1)],
            gmat: vec![0.0; (k + 1) * (n + 1)],
            rvals: vec![0.0; n + 1],
        }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

impl<'a> Transcription<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        k: usize,
        a: Vec<f64>,
        b: Option<Vec<f64>>,
        density: ActionDensity,
        rule: RhoStarRule,
        cone_max_density: f64,
        pins: PinMasks,
        eval: StateEval,
        action_scale: f64,
        energy: Option<&'a EnergyFunctional>,
    ) -> Self {
        let rho_star = match rule {
            RhoStarRule::ConstArgmaxTheta => {
                let mob = density.mobility().clone();
                grid_argmax(
                    move |rho| mob.theta(rho).unwrap_or(f64::NEG_INFINITY),
                    cone_max_density,
                )
            }
            RhoStarRule::LookBack => f64::NAN,
        };
        let gap_bound = 1.0 / (n as f64 * cone_max_density);
        Transcription {
            n,
            k,
            a,
            b,
            density,
            rule,
            rho_star,
            gap_bound,
            pins,
            eval,
            action_scale,
            energy,
            barrier_weight: 0.0,
        }
    }

    pub fn endpoint_free(&self) -> bool {
        self.b.is_none()
    }

    fn last_var_row(&self) -> usize {
        if self.endpoint_free() {
            self.k
        } else {
            self.k - 1
        }
    }

    /// Map from variable index to (time row, particle index).
    pub fn var_map(&self) -> Vec<(usize, usize)> {
        let mut map = Vec::new();
        for row in 1..=self.last_var_row() {
            for i in 0..=self.n {
                if self.pins.pinned(row, i) {
                    continue;
                }
                map.push((row, i));
            }
        }
        map
    }

    /// Write the full state matrix for the given variables.
    pub fn scatter(&self, vars: &[f64], map: &[(usize, usize)], states: &mut [f64]) {
        let w = self.n + 1;
        states[..w].copy_from_slice(&self.a);
        for row in 1..=self.last_var_row() {
            for i in 0..=self.n {
                if self.pins.pinned(row, i) {
                    states[row * w + i] = self.a[i];
                }
            }
        }
        if let Some(b) = &self.b {
            states[self.k * w..(self.k + 1) * w].copy_from_slice(b);
        }
        for (v, (row, i)) in vars.iter().zip(map) {
            states[row * w + i] = *v;
        }
    }

    /// Gather the state matrix back into a variable vector.
    pub fn gather(&self, states: &[f64], map: &[(usize, usize)]) -> Vec<f64> {
        let w = self.n + 1;
        map.iter().map(|(row, i)| states[row * w + i]).collect()
    }

    fn leader_density(&self, r: &[f64]) -> f64 {
        match self.rule {
            RhoStarRule::ConstArgmaxTheta => self.rho_star,
            RhoStarRule::LookBack => r[self.n - 1],
        }
    }

    fn gap_is_constant(&self, row: usize, i: usize) -> bool {
        row >= 1
            && row <= self.last_var_row()
            && self.pins.pinned(row, i)
            && self.pins.pinned(row, i + 1)
    }

    /// Objective (scaled action + energy + barrier) with the gradient gathered
    /// through `map`. Returns `+inf` when a variable state leaves the feasible
    /// region, without touching `grad`.
    pub fn eval(
        &self,
        vars: &[f64],
        map: &[(usize, usize)],
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let n = self.n;
        let w = n + 1;
        let k = self.k;
        let dt = 1.0 / k as f64;
        let inv_n1 = 1.0 / w as f64;
        let p = self.density.p();
        let quadratic = (p - 2.0).abs() < 1e-15;
        let mobility = self.density.mobility();

        self.scatter(vars, map, &mut ws.states);
        ws.gmat.iter_mut().for_each(|g| *g = 0.0);

        // Feasibility of every variable state row.
        for row in 1..=self.last_var_row() {
            for i in 0..n {
                if self.gap_is_constant(row, i) {
                    continue;
                }
                let gap = ws.states[row * w + i + 1] - ws.states[row * w + i];
                if !(gap > self.gap_bound) {
                    return f64::INFINITY;
                }
            }
        }

        let mut action = 0.0;
        let want_grad = grad.is_some();
        let states = &ws.states;

        for kk in 0..k {
            let row0 = kk * w;
            let row1 = (kk + 1) * w;
            for i in 0..n {
                let gap = match self.eval {
                    StateEval::Left => states[row0 + i + 1] - states[row0 + i],
                    StateEval::Midpoint => {
                        0.5 * (states[row0 + i + 1] + states[row1 + i + 1]
                            - states[row0 + i]
                            - states[row1 + i])
                    }
                };
                if !(gap > 0.0) {
                    return f64::INFINITY;
                }
                ws.rvals[i] = 1.0 / (n as f64 * gap);
            }
            ws.rvals[n] = self.leader_density(&ws.rvals);

            let mut sum_k = 0.0;
            for i in 0..=n {
                let v = (states[row1 + i] - states[row0 + i]) * k as f64;
                let r = ws.rvals[i].min(mobility.max_density());
                let theta = mobility.theta_unchecked(r);
                if theta <= 0.0 {
                    if v == 0.0 {
                        continue; // the zero branch of the action density
                    }
                    return f64::INFINITY;
                }
                let (weight, vpow) = if quadratic {
                    (1.0 / theta, v * v)
                } else {
                    (theta.powf(1.0 - p), v.abs().powf(p))
                };
                sum_k += weight * vpow;

                if want_grad {
                    let scale = self.action_scale * dt * inv_n1;
                    let dv = if quadratic {
                        weight * 2.0 * v
                    } else {
                        weight * p * v.abs().powf(p - 1.0) * v.signum()
                    };
                    let gv = scale * dv * k as f64;
                    ws.gmat[row0 + i] -= gv;
                    ws.gmat[row1 + i] += gv;

                    let theta_prime = mobility.theta_prime(r);
                    if theta_prime != 0.0 {
                        let dweight = if quadratic {
                            -theta_prime / (theta * theta)
                        } else {
                            (1.0 - p) * theta.powf(-p) * theta_prime
                        };
                        // which gap does R_i read?
                        let gap_index = if i < n {
                            Some(i)
                        } else if matches!(self.rule, RhoStarRule::LookBack) {
                            Some(n - 1)
                        } else {
                            None
                        };
                        if let Some(gi) = gap_index {
                            let r_gap = ws.rvals[gi];
                            let d_r = n as f64 * r_gap * r_gap; // dR/dx_left
                            let g_amount = scale * vpow * dweight * d_r;
                            match self.eval {
                                StateEval::Left => {
                                    ws.gmat[row0 + gi] += g_amount;
                                    ws.gmat[row0 + gi + 1] -= g_amount;
                                }
                                StateEval::Midpoint => {
                                    ws.gmat[row0 + gi] += 0.5 * g_amount;
                                    ws.gmat[row0 + gi + 1] -= 0.5 * g_amount;
                                    ws.gmat[row1 + gi] += 0.5 * g_amount;
                                    ws.gmat[row1 + gi + 1] -= 0.5 * g_amount;
                                }
                            }
                        }
                    }
                }
            }
            action += dt * inv_n1 * sum_k;
        }

        let mut obj = self.action_scale * action;

        if let Some(f) = self.energy {
            let y = &ws.states[k * w..(k + 1) * w];
            obj += f.eval_positions_shifted(y, &self.a);
            if want_grad {
                f.grad_positions(y, &mut ws.gmat[k * w..(k + 1) * w]);
            }
        }

        if self.barrier_weight > 0.0 {
            let wb = self.barrier_weight;
            for row in 1..=self.last_var_row() {
                for i in 0..n {
                    if self.gap_is_constant(row, i) {
                        continue;
                    }
                    let slack =
                        ws.states[row * w + i + 1] - ws.states[row * w + i] - self.gap_bound;
                    if !(slack > 0.0) {
                        return f64::INFINITY;
                    }
                    obj -= wb * slack.ln();
                    if want_grad {
                        ws.gmat[row * w + i] += wb / slack;
                        ws.gmat[row * w + i + 1] -= wb / slack;
                    }
                }
            }
        }

        if let Some(g) = grad {
            let w = self.n + 1;
            for (gi, (row, i)) in g.iter_mut().zip(map) {
                *gi = ws.gmat[row * w + i];
            }
        }
        obj
    }
}

/// Move a state strictly inside the cone, keeping `frozen` coordinates fixed.
/// Gaps between two frozen coordinates are left alone.
pub(crate) fn interiorize(x: &mut [f64], frozen: &[bool], bound: f64, rel_margin: f64) {
    let n = x.len() - 1;
    let target = bound * (1.0 + rel_margin);
    for _ in 0..64 {
        let mut changed = false;
        // sweep forward pushing free right endpoints up, then backward pulling
        // free left endpoints down; each sweep cascades along whole runs
        for i in 0..n {
            if frozen[i] && frozen[i + 1] {
                continue;
            }
            if x[i + 1] - x[i] < target && !frozen[i + 1] {
                x[i + 1] = x[i] + target;
                changed = true;
            }
        }
        for i in (0..n).rev() {
            if frozen[i] && frozen[i + 1] {
                continue;
            }
            if x[i + 1] - x[i] < target && !frozen[i] {
                x[i] = x[i + 1] - target;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
    // The passes did not settle: a free run is squeezed between two frozen
    // anchors with room for the bound but not for the margin. Equidistribute
    // such runs; the anchor spacing admits this because the frozen values come
    // from a cone point with the same particle count in between.
    let mut i = 0usize;
    while i <= n {
        if !frozen[i] {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j <= n && !frozen[j] {
            j += 1;
        }
        if j > n {
            break;
        }
        if j - i > 1 {
            let cells = (j - i) as f64;
            let step = (x[j] - x[i]) / cells;
            let violated = (i..j).any(|t| x[t + 1] - x[t] <= bound);
            if violated && step > bound {
                for t in 1..(j - i) {
                    x[i + t] = x[i] + step * t as f64;
                }
            }
        }
        i = j;
    }
}
