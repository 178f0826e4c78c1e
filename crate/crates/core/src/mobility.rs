//! Nonlinear mobilities `m`, the ratio `theta(rho) = m(rho)/rho`, and the
//! Benamou–Brenier action density `phi(rho, j) = |j|^p / m(rho)^(p-1)`.
//!
//! A mobility is a continuous concave function on `[0, M]` with `m(0) = 0`.
//! Concavity makes `theta` nonincreasing, so `sup theta = theta(0)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Functional form of a mobility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MobilityKind {
    /// `m(rho) = rho`; classical Wasserstein transport.
    Linear,
    /// `m(rho) = rho (1 - rho / M)`; congestion with hard cap at `M`.
    Logistic,
    /// Sample table with monotone-concave piecewise-linear interpolation.
    Table { rho: Vec<f64>, m: Vec<f64> },
}

/// A nonlinear mobility together with its maximal density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mobility {
    kind: MobilityKind,
    max_density: f64,
}

const CONCAVITY_TOL: f64 = 1e-12;

impl Mobility {
    pub fn linear(max_density: f64) -> Result<Self> {
        Self::new(MobilityKind::Linear, max_density)
    }

    pub fn logistic(max_density: f64) -> Result<Self> {
        Self::new(MobilityKind::Logistic, max_density)
    }

    /// Build a mobility from a sample table `(rho_k, m_k)`. The table must
    /// start at `(0, 0)`, have strictly increasing abscissae up to `M`, stay
    /// nonnegative, and be concave; interpolation is piecewise linear.
    pub fn table(rho: Vec<f64>, m: Vec<f64>, max_density: f64) -> Result<Self> {
        Self::new(MobilityKind::Table { rho, m }, max_density)
    }

    pub fn new(kind: MobilityKind, max_density: f64) -> Result<Self> {
        if !(max_density > 0.0) || !max_density.is_finite() {
            return Err(Error::domain(format!(
                "max density must be positive and finite, got {max_density}"
            )));
        }
        if let MobilityKind::Table { rho, m } = &kind {
            validate_table(rho, m, max_density)?;
        }
        Ok(Mobility { kind, max_density })
    }

    pub fn kind(&self) -> &MobilityKind {
        &self.kind
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Evaluate `m(rho)` for `rho` in `[0, M]`.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        self.check_domain(rho)?;
        Ok(self.eval_unchecked(rho))
    }

    fn check_domain(&self, rho: f64) -> Result<()> {
        if !(0.0..=self.max_density * (1.0 + 1e-12)).contains(&rho) || rho.is_nan() {
            return Err(Error::domain(format!(
                "density {rho} outside [0, {}]",
                self.max_density
            )));
        }
        Ok(())
    }

    fn eval_unchecked(&self, rho: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => rho,
            MobilityKind::Logistic => rho * (1.0 - rho / self.max_density),
            MobilityKind::Table { rho: xs, m: ms } => interp_linear(xs, ms, rho),
        }
    }

    /// `theta(rho) = m(rho)/rho`, with the right limit at `rho = 0`.
    pub fn theta(&self, rho: f64) -> Result<f64> {
        self.check_domain(rho)?;
        Ok(self.theta_unchecked(rho))
    }

    pub(crate) fn theta_unchecked(&self, rho: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => 1.0,
            MobilityKind::Logistic => 1.0 - rho / self.max_density,
            MobilityKind::Table { rho: xs, m: ms } => {
                if rho > 0.0 {
                    interp_linear(xs, ms, rho) / rho
                } else {
                    self.theta0()
                }
            }
        }
    }

    /// The value `theta(0)`: analytic for the closed forms, a forward
    /// difference over the first grid cell for tables.
    pub fn theta0(&self) -> f64 {
        match &self.kind {
            MobilityKind::Linear | MobilityKind::Logistic => 1.0,
            MobilityKind::Table { rho, m } => m[1] / rho[1],
        }
    }

    /// `sup theta` over `[0, M]`; equals `theta(0)` since theta is nonincreasing.
    pub fn theta_sup(&self) -> f64 {
        self.theta0()
    }

    /// Derivative of `theta` at interior points, used by solver gradients.
    /// Tables are piecewise smooth; at knots the right derivative is returned.
    pub(crate) fn theta_prime(&self, rho: f64) -> f64 {
        match &self.kind {
            MobilityKind::Linear => 0.0,
            MobilityKind::Logistic => -1.0 / self.max_density,
            MobilityKind::Table { rho: xs, m: ms } => {
                if rho <= 0.0 {
                    return 0.0;
                }
                let seg = segment_index(xs, rho);
                let slope = (ms[seg + 1] - ms[seg]) / (xs[seg + 1] - xs[seg]);
                // theta' = (m' rho - m)/rho^2 with m affine on the segment.
                let m_val = ms[seg] + slope * (rho - xs[seg]);
                (slope * rho - m_val) / (rho * rho)
            }
        }
    }

    /// Dilated mobility `rho -> lambda m(rho/lambda)` with maximal density
    /// `lambda M`; its theta satisfies `theta_lambda(rho) = theta(rho/lambda)`.
    pub fn dilate(&self, lambda: f64) -> Result<Mobility> {
        if !(lambda > 1.0) {
            return Err(Error::domain(format!(
                "dilation factor must exceed 1, got {lambda}"
            )));
        }
        let max_density = lambda * self.max_density;
        let kind = match &self.kind {
            // lambda * (rho/lambda) = rho
            MobilityKind::Linear => MobilityKind::Linear,
            // lambda * (rho/lambda)(1 - rho/(lambda M)) = rho (1 - rho/(lambda M))
            MobilityKind::Logistic => MobilityKind::Logistic,
            MobilityKind::Table { rho, m } => MobilityKind::Table {
                rho: rho.iter().map(|r| lambda * r).collect(),
                m: m.iter().map(|v| lambda * v).collect(),
            },
        };
        Mobility::new(kind, max_density)
    }
}

fn validate_table(rho: &[f64], m: &[f64], max_density: f64) -> Result<()> {
    if rho.len() != m.len() || rho.len() < 2 {
        return Err(Error::domain(
            "mobility table needs matching rho/m columns with at least two rows",
        ));
    }
    if rho[0] != 0.0 || m[0] != 0.0 {
        return Err(Error::domain("mobility table must start at (0, 0)"));
    }
    let last = *rho.last().unwrap();
    if (last - max_density).abs() > 1e-12 * max_density.max(1.0) {
        return Err(Error::domain(format!(
            "mobility table must end at rho = M ({max_density}), got {last}"
        )));
    }
    for w in rho.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain("mobility table abscissae must be increasing"));
        }
    }
    if m.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::domain("mobility table values must be nonnegative"));
    }
    // Concavity of the interpolant <=> nonincreasing chord slopes.
    let scale = m.iter().cloned().fold(1.0_f64, f64::max);
    let mut prev_slope = f64::INFINITY;
    for k in 0..rho.len() - 1 {
        let slope = (m[k + 1] - m[k]) / (rho[k + 1] - rho[k]);
        if slope > prev_slope + CONCAVITY_TOL * scale {
            return Err(Error::domain(format!(
                "mobility table is not concave near rho = {}",
                rho[k]
            )));
        }
        prev_slope = slope;
    }
    Ok(())
}

fn segment_index(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let seg = segment_index(xs, x.clamp(xs[0], *xs.last().unwrap()));
    let t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
    ys[seg] + t * (ys[seg + 1] - ys[seg])
}

/// The ratio `theta` packaged with its limit value at zero.
#[derive(Debug, Clone)]
pub struct Theta {
    mobility: Mobility,
}

impl Theta {
    pub fn of(mobility: &Mobility) -> Self {
        Theta {
            mobility: mobility.clone(),
        }
    }

    pub fn eval(&self, rho: f64) -> Result<f64> {
        self.mobility.theta(rho)
    }

    pub fn theta0(&self) -> f64 {
        self.mobility.theta0()
    }

    pub fn sup_norm(&self) -> f64 {
        self.mobility.theta_sup()
    }
}

/// `theta_of(m, rho)` as a free function.
pub fn theta_of(mobility: &Mobility, rho: f64) -> Result<f64> {
    mobility.theta(rho)
}

/// The action density `phi_{p,m}` with exponent `p > 1`.
#[derive(Debug, Clone)]
pub struct ActionDensity {
    p: f64,
    mobility: Mobility,
}

impl ActionDensity {
    pub fn new(p: f64, mobility: Mobility) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::domain(format!("exponent p must be > 1, got {p}")));
        }
        Ok(ActionDensity { p, mobility })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    /// Pointwise action `phi(rho, j)`. Three branches:
    /// a finite value where `m(rho) > 0`, zero where `m(rho) = 0 = j`, and
    /// `+inf` where `m(rho) = 0, j != 0` or `rho > M`.
    pub fn phi(&self, rho: f64, j: f64) -> f64 {
        if rho > self.mobility.max_density {
            return f64::INFINITY;
        }
        let m = self.mobility.eval_unchecked(rho.max(0.0));
        if m > 0.0 {
            j.abs().powf(self.p) / m.powf(self.p - 1.0)
        } else if j == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Same action written through `theta`: `|j|^p theta(rho)^(1-p) rho^(1-p)`.
    /// Agrees with [`ActionDensity::phi`] wherever `m(rho) > 0`.
    pub fn phi_theta_form(&self, rho: f64, j: f64) -> f64 {
        if rho > self.mobility.max_density {
            return f64::INFINITY;
        }
        let theta = self.mobility.theta_unchecked(rho.max(0.0));
        if theta > 0.0 && rho > 0.0 {
            j.abs().powf(self.p) * (theta * rho).powf(1.0 - self.p)
        } else if j == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Replace the mobility by its `lambda`-dilation (solver continuation).
    pub fn dilate(&self, lambda: f64) -> Result<ActionDensity> {
        Ok(ActionDensity {
            p: self.p,
            mobility: self.mobility.dilate(lambda)?,
        })
    }
}

/// `phi(density, rho, j)` as a free function.
pub fn phi(density: &ActionDensity, rho: f64, j: f64) -> f64 {
    density.phi(rho, j)
}

/// `dilate(m, lambda)` as a free function.
pub fn dilate(mobility: &Mobility, lambda: f64) -> Result<Mobility> {
    mobility.dilate(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
    }

    #[test]
    fn linear_theta_is_one() {
        let m = Mobility::linear(1.0).unwrap();
        assert_eq!(theta_of(&m, 0.3).unwrap(), 1.0);
        assert_eq!(m.theta0(), 1.0);
    }

    #[test]
    fn logistic_theta_values() {
        let m = Mobility::logistic(1.0).unwrap();
        // theta(rho) = 1 - rho/M by hand
        assert!((theta_of(&m, 0.5).unwrap() - 0.5).abs() < 1e-15);
        // limit of (rho - rho^2)/rho as rho -> 0
        assert_eq!(theta_of(&m, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn theta_rejects_out_of_domain() {
        let m = Mobility::logistic(1.0).unwrap();
        assert!(theta_of(&m, -0.1).is_err());
        assert!(theta_of(&m, 1.5).is_err());
    }

    #[test]
    fn phi_three_branches() {
        let d = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
        // 1^2 / m(0.5) = 1 / 0.25
        assert!((d.phi(0.5, 1.0) - 4.0).abs() < 1e-12);
        assert_eq!(d.phi(0.0, 0.0), 0.0);
        assert_eq!(d.phi(1.2, 0.0), f64::INFINITY);
        assert_eq!(d.phi(1.0, 0.5), f64::INFINITY); // m(M) = 0, j != 0
    }

    #[test]
    fn phi_two_forms_agree() {
        for mob in [
            Mobility::linear(1.0).unwrap(),
            Mobility::logistic(1.0).unwrap(),
            Mobility::table(
                vec![0.0, 0.25, 0.5, 1.0],
                vec![0.0, 0.2, 0.3, 0.32],
                1.0,
            )
            .unwrap(),
        ] {
            for p in [1.5, 2.0, 3.0] {
                let d = ActionDensity::new(p, mob.clone()).unwrap();
                let mut state: u64 = 0x9e3779b97f4a7c15;
                let mut next = move || {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 11) as f64 / (1u64 << 53) as f64
                };
                for _ in 0..1000 {
                    let rho = 1e-6 + 0.98 * next();
                    let j = 4.0 * next() - 2.0;
                    if mob.eval(rho).unwrap() <= 0.0 {
                        continue;
                    }
                    let a = d.phi(rho, j);
                    let b = d.phi_theta_form(rho, j);
                    assert!(
                        (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                        "forms disagree at rho={rho} j={j}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn phi_homogeneity_in_j() {
        let d = ActionDensity::new(2.5, Mobility::logistic(1.0).unwrap()).unwrap();
        for (rho, j, c) in [(0.3, 0.7, 2.0), (0.6, -1.1, 0.25), (0.2, 0.05, -3.0)] {
            let lhs = d.phi(rho, c * j);
            let rhs = c.abs().powf(2.5) * d.phi(rho, j);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn phi_joint_convexity_on_segments() {
        let d = ActionDensity::new(2.0, Mobility::logistic(1.0).unwrap()).unwrap();
        let mut state: u64 = 42;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let (r0, j0) = (0.05 + 0.9 * next(), 2.0 * next() - 1.0);
            let (r1, j1) = (0.05 + 0.9 * next(), 2.0 * next() - 1.0);
            for t in [0.25, 0.5, 0.75] {
                let rm = (1.0 - t) * r0 + t * r1;
                let jm = (1.0 - t) * j0 + t * j1;
                let lhs = d.phi(rm, jm);
                let rhs = (1.0 - t) * d.phi(r0, j0) + t * d.phi(r1, j1);
                assert!(lhs <= rhs + 1e-10, "convexity failed: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn dilate_linear_is_identity_on_domain() {
        let m = Mobility::linear(1.0).unwrap();
        let md = m.dilate(2.0).unwrap();
        assert_eq!(md.max_density(), 2.0);
        for rho in grid(10, 0.0, 1.0) {
            assert!((md.eval(rho).unwrap() - rho).abs() < 1e-15);
        }
    }

    #[test]
    fn dilate_logistic_values() {
        let m = Mobility::logistic(1.0).unwrap();
        let md = m.dilate(2.0).unwrap();
        // lambda m(rho/lambda) at rho = 1: 2 * (1/2)(1 - 1/2) = 0.5
        assert!((md.eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        let md = m.dilate(1.5).unwrap();
        // theta_lambda(0.75) = theta(0.5) = 0.5
        assert!((md.theta(0.75).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dilate_rejects_small_lambda() {
        let m = Mobility::logistic(1.0).unwrap();
        assert!(m.dilate(1.0).is_err());
        assert!(m.dilate(0.5).is_err());
    }

    #[test]
    fn dilation_relaxes_phi_pointwise() {
        // Lemma-style monotonicity: action under the dilated mobility never exceeds
        // the original one.
        for mob in [
            Mobility::logistic(1.0).unwrap(),
            Mobility::table(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.0], 1.0).unwrap(),
        ] {
            let d = ActionDensity::new(2.0, mob.clone()).unwrap();
            for lambda in [1.05, 1.2, 1.5] {
                let dl = d.dilate(lambda).unwrap();
                for rho in grid(40, 0.0, 1.0) {
                    for j in [-1.0, 0.3, 2.0] {
                        assert!(dl.phi(rho, j) <= d.phi(rho, j) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn table_mobility_validation() {
        assert!(Mobility::table(vec![0.0, 1.0], vec![0.0, 0.5], 1.0).is_ok());
        // not starting at zero
        assert!(Mobility::table(vec![0.1, 1.0], vec![0.0, 0.5], 1.0).is_err());
        // convex kink
        assert!(Mobility::table(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.1, 0.5],
            1.0
        )
        .is_err());
        // negative value
        assert!(Mobility::table(vec![0.0, 0.5, 1.0], vec![0.0, -0.1, 0.0], 1.0).is_err());
    }

    #[test]
    fn theta_nonincreasing_on_grid() {
        for mob in [
            Mobility::logistic(1.0).unwrap(),
            Mobility::table(vec![0.0, 0.2, 0.6, 1.0], vec![0.0, 0.18, 0.3, 0.1], 1.0).unwrap(),
        ] {
            let mut prev = f64::INFINITY;
            for rho in grid(200, 0.0, 1.0) {
                let t = mob.theta(rho).unwrap();
                assert!(t <= prev + 1e-12, "theta increased at rho={rho}");
                assert!(t >= 0.0);
                prev = t;
            }
            let sup = grid(200, 0.0, 1.0)
                .into_iter()
                .map(|r| mob.theta(r).unwrap())
                .fold(0.0_f64, f64::max);
            assert!((sup - mob.theta0()).abs() <= 1e-12 * sup.max(1.0));
        }
    }

    #[test]
    fn table_theta0_forward_difference() {
        let mob = Mobility::table(vec![0.0, 0.25, 1.0], vec![0.0, 0.2, 0.5], 1.0).unwrap();
        assert!((mob.theta0() - 0.8).abs() < 1e-15);
        assert_eq!(mob.theta(0.0).unwrap(), mob.theta0());
    }
}
