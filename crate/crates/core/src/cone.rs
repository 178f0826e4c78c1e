//! The cone of ordered particle configurations with minimal gap `1/(N M)`,
//! density reconstruction between neighbors, the leader-density rule, and the
//! two embeddings into probability measures (piecewise-constant and empirical).

use crate::error::{Error, Result};
use crate::measure::{wasserstein_p, Measure1D, DEFAULT_QUAD_POINTS};
use crate::mobility::Mobility;
use serde::{Deserialize, Serialize};

/// Relative slack on the minimal-gap constraint, absorbing optimizer drift.
pub const CONE_REL_TOL: f64 = 1e-14;

/// A point of the cone `K_N`: positions `x_0 <= ... <= x_N` with
/// `x_{i+1} - x_i >= 1/(N M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    x: Vec<f64>,
    max_density: f64,
}

impl ParticleConfig {
    pub fn new(x: Vec<f64>, max_density: f64) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::domain("a configuration needs at least two particles"));
        }
        if !(max_density > 0.0) {
            return Err(Error::domain("max density must be positive"));
        }
        let cfg = ParticleConfig { x, max_density };
        cfg.check_cone()?;
        Ok(cfg)
    }

    /// Build without the minimal-gap check. Follow-the-leader dynamics keeps
    /// strict ordering only; the reconstructed density may transiently exceed
    /// the cap there.
    pub(crate) fn new_unchecked(x: Vec<f64>, max_density: f64) -> Self {
        ParticleConfig { x, max_density }
    }

    /// Number of gaps `N` (there are `N + 1` particles).
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Minimal admissible gap `1/(N M)`.
    pub fn gap_bound(&self) -> f64 {
        1.0 / (self.n() as f64 * self.max_density)
    }

    /// Position scale used by relative tolerances.
    pub fn scale(&self) -> f64 {
        self.x.iter().fold(1.0_f64, |s, v| s.max(v.abs()))
    }

    pub fn check_cone(&self) -> Result<()> {
        let bound = self.gap_bound();
        let tol = CONE_REL_TOL * self.scale();
        for (i, w) in self.x.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if !(gap >= bound - tol) || !gap.is_finite() {
                return Err(Error::cone(format!(
                    "gap {i} is {gap:.6e}, below the bound {bound:.6e}"
                )));
            }
        }
        Ok(())
    }

    pub fn translate(&self, c: f64) -> ParticleConfig {
        ParticleConfig {
            x: self.x.iter().map(|v| v + c).collect(),
            max_density: self.max_density,
        }
    }

    pub fn min_gap(&self) -> f64 {
        self.x
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rule assigning a density to the leader (the rightmost particle has no
/// particle in front, so `R_N` is a modeling choice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoStarRule {
    /// Constant `rho* = argmax` of the relevant profile (theta for transport,
    /// velocity for follow-the-leader), searched on a grid inside `[0, (1-d)M]`.
    ConstArgmaxTheta,
    /// Copy the density behind the leader: `R_N = R_{N-1}`.
    LookBack,
}

/// Interior guard for the argmax search.
const ARGMAX_DELTA: f64 = 1e-6;
const ARGMAX_GRID: usize = 4096;

/// Grid argmax of `profile` over `[0, (1 - delta) M]`, returning the smallest
/// maximizer; for a nonincreasing profile this is 0.
pub fn grid_argmax(profile: impl Fn(f64) -> f64, max_density: f64) -> f64 {
    let hi = (1.0 - ARGMAX_DELTA) * max_density;
    let mut best_rho = 0.0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..=ARGMAX_GRID {
        let rho = hi * k as f64 / ARGMAX_GRID as f64;
        let val = profile(rho);
        if val > best_val * (1.0 + 1e-12) + 1e-300 {
            best_val = val;
            best_rho = rho;
        }
    }
    best_rho
}

impl RhoStarRule {
    /// Leader density given the gap densities `r[0..N]` and a profile to
    /// maximize for the constant rule.
    pub fn leader_density(
        &self,
        gap_densities: &[f64],
        max_density: f64,
        profile: impl Fn(f64) -> f64,
    ) -> f64 {
        match self {
            RhoStarRule::ConstArgmaxTheta => grid_argmax(profile, max_density),
            RhoStarRule::LookBack => *gap_densities.last().expect("at least one gap"),
        }
    }
}

/// Gap densities `R_i = 1/(N (x_{i+1} - x_i))` for `i < N`.
pub fn gap_densities(cfg: &ParticleConfig) -> Vec<f64> {
    let n = cfg.n() as f64;
    cfg.positions()
        .windows(2)
        .map(|w| 1.0 / (n * (w[1] - w[0])))
        .collect()
}

/// Full density reconstruction `R_0, ..., R_N` with the leader value chosen by
/// `rule` (theta of `mobility` is the profile maximized by the constant rule).
pub fn reconstruct_density(
    cfg: &ParticleConfig,
    rule: RhoStarRule,
    mobility: &Mobility,
) -> Result<Vec<f64>> {
    cfg.check_cone()?;
    let mut r = gap_densities(cfg);
    let leader = rule.leader_density(&r, cfg.max_density(), |rho| {
        mobility.theta(rho).unwrap_or(f64::NEG_INFINITY)
    });
    r.push(leader);
    Ok(r)
}

/// Piecewise-constant embedding: density `R_i` on `[x_i, x_{i+1}]`, each cell
/// carrying mass exactly `1/N`.
pub fn embed_piecewise(cfg: &ParticleConfig) -> Result<Measure1D> {
    cfg.check_cone()?;
    let heights = gap_densities(cfg);
    Measure1D::pcd(cfg.positions().to_vec(), heights)
}

/// Empirical embedding: `N + 1` equal atoms at the particle positions.
pub fn embed_empirical(cfg: &ParticleConfig) -> Result<Measure1D> {
    cfg.check_cone()?;
    Measure1D::empirical(cfg.positions().to_vec())
}

/// Sample a configuration from the quantiles of an atomless measure:
/// `x_i = X(i/n)` in the interior with endpoints clipped at half a cell,
/// `x_0 = X(1/(2n))`, `x_n = X(1 - 1/(2n))`.
pub fn sample_from_quantile(
    mu: &Measure1D,
    n: usize,
    mobility: &Mobility,
) -> Result<ParticleConfig> {
    if !mu.is_atomless() {
        return Err(Error::domain(
            "sample_from_quantile requires an atomless measure",
        ));
    }
    if n < 1 {
        return Err(Error::domain("need at least one gap"));
    }
    let zeta = 1.0 / (2.0 * n as f64);
    let mut x = Vec::with_capacity(n + 1);
    x.push(mu.quantile_at(zeta)?);
    for i in 1..n {
        x.push(mu.quantile_at(i as f64 / n as f64)?);
    }
    x.push(mu.quantile_at(1.0 - zeta)?);
    ParticleConfig::new(x, mobility.max_density()).map_err(|_| {
        Error::cone(format!(
            "sampled density exceeds the maximal density {} somewhere on {n} gaps",
            mobility.max_density()
        ))
    })
}

/// `W_p` between the empirical and piecewise-constant embeddings of the same
/// configuration; decays as `N` grows on quantile-sampled families.
pub fn check_embedding_consistency(cfg: &ParticleConfig, p: f64) -> Result<f64> {
    let e = embed_empirical(cfg)?;
    let pc = embed_piecewise(cfg)?;
    wasserstein_p(&e, &pc, p, DEFAULT_QUAD_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mob() -> Mobility {
        Mobility::logistic(1.0).unwrap()
    }

    #[test]
    fn cone_membership() {
        assert!(ParticleConfig::new(vec![0.0, 0.5, 1.0], 1.0).is_ok());
        // N = 2, M = 1: gaps must be >= 1/2
        assert!(ParticleConfig::new(vec![0.0, 0.2, 1.0], 1.0).is_err());
        // equality is allowed
        assert!(ParticleConfig::new(vec![0.0, 0.5, 1.0], 1.0).is_ok());
    }

    #[test]
    fn reconstruct_density_examples() {
        let cfg = ParticleConfig::new(vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let r = reconstruct_density(&cfg, RhoStarRule::LookBack, &mob()).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert!((r[1] - 1.0).abs() < 1e-15);
        assert!((r[2] - 1.0).abs() < 1e-15); // copies R_1

        let cfg = ParticleConfig::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], 2.0).unwrap();
        let r = reconstruct_density(&cfg, RhoStarRule::ConstArgmaxTheta, &mob()).unwrap();
        for ri in &r[..4] {
            assert!((ri - 1.0).abs() < 1e-15);
        }
        // theta of the logistic mobility is strictly decreasing: argmax is 0
        assert_eq!(r[4], 0.0);
    }

    #[test]
    fn embed_piecewise_examples() {
        let cfg = ParticleConfig::new(vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let m = embed_piecewise(&cfg).unwrap();
        if let Measure1D::Pcd { heights, .. } = &m {
            assert!(heights.iter().all(|h| (h - 1.0).abs() < 1e-15));
        } else {
            panic!("expected pcd");
        }

        let cfg = ParticleConfig::new(vec![0.0, 2.0], 1.0).unwrap();
        let m = embed_piecewise(&cfg).unwrap();
        if let Measure1D::Pcd { heights, breaks } = &m {
            assert_eq!(breaks, &vec![0.0, 2.0]);
            assert!((heights[0] - 0.5).abs() < 1e-15);
        }

        // every cell carries mass exactly 1/N
        let cfg = ParticleConfig::new(vec![0.0, 0.3, 0.9, 2.0, 2.5], 4.0).unwrap();
        if let Measure1D::Pcd { breaks, heights } = embed_piecewise(&cfg).unwrap() {
            for (h, w) in heights.iter().zip(breaks.windows(2)) {
                assert!((h * (w[1] - w[0]) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn embed_empirical_examples() {
        let cfg = ParticleConfig::new(vec![0.0, 1.0], 1.0).unwrap();
        let m = embed_empirical(&cfg).unwrap();
        assert!((m.abs_moment(2.0, 1) - 0.5).abs() < 1e-15);

        let cfg = ParticleConfig::new(vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let m = embed_empirical(&cfg).unwrap();
        assert!((m.mean(1) - 0.5).abs() < 1e-15);

        // translation moves W_q by |c|
        let shifted = embed_empirical(&cfg.translate(0.7)).unwrap();
        let d = wasserstein_p(&m, &shifted, 1.5, 300).unwrap();
        assert!((d - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sample_from_quantile_examples() {
        let mu = Measure1D::uniform(0.0, 1.0).unwrap();
        let cfg = sample_from_quantile(&mu, 4, &Mobility::logistic(2.0).unwrap()).unwrap();
        let expect = [0.125, 0.25, 0.5, 0.75, 0.875];
        for (a, b) in cfg.positions().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }

        let mu = Measure1D::uniform(0.0, 2.0).unwrap();
        let cfg = sample_from_quantile(&mu, 2, &mob()).unwrap();
        assert!(cfg.min_gap() >= 0.5 - 1e-14);

        // atomic measures are rejected
        let atoms = Measure1D::empirical(vec![0.0, 1.0]).unwrap();
        assert!(sample_from_quantile(&atoms, 4, &mob()).is_err());

        // density above M makes the cone unreachable
        let narrow = Measure1D::uniform(0.0, 0.25).unwrap();
        assert!(sample_from_quantile(&narrow, 8, &mob()).is_err());
    }

    #[test]
    fn sample_round_trip_converges() {
        let mu = Measure1D::pcd(vec![0.0, 1.0, 3.0], vec![0.6, 0.2]).unwrap();
        let mobility = Mobility::logistic(2.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let cfg = sample_from_quantile(&mu, n, &mobility).unwrap();
            let d = wasserstein_p(&embed_piecewise(&cfg).unwrap(), &mu, 1.0, 4096).unwrap();
            assert!(d <= prev + 1e-12, "round-trip error grew at n={n}");
            prev = d;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn sample_is_strictly_increasing() {
        let mu = Measure1D::gaussian(0.0, 1.0, -3.0, 3.0).unwrap();
        let cfg = sample_from_quantile(&mu, 16, &Mobility::logistic(8.0).unwrap()).unwrap();
        for w in cfg.positions().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn embedding_consistency_examples() {
        let cfg = ParticleConfig::new(vec![0.0, 1.0], 1.0).unwrap();
        let d = check_embedding_consistency(&cfg, 1.0).unwrap();
        // step quantile vs affine quantile: hand integral gives 1/4
        assert!((d - 0.25).abs() < 1e-6);

        // homogeneity under dilation of positions
        let cfg2 = ParticleConfig::new(vec![0.0, 3.0], 1.0).unwrap();
        let d2 = check_embedding_consistency(&cfg2, 1.0).unwrap();
        assert!((d2 - 3.0 * d).abs() < 1e-6);
    }

    #[test]
    fn embedding_consistency_decays() {
        let mu = Measure1D::uniform(0.0, 1.0).unwrap();
        let mobility = Mobility::logistic(4.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let cfg = sample_from_quantile(&mu, n, &mobility).unwrap();
            let d = check_embedding_consistency(&cfg, 2.0).unwrap();
            assert!(d <= prev, "consistency gap grew at n={n}");
            prev = d;
        }
    }

    #[test]
    fn cone_closed_under_convex_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 1.0;
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let make = |rng: &mut ChaCha8Rng| {
                let bound = 1.0 / (n as f64 * m);
                let mut x = vec![rng.gen_range(-1.0..1.0)];
                for _ in 0..n {
                    let gap = bound * rng.gen_range(1.0..4.0);
                    x.push(x.last().unwrap() + gap);
                }
                ParticleConfig::new(x, m).unwrap()
            };
            let a = make(&mut rng);
            let b = make(&mut rng);
            let t: f64 = rng.gen_range(0.0..1.0);
            let mix: Vec<f64> = a
                .positions()
                .iter()
                .zip(b.positions())
                .map(|(u, v)| (1.0 - t) * u + t * v)
                .collect();
            assert!(ParticleConfig::new(mix, m).is_ok());
        }
    }

    #[test]
    fn piecewise_heights_match_reconstruction() {
        let cfg = ParticleConfig::new(vec![-1.0, 0.0, 0.7, 2.0], 2.0).unwrap();
        let r = gap_densities(&cfg);
        if let Measure1D::Pcd { heights, .. } = embed_piecewise(&cfg).unwrap() {
            assert_eq!(heights, r);
        }
    }
}
