//! One-dimensional probability measures represented through their quantile
//! function (pseudo-inverse of the CDF). On the line this makes transport
//! exact: `W_p(mu, nu) = || X_mu - X_nu ||_{L^p(0,1)}`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Default number of midpoint quadrature nodes on (0,1).
pub const DEFAULT_QUAD_POINTS: usize = 4096;

/// A probability measure on the real line, stored in one of four
/// quantile-friendly representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Measure1D {
    /// Uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Gaussian with the given mean/sd truncated (and renormalized) to `[lo, hi]`.
    Gaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Piecewise-constant density: `heights[j]` on `[breaks[j], breaks[j+1]]`.
    Pcd { breaks: Vec<f64>, heights: Vec<f64> },
    /// Empirical measure: equal atoms at the sorted `values`.
    Quantiles { values: Vec<f64> },
}

const MASS_TOL: f64 = 1e-12;

impl Measure1D {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let m = Measure1D::Uniform { a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = Measure1D::Gaussian { mean, sd, lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn pcd(breaks: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        let m = Measure1D::Pcd { breaks, heights };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empirical measure needs at least one atom"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("empirical atoms must be finite"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Measure1D::Quantiles { values })
    }

    /// Re-check representation invariants (used after deserializing configs).
    pub fn validate(&self) -> Result<()> {
        match self {
            Measure1D::Uniform { a, b } => {
                if !(b > a) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::domain(format!("uniform needs a < b, got [{a}, {b}]")));
                }
            }
            Measure1D::Gaussian { sd, lo, hi, mean } => {
                if !(sd > &0.0) || !mean.is_finite() {
                    return Err(Error::domain("gaussian needs positive sd and finite mean"));
                }
                if !(hi > lo) {
                    return Err(Error::domain("gaussian truncation needs lo < hi"));
                }
            }
            Measure1D::Pcd { breaks, heights } => {
                if breaks.len() != heights.len() + 1 || heights.is_empty() {
                    return Err(Error::domain(
                        "pcd needs breaks of length heights + 1, at least one cell",
                    ));
                }
                for w in breaks.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::domain("pcd breakpoints must increase"));
                    }
                }
                if heights.iter().any(|h| *h < 0.0 || !h.is_finite()) {
                    return Err(Error::domain("pcd heights must be nonnegative"));
                }
                let mass: f64 = heights
                    .iter()
                    .zip(breaks.windows(2))
                    .map(|(h, w)| h * (w[1] - w[0]))
                    .sum();
                if (mass - 1.0).abs() > MASS_TOL {
                    return Err(Error::domain(format!("pcd mass is {mass}, expected 1")));
                }
            }
            Measure1D::Quantiles { values } => {
                if values.is_empty() {
                    return Err(Error::domain("empirical measure needs at least one atom"));
                }
                for w in values.windows(2) {
                    if w[1] < w[0] {
                        return Err(Error::domain("empirical atoms must be sorted"));
                    }
                }
            }
        }
        Ok(())
    }

    /// True for the representations without atoms.
    pub fn is_atomless(&self) -> bool {
        match self {
            Measure1D::Quantiles { .. } => false,
            Measure1D::Pcd { .. } | Measure1D::Uniform { .. } | Measure1D::Gaussian { .. } => true,
        }
    }

    /// Quantile function `X(z) = inf { a : mu(-inf, a) > z }` for `z` in (0,1).
    pub fn quantile_at(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::domain(format!("quantile argument {z} outside (0,1)")));
        }
        Ok(self.quantile_unchecked(z))
    }

    fn quantile_unchecked(&self, z: f64) -> f64 {
        match self {
            Measure1D::Uniform { a, b } => a + (b - a) * z,
            Measure1D::Gaussian { mean, sd, lo, hi } => {
                let n = Normal::new(0.0, 1.0).unwrap();
                let alpha = n.cdf((lo - mean) / sd);
                let beta = n.cdf((hi - mean) / sd);
                let x = mean + sd * n.inverse_cdf(alpha + z * (beta - alpha));
                x.clamp(*lo, *hi)
            }
            Measure1D::Pcd { breaks, heights } => {
                // Exact inversion of the piecewise-linear CDF; flat (zero-height)
                // stretches resolve to the right endpoint, matching the inf.
                let mut cum = 0.0;
                for (j, h) in heights.iter().enumerate() {
                    let cell = h * (breaks[j + 1] - breaks[j]);
                    if cum + cell > z {
                        return breaks[j] + (z - cum) / h;
                    }
                    cum += cell;
                }
                *breaks.last().unwrap()
            }
            Measure1D::Quantiles { values } => {
                let k = values.len();
                let idx = ((z * k as f64).floor() as usize).min(k - 1);
                values[idx]
            }
        }
    }

    /// CDF `F(x) = mu(-inf, x)` for the atomless representations.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Measure1D::Uniform { a, b } => Ok(((x - a) / (b - a)).clamp(0.0, 1.0)),
            Measure1D::Gaussian { mean, sd, lo, hi } => {
                let n = Normal::new(0.0, 1.0).unwrap();
                let alpha = n.cdf((lo - mean) / sd);
                let beta = n.cdf((hi - mean) / sd);
                let f = (n.cdf((x - mean) / sd) - alpha) / (beta - alpha);
                Ok(f.clamp(0.0, 1.0))
            }
            Measure1D::Pcd { breaks, heights } => {
                if x <= breaks[0] {
                    return Ok(0.0);
                }
                let mut cum = 0.0;
                for (j, h) in heights.iter().enumerate() {
                    if x < breaks[j + 1] {
                        return Ok((cum + h * (x - breaks[j])).min(1.0));
                    }
                    cum += h * (breaks[j + 1] - breaks[j]);
                }
                Ok(1.0)
            }
            Measure1D::Quantiles { .. } => Err(Error::domain(
                "cdf is provided for atomless representations only",
            )),
        }
    }

    /// Translate the measure by `c`.
    pub fn translate(&self, c: f64) -> Measure1D {
        match self {
            Measure1D::Uniform { a, b } => Measure1D::Uniform { a: a + c, b: b + c },
            Measure1D::Gaussian { mean, sd, lo, hi } => Measure1D::Gaussian {
                mean: mean + c,
                sd: *sd,
                lo: lo + c,
                hi: hi + c,
            },
            Measure1D::Pcd { breaks, heights } => Measure1D::Pcd {
                breaks: breaks.iter().map(|b| b + c).collect(),
                heights: heights.clone(),
            },
            Measure1D::Quantiles { values } => Measure1D::Quantiles {
                values: values.iter().map(|v| v + c).collect(),
            },
        }
    }

    /// `int_0^1 |X(z)|^p dz`, exact for empirical measures, midpoint quadrature
    /// otherwise.
    pub fn abs_moment(&self, p: f64, quad_points: usize) -> f64 {
        if let Measure1D::Quantiles { values } = self {
            return values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / values.len() as f64;
        }
        let q = quad_points.max(1);
        let mut acc = 0.0;
        for j in 0..q {
            let z = (j as f64 + 0.5) / q as f64;
            acc += self.quantile_unchecked(z).abs().powf(p);
        }
        acc / q as f64
    }

    /// Second moment `E |x|^2`.
    pub fn second_moment(&self, quad_points: usize) -> f64 {
        self.abs_moment(2.0, quad_points)
    }

    /// Mean of the measure.
    pub fn mean(&self, quad_points: usize) -> f64 {
        if let Measure1D::Quantiles { values } = self {
            return values.iter().sum::<f64>() / values.len() as f64;
        }
        let q = quad_points.max(1);
        (0..q)
            .map(|j| self.quantile_unchecked((j as f64 + 0.5) / q as f64))
            .sum::<f64>()
            / q as f64
    }

    /// Median `X(1/2)`.
    pub fn median(&self) -> f64 {
        self.quantile_unchecked(0.5)
    }
}

/// `W_p(mu, nu)` through the quantile representation, midpoint rule with
/// `quad_points` nodes. Exact when both measures are empirical with the same
/// atom count `K` and `quad_points` is a multiple of `K`.
pub fn wasserstein_p(mu: &Measure1D, nu: &Measure1D, p: f64, quad_points: usize) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::domain(format!("wasserstein order must be >= 1, got {p}")));
    }
    if quad_points == 0 {
        return Err(Error::domain("quad_points must be at least 1"));
    }
    let mut acc = 0.0;
    for j in 0..quad_points {
        let z = (j as f64 + 0.5) / quad_points as f64;
        let d = (mu.quantile_unchecked(z) - nu.quantile_unchecked(z)).abs();
        acc += d.powf(p);
    }
    Ok((acc / quad_points as f64).powf(1.0 / p))
}

/// Central quantile interval and tail moment of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub eps: f64,
    /// `[X(eps), X(1 - eps)]`.
    pub interval: (f64, f64),
    /// `int_{outside interval} |x|^p dmu`, computed in quantile coordinates.
    pub tail_p_moment: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    Ok(())
}

fn check_atomless(mu: &Measure1D, op: &str) -> Result<()> {
    if !mu.is_atomless() {
        return Err(Error::domain(format!("{op} requires an atomless measure")));
    }
    Ok(())
}

/// Restrict `mu` to its central quantile interval `[X(eps), X(1-eps)]` and
/// renormalize by `1/(1-2 eps)`.
pub fn compactify(mu: &Measure1D, eps: f64) -> Result<Measure1D> {
    check_atomless(mu, "compactify")?;
    check_eps(eps)?;
    let lo = mu.quantile_at(eps)?;
    let hi = mu.quantile_at(1.0 - eps)?;
    match mu {
        Measure1D::Uniform { .. } => Measure1D::uniform(lo, hi),
        Measure1D::Gaussian { mean, sd, .. } => Measure1D::gaussian(*mean, *sd, lo, hi),
        Measure1D::Pcd { breaks, heights } => {
            let mut new_breaks = vec![lo];
            let mut new_heights = Vec::new();
            for (j, h) in heights.iter().enumerate() {
                let l = breaks[j].max(lo);
                let r = breaks[j + 1].min(hi);
                if r > l {
                    new_breaks.push(r);
                    new_heights.push(*h);
                }
            }
            if new_heights.is_empty() {
                return Err(Error::domain("compactified support is empty"));
            }
            // Renormalize the clipped mass to exactly one.
            let mass: f64 = new_heights
                .iter()
                .zip(new_breaks.windows(2))
                .map(|(h, w)| h * (w[1] - w[0]))
                .sum();
            for h in &mut new_heights {
                *h /= mass;
            }
            Measure1D::pcd(new_breaks, new_heights)
        }
        Measure1D::Quantiles { .. } => unreachable!("rejected above"),
    }
}

/// Tail moment report: `int_0^eps |X|^p dz + int_{1-eps}^1 |X|^p dz`.
pub fn tail_moment(mu: &Measure1D, eps: f64, p: f64) -> Result<TailReport> {
    check_atomless(mu, "tail_moment")?;
    check_eps(eps)?;
    let interval = (mu.quantile_at(eps)?, mu.quantile_at(1.0 - eps)?);
    let tail = tail_integral(mu, eps, p, None);
    Ok(TailReport {
        eps,
        interval,
        tail_p_moment: tail,
    })
}

/// Quantile-space quadrature of the two tails, optionally recentered.
fn tail_integral(mu: &Measure1D, eps: f64, p: f64, center: Option<f64>) -> f64 {
    let c = center.unwrap_or(0.0);
    let q = DEFAULT_QUAD_POINTS;
    let mut acc = 0.0;
    for j in 0..q {
        let z_lo = eps * (j as f64 + 0.5) / q as f64;
        let z_hi = 1.0 - eps + eps * (j as f64 + 0.5) / q as f64;
        acc += (mu.quantile_unchecked(z_lo) - c).abs().powf(p);
        acc += (mu.quantile_unchecked(z_hi) - c).abs().powf(p);
    }
    acc * eps / q as f64
}

/// Check the compactification error inequality
/// `diam(I_eps)^{p-q} W_q(mu, C_eps mu)^q <= C int_{I_eps^c} |x - median|^p dmu`
/// with `C = 1` when `q = p` and `C = 2^p` otherwise.
pub fn compactification_error_check(mu: &Measure1D, eps: f64, p: f64, q: f64) -> Result<bool> {
    check_atomless(mu, "compactification_error_check")?;
    check_eps(eps)?;
    if q > p {
        return Err(Error::domain(format!("need q <= p, got q = {q} > p = {p}")));
    }
    let lo = mu.quantile_at(eps)?;
    let hi = mu.quantile_at(1.0 - eps)?;
    let diam = hi - lo;
    let compact = compactify(mu, eps)?;
    let wq = wasserstein_p(mu, &compact, q, DEFAULT_QUAD_POINTS)?;
    let lhs = diam.powf(p - q) * wq.powf(q);
    let median = mu.median();
    let constant = if (p - q).abs() < 1e-15 { 1.0 } else { 2.0_f64.powf(p) };
    let rhs = constant * tail_integral(mu, eps, p, Some(median));
    Ok(lhs <= rhs * (1.0 + 1e-9) + 1e-12)
}
