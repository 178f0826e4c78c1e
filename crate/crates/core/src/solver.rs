//! Limited-memory quasi-Newton minimizer with backtracking line search.
//!
//! The objective may return `+inf` outside its feasible region; the line
//! search treats such points as rejected, which is how the log-barrier and
//! the singular action keep iterates interior.

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            grad_tol: 1e-9,
            max_iters: 400,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The objective could not be decreased further in double precision
    /// (line-search failure or repeated sub-roundoff decreases).
    pub stalled: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |s, a| s.max(a.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` starting from a feasible `x0`. `f` writes the gradient into
/// its second argument whenever the returned value is finite.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &MinimizeOptions) -> MinimizeOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; dim];
    let mut value = f(&x, &mut grad);
    assert!(
        value.is_finite(),
        "minimize requires a feasible starting point, got f = {value}"
    );

    if dim == 0 {
        return MinimizeOutcome {
            x,
            value,
            grad_norm: 0.0,
            iterations: 0,
            converged: true,
            stalled: false,
        };
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut direction = vec![0.0; dim];
    let mut x_trial = vec![0.0; dim];
    let mut grad_trial = vec![0.0; dim];
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut tiny_decreases = 0usize;

    for _ in 0..opts.max_iters {
        let gnorm = inf_norm(&grad);
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion for the quasi-Newton direction.
        direction.copy_from_slice(&grad);
        let mut alphas = vec![0.0; s_hist.len()];
        for j in (0..s_hist.len()).rev() {
            let alpha = rho_hist[j] * dot(&s_hist[j], &direction);
            alphas[j] = alpha;
            for (d, y) in direction.iter_mut().zip(&y_hist[j]) {
                *d -= alpha * y;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for d in direction.iter_mut() {
                *d *= gamma;
            }
        }
        for j in 0..s_hist.len() {
            let beta = rho_hist[j] * dot(&y_hist[j], &direction);
            for (d, s) in direction.iter_mut().zip(&s_hist[j]) {
                *d += (alphas[j] - beta) * s;
            }
        }
        for d in direction.iter_mut() {
            *d = -*d;
        }

        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) || !slope.is_finite() {
            // Fall back to steepest descent.
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            slope = dot(&grad, &direction);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Backtracking Armijo search; infinite trial values back off.
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial_value = f64::INFINITY;
        for _ in 0..60 {
            for ((xt, xi), di) in x_trial.iter_mut().zip(&x).zip(&direction) {
                *xt = xi + step * di;
            }
            trial_value = f(&x_trial, &mut grad_trial);
            if trial_value.is_finite() && trial_value <= value + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
        // track decreases at the resolution limit of the objective
        if value - trial_value <= 8.0 * f64::EPSILON * value.abs().max(1.0) {
            tiny_decreases += 1;
            if tiny_decreases >= 3 {
                std::mem::swap(&mut x, &mut x_trial);
                std::mem::swap(&mut grad, &mut grad_trial);
                value = trial_value;
                stalled = true;
                break;
            }
        } else {
            tiny_decreases = 0;
        }

        // Curvature update.
        let mut s = vec![0.0; dim];
        let mut yv = vec![0.0; dim];
        for i in 0..dim {
            s[i] = x_trial[i] - x[i];
            yv[i] = grad_trial[i] - grad[i];
        }
        let sy = dot(&s, &yv);
        if sy > 1e-12 * inf_norm(&s) * inf_norm(&yv) * dim as f64 + 1e-300 {
            s_hist.push(s);
            y_hist.push(yv);
            rho_hist.push(1.0 / sy);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
        }

        std::mem::swap(&mut x, &mut x_trial);
        std::mem::swap(&mut grad, &mut grad_trial);
        value = trial_value;
    }

    let grad_norm = inf_norm(&grad);
    MinimizeOutcome {
        x,
        value,
        grad_norm,
        iterations,
        converged: converged || grad_norm <= opts.grad_tol,
        stalled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let out = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..x.len() {
                    let w = 1.0 + i as f64;
                    f += 0.5 * w * x[i] * x[i];
                    g[i] = w * x[i];
                }
                f
            },
            vec![1.0, -2.0, 3.0, 0.5],
            &MinimizeOptions::default(),
        );
        assert!(out.converged);
        assert!(out.x.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rosenbrock() {
        let out = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            &MinimizeOptions {
                grad_tol: 1e-8,
                max_iters: 2000,
                memory: 10,
            },
        );
        assert!(out.converged, "grad norm {}", out.grad_norm);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_infinite_barrier() {
        // min of x - log-barrier keeping x > 0
        let out = minimize(
            |x, g| {
                if x[0] <= 0.0 {
                    return f64::INFINITY;
                }
                g[0] = 1.0 - 0.01 / x[0];
                x[0] - 0.01 * x[0].ln()
            },
            vec![2.0],
            &MinimizeOptions::default(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 0.01).abs() < 1e-8);
    }
}
