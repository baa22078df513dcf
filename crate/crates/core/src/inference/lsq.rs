//! Weighted least squares: closed-form straight lines and a damped
//! Gauss-Newton solver for small nonlinear problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    /// sqrt(Σ w r²)
    pub residual_norm: f64,
}

/// Fits `y = a + b x`. Standard errors use the residual scatter and are
/// infinite with only two points.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    ensure(n >= 2 && y.len() == n, || {
        format!("line fit needs ≥ 2 paired points, got {} x and {} y", n, y.len())
    })?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    if let Some(ws) = weights {
        ensure(ws.len() == n && ws.iter().all(|v| *v > 0.0), || {
            "weights must be positive and match the data".into()
        })?;
    }
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (x[i] - mx).powi(2)).sum();
    ensure(sxx > 0.0, || "line fit needs at least two distinct x values".into())?;
    let sxy: f64 = (0..n).map(|i| w(i) * (x[i] - mx) * (y[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n)
        .map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let (se_slope, se_intercept) = if n > 2 {
        let s2 = rss / (n - 2) as f64;
        ((s2 / sxx).sqrt(), (s2 * (1.0 / sw + mx * mx / sxx)).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(LinearFit {
        intercept,
        slope,
        se_intercept,
        se_slope,
        residual_norm: rss.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the infinity norm of `Jᵀ W r`.
    pub gradient_tolerance: f64,
    /// Convergence threshold on the relative step size.
    pub step_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Vec<f64>,
    /// `(Jᵀ W J)⁻¹` at the solution.
    pub normal_inverse: DMatrix<f64>,
    /// Σ w r²
    pub rss: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    /// Standard errors scaled by the residual variance with `n` data points.
    pub fn std_errors(&self, n: usize) -> Vec<f64> {
        let dof = n.saturating_sub(self.params.len()).max(1) as f64;
        let s2 = self.rss / dof;
        (0..self.params.len())
            .map(|i| (s2 * self.normal_inverse[(i, i)]).max(0.0).sqrt())
            .collect()
    }
}

/// A residual model: `residuals` returns r(p); `jacobian` returns ∂r/∂p.
pub trait Model {
    fn residuals(&self, params: &[f64]) -> DVector<f64>;
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
}

/// Minimises `Σ w_i r_i(p)²` by Gauss-Newton with Levenberg damping.
pub fn solve<M: Model>(
    model: &M,
    weights: &DVector<f64>,
    start: &[f64],
    opts: &SolverOptions,
) -> Result<Solution> {
    let mut p = DVector::from_column_slice(start);
    let mut lambda = 1e-3;
    let cost = |r: &DVector<f64>| r.iter().zip(weights.iter()).map(|(r, w)| w * r * r).sum::<f64>();
    let mut r = model.residuals(p.as_slice());
    let mut rss = cost(&r);
    ensure(rss.is_finite(), || "non-finite residuals at the starting point".into())?;

    for iter in 0..opts.max_iterations {
        let j = model.jacobian(p.as_slice());
        let wj = DMatrix::from_fn(j.nrows(), j.ncols(), |i, k| weights[i] * j[(i, k)]);
        let jtj = j.transpose() * &wj;
        let grad = wj.transpose() * &r;
        let gnorm = grad.amax();
        if gnorm <= opts.gradient_tolerance {
            return finish(p, jtj, rss, gnorm, iter, true);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for k in 0..damped.nrows() {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let trial = &p + &step;
            let r_trial = model.residuals(trial.as_slice());
            let rss_trial = cost(&r_trial);
            // below roundoff the cost cannot rank the points; fall back to the gradient
            let level = rss_trial.is_finite() && rss_trial <= rss * (1.0 + 1e-12) + f64::MIN_POSITIVE;
            let better = rss_trial.is_finite()
                && (rss_trial < rss || (level && gradient(model, weights, trial.as_slice(), &r_trial) < gnorm));
            if better {
                let small = step.amax() <= opts.step_tolerance * (1.0 + p.amax());
                p = trial;
                r = r_trial;
                rss = rss_trial;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if small {
                    let j = model.jacobian(p.as_slice());
                    let wj = DMatrix::from_fn(j.nrows(), j.ncols(), |i, k| weights[i] * j[(i, k)]);
                    let jtj = j.transpose() * &wj;
                    let gnorm = (wj.transpose() * &r).amax();
                    let ok = gnorm <= opts.gradient_tolerance.max(1e-8);
                    return finish(p, jtj, rss, gnorm, iter + 1, ok);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left: we are at the floating-point minimum
            return finish(p, jtj, rss, gnorm, iter + 1, gnorm <= opts.gradient_tolerance.max(1e-8));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        last: p.iter().copied().collect(),
        reason: "iteration limit reached".into(),
    })
}

fn gradient<M: Model>(model: &M, weights: &DVector<f64>, p: &[f64], r: &DVector<f64>) -> f64 {
    let j = model.jacobian(p);
    let wr = r.component_mul(weights);
    (j.transpose() * wr).amax()
}

fn finish(
    p: DVector<f64>,
    jtj: DMatrix<f64>,
    rss: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
) -> Result<Solution> {
    let n = jtj.nrows();
    let normal_inverse = jtj
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::INFINITY));
    Ok(Solution {
        params: p.iter().copied().collect(),
        normal_inverse,
        rss,
        gradient_norm,
        iterations,
        converged,
    })
}
