//! Box-constrained Levenberg-Marquardt for problems that can hand back their
//! normal equations directly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Normal equations of `0.5 * |r(x)|^2` at a point.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub cost: f64,
    /// `J^T J`
    pub jtj: DMatrix<f64>,
    /// `J^T r`, the gradient of `cost`.
    pub jtr: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Bound on `|g_i| / sqrt((J^T J)_ii)` over free coordinates.
    pub grad_tol: f64,
    /// Relative step size below which the iteration stops.
    pub step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Scaled gradient at exit.
    pub grad_norm: f64,
}

/// Scaled gradient with components pushing into an active bound removed.
fn scaled_gradient(ne: &NormalEquations, x: &DVector<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        if pushes_out(ne, x, lower, upper, i) {
            continue;
        }
        let scale = ne.jtj[(i, i)].sqrt().max(f64::MIN_POSITIVE);
        worst = worst.max(ne.jtr[i].abs() / scale);
    }
    worst
}

fn pushes_out(
    ne: &NormalEquations,
    x: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    i: usize,
) -> bool {
    let g = ne.jtr[i];
    (x[i] <= lower[i] && g > 0.0) || (x[i] >= upper[i] && g < 0.0)
}

/// A strict decrease in cost, or, once the decrease is below the rounding
/// level of the cost itself, a decrease in the scaled gradient.
fn improves(
    trial: &NormalEquations,
    x_trial: &DVector<f64>,
    current: &NormalEquations,
    x: &DVector<f64>,
    grad: f64,
    lower: &[f64],
    upper: &[f64],
) -> bool {
    if trial.cost < current.cost {
        return true;
    }
    let noise = 64.0 * f64::EPSILON * current.cost.abs().max(f64::MIN_POSITIVE);
    x_trial != x
        && trial.cost <= current.cost + noise
        && scaled_gradient(trial, x_trial, lower, upper) < 0.5 * grad
}

fn project(x: &mut DVector<f64>, lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Minimizes the least-squares cost produced by `eval` inside `[lower, upper]`.
///
/// Steps solve `(J^T J + lambda * diag(J^T J)) d = -J^T r` and are projected
/// onto the box; `lambda` shrinks after an accepted step and grows otherwise.
pub fn minimize<F>(
    x0: DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    opts: &LmOptions,
    mut eval: F,
) -> Result<LmOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<NormalEquations>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Shape(
            "bounds do not match the parameter dimension".into(),
        ));
    }
    let mut x = x0;
    project(&mut x, lower, upper);
    let mut ne = eval(&x)?;
    if !ne.cost.is_finite() {
        return Err(Error::Optimization(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut lambda = opts.initial_lambda;
    let mut grad = scaled_gradient(&ne, &x, lower, upper);

    for iter in 0..opts.max_iter {
        if grad <= opts.grad_tol {
            return Ok(LmOutcome {
                x,
                cost: ne.cost,
                iterations: iter,
                converged: true,
                grad_norm: grad,
            });
        }
        let mut accepted = false;
        let mut tiny_step = false;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !pushes_out(&ne, &x, lower, upper, i))
            .collect();
        while lambda < 1e16 {
            let k = free.len();
            let mut a = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for (p, &i) in free.iter().enumerate() {
                b[p] = -ne.jtr[i];
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = ne.jtj[(i, j)];
                }
                a[(p, p)] += lambda * ne.jtj[(i, i)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let reduced = chol.solve(&b);
            let mut trial = x.clone();
            for (p, &i) in free.iter().enumerate() {
                trial[i] += reduced[p];
            }
            project(&mut trial, lower, upper);
            let moved = (&trial - &x).norm();
            if moved <= opts.step_tol * (x.norm() + opts.step_tol) {
                tiny_step = true;
                break;
            }
            match eval(&trial) {
                Ok(t)
                    if t.cost.is_finite() && improves(&t, &trial, &ne, &x, grad, lower, upper) =>
                {
                    x = trial;
                    ne = t;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        grad = scaled_gradient(&ne, &x, lower, upper);
        if !accepted || tiny_step {
            return Ok(LmOutcome {
                x,
                cost: ne.cost,
                iterations: iter + 1,
                converged: grad <= opts.grad_tol,
                grad_norm: grad,
            });
        }
    }
    Ok(LmOutcome {
        x,
        cost: ne.cost,
        iterations: opts.max_iter,
        converged: grad <= opts.grad_tol,
        grad_norm: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // r_i = y_i - a * exp(b * t_i)
    fn exp_fit<'a>(
        ts: &'a [f64],
        ys: &'a [f64],
    ) -> impl FnMut(&DVector<f64>) -> Result<NormalEquations> + 'a {
        move |x: &DVector<f64>| {
            let mut jtj = DMatrix::zeros(2, 2);
            let mut jtr = DVector::zeros(2);
            let mut cost = 0.0;
            for (&t, &y) in ts.iter().zip(ys) {
                let e = (x[1] * t).exp();
                let r = y - x[0] * e;
                let j = DVector::from_vec(vec![-e, -x[0] * t * e]);
                jtj += &j * j.transpose();
                jtr += &j * r;
                cost += 0.5 * r * r;
            }
            Ok(NormalEquations { cost, jtj, jtr })
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let out = minimize(
            DVector::from_vec(vec![1.0, 0.0]),
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &LmOptions::default(),
            exp_fit(&ts, &ys),
        )
        .unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[0], 2.5, epsilon = 1e-8);
        assert_abs_diff_eq!(out.x[1], -1.3, epsilon = 1e-8);
    }

    #[test]
    fn stops_on_active_bound() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let out = minimize(
            DVector::from_vec(vec![1.0, 0.0]),
            &[-10.0, -0.5],
            &[10.0, 10.0],
            &LmOptions::default(),
            exp_fit(&ts, &ys),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.x[1], -0.5);
    }
}
