//! Sequential quadratic programming for small dense problems of the form
//!
//! ```text
//! min f(x)  s.t.  A x = b,  G x >= h,  c(x) = 0,  x >= 0
//! ```
//!
//! Iterates stay feasible for the linear constraints; the nonlinear equalities
//! are handled through an elastic QP subproblem and an l1 merit function with
//! a second-order correction. The Hessian of the Lagrangian is approximated by
//! damped BFGS started from a caller-supplied hint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qp::{QpOptions, QpProblem, QpSolution};

pub type ScalarFn<'a> = &'a dyn Fn(&DVector<f64>) -> f64;
pub type VectorFn<'a> = &'a dyn Fn(&DVector<f64>) -> DVector<f64>;
/// Returns the constraint values and their Jacobian (one row per constraint).
pub type ConstraintFn<'a> = &'a dyn Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>);

pub struct Nlp<'a> {
    pub objective: ScalarFn<'a>,
    pub gradient: VectorFn<'a>,
    /// Constant curvature estimate used to seed BFGS.
    pub hessian_hint: Option<DMatrix<f64>>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub g_in: DMatrix<f64>,
    pub h_in: DVector<f64>,
    pub nonlinear_eq: Option<ConstraintFn<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub max_iter: usize,
    /// Stop when the step is below `step_tol * (1 + |x|_inf)`.
    pub step_tol: f64,
    pub feas_tol: f64,
    /// Bound on the Lagrangian gradient residual for convergence.
    pub kkt_tol: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-11,
            feas_tol: 1e-10,
            kkt_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the Lagrangian gradient at `x`.
    pub kkt: f64,
    /// Infinity norm of the nonlinear equality residual.
    pub violation: f64,
    /// Multipliers of the nonlinear equalities.
    pub multipliers: DVector<f64>,
}

struct Linearization {
    f: f64,
    grad: DVector<f64>,
    c: DVector<f64>,
    jac: DMatrix<f64>,
}

struct Step {
    d: DVector<f64>,
    elastic: f64,
    nu: DVector<f64>,
    kkt: f64,
}

impl Nlp<'_> {
    fn dim(&self) -> usize {
        self.a_eq.ncols()
    }

    fn linearize(&self, x: &DVector<f64>) -> Linearization {
        let (c, jac) = match self.nonlinear_eq {
            Some(nl) => nl(x),
            None => (DVector::zeros(0), DMatrix::zeros(0, self.dim())),
        };
        Linearization {
            f: (self.objective)(x),
            grad: (self.gradient)(x),
            c,
            jac,
        }
    }

    fn merit(&self, x: &DVector<f64>, mu: f64) -> f64 {
        let c = match self.nonlinear_eq {
            Some(nl) => nl(x).0.abs().sum(),
            None => 0.0,
        };
        (self.objective)(x) + mu * c
    }

    /// Closest point to `x0` satisfying the linear constraints and bounds.
    fn project_linear(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let qp = QpProblem {
            h: DMatrix::identity(n, n),
            g: -x0,
            a: self.a_eq.clone(),
            b: self.b_eq.clone(),
            gi: stack(&self.g_in, &DMatrix::identity(n, n)),
            hi: concat(&self.h_in, &DVector::zeros(n)),
        };
        let sol = qp.solve(&QpOptions::default())?;
        Ok(sol.x.map(|v| v.max(0.0)))
    }

    fn subproblem(
        &self,
        x: &DVector<f64>,
        lin: &Linearization,
        b: &DMatrix<f64>,
        rho: f64,
        c_rhs: &DVector<f64>,
    ) -> Result<(QpSolution, usize)> {
        let n = self.dim();
        let m = lin.c.len();
        let me = self.b_eq.len();
        let mi = self.h_in.len();
        let nv = n + 2 * m;

        let mut h = DMatrix::zeros(nv, nv);
        h.view_mut((0, 0), (n, n)).copy_from(b);
        let mut g = DVector::from_element(nv, rho);
        g.rows_mut(0, n).copy_from(&lin.grad);

        let mut a = DMatrix::zeros(me + m, nv);
        a.view_mut((0, 0), (me, n)).copy_from(&self.a_eq);
        a.view_mut((me, 0), (m, n)).copy_from(&lin.jac);
        a.view_mut((me, n), (m, m))
            .copy_from(&(-DMatrix::identity(m, m)));
        a.view_mut((me, n + m), (m, m))
            .copy_from(&DMatrix::identity(m, m));
        let mut bv = DVector::zeros(me + m);
        bv.rows_mut(0, me).copy_from(&(&self.b_eq - &self.a_eq * x));
        bv.rows_mut(me, m).copy_from(&(-c_rhs));

        let mut gi = DMatrix::zeros(mi + nv, nv);
        gi.view_mut((0, 0), (mi, n)).copy_from(&self.g_in);
        gi.view_mut((mi, 0), (nv, nv))
            .copy_from(&DMatrix::identity(nv, nv));
        let mut hi = DVector::zeros(mi + nv);
        hi.rows_mut(0, mi).copy_from(&(&self.h_in - &self.g_in * x));
        hi.rows_mut(mi, n).copy_from(&(-x));

        let qp = QpProblem {
            h,
            g,
            a,
            b: bv,
            gi,
            hi,
        };
        // d = 0 with the elastic pair absorbing the residual is feasible
        let mut start = DVector::zeros(nv);
        for i in 0..m {
            start[n + i] = c_rhs[i].max(0.0);
            start[n + m + i] = (-c_rhs[i]).max(0.0);
        }
        let sol = match qp.solve_from(&start, &QpOptions::default()) {
            Ok(sol) => sol,
            Err(_) => qp.solve(&QpOptions::default())?,
        };
        Ok((sol, me))
    }

    fn step(
        &self,
        x: &DVector<f64>,
        lin: &Linearization,
        b: &DMatrix<f64>,
        rho: &mut f64,
    ) -> Result<Step> {
        let n = self.dim();
        let m = lin.c.len();
        loop {
            let (sol, me) = self.subproblem(x, lin, b, *rho, &lin.c)?;
            let d = sol.x.rows(0, n).into_owned();
            let elastic = sol.x.rows(n, 2 * m).sum();
            let nu = sol.y.rows(me, m).into_owned();
            // multipliers pinned at the penalty mean the linearization is inconsistent
            if m > 0 && nu.amax() >= 0.99 * *rho && *rho < 1e10 {
                *rho *= 10.0;
                continue;
            }
            // Lagrangian gradient with the QP multipliers, evaluated at x
            let y_lin = sol.y.rows(0, me).into_owned();
            let mi = self.h_in.len();
            let z_in = sol.z.rows(0, mi).into_owned();
            let z_b = sol.z.rows(mi, n).into_owned();
            let r = &lin.grad
                - lin.jac.transpose() * &nu
                - self.a_eq.transpose() * y_lin
                - self.g_in.transpose() * z_in
                - z_b;
            // complementarity of the bound multipliers at x
            let comp = (0..n)
                .map(|i| (sol.z[mi + i] * x[i]).abs())
                .fold(0.0, f64::max);
            return Ok(Step {
                d,
                elastic,
                nu,
                kkt: r.amax().max(comp),
            });
        }
    }

    pub fn solve(&self, x0: &DVector<f64>, opts: &SqpOptions) -> Result<SqpResult> {
        let n = self.dim();
        if x0.len() != n || self.g_in.ncols() != n || self.b_eq.len() != self.a_eq.nrows() {
            return Err(Error::Shape("inconsistent problem dimensions".into()));
        }
        let linear_ok = x0.iter().all(|v| *v >= 0.0)
            && (&self.a_eq * x0 - &self.b_eq)
                .iter()
                .all(|r| r.abs() <= 1e-13)
            && (&self.g_in * x0 - &self.h_in).iter().all(|r| *r >= 0.0);
        let mut x = if linear_ok {
            x0.clone()
        } else {
            self.project_linear(x0)?
        };
        let mut lin = self.linearize(&x);
        if !lin.f.is_finite() {
            return Err(Error::Optimization(
                "objective is not finite at the start".into(),
            ));
        }
        let mut b = match &self.hessian_hint {
            Some(h) => {
                let delta = 1e-3 * (h.trace().abs() / n as f64) + 1e-10;
                h + DMatrix::identity(n, n) * delta
            }
            None => DMatrix::identity(n, n),
        };
        let mut mu: f64 = 1.0;
        let mut rho: f64 = 10.0;
        let mut nu = DVector::zeros(lin.c.len());
        let mut kkt = f64::INFINITY;

        for iter in 0..opts.max_iter {
            rho = rho.max(10.0 * mu);
            let st = self.step(&x, &lin, &b, &mut rho)?;
            nu = st.nu.clone();
            kkt = st.kkt;
            let violation = lin.c.amax();
            let small_step = st.d.amax() <= opts.step_tol * (1.0 + x.amax());
            if violation <= opts.feas_tol && (kkt <= opts.kkt_tol || small_step) {
                return Ok(SqpResult {
                    objective: lin.f,
                    x,
                    iterations: iter,
                    converged: kkt <= opts.kkt_tol,
                    kkt,
                    violation,
                    multipliers: nu,
                });
            }

            let nu_max = st.nu.amax();
            if mu < 1.1 * nu_max {
                mu = (2.0 * nu_max + 1e-6).min(1e9);
            }
            let c1 = lin.c.abs().sum();
            let dir = lin.grad.dot(&st.d) - mu * (c1 - st.elastic);
            let phi0 = lin.f + mu * c1;
            let armijo = 1e-4;

            let full = (&x + &st.d).map(|v| v.max(0.0));
            let mut next = None;
            if self.merit(&full, mu) <= phi0 + armijo * dir {
                next = Some(full.clone());
            } else if let Some(nl) = self.nonlinear_eq {
                let c_trial = nl(&full).0;
                let c_soc = &c_trial - &lin.jac * &st.d;
                if let Ok((sol, _)) = self.subproblem(&x, &lin, &b, rho, &c_soc) {
                    let d_soc = sol.x.rows(0, n).into_owned();
                    let soc = (&x + &d_soc).map(|v| v.max(0.0));
                    if self.merit(&soc, mu) <= phi0 + armijo * dir {
                        next = Some(soc);
                    }
                }
            }
            if next.is_none() {
                let mut alpha = 0.5;
                while alpha > 1e-12 {
                    let trial = (&x + &st.d * alpha).map(|v| v.max(0.0));
                    if self.merit(&trial, mu) <= phi0 + armijo * alpha * dir {
                        next = Some(trial);
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            let Some(x_new) = next else {
                return Ok(SqpResult {
                    objective: lin.f,
                    x,
                    iterations: iter + 1,
                    converged: violation <= opts.feas_tol && kkt <= opts.kkt_tol,
                    kkt,
                    violation,
                    multipliers: nu,
                });
            };

            let lin_new = self.linearize(&x_new);
            let s = &x_new - &x;
            let grad_l = |l: &Linearization| &l.grad - l.jac.transpose() * &st.nu;
            let y = grad_l(&lin_new) - grad_l(&lin);
            bfgs_update(&mut b, &s, &y);
            x = x_new;
            lin = lin_new;
        }
        let violation = lin.c.amax();
        Ok(SqpResult {
            objective: lin.f,
            x,
            iterations: opts.max_iter,
            converged: violation <= opts.feas_tol && kkt <= opts.kkt_tol,
            kkt,
            violation,
            multipliers: nu,
        })
    }
}

/// Powell-damped BFGS update that keeps `b` positive definite.
fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if !(sr > 1e-300) {
        return;
    }
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
    let sym = (&*b + b.transpose()) * 0.5;
    *b = sym;
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_on_circle() {
        // min (x1 - 2)^2 + (x2 - 2)^2 s.t. x1^2 + x2^2 = 2 -> (1, 1)
        let f = |x: &DVector<f64>| (x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2);
        let g = |x: &DVector<f64>| DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 2.0)]);
        let c = |x: &DVector<f64>| {
            (
                DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 2.0),
                DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
            )
        };
        let nlp = Nlp {
            objective: &f,
            gradient: &g,
            hessian_hint: None,
            a_eq: DMatrix::zeros(0, 2),
            b_eq: DVector::zeros(0),
            g_in: DMatrix::zeros(0, 2),
            h_in: DVector::zeros(0),
            nonlinear_eq: Some(&c),
        };
        let r = nlp
            .solve(&DVector::from_vec(vec![0.3, 0.1]), &SqpOptions::default())
            .unwrap();
        assert!(r.converged, "{r:?}");
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-8);
        // d f / d c at the optimum
        assert_abs_diff_eq!(r.multipliers[0], -1.0, epsilon = 1e-6);
    }

    #[test]
    fn linear_constraints_and_bounds() {
        // min x1^2 + 2 x2^2 + x3^2 - x3 s.t. x1 + x2 + x3 = 1, x1 <= 0.1
        let f = |x: &DVector<f64>| x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2] - x[2];
        let g =
            |x: &DVector<f64>| DVector::from_vec(vec![2.0 * x[0], 4.0 * x[1], 2.0 * x[2] - 1.0]);
        let nlp = Nlp {
            objective: &f,
            gradient: &g,
            hessian_hint: Some(DMatrix::from_diagonal(&DVector::from_vec(vec![
                2.0, 4.0, 2.0,
            ]))),
            a_eq: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            b_eq: DVector::from_element(1, 1.0),
            g_in: DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 0.0]),
            h_in: DVector::from_element(1, -0.1),
            nonlinear_eq: None,
        };
        let r = nlp
            .solve(
                &DVector::from_vec(vec![1.0, 1.0, 1.0]),
                &SqpOptions::default(),
            )
            .unwrap();
        assert!(r.converged);
        // unconstrained-by-bound solution: x1 = l/2, x2 = l/4, x3 = (1 + l)/2, sum = 1 -> l = 2/5
        assert_abs_diff_eq!(r.x[0], 0.1, epsilon = 1e-8);
        let l = 2.0 * (0.9 - 0.5) / 1.5;
        assert_abs_diff_eq!(r.x[1], l / 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.x[2], (1.0 + l) / 2.0, epsilon = 1e-8);
    }
}
