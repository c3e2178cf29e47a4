//! Dense convex quadratic programs by a primal-dual interior-point method.
//!
//! Solves `min 0.5 x'Hx + g'x` subject to `A x = b` and `G x >= h` with
//! Mehrotra's predictor-corrector. Intended for the small subproblems of the
//! SQP solver, so every linear system is factored densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gi: DMatrix<f64>,
    pub hi: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `A x = b`.
    pub y: DVector<f64>,
    /// Multipliers of `G x >= h`, all nonnegative.
    pub z: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-12,
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

impl QpProblem {
    fn check(&self) -> Result<()> {
        let n = self.g.len();
        let ok = self.h.shape() == (n, n)
            && self.a.ncols() == n
            && self.a.nrows() == self.b.len()
            && self.gi.ncols() == n
            && self.gi.nrows() == self.hi.len();
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent QP dimensions".into()))
        }
    }

    pub fn solve(&self, opts: &QpOptions) -> Result<QpSolution> {
        self.check()?;
        let n = self.g.len();
        let me = self.b.len();
        let mi = self.hi.len();

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(me);
        let mut s = (&self.gi * &x - &self.hi).map(|v| v.abs().max(1.0));
        let mut z = DVector::from_element(mi, 1.0);

        let primal_scale = 1.0 + self.b.amax().max(self.hi.amax());
        let dual_scale = 1.0 + self.g.amax();
        let reg = 1e-13 * (1.0 + self.h.amax());
        let mut stalled = false;
        for iter in 0..opts.max_iter {
            let rd = &self.h * &x + &self.g - self.a.transpose() * &y - self.gi.transpose() * &z;
            let re = &self.a * &x - &self.b;
            let ri = &self.gi * &x - &s - &self.hi;
            let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
            let primal = re.amax().max(ri.amax());
            if primal <= opts.tol * primal_scale
                && rd.amax() <= opts.tol * dual_scale
                && mu <= opts.tol * dual_scale
            {
                return Ok(QpSolution {
                    x,
                    y,
                    z,
                    iterations: iter,
                });
            }
            let loose = opts.tol.sqrt();
            stalled = primal <= loose * primal_scale
                && rd.amax() <= loose * dual_scale
                && mu <= loose * dual_scale;

            // augmented system [[H, -A', -G'], [A, 0, 0], [G, 0, S/Z]]; keeping the
            // inequality rows avoids forming H + G'(Z/S)G, which loses H to rounding
            // once some slacks approach zero
            let dim = n + me + mi;
            let mut m = DMatrix::zeros(dim, dim);
            m.view_mut((0, 0), (n, n)).copy_from(&self.h);
            m.view_mut((0, n), (n, me))
                .copy_from(&(-self.a.transpose()));
            m.view_mut((0, n + me), (n, mi))
                .copy_from(&(-self.gi.transpose()));
            m.view_mut((n, 0), (me, n)).copy_from(&self.a);
            m.view_mut((n + me, 0), (mi, n)).copy_from(&self.gi);
            for i in 0..mi {
                m[(n + me + i, n + me + i)] = s[i] / z[i];
            }
            let exact = m.clone();
            for i in 0..n {
                m[(i, i)] += reg;
            }
            for i in n..n + me {
                m[(i, i)] -= reg;
            }
            let lu = m.lu();

            let solve_dir = |rc: &DVector<f64>| -> Option<(
                DVector<f64>,
                DVector<f64>,
                DVector<f64>,
                DVector<f64>,
            )> {
                let mut rhs = DVector::zeros(dim);
                rhs.rows_mut(0, n).copy_from(&(-&rd));
                rhs.rows_mut(n, me).copy_from(&(-&re));
                rhs.rows_mut(n + me, mi)
                    .copy_from(&(-&ri - rc.component_div(&z)));
                let mut sol = lu.solve(&rhs)?;
                for _ in 0..3 {
                    let resid = &rhs - &exact * &sol;
                    sol += lu.solve(&resid)?;
                }
                if !sol.iter().all(|v| v.is_finite()) {
                    return None;
                }
                let dx = sol.rows(0, n).into_owned();
                let dy = sol.rows(n, me).into_owned();
                let dz = sol.rows(n + me, mi).into_owned();
                let ds = &self.gi * &dx + &ri;
                Some((dx, dy, dz, ds))
            };

            let rc_aff = s.component_mul(&z);
            let Some((_, _, dz_a, ds_a)) = solve_dir(&rc_aff) else {
                return accept_stalled(x, y, z, iter, stalled);
            };
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
            let mu_aff = if mi > 0 {
                (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / mi as f64
            } else {
                0.0
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).powi(3) } else { 0.0 };
            let rc = &rc_aff + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
            let Some(mut dir) = solve_dir(&rc) else {
                return accept_stalled(x, y, z, iter, stalled);
            };
            let mut alpha = (0.995 * max_step(&s, &dir.3).min(max_step(&z, &dir.2))).min(1.0);
            let mu_next = |dz: &DVector<f64>, ds: &DVector<f64>, a: f64| {
                (&s + ds * a).dot(&(&z + dz * a)) / mi as f64
            };
            if mi > 0 && mu_next(&dir.2, &dir.3, alpha) > mu {
                // the second-order correction backfired: plain centered Newton step
                let rc = &rc_aff - DVector::from_element(mi, sigma.max(0.1) * mu);
                let Some(plain) = solve_dir(&rc) else {
                    return accept_stalled(x, y, z, iter, stalled);
                };
                dir = plain;
                alpha = (0.995 * max_step(&s, &dir.3).min(max_step(&z, &dir.2))).min(1.0);
                // curvature makes complementarity quadratic in the step; it
                // always decreases for short enough centered steps
                while alpha > 1e-10 && mu_next(&dir.2, &dir.3, alpha) > (1.0 - 0.01 * alpha) * mu {
                    alpha *= 0.5;
                }
            }
            let (dx, dy, dz, ds) = dir;
            x += &dx * alpha;
            y += &dy * alpha;
            z += &dz * alpha;
            s += &ds * alpha;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Optimization("QP iterates diverged".into()));
            }
        }
        if stalled {
            return Ok(QpSolution {
                x,
                y,
                z,
                iterations: opts.max_iter,
            });
        }
        Err(Error::Optimization(format!(
            "QP did not converge in {} iterations",
            opts.max_iter
        )))
    }
}

impl QpProblem {
    /// Primal active-set method started from a point `x0` that satisfies all
    /// constraints. Exact on small problems and tolerant of a singular `H`:
    /// directions of zero curvature are followed until a constraint blocks.
    pub fn solve_from(&self, x0: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
        self.check()?;
        let n = self.g.len();
        let me = self.b.len();
        let mi = self.hi.len();
        let feas_tol = 1e-9 * (1.0 + self.b.amax().max(self.hi.amax()));
        let start_ok = x0.len() == n
            && (&self.a * x0 - &self.b).iter().all(|r| r.abs() <= feas_tol)
            && (&self.gi * x0 - &self.hi).iter().all(|r| *r >= -feas_tol);
        if !start_ok {
            return Err(Error::Optimization(
                "active-set QP needs a feasible start".into(),
            ));
        }
        let reg = 1e-12 * (1.0 + self.h.amax());
        let dual_tol = opts.tol.max(1e-14) * (1.0 + self.g.amax());
        let mut x = x0.clone();
        let mut work: Vec<usize> = Vec::new();
        // after a full unblocked step x minimizes over the working set up to rounding
        let mut at_minimum = false;
        let max_iter = 10 * (n + mi + me) + opts.max_iter;

        for iter in 0..max_iter {
            let w = work.len();
            let dim = n + me + w;
            let mut m = DMatrix::zeros(dim, dim);
            m.view_mut((0, 0), (n, n)).copy_from(&self.h);
            for i in 0..n {
                m[(i, i)] += reg;
            }
            for r in 0..me {
                for c in 0..n {
                    m[(c, n + r)] = -self.a[(r, c)];
                    m[(n + r, c)] = self.a[(r, c)];
                }
            }
            for (k, &r) in work.iter().enumerate() {
                for c in 0..n {
                    m[(c, n + me + k)] = -self.gi[(r, c)];
                    m[(n + me + k, c)] = self.gi[(r, c)];
                }
            }
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(-(&self.h * &x + &self.g)));
            let lu = m.clone().lu();
            let mut sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Optimization("singular working set in QP".into()))?;
            let resid = &rhs - &m * &sol;
            if let Some(fix) = lu.solve(&resid) {
                sol += fix;
            }
            if !sol.iter().all(|v| v.is_finite()) {
                return Err(Error::Optimization("singular working set in QP".into()));
            }
            let p = sol.rows(0, n).into_owned();

            if at_minimum || p.amax() <= 1e-13 * (1.0 + x.amax()) {
                at_minimum = false;
                let lam = sol.rows(n + me, w);
                let (k_min, l_min) =
                    lam.iter()
                        .enumerate()
                        .fold((usize::MAX, -dual_tol), |acc, (k, &l)| {
                            if l < acc.1 {
                                (k, l)
                            } else {
                                acc
                            }
                        });
                if k_min == usize::MAX || l_min >= -dual_tol {
                    let y = sol.rows(n, me).into_owned();
                    let mut z = DVector::zeros(mi);
                    for (k, &r) in work.iter().enumerate() {
                        z[r] = lam[k].max(0.0);
                    }
                    return Ok(QpSolution {
                        x,
                        y,
                        z,
                        iterations: iter,
                    });
                }
                work.remove(k_min);
                continue;
            }

            // a huge step means zero curvature along p: follow the ray instead
            let ray = p.amax() > 1e6 * (1.0 + x.amax());
            let p = if ray { &p / p.amax() } else { p };
            let gp = &self.gi * &p;
            let slack = &self.gi * &x - &self.hi;
            let mut alpha = if ray { f64::INFINITY } else { 1.0 };
            let mut block = None;
            for r in 0..mi {
                if gp[r] < -1e-14 * (1.0 + p.amax()) && !work.contains(&r) {
                    let step = slack[r].max(0.0) / -gp[r];
                    if step < alpha {
                        alpha = step;
                        block = Some(r);
                    }
                }
            }
            if !alpha.is_finite() {
                return Err(Error::Optimization("QP is unbounded below".into()));
            }
            x += &p * alpha;
            match block {
                Some(r) => work.push(r),
                None => at_minimum = !ray,
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Optimization("QP iterates diverged".into()));
            }
        }
        Err(Error::Optimization(format!(
            "active-set QP did not terminate in {max_iter} iterations"
        )))
    }
}

/// Returns the iterate when progress stops numerically, provided it already
/// meets the square root of the requested tolerance.
fn accept_stalled(
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    iterations: usize,
    stalled: bool,
) -> Result<QpSolution> {
    if stalled {
        Ok(QpSolution {
            x,
            y,
            z,
            iterations,
        })
    } else {
        Err(Error::Optimization("singular KKT system in QP".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equality_only_is_a_linear_solve() {
        // min x1^2 + x2^2 s.t. x1 + x2 = 1
        let qp = QpProblem {
            h: DMatrix::identity(2, 2) * 2.0,
            g: DVector::zeros(2),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_element(1, 1.0),
            gi: DMatrix::zeros(0, 2),
            hi: DVector::zeros(0),
        };
        let sol = qp.solve(&QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.y[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn active_bound_and_multiplier() {
        // min (x1 - 1)^2 + (x2 + 2)^2 s.t. x >= 0 -> x = (1, 0), z2 = 4
        let qp = QpProblem {
            h: DMatrix::identity(2, 2) * 2.0,
            g: DVector::from_vec(vec![-2.0, 4.0]),
            a: DMatrix::zeros(0, 2),
            b: DVector::zeros(0),
            gi: DMatrix::identity(2, 2),
            hi: DVector::zeros(2),
        };
        let sol = qp.solve(&QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.z[1], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.z[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn active_set_matches_interior_point() {
        let qp = QpProblem {
            h: DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]),
            g: DVector::from_vec(vec![-1.0, 1.0, 0.5]),
            a: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            b: DVector::from_element(1, 1.0),
            gi: DMatrix::identity(3, 3),
            hi: DVector::zeros(3),
        };
        let ipm = qp.solve(&QpOptions::default()).unwrap();
        let act = qp
            .solve_from(
                &DVector::from_vec(vec![0.2, 0.3, 0.5]),
                &QpOptions::default(),
            )
            .unwrap();
        assert_abs_diff_eq!(ipm.x, act.x, epsilon = 1e-8);
        assert_abs_diff_eq!(ipm.y, act.y, epsilon = 1e-7);
        assert_abs_diff_eq!(ipm.z, act.z, epsilon = 1e-7);
        assert!(qp
            .solve_from(
                &DVector::from_vec(vec![1.0, 1.0, 1.0]),
                &QpOptions::default()
            )
            .is_err());
    }

    #[test]
    fn linear_program_with_zero_hessian_block() {
        // min -x1 - 2 x2 s.t. x1 + x2 <= 3, x1 - x2 = 1, x >= 0 -> (2, 1)
        let qp = QpProblem {
            h: DMatrix::zeros(2, 2),
            g: DVector::from_vec(vec![-1.0, -2.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            b: DVector::from_element(1, 1.0),
            gi: DMatrix::from_row_slice(3, 2, &[-1.0, -1.0, 1.0, 0.0, 0.0, 1.0]),
            hi: DVector::from_vec(vec![-3.0, 0.0, 0.0]),
        };
        let sol = qp.solve(&QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-8);
    }
}
