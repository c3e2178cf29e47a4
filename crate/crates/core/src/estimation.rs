//! Maximum-likelihood fitting of impact parameters from order datasets.
//!
//! Every design factors into independent Gaussian residuals: `(I, J - I/2)`
//! is whitened with the Cholesky factor of its covariance, and sampled prices
//! are turned into independent Brownian increments. The negative
//! log-likelihood is then half the sum of squared whitened residuals plus a
//! parameter-free constant, which is minimized by Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::sample_information;
use crate::lm::{self, LmOptions, NormalEquations};
use crate::model::{ij_cov, permanent_impact, temporary_impact, ImpactParams, Param};
use crate::sim::{Design, OrderSample};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const COEF_FLOOR: f64 = 1e-12;
const EXP_LOWER: f64 = 1e-6;
const EXP_UPPER: f64 = 2.0;
const DEFAULT_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub design: Design,
    pub free: Vec<Param>,
    /// Values used for the parameters that are not free.
    pub fixed: ImpactParams,
    /// Starting point; `None` selects the method-of-moments default.
    pub init: Option<ImpactParams>,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl FitSpec {
    pub fn new(design: Design, free: Vec<Param>, fixed: ImpactParams) -> Self {
        Self {
            design,
            free,
            fixed,
            init: None,
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-15,
        }
    }

    pub fn all_free(design: Design) -> Self {
        Self::new(
            design,
            Param::ALL.to_vec(),
            ImpactParams::new(1.0, 1.0, 1.0, 1.0),
        )
    }

    pub fn with_init(mut self, init: ImpactParams) -> Self {
        self.init = Some(init);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Config("at least one parameter must be free".into()));
        }
        for (i, a) in self.free.iter().enumerate() {
            if self.free[..i].contains(a) {
                return Err(Error::Config(format!(
                    "parameter {} listed twice",
                    a.name()
                )));
            }
        }
        if let Some(init) = &self.init {
            let (lo, hi) = bounds();
            for p in &self.free {
                let x = init.get(*p);
                if !(x >= lo[p.index()] && x <= hi[p.index()]) {
                    return Err(Error::Config(format!(
                        "initial {} = {x} outside the parameter box",
                        p.name()
                    )));
                }
            }
        }
        if !(self.grad_tol > 0.0 && self.step_tol >= 0.0 && self.max_iter > 0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    fn is_free(&self, p: Param) -> bool {
        self.free.contains(&p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ImpactParams,
    pub free: Vec<Param>,
    pub converged: bool,
    pub iterations: usize,
    pub nll: f64,
    /// Per-free-parameter SDs; `None` when the information is singular at
    /// the estimate.
    pub theoretical_sd: Option<Vec<f64>>,
    pub sample_size: usize,
}

impl FitResult {
    pub fn sd(&self, p: Param) -> Option<f64> {
        let i = self.free.iter().position(|&q| q == p)?;
        self.theoretical_sd.as_ref().map(|sd| sd[i])
    }

    pub const CSV_HEADER: &'static str =
        "design,n,gamma,eta,alpha,beta,sd_gamma,sd_eta,sd_alpha,sd_beta,converged,seed";

    pub fn csv_row(&self, design: &Design, seed: u64) -> String {
        let t = self.theta_hat;
        let sd = |p| self.sd(p).map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{design},{},{},{},{},{},{},{},{},{},{},{seed}",
            self.sample_size,
            t.gamma,
            t.eta,
            t.alpha,
            t.beta,
            sd(Param::Gamma),
            sd(Param::Eta),
            sd(Param::Alpha),
            sd(Param::Beta),
            self.converged,
        )
    }
}

fn bounds() -> ([f64; 4], [f64; 4]) {
    (
        [COEF_FLOOR, COEF_FLOOR, EXP_LOWER, EXP_LOWER],
        [f64::INFINITY, f64::INFINITY, EXP_UPPER, EXP_UPPER],
    )
}

/// `(g, dg/dtheta, h, dh/dtheta)` at rate `v`.
fn impact_with_gradients(p: &ImpactParams, v: f64) -> Result<(f64, [f64; 4], f64, [f64; 4])> {
    let g = permanent_impact(v, p)?;
    let h = temporary_impact(v, p)?;
    let lv = v.ln();
    let dg = [v.powf(p.alpha), 0.0, g * lv, 0.0];
    let dh = [0.0, v.powf(p.beta), 0.0, h * lv];
    Ok((g, dg, h, dh))
}

fn shape_err(design: &Design, missing: f64) -> Error {
    Error::Shape(format!(
        "design {design} needs the price at ratio {missing}, which the data lacks"
    ))
}

/// Calls `emit(r, dr/dtheta, log_scale)` for each whitened residual of one
/// order, where `log_scale` is `ln` of the residual's standard deviation.
fn visit_residuals<F>(
    design: &Design,
    s: &OrderSample,
    p: &ImpactParams,
    sigma: f64,
    mut emit: F,
) -> Result<()>
where
    F: FnMut(f64, [f64; 4], f64),
{
    let (g, dg, h, dh) = impact_with_gradients(p, s.v)?;
    let big_t = s.big_t;
    match design {
        Design::AlmgrenIJ => {
            let cov = ij_cov(big_t, s.t_post, sigma)?;
            let l = cov
                .cholesky()
                .ok_or(Error::Singular { rank: 1, dim: 2 })?
                .l();
            let (l11, l21, l22) = (l[(0, 0)], l[(1, 0)], l[(1, 1)]);
            let e0 = s.i_stat - big_t * g;
            let e1 = (s.j_stat - 0.5 * s.i_stat) - h;
            let r0 = e0 / l11;
            let r1 = (e1 - l21 * r0) / l22;
            let mut d0 = [0.0; 4];
            let mut d1 = [0.0; 4];
            for k in 0..4 {
                d0[k] = -big_t * dg[k] / l11;
                d1[k] = (-dh[k] - l21 * d0[k]) / l22;
            }
            emit(r0, d0, l11.ln());
            emit(r1, d1, l22.ln());
        }
        Design::TwoPoint | Design::KPoint { .. } => {
            let ratios = design.ratios();
            let mut prev_t = 0.0;
            let mut prev_p = 0.0;
            for (i, &tau) in ratios.iter().enumerate() {
                let pt = s.point(tau).ok_or_else(|| shape_err(design, tau))?;
                let t = tau * big_t;
                let dt = t - prev_t;
                let sd = sigma * dt.sqrt();
                // the first increment also carries the temporary impact jump
                let (mean, dmean): (f64, [f64; 4]) = if i == 0 {
                    (g * dt + h, std::array::from_fn(|k| dg[k] * dt + dh[k]))
                } else {
                    (g * dt, std::array::from_fn(|k| dg[k] * dt))
                };
                emit((pt - prev_p - mean) / sd, dmean.map(|d| -d / sd), sd.ln());
                prev_t = t;
                prev_p = pt;
            }
            let sd = sigma * (s.t_post - big_t).sqrt();
            let r = (s.i_stat - prev_p + h) / sd;
            emit(r, dh.map(|d| d / sd), sd.ln());
        }
    }
    Ok(())
}

fn check_inputs(data: &[OrderSample], sigma: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Shape("dataset is empty".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "volatility must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Negative log-likelihood of `data` under `design` at `p`.
pub fn neg_log_likelihood(
    design: &Design,
    data: &[OrderSample],
    p: &ImpactParams,
    sigma: f64,
) -> Result<f64> {
    check_inputs(data, sigma)?;
    let mut total = 0.0;
    for s in data {
        visit_residuals(design, s, p, sigma, |r, _, ls| {
            total += 0.5 * r * r + ls + 0.5 * LN_2PI
        })?;
    }
    Ok(total)
}

/// Gradient of [`neg_log_likelihood`] in `(gamma, eta, alpha, beta)` order.
pub fn nll_gradient(
    design: &Design,
    data: &[OrderSample],
    p: &ImpactParams,
    sigma: f64,
) -> Result<[f64; 4]> {
    check_inputs(data, sigma)?;
    let mut grad = [0.0; 4];
    for s in data {
        visit_residuals(design, s, p, sigma, |r, dr, _| {
            for k in 0..4 {
                grad[k] += r * dr[k];
            }
        })?;
    }
    Ok(grad)
}

fn normal_equations(
    design: &Design,
    data: &[OrderSample],
    p: &ImpactParams,
    sigma: f64,
    free: &[Param],
) -> Result<NormalEquations> {
    let n = free.len();
    let idx: Vec<usize> = free.iter().map(|q| q.index()).collect();
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    let mut cost = 0.0;
    for s in data {
        visit_residuals(design, s, p, sigma, |r, dr, _| {
            cost += 0.5 * r * r;
            for a in 0..n {
                let da = dr[idx[a]];
                jtr[a] += da * r;
                for b in a..n {
                    jtj[(a, b)] += da * dr[idx[b]];
                }
            }
        })?;
    }
    for a in 0..n {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    Ok(NormalEquations { cost, jtj, jtr })
}

fn distinct_rates(data: &[OrderSample]) -> usize {
    let mut v: Vec<f64> = data.iter().map(|s| s.v).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    v.len()
}

/// Method-of-moments starting point: exponents at 0.75 and coefficients
/// matched to the average impact statistics.
pub fn default_init(spec: &FitSpec, data: &[OrderSample]) -> Result<ImpactParams> {
    let mut p = spec.fixed;
    if spec.is_free(Param::Alpha) {
        p.alpha = DEFAULT_EXPONENT;
    }
    if spec.is_free(Param::Beta) {
        p.beta = DEFAULT_EXPONENT;
    }
    let n = data.len() as f64;
    let mean_va = data.iter().map(|s| s.v.powf(p.alpha)).sum::<f64>() / n;
    let mean_vb = data.iter().map(|s| s.v.powf(p.beta)).sum::<f64>() / n;
    if spec.is_free(Param::Gamma) {
        let m = data.iter().map(|s| s.i_stat / s.big_t).sum::<f64>() / n;
        p.gamma = (m / mean_va).max(1e-6);
    }
    if spec.is_free(Param::Eta) {
        let temp = |s: &OrderSample| -> Result<f64> {
            match spec.design {
                Design::AlmgrenIJ => Ok(s.j_stat - 0.5 * s.i_stat),
                _ => s
                    .point(1.0)
                    .map(|pt| pt - s.i_stat)
                    .ok_or_else(|| shape_err(&spec.design, 1.0)),
            }
        };
        let mut m = 0.0;
        for s in data {
            m += temp(s)?;
        }
        p.eta = (m / n / mean_vb).max(1e-6);
    }
    Ok(p)
}

/// Fits the free parameters of `spec` by maximum likelihood with known `sigma`.
pub fn fit(spec: &FitSpec, data: &[OrderSample], sigma: f64) -> Result<FitResult> {
    spec.validate()?;
    check_inputs(data, sigma)?;
    let pairs = [(Param::Gamma, Param::Alpha), (Param::Eta, Param::Beta)];
    let confounded = spec.free.len() >= 3
        || pairs
            .iter()
            .any(|(c, e)| spec.is_free(*c) && spec.is_free(*e));
    if confounded && distinct_rates(data) < 2 {
        return Err(Error::Identifiability(
            "every order has the same participation rate, so coefficient and exponent cannot be separated"
                .into(),
        ));
    }

    let start = match spec.init {
        Some(init) => {
            let mut p = spec.fixed;
            for &q in &spec.free {
                p.set(q, init.get(q));
            }
            p
        }
        None => default_init(spec, data)?,
    };
    let (lo, hi) = bounds();
    let lower: Vec<f64> = spec.free.iter().map(|q| lo[q.index()]).collect();
    let upper: Vec<f64> = spec.free.iter().map(|q| hi[q.index()]).collect();
    let x0 = DVector::from_iterator(spec.free.len(), spec.free.iter().map(|&q| start.get(q)));
    let assemble = |x: &DVector<f64>| {
        let mut p = start;
        for (i, &q) in spec.free.iter().enumerate() {
            p.set(q, x[i]);
        }
        p
    };
    let opts = LmOptions {
        max_iter: spec.max_iter,
        grad_tol: spec.grad_tol,
        step_tol: spec.step_tol,
        ..Default::default()
    };
    let out = lm::minimize(x0, &lower, &upper, &opts, |x| {
        normal_equations(&spec.design, data, &assemble(x), sigma, &spec.free)
    })?;
    let theta_hat = assemble(&out.x);
    let nll = neg_log_likelihood(&spec.design, data, &theta_hat, sigma)?;
    Ok(FitResult {
        theta_hat,
        free: spec.free.clone(),
        converged: out.converged,
        iterations: out.iterations,
        nll,
        theoretical_sd: theoretical_sd(spec, &theta_hat, data, sigma).ok(),
        sample_size: data.len(),
    })
}

/// Standard deviations implied by the inverse observed information at
/// `theta`, restricted to the free parameters of `spec`.
pub fn theoretical_sd(
    spec: &FitSpec,
    theta: &ImpactParams,
    data: &[OrderSample],
    sigma: f64,
) -> Result<Vec<f64>> {
    check_inputs(data, sigma)?;
    sample_information(&spec.design, theta, data, sigma, &spec.free)?.standard_deviations()
}

/// The parameter vector indistinguishable from `p` when every order trades
/// at rate `v0`.
pub fn reparametrize(p: &ImpactParams, v0: f64, c1: f64, c2: f64) -> Result<ImpactParams> {
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!(
            "reference rate must be positive, got {v0}"
        )));
    }
    Ok(ImpactParams::new(
        p.gamma * v0.powf(c1),
        p.eta * v0.powf(c2),
        p.alpha - c1,
        p.beta - c2,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OrderConfig;
    use crate::rng::child_rng;
    use crate::sim::{extract_stats, simulate_orders, simulate_path, OrderDist, RateDist};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const THETA: ImpactParams = ImpactParams::new(0.3, 0.14, 0.9, 0.6);

    fn template(sigma: f64) -> OrderConfig {
        OrderConfig {
            s0: 10.0,
            sigma,
            big_t: 1.0,
            t_post: 1.5,
            v: 0.1,
            dt: 0.01,
        }
    }

    fn dist() -> OrderDist {
        OrderDist {
            rate: RateDist::Uniform { lo: 0.05, hi: 0.15 },
            big_t: 1.0,
            post_delay: 0.5,
        }
    }

    fn designs() -> Vec<Design> {
        vec![
            Design::AlmgrenIJ,
            Design::TwoPoint,
            Design::three_point(0.1).unwrap(),
            Design::four_point(0.1, 0.5).unwrap(),
        ]
    }

    fn dataset(m: usize, sigma: f64, seed: u64) -> Vec<OrderSample> {
        simulate_orders(m, &dist(), &template(sigma), &THETA, seed, &designs()).unwrap()
    }

    #[test]
    fn noiseless_data_leaves_only_the_constant() {
        let data = dataset(20, 0.0, 1);
        for d in designs() {
            let nll = neg_log_likelihood(&d, &data, &THETA, 0.1).unwrap();
            let mut constant = 0.0;
            for s in &data {
                visit_residuals(&d, s, &THETA, 0.1, |_, _, ls| constant += ls + 0.5 * LN_2PI)
                    .unwrap();
            }
            assert!((nll - constant).abs() < 1e-9, "{d}: {nll} vs {constant}");
        }
    }

    #[test]
    fn constant_rate_is_degenerate() {
        let cfg = template(0.1);
        let data: Vec<OrderSample> = (0..30)
            .map(|k| {
                extract_stats(
                    &simulate_path(&cfg, &THETA, &mut child_rng(4, k)).unwrap(),
                    &designs(),
                )
                .unwrap()
            })
            .collect();
        for (c1, c2) in [(0.1, 0.1), (-0.3, 0.2), (0.5, -0.4)] {
            let q = reparametrize(&THETA, 0.1, c1, c2).unwrap();
            for d in designs() {
                let a = neg_log_likelihood(&d, &data, &THETA, 0.1).unwrap();
                let b = neg_log_likelihood(&d, &data, &q, 0.1).unwrap();
                assert!((a - b).abs() <= 1e-9 * a.abs(), "{d}");
            }
        }
        let spec = FitSpec::all_free(Design::AlmgrenIJ);
        assert!(matches!(
            fit(&spec, &data, 0.1),
            Err(Error::Identifiability(_))
        ));
        let pair = FitSpec::new(Design::TwoPoint, vec![Param::Gamma, Param::Alpha], THETA);
        assert!(matches!(
            fit(&pair, &data, 0.1),
            Err(Error::Identifiability(_))
        ));
        let exps = FitSpec::new(Design::AlmgrenIJ, vec![Param::Alpha, Param::Beta], THETA);
        assert!(fit(&exps, &data, 0.1).is_ok());
    }

    #[test]
    fn single_two_point_sample_matches_gaussian_density() {
        let s = OrderSample {
            v: 0.1,
            big_t: 1.0,
            t_post: 1.5,
            i_stat: 0.02,
            j_stat: 0.05,
            points: vec![(1.0, 0.09)],
        };
        let sigma = 0.1;
        let g = 0.037_767_762_353_825_02;
        let h = 0.035_166_410_041_134_12;
        let normal_nll = |x: f64, mean: f64, var: f64| {
            0.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5 * (x - mean).powi(2) / var
        };
        let expected = normal_nll(0.09, g + h, sigma * sigma)
            + normal_nll(0.02 - 0.09, -h, sigma * sigma * 0.5);
        let got = neg_log_likelihood(&Design::TwoPoint, &[s], &THETA, sigma).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn ij_nll_is_weighted_least_squares_plus_constant() {
        let data = dataset(40, 0.1, 8);
        let wls = |p: &ImpactParams| {
            data.iter()
                .map(|s| {
                    let mu = crate::model::ij_mean(p, s.big_t, s.v).unwrap();
                    let r = nalgebra::Vector2::new(s.i_stat, s.j_stat - 0.5 * s.i_stat) - mu;
                    let w = ij_cov(s.big_t, s.t_post, 0.1)
                        .unwrap()
                        .try_inverse()
                        .unwrap();
                    0.5 * (r.transpose() * w * r)[0]
                })
                .sum::<f64>()
        };
        let other = ImpactParams::new(0.2, 0.3, 0.7, 0.4);
        let a = neg_log_likelihood(&Design::AlmgrenIJ, &data, &THETA, 0.1).unwrap() - wls(&THETA);
        let b = neg_log_likelihood(&Design::AlmgrenIJ, &data, &other, 0.1).unwrap() - wls(&other);
        assert!((a - b).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = dataset(25, 0.1, 2);
        let mut rng = child_rng(12, 0);
        for d in designs() {
            for _ in 0..10 {
                let p = ImpactParams::new(
                    rng.random_range(0.1..0.6),
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.4..1.2),
                    rng.random_range(0.3..1.0),
                );
                let grad = nll_gradient(&d, &data, &p, 0.1).unwrap();
                for k in 0..4 {
                    let h = 1e-6 * p.to_array()[k];
                    let mut up = p.to_array();
                    let mut dn = p.to_array();
                    up[k] += h;
                    dn[k] -= h;
                    let fd = (neg_log_likelihood(&d, &data, &ImpactParams::from_array(up), 0.1)
                        .unwrap()
                        - neg_log_likelihood(&d, &data, &ImpactParams::from_array(dn), 0.1)
                            .unwrap())
                        / (2.0 * h);
                    let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-3);
                    assert!(rel <= 1e-5, "{d} param {k}: {fd} vs {}", grad[k]);
                }
            }
        }
    }

    #[test]
    fn vanishing_noise_recovers_exponents() {
        let data = dataset(100, 1e-6, 5);
        for d in designs() {
            let spec = FitSpec::new(d.clone(), vec![Param::Alpha, Param::Beta], THETA);
            let r = fit(&spec, &data, 1e-6).unwrap();
            assert!(r.converged, "{d}: {r:?}");
            assert!(
                (r.theta_hat.alpha - 0.9).abs() < 1e-3,
                "{d}: {:?}",
                r.theta_hat
            );
            assert!(
                (r.theta_hat.beta - 0.6).abs() < 1e-3,
                "{d}: {:?}",
                r.theta_hat
            );
        }
    }

    #[test]
    fn extra_points_do_not_change_the_estimate() {
        let data = dataset(300, 0.1, 6);
        let a = fit(
            &FitSpec::all_free(Design::three_point(0.1).unwrap()),
            &data,
            0.1,
        )
        .unwrap();
        let b = fit(
            &FitSpec::all_free(Design::four_point(0.1, 0.5).unwrap()),
            &data,
            0.1,
        )
        .unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.theta_hat.to_array().iter().zip(b.theta_hat.to_array()) {
            assert!(
                (x - y).abs() < 1e-6,
                "{:?} vs {:?}",
                a.theta_hat,
                b.theta_hat
            );
        }
    }

    #[test]
    fn duplicating_data_shrinks_sds() {
        let data = dataset(200, 0.1, 7);
        let doubled: Vec<OrderSample> = data.iter().chain(&data).cloned().collect();
        let spec = FitSpec::all_free(Design::AlmgrenIJ);
        let a = theoretical_sd(&spec, &THETA, &data, 0.1).unwrap();
        let b = theoretical_sd(&spec, &THETA, &doubled, 0.1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(y / x, 0.5f64.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn missing_points_are_a_shape_error() {
        let data =
            simulate_orders(5, &dist(), &template(0.1), &THETA, 1, &[Design::AlmgrenIJ]).unwrap();
        let d = Design::three_point(0.1).unwrap();
        assert!(matches!(
            neg_log_likelihood(&d, &data, &THETA, 0.1),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            neg_log_likelihood(&d, &[], &THETA, 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reparametrize_examples() {
        assert_eq!(reparametrize(&THETA, 0.1, 0.0, 0.0).unwrap(), THETA);
        let q = reparametrize(&THETA, 0.1, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(q.gamma, 0.238_298_470_417_284_45, epsilon = 1e-15);
        assert_abs_diff_eq!(q.eta, 0.111_205_952_861_399_41, epsilon = 1e-15);
        assert_abs_diff_eq!(q.alpha, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(q.beta, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            permanent_impact(0.1, &q).unwrap(),
            permanent_impact(0.1, &THETA).unwrap(),
            epsilon = 1e-15
        );
        assert!(reparametrize(&THETA, 0.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn csv_row_layout() {
        let data = dataset(100, 0.1, 9);
        let spec = FitSpec::new(Design::AlmgrenIJ, vec![Param::Alpha, Param::Beta], THETA);
        let r = fit(&spec, &data, 0.1).unwrap();
        let row = r.csv_row(&Design::AlmgrenIJ, 9);
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), FitResult::CSV_HEADER.split(',').count());
        assert_eq!(fields[0], "almgren");
        assert_eq!(fields[6], "");
        assert!(fields[8].parse::<f64>().unwrap() > 0.0);
        assert_eq!(fields[11], "9");
    }
}
