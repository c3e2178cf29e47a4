//! Transaction-cost-aware mean-variance portfolios.
//!
//! Weights are written in split form `w = z - y` with `x = (z, y) >= 0`, so
//! that gross leverage `sum |w|` becomes the linear quantity `sum x`. Trading
//! weight `x_i` of an asset costs `A_i = T/2 gamma (m x_i)^alpha + eta (m x_i)^beta`.
//!
//! Because every cost is concave, the net return is a convex function of `x`
//! and both the frontier and the utility problem are nonconvex. The solvers
//! therefore work face by face: a sign pattern `s` fixes which side of each
//! asset may be traded, the problem is solved over `u >= 0` with `w = s * u`,
//! and the best face wins. Each face is a polytope on which the split vector
//! never holds both sides of one asset.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSpec;
use crate::model::{power_impact, ImpactParams};
use crate::sqp::{Nlp, SqpOptions, SqpResult};

/// Smallest traded amount at which cost derivatives are evaluated.
pub const X_FLOOR: f64 = 1e-8;
/// Regularization inside the portfolio volatility of the utility objective.
pub const NORM_EPS: f64 = 1e-16;
/// Tolerance on the target-return residual of a reported frontier point.
pub const RETURN_TOL: f64 = 1e-6;
/// Tolerance on the budget and leverage residuals of a reported point.
pub const LINEAR_TOL: f64 = 1e-8;
/// Default risk-aversion grid of the utility studies.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

const KKT_TOL: f64 = 1e-6;
const MAX_ENUMERATED_ASSETS: usize = 8;

fn sqp_options() -> SqpOptions {
    SqpOptions {
        max_iter: 500,
        ..SqpOptions::default()
    }
}

/// Split representation `x = (z_1..z_K, y_1..y_K)` of a weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitVector {
    x: DVector<f64>,
}

impl SplitVector {
    pub fn new(x: DVector<f64>) -> Result<Self> {
        if x.is_empty() || !x.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "split vector needs an even positive length, got {}",
                x.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "split components must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self { x })
    }

    pub fn from_parts(z: &[f64], y: &[f64]) -> Result<Self> {
        if z.len() != y.len() {
            return Err(Error::Shape("long and short parts differ in length".into()));
        }
        Self::new(DVector::from_iterator(
            2 * z.len(),
            z.iter().chain(y).copied(),
        ))
    }

    /// Minimal split of `w`: each asset is held on one side only.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let z: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
        let y: Vec<f64> = w.iter().map(|v| (-v).max(0.0)).collect();
        Self::from_parts(&z, &y)
    }

    pub fn k(&self) -> usize {
        self.x.len() / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.x.as_slice()[..self.k()]
    }

    pub fn y(&self) -> &[f64] {
        &self.x.as_slice()[self.k()..]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.z().iter().zip(self.y()).map(|(z, y)| z - y).collect()
    }

    /// Gross exposure `sum x`.
    pub fn leverage(&self) -> f64 {
        self.x.sum()
    }

    /// Largest two-sided holding `max_i min(z_i, y_i)`.
    pub fn overlap(&self) -> f64 {
        self.z()
            .iter()
            .zip(self.y())
            .map(|(z, y)| z.min(*y))
            .fold(0.0, f64::max)
    }
}

fn asset_cost(p: &ImpactParams, m: f64, big_t: f64, x: f64) -> f64 {
    let v = m * x;
    0.5 * big_t * power_impact(p.gamma, p.alpha, v) + power_impact(p.eta, p.beta, v)
}

fn asset_cost_slope(p: &ImpactParams, m: f64, big_t: f64, x: f64) -> f64 {
    let v = m * x.max(X_FLOOR);
    0.5 * big_t * p.gamma * p.alpha * m * v.powf(p.alpha - 1.0)
        + p.eta * p.beta * m * v.powf(p.beta - 1.0)
}

fn assert_dims(x: &SplitVector, spec: &MarketSpec) {
    assert_eq!(
        x.k(),
        spec.k,
        "split vector has {} assets, market has {}",
        x.k(),
        spec.k
    );
}

/// Per-component trading costs `A`, one entry per split coordinate.
///
/// # Panics
/// If `x` and `spec` disagree on the number of assets.
pub fn cost_vector(x: &SplitVector, spec: &MarketSpec) -> DVector<f64> {
    assert_dims(x, spec);
    let k = spec.k;
    DVector::from_fn(2 * k, |i, _| {
        asset_cost(&spec.thetas[i % k], spec.m, spec.big_t, x.x[i])
    })
}

/// Derivatives `B_i = dA_i/dx_i`, with `x_i` floored at [`X_FLOOR`].
///
/// # Panics
/// If `x` and `spec` disagree on the number of assets.
pub fn cost_gradient(x: &SplitVector, spec: &MarketSpec) -> DVector<f64> {
    assert_dims(x, spec);
    let k = spec.k;
    DVector::from_fn(2 * k, |i, _| {
        asset_cost_slope(&spec.thetas[i % k], spec.m, spec.big_t, x.x[i])
    })
}

fn split_returns(spec: &MarketSpec) -> DVector<f64> {
    let k = spec.k;
    DVector::from_fn(2 * k, |i, _| {
        if i < k {
            spec.returns[i]
        } else {
            -spec.returns[i - k]
        }
    })
}

/// Expected return net of trading costs, `x'(R, -R) - sum A`.
pub fn net_return(x: &SplitVector, spec: &MarketSpec) -> f64 {
    split_returns(spec).dot(&x.x) - cost_vector(x, spec).sum()
}

pub fn net_return_gradient(x: &SplitVector, spec: &MarketSpec) -> DVector<f64> {
    split_returns(spec) - cost_gradient(x, spec)
}

/// Block covariance `[[S, -S], [-S, S]]` acting on split vectors.
pub fn split_covariance(spec: &MarketSpec) -> DMatrix<f64> {
    let k = spec.k;
    let s = spec.cov();
    DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let sign = if (i < k) == (j < k) { 1.0 } else { -1.0 };
        sign * s[(i % k, j % k)]
    })
}

pub fn variance(x: &SplitVector, spec: &MarketSpec) -> f64 {
    x.x.dot(&(split_covariance(spec) * &x.x))
}

pub fn variance_gradient(x: &SplitVector, spec: &MarketSpec) -> DVector<f64> {
    split_covariance(spec) * &x.x * 2.0
}

/// Budget constraint `sum z - sum y - 1` and its gradient.
pub fn budget(x: &SplitVector) -> (f64, DVector<f64>) {
    let k = x.k();
    let grad = DVector::from_fn(2 * k, |i, _| if i < k { 1.0 } else { -1.0 });
    (grad.dot(&x.x) - 1.0, grad)
}

/// Leverage slack `l1 - sum x` (nonnegative when feasible) and the gradient
/// of `sum x`.
pub fn leverage(x: &SplitVector, l1: f64) -> (f64, DVector<f64>) {
    (l1 - x.leverage(), DVector::from_element(x.x.len(), 1.0))
}

/// Utility objective `sqrt(x'S*x + eps) - (net_return - r_f) / lambda`.
pub fn utility_objective(x: &SplitVector, spec: &MarketSpec, lambda: f64, r_f: f64) -> f64 {
    (variance(x, spec) + NORM_EPS).sqrt() - (net_return(x, spec) - r_f) / lambda
}

pub fn utility_gradient(x: &SplitVector, spec: &MarketSpec, lambda: f64) -> DVector<f64> {
    let sx = split_covariance(spec) * &x.x;
    let norm = (x.x.dot(&sx) + NORM_EPS).sqrt();
    sx / norm - net_return_gradient(x, spec) / lambda
}

/// Linear utility `(r_p - r_f) - lambda sigma_p` of weights `w` under `spec`.
pub fn portfolio_utility(w: &[f64], spec: &MarketSpec, lambda: f64, r_f: f64) -> Result<f64> {
    let x = SplitVector::from_weights(w)?;
    if x.k() != spec.k {
        return Err(Error::Shape(format!(
            "{} weights for a {}-asset market",
            w.len(),
            spec.k
        )));
    }
    Ok(net_return(&x, spec) - r_f - lambda * variance(&x, spec).max(0.0).sqrt())
}

/// One face of the split polytope: a sign per asset and `w = s * u`, `u >= 0`.
struct Face<'a> {
    spec: &'a MarketSpec,
    signs: Vec<f64>,
    cov: DMatrix<f64>,
    l1: f64,
}

impl<'a> Face<'a> {
    fn new(spec: &'a MarketSpec, signs: Vec<f64>, l1: f64) -> Self {
        let s = spec.cov();
        let cov = DMatrix::from_fn(spec.k, spec.k, |i, j| signs[i] * signs[j] * s[(i, j)]);
        Self {
            spec,
            signs,
            cov,
            l1,
        }
    }

    fn longs(&self) -> Vec<usize> {
        (0..self.signs.len())
            .filter(|&i| self.signs[i] > 0.0)
            .collect()
    }

    fn shorts(&self) -> Vec<usize> {
        (0..self.signs.len())
            .filter(|&i| self.signs[i] < 0.0)
            .collect()
    }

    fn weights(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter().zip(&self.signs).map(|(u, s)| s * u).collect()
    }

    fn net(&self, u: &DVector<f64>) -> f64 {
        let sp = self.spec;
        (0..sp.k)
            .map(|i| {
                self.signs[i] * sp.returns[i] * u[i]
                    - asset_cost(&sp.thetas[i], sp.m, sp.big_t, u[i])
            })
            .sum()
    }

    fn net_grad(&self, u: &DVector<f64>) -> DVector<f64> {
        let sp = self.spec;
        DVector::from_fn(sp.k, |i, _| {
            self.signs[i] * sp.returns[i] - asset_cost_slope(&sp.thetas[i], sp.m, sp.big_t, u[i])
        })
    }

    fn variance(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.cov * u))
    }

    fn nlp<'b>(
        &self,
        objective: &'b dyn Fn(&DVector<f64>) -> f64,
        gradient: &'b dyn Fn(&DVector<f64>) -> DVector<f64>,
        hint: Option<DMatrix<f64>>,
        nonlinear_eq: Option<&'b dyn Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>)>,
    ) -> Nlp<'b> {
        let k = self.spec.k;
        // without shorts the budget already fixes the gross exposure at 1
        let rows = usize::from(!self.shorts().is_empty());
        Nlp {
            objective,
            gradient,
            hessian_hint: hint,
            a_eq: DMatrix::from_row_slice(1, k, &self.signs),
            b_eq: DVector::from_element(1, 1.0),
            g_in: DMatrix::from_element(rows, k, -1.0),
            h_in: DVector::from_element(rows, -self.l1),
            nonlinear_eq,
        }
    }

    /// Interior starting point: longs share `1 + |N| d`, each short holds `d`.
    fn start(&self) -> DVector<f64> {
        let (p, n) = (self.longs().len(), self.shorts().len());
        let d = if n == 0 {
            0.0
        } else {
            (0.5 * (self.l1 - 1.0) / (2.0 * n as f64)).min(0.25)
        };
        DVector::from_fn(self.spec.k, |i, _| {
            if self.signs[i] > 0.0 {
                (1.0 + n as f64 * d) / p as f64
            } else {
                d
            }
        })
    }

    fn vertices(&self) -> Vec<DVector<f64>> {
        let k = self.spec.k;
        let mut out = Vec::new();
        for i in self.longs() {
            out.push(DVector::from_fn(k, |r, _| if r == i { 1.0 } else { 0.0 }));
            if self.l1 > 1.0 {
                for j in self.shorts() {
                    let mut u = DVector::zeros(k);
                    u[i] = 0.5 * (self.l1 + 1.0);
                    u[j] = 0.5 * (self.l1 - 1.0);
                    out.push(u);
                }
            }
        }
        out
    }

    fn min_net(&self, start: &DVector<f64>) -> Result<SqpResult> {
        let f = |u: &DVector<f64>| self.net(u);
        let g = |u: &DVector<f64>| self.net_grad(u);
        self.nlp(&f, &g, None, None).solve(start, &sqp_options())
    }

    fn min_variance_at(&self, c1: f64, start: &DVector<f64>) -> Result<SqpResult> {
        let f = |u: &DVector<f64>| self.variance(u);
        let g = |u: &DVector<f64>| &self.cov * u * 2.0;
        let c = |u: &DVector<f64>| {
            let jac = DMatrix::from_row_slice(1, u.len(), self.net_grad(u).as_slice());
            (DVector::from_element(1, self.net(u) - c1), jac)
        };
        self.nlp(&f, &g, Some(&self.cov * 2.0), Some(&c))
            .solve(start, &sqp_options())
    }

    fn max_utility(&self, lambda: f64, r_f: f64, start: &DVector<f64>) -> Result<SqpResult> {
        let f =
            |u: &DVector<f64>| (self.variance(u) + NORM_EPS).sqrt() - (self.net(u) - r_f) / lambda;
        let g = |u: &DVector<f64>| {
            let su = &self.cov * u;
            let norm = (u.dot(&su) + NORM_EPS).sqrt();
            su / norm - self.net_grad(u) / lambda
        };
        let scale = (self.variance(start) + NORM_EPS).sqrt();
        self.nlp(&f, &g, Some(&self.cov / scale), None)
            .solve(start, &sqp_options())
    }
}

fn sign_vector(mask: usize, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
        .collect()
}

fn signs_of(w: &DVector<f64>) -> Vec<f64> {
    let s: Vec<f64> = w
        .iter()
        .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
        .collect();
    if s.iter().all(|v| *v < 0.0) {
        vec![1.0; s.len()]
    } else {
        s
    }
}

/// Sign patterns searched for a market. All feasible patterns up to
/// [`MAX_ENUMERATED_ASSETS`] assets; above that, the patterns of the long-only,
/// return-sign, minimum-variance and tangency portfolios and their single flips.
fn sign_patterns(spec: &MarketSpec, l1: f64) -> Vec<Vec<f64>> {
    let k = spec.k;
    if l1 <= 1.0 {
        return vec![vec![1.0; k]];
    }
    if k <= MAX_ENUMERATED_ASSETS {
        return (0..(1usize << k) - 1).map(|m| sign_vector(m, k)).collect();
    }
    let r = spec.returns_vector();
    let mut seeds = vec![vec![1.0; k], signs_of(&r)];
    if let Some(chol) = spec.cov().clone().cholesky() {
        seeds.push(signs_of(&chol.solve(&DVector::from_element(k, 1.0))));
        seeds.push(signs_of(&chol.solve(&r)));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for s in seeds {
        let mut family = vec![s.clone()];
        for i in 0..k {
            let mut f = s.clone();
            f[i] = -f[i];
            family.push(f);
        }
        for f in family {
            if f.iter().any(|v| *v > 0.0) && !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out
}

fn check_leverage(l1: f64) -> Result<()> {
    if l1.is_finite() && l1 >= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "leverage cap must be at least 1, got {l1}"
        )))
    }
}

fn check_market(spec: &MarketSpec) -> Result<()> {
    spec.validate()?;
    if spec.thetas.len() != spec.k {
        return Err(Error::Shape(format!(
            "{} impact parameter sets for {} assets",
            spec.thetas.len(),
            spec.k
        )));
    }
    Ok(())
}

/// Attainable net-return range of one face with its extremal points.
struct FaceRange<'a> {
    face: Face<'a>,
    c_min: f64,
    u_min: DVector<f64>,
    c_max: f64,
    u_max: DVector<f64>,
}

fn face_range<'a>(face: Face<'a>) -> Result<FaceRange<'a>> {
    // net return is convex: its maximum sits at a vertex
    let (mut c_max, mut u_max) = (f64::NEG_INFINITY, DVector::zeros(0));
    let (mut c_min, mut u_min) = (f64::INFINITY, DVector::zeros(0));
    for v in face.vertices() {
        let c = face.net(&v);
        if c > c_max {
            c_max = c;
            u_max = v.clone();
        }
        if c < c_min {
            c_min = c;
            u_min = v;
        }
    }
    let sol = face.min_net(&face.start())?;
    if sol.objective < c_min {
        c_min = sol.objective;
        u_min = sol.x;
    }
    Ok(FaceRange {
        face,
        c_min,
        u_min,
        c_max,
        u_max,
    })
}

fn face_ranges(spec: &MarketSpec, l1: f64) -> Result<Vec<FaceRange<'_>>> {
    check_market(spec)?;
    check_leverage(l1)?;
    sign_patterns(spec, l1)
        .into_iter()
        .map(|s| face_range(Face::new(spec, s, l1)))
        .collect()
}

/// Range `[c_min, c_max]` of net returns attainable under the budget and
/// leverage constraints.
pub fn c_bounds(spec: &MarketSpec, l1: f64) -> Result<(f64, f64)> {
    let ranges = face_ranges(spec, l1)?;
    let lo = ranges.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min);
    let hi = ranges
        .iter()
        .map(|r| r.c_max)
        .fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        Ok((lo, hi))
    } else {
        Err(Error::Optimization("no feasible portfolio".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub c1: f64,
    pub sigma_p: f64,
    pub weights: Vec<f64>,
    pub feasible: bool,
}

impl FrontierPoint {
    pub fn net_return(&self, spec: &MarketSpec) -> Result<f64> {
        Ok(net_return(&SplitVector::from_weights(&self.weights)?, spec))
    }
}

/// Point with the smallest variance at net return `c1`, in `u` coordinates.
struct Candidate {
    u: DVector<f64>,
    variance: f64,
    residual: f64,
    kkt: f64,
}

fn bisect_level(face: &Face, lo: &DVector<f64>, hi: &DVector<f64>, c1: f64) -> DVector<f64> {
    // net is convex along the segment, net(lo) <= c1 <= net(hi)
    let point = |t: f64| lo + (hi - lo) * t;
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if face.net(&point(mid)) < c1 {
            a = mid;
        } else {
            b = mid;
        }
    }
    point(b)
}

fn solve_on_face(range: &FaceRange, c1: f64, warm: Option<&DVector<f64>>) -> Option<Candidate> {
    let face = &range.face;
    let tol = 1e-12 * (1.0 + c1.abs());
    if c1 > range.c_max + tol || c1 < range.c_min - tol {
        return None;
    }
    let exact = |u: &DVector<f64>| Candidate {
        variance: face.variance(u),
        residual: (face.net(u) - c1).abs(),
        kkt: 0.0,
        u: u.clone(),
    };
    if c1 >= range.c_max - tol {
        return Some(exact(&range.u_max));
    }
    if c1 <= range.c_min + tol {
        return Some(exact(&range.u_min));
    }
    let mut starts = vec![bisect_level(face, &range.u_min, &range.u_max, c1)];
    if let Some(w) = warm {
        starts.push(w.clone());
    }
    starts
        .iter()
        .filter_map(|s| face.min_variance_at(c1, s).ok())
        .map(|sol| Candidate {
            variance: face.variance(&sol.x),
            residual: (face.net(&sol.x) - c1).abs(),
            kkt: sol.kkt,
            u: sol.x,
        })
        .filter(|c| c.residual.is_finite() && c.variance.is_finite())
        .min_by(|a, b| {
            rank(a)
                .partial_cmp(&rank(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Feasible candidates first, then by variance.
fn rank(c: &Candidate) -> (u8, f64) {
    let ok = c.residual <= RETURN_TOL && c.kkt <= KKT_TOL;
    (u8::from(!ok), if ok { c.variance } else { c.residual })
}

fn frontier_point_on(
    ranges: &[FaceRange],
    c1: f64,
    l1: f64,
    warm: &mut [Option<DVector<f64>>],
) -> FrontierPoint {
    let mut best: Option<(usize, Candidate)> = None;
    for (idx, range) in ranges.iter().enumerate() {
        let Some(cand) = solve_on_face(range, c1, warm[idx].as_ref()) else {
            continue;
        };
        if cand.residual <= RETURN_TOL {
            warm[idx] = Some(cand.u.clone());
        }
        let better = match &best {
            None => true,
            Some((_, b)) => rank(&cand) < rank(b),
        };
        if better {
            best = Some((idx, cand));
        }
    }
    match best {
        Some((idx, cand)) => {
            let face = &ranges[idx].face;
            let weights = face.weights(&cand.u);
            let feasible = rank(&cand).0 == 0 && linear_residuals_ok(&weights, l1);
            FrontierPoint {
                c1,
                sigma_p: cand.variance.max(0.0).sqrt(),
                weights,
                feasible,
            }
        }
        None => {
            let k = warm.first().and_then(|w| w.as_ref()).map_or(0, |w| w.len());
            FrontierPoint {
                c1,
                sigma_p: f64::NAN,
                weights: vec![f64::NAN; k],
                feasible: false,
            }
        }
    }
}

fn linear_residuals_ok(w: &[f64], l1: f64) -> bool {
    let sum: f64 = w.iter().sum();
    let gross: f64 = w.iter().map(|v| v.abs()).sum();
    (sum - 1.0).abs() <= LINEAR_TOL && gross <= l1 + LINEAR_TOL
}

fn face_index_of(ranges: &[FaceRange], w: &[f64]) -> Option<usize> {
    ranges
        .iter()
        .position(|r| r.face.signs.iter().zip(w).all(|(s, v)| s * v >= 0.0))
}

/// Minimum-variance portfolio with net return `c1`. `x0`, when given, warm
/// starts the search on its own sign pattern.
pub fn frontier_point(
    c1: f64,
    spec: &MarketSpec,
    l1: f64,
    x0: Option<&SplitVector>,
) -> Result<FrontierPoint> {
    let ranges = face_ranges(spec, l1)?;
    let mut warm: Vec<Option<DVector<f64>>> = vec![None; ranges.len()];
    if let Some(x) = x0 {
        let w = x.weights();
        if let Some(i) = face_index_of(&ranges, &w) {
            warm[i] = Some(DVector::from_iterator(w.len(), w.iter().map(|v| v.abs())));
        }
    }
    let mut point = frontier_point_on(&ranges, c1, l1, &mut warm);
    if point.weights.iter().any(|v| v.is_nan()) {
        point.weights = vec![f64::NAN; spec.k];
    }
    Ok(point)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub points: Vec<FrontierPoint>,
    pub c_min: f64,
    pub c_max: f64,
    pub l1: f64,
    pub spec_digest: String,
}

/// Uniform grid `c_min + k (c_max - c_min) / (n - 1)` with exact endpoints.
pub fn return_grid(c_min: f64, c_max: f64, n_points: usize) -> Vec<f64> {
    let step = (c_max - c_min) / (n_points - 1) as f64;
    (0..n_points)
        .map(|i| {
            if i + 1 == n_points {
                c_max
            } else {
                c_min + i as f64 * step
            }
        })
        .collect()
}

/// Frontier over a uniform target grid. Consecutive solves are warm started,
/// so points are computed in order.
pub fn build_frontier(spec: &MarketSpec, l1: f64, n_points: usize) -> Result<FrontierCurve> {
    build_frontier_with(spec, l1, n_points, true)
}

/// As [`build_frontier`]; with `warm_start = false` the points are solved
/// independently and in parallel.
pub fn build_frontier_with(
    spec: &MarketSpec,
    l1: f64,
    n_points: usize,
    warm_start: bool,
) -> Result<FrontierCurve> {
    if n_points < 2 {
        return Err(Error::Config(format!(
            "a frontier needs at least 2 points, got {n_points}"
        )));
    }
    let ranges = face_ranges(spec, l1)?;
    let c_min = ranges.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min);
    let c_max = ranges
        .iter()
        .map(|r| r.c_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let grid = return_grid(c_min, c_max, n_points);
    let points = if warm_start {
        let mut warm = vec![None; ranges.len()];
        grid.iter()
            .map(|&c| frontier_point_on(&ranges, c, l1, &mut warm))
            .collect()
    } else {
        grid.par_iter()
            .map(|&c| frontier_point_on(&ranges, c, l1, &mut vec![None; ranges.len()]))
            .collect()
    };
    Ok(FrontierCurve {
        points,
        c_min,
        c_max,
        l1,
        spec_digest: spec.digest(),
    })
}

impl FrontierCurve {
    pub fn csv_header(k: usize) -> String {
        let mut h = String::from("c1,sigma_p");
        for i in 1..=k {
            h.push_str(&format!(",w{i}"));
        }
        h.push_str(",feasible");
        h
    }

    pub fn to_csv(&self) -> String {
        let k = self.points.first().map_or(0, |p| p.weights.len());
        let mut out = Self::csv_header(k);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{},{}", p.c1, p.sigma_p));
            for w in &p.weights {
                out.push_str(&format!(",{w}"));
            }
            out.push_str(&format!(",{}\n", p.feasible));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Efficient (upper) branch as `(sigma_p, c1)` pairs sorted by risk.
    pub fn upper_branch(&self) -> Vec<(f64, f64)> {
        let feasible: Vec<&FrontierPoint> = self.points.iter().filter(|p| p.feasible).collect();
        let Some(apex) = feasible
            .iter()
            .min_by(|a, b| a.sigma_p.total_cmp(&b.sigma_p))
        else {
            return Vec::new();
        };
        let mut branch: Vec<(f64, f64)> = feasible
            .iter()
            .filter(|p| p.c1 >= apex.c1)
            .map(|p| (p.sigma_p, p.c1))
            .collect();
        branch.sort_by(|a, b| a.0.total_cmp(&b.0));
        branch
    }

    /// Efficient-branch return at risk `sigma` by linear interpolation, or
    /// `None` outside the solved risk range.
    pub fn return_at(&self, sigma: f64) -> Option<f64> {
        interpolate(&self.upper_branch(), sigma)
    }
}

fn interpolate(xy: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = xy.first()?;
    let last = xy.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    for w in xy.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return Some(if x1 > x0 {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            } else {
                y0.max(y1)
            });
        }
    }
    Some(last.1)
}

/// Quantile band of a set of frontiers at one risk level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub sigma_p: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    /// Number of curves covering `sigma_p`.
    pub count: usize,
}

/// Per-risk median and 5%/95% quantiles of efficient-branch returns.
pub fn frontier_band(curves: &[FrontierCurve], sigma_grid: &[f64]) -> Vec<BandPoint> {
    let branches: Vec<Vec<(f64, f64)>> = curves.iter().map(FrontierCurve::upper_branch).collect();
    sigma_grid
        .iter()
        .map(|&s| {
            let values: Vec<f64> = branches.iter().filter_map(|b| interpolate(b, s)).collect();
            BandPoint {
                sigma_p: s,
                median: crate::stats::quantile(&values, 0.5),
                q05: crate::stats::quantile(&values, 0.05),
                q95: crate::stats::quantile(&values, 0.95),
                count: values.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPortfolio {
    pub weights: Vec<f64>,
    pub r_p: f64,
    pub sigma_p: f64,
    pub utility: f64,
    pub lambda: f64,
    pub r_f: f64,
}

impl OptimalPortfolio {
    fn from_weights(weights: Vec<f64>, spec: &MarketSpec, lambda: f64, r_f: f64) -> Result<Self> {
        let x = SplitVector::from_weights(&weights)?;
        let r_p = net_return(&x, spec);
        let sigma_p = variance(&x, spec).max(0.0).sqrt();
        Ok(Self {
            weights,
            r_p,
            sigma_p,
            utility: (r_p - r_f) - lambda * sigma_p,
            lambda,
            r_f,
        })
    }

    pub fn csv_header(k: usize) -> String {
        let mut h = String::from("lambda,r_f,r_p,sigma_p,utility");
        for i in 1..=k {
            h.push_str(&format!(",w{i}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{}",
            self.lambda, self.r_f, self.r_p, self.sigma_p, self.utility
        );
        for w in &self.weights {
            row.push_str(&format!(",{w}"));
        }
        row
    }
}

/// Portfolio maximizing `(r_p - r_f) - lambda sigma_p` under the budget and
/// leverage constraints.
pub fn optimal_portfolio(
    lambda: f64,
    r_f: f64,
    spec: &MarketSpec,
    l1: f64,
) -> Result<OptimalPortfolio> {
    optimal_portfolio_from(lambda, r_f, spec, l1, &[])
}

/// As [`optimal_portfolio`], additionally searching from each of `starts`.
/// The result is never worse than any start.
pub fn optimal_portfolio_from(
    lambda: f64,
    r_f: f64,
    spec: &MarketSpec,
    l1: f64,
    starts: &[Vec<f64>],
) -> Result<OptimalPortfolio> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "risk aversion must be positive, got {lambda}"
        )));
    }
    check_market(spec)?;
    check_leverage(l1)?;
    let mut jobs: Vec<(Vec<f64>, DVector<f64>)> = Vec::new();
    for signs in sign_patterns(spec, l1) {
        let face = Face::new(spec, signs.clone(), l1);
        jobs.push((signs, face.start()));
    }
    for w in starts {
        if w.len() != spec.k {
            return Err(Error::Shape(format!(
                "start has {} weights for {} assets",
                w.len(),
                spec.k
            )));
        }
        let signs: Vec<f64> = w
            .iter()
            .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        jobs.push((
            signs,
            DVector::from_iterator(w.len(), w.iter().map(|v| v.abs())),
        ));
    }

    let mut best: Option<OptimalPortfolio> = None;
    for (signs, u0) in jobs {
        let face = Face::new(spec, signs, l1);
        let Ok(sol) = face.max_utility(lambda, r_f, &u0) else {
            continue;
        };
        let weights = face.weights(&sol.x);
        if !linear_residuals_ok(&weights, l1) {
            continue;
        }
        let cand = OptimalPortfolio::from_weights(weights, spec, lambda, r_f)?;
        if best.as_ref().is_none_or(|b| cand.utility > b.utility) {
            best = Some(cand);
        }
    }
    // a feasible start always competes, even if the solver failed on its face
    for w in starts {
        if linear_residuals_ok(w, l1) {
            let cand = OptimalPortfolio::from_weights(w.clone(), spec, lambda, r_f)?;
            if best.as_ref().is_none_or(|b| cand.utility > b.utility) {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| {
        Error::Optimization("utility maximization failed on every sign pattern".into())
    })
}

/// Utility forgone by optimizing with impact parameters `theta_hat` instead
/// of the true ones, measured under the true costs.
pub fn utility_loss(
    theta_hat: &[ImpactParams],
    spec_true: &MarketSpec,
    lambda: f64,
    r_f: f64,
    l1: f64,
) -> Result<f64> {
    let spec_hat = spec_true.with_thetas(theta_hat.to_vec())?;
    let w_hat = optimal_portfolio(lambda, r_f, &spec_hat, l1)?.weights;
    let best = optimal_portfolio_from(lambda, r_f, spec_true, l1, std::slice::from_ref(&w_hat))?;
    Ok(best.utility - portfolio_utility(&w_hat, spec_true, lambda, r_f)?)
}

/// Closed-form frontier of the cost-free problem with only the budget and
/// target-return equalities.
#[derive(Debug, Clone)]
pub struct Markowitz {
    inv: DMatrix<f64>,
    returns: DVector<f64>,
    /// `R' S^-1 R`
    pub a: f64,
    /// `R' S^-1 1`
    pub b: f64,
    /// `1' S^-1 1`
    pub c: f64,
    /// `a c - b^2`
    pub d: f64,
}

impl Markowitz {
    pub fn new(spec: &MarketSpec) -> Result<Self> {
        let inv = spec
            .cov()
            .clone()
            .cholesky()
            .ok_or(Error::Singular {
                rank: 0,
                dim: spec.k,
            })?
            .inverse();
        let r = spec.returns_vector();
        let ones = DVector::from_element(spec.k, 1.0);
        let a = r.dot(&(&inv * &r));
        let b = r.dot(&(&inv * &ones));
        let c = ones.dot(&(&inv * &ones));
        Ok(Self {
            inv,
            returns: r,
            a,
            b,
            c,
            d: a * c - b * b,
        })
    }

    pub fn variance(&self, mu: f64) -> f64 {
        (self.c * mu * mu - 2.0 * self.b * mu + self.a) / self.d
    }

    pub fn weights(&self, mu: f64) -> DVector<f64> {
        let l1 = (self.c * mu - self.b) / self.d;
        let l2 = (self.a - self.b * mu) / self.d;
        let ones = DVector::from_element(self.returns.len(), 1.0);
        &self.inv * (&self.returns * l1 + ones * l2)
    }

    /// Global minimum-variance return `b / c`.
    pub fn apex_return(&self) -> f64 {
        self.b / self.c
    }

    /// Upper-branch return at risk `sigma >= 1 / sqrt(c)`.
    pub fn upper_return(&self, sigma: f64) -> Option<f64> {
        let disc = self.d * (self.c * sigma * sigma - 1.0);
        (disc >= 0.0).then(|| (self.b + disc.sqrt()) / self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{gen_market, UNLIMITED_LEVERAGE};
    use crate::model::vwap_cost;
    use approx::assert_relative_eq;

    fn one_asset(theta: ImpactParams, r: f64) -> MarketSpec {
        MarketSpec::new(
            vec![0.1],
            vec![r],
            DMatrix::identity(1, 1),
            vec![theta],
            0.1,
            1.0,
            1.5,
            UNLIMITED_LEVERAGE,
        )
        .unwrap()
    }

    fn two_assets(r: [f64; 2]) -> MarketSpec {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let zero = ImpactParams::new(0.0, 0.0, 0.9, 0.6);
        MarketSpec::new(
            vec![0.1, 0.2],
            r.to_vec(),
            corr,
            vec![zero; 2],
            0.1,
            1.0,
            1.5,
            2.0,
        )
        .unwrap()
    }

    const THETA: ImpactParams = ImpactParams::new(0.3, 0.14, 0.9, 0.6);

    #[test]
    fn split_vector_roundtrip() {
        let x = SplitVector::from_weights(&[0.7, -0.2, 0.5]).unwrap();
        assert_eq!(x.z(), &[0.7, 0.0, 0.5]);
        assert_eq!(x.y(), &[0.0, 0.2, 0.0]);
        assert_eq!(x.weights(), vec![0.7, -0.2, 0.5]);
        assert_eq!(x.overlap(), 0.0);
        assert!((x.leverage() - 1.4).abs() < 1e-15);
        assert!(SplitVector::new(DVector::from_vec(vec![1.0, -0.1])).is_err());
        assert!(SplitVector::new(DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn cost_values() {
        let spec = one_asset(THETA, 0.05);
        let zero = SplitVector::from_parts(&[0.0], &[0.0]).unwrap();
        assert_eq!(cost_vector(&zero, &spec).amax(), 0.0);
        let x = SplitVector::from_parts(&[1.0], &[0.0]).unwrap();
        let a = cost_vector(&x, &spec);
        assert_relative_eq!(a[0], 0.054050291218046, max_relative = 1e-12);
        assert_relative_eq!(
            a[0],
            vwap_cost(&THETA, 1.0, 0.1).unwrap(),
            max_relative = 1e-14
        );
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn cost_depends_on_traded_volume_only() {
        let spec = one_asset(THETA, 0.05);
        let mut half_m = spec.clone();
        half_m.m = 0.05;
        let x = SplitVector::from_parts(&[0.8], &[0.3]).unwrap();
        let x_half = SplitVector::from_parts(&[0.4], &[0.15]).unwrap();
        let a = cost_vector(&x, &half_m);
        let b = cost_vector(&x_half, &spec);
        assert_relative_eq!(a, b, max_relative = 1e-14);
    }

    #[test]
    fn linear_costs_have_constant_slope() {
        let theta = ImpactParams::new(0.3, 0.14, 1.0, 1.0);
        let spec = one_asset(theta, 0.05);
        let expected = 0.1 * (0.5 * 0.3 + 0.14);
        for v in [0.0, 0.2, 3.0] {
            let x = SplitVector::from_parts(&[v], &[v / 2.0]).unwrap();
            let b = cost_gradient(&x, &spec);
            assert_relative_eq!(b[0], expected, max_relative = 1e-14);
            assert_relative_eq!(b[1], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn concave_costs_have_decreasing_slope() {
        let spec = one_asset(THETA, 0.05);
        let slope =
            |v: f64| cost_gradient(&SplitVector::from_parts(&[v], &[0.0]).unwrap(), &spec)[0];
        let mut prev = f64::INFINITY;
        for v in [1e-6, 1e-3, 0.1, 0.5, 1.0, 10.0] {
            let s = slope(v);
            assert!(s < prev);
            prev = s;
        }
        assert!(slope(0.0).is_finite());
        assert_eq!(slope(0.0), slope(X_FLOOR));
    }

    #[test]
    fn zero_cost_net_return_is_gross() {
        let spec = two_assets([0.05, 0.10]);
        let x = SplitVector::from_weights(&[1.4, -0.4]).unwrap();
        assert_relative_eq!(
            net_return(&x, &spec),
            1.4 * 0.05 - 0.4 * 0.10,
            max_relative = 1e-14
        );
    }

    #[test]
    fn two_sided_holdings_pay_twice() {
        let spec = one_asset(THETA, 0.05);
        let x = SplitVector::from_parts(&[0.5], &[0.5]).unwrap();
        let one = asset_cost(&THETA, 0.1, 1.0, 0.5);
        assert_relative_eq!(net_return(&x, &spec), -2.0 * one, max_relative = 1e-14);
    }

    #[test]
    fn split_variance_matches_weights() {
        let spec = gen_market(4, 5).unwrap();
        let w = [0.6, -0.3, 0.9, -0.2];
        let x = SplitVector::from_weights(&w).unwrap();
        let wv = DVector::from_row_slice(&w);
        assert_relative_eq!(
            variance(&x, &spec),
            wv.dot(&(spec.cov() * &wv)),
            max_relative = 1e-13
        );
    }

    #[test]
    fn bounds_single_asset() {
        let spec = one_asset(THETA, 0.07);
        let (lo, hi) = c_bounds(&spec, UNLIMITED_LEVERAGE).unwrap();
        let expected = 0.07 - vwap_cost(&THETA, 1.0, 0.1).unwrap();
        assert_relative_eq!(lo, expected, max_relative = 1e-12);
        assert_relative_eq!(hi, expected, max_relative = 1e-12);
    }

    #[test]
    fn bounds_cost_free_long_only_and_levered() {
        let spec = two_assets([0.05, 0.10]);
        let (lo, hi) = c_bounds(&spec, 1.0).unwrap();
        assert_relative_eq!(lo, 0.05, max_relative = 1e-9);
        assert_relative_eq!(hi, 0.10, max_relative = 1e-12);
        let (lo2, hi2) = c_bounds(&spec, 2.0).unwrap();
        assert_relative_eq!(hi2, 0.125, max_relative = 1e-12);
        assert_relative_eq!(lo2, 1.5 * 0.05 - 0.5 * 0.10, max_relative = 1e-8);
        assert!(c_bounds(&spec, 0.5).is_err());
    }

    #[test]
    fn endpoint_point_is_the_extreme_portfolio() {
        let spec = gen_market(5, 2024).unwrap();
        let (_, hi) = c_bounds(&spec, 2.0).unwrap();
        let p = frontier_point(hi, &spec, 2.0, None).unwrap();
        assert!(p.feasible);
        assert_relative_eq!(p.net_return(&spec).unwrap(), hi, max_relative = 1e-12);
        let gross: f64 = p.weights.iter().map(|w| w.abs()).sum();
        assert!(gross <= 2.0 + LINEAR_TOL);
    }

    #[test]
    fn cost_free_frontier_matches_closed_form() {
        let spec = gen_market(5, 2024).unwrap().without_costs();
        let mk = Markowitz::new(&spec).unwrap();
        let apex = mk.apex_return();
        for k in 0..10 {
            let mu = apex + (k as f64 - 4.0) * 0.02;
            let p = frontier_point(mu, &spec, UNLIMITED_LEVERAGE, None).unwrap();
            assert!(p.feasible, "target {mu}");
            assert!((p.sigma_p.powi(2) - mk.variance(mu)).abs() <= 1e-6);
        }
    }

    #[test]
    fn costs_lower_the_frontier() {
        let spec = gen_market(5, 2024).unwrap();
        let mk = Markowitz::new(&spec.without_costs()).unwrap();
        let curve = build_frontier(&spec, UNLIMITED_LEVERAGE, 15).unwrap();
        for p in curve.points.iter().filter(|p| p.feasible) {
            let upper = mk.upper_return(p.sigma_p).unwrap();
            assert!(p.c1 < upper, "c1 {} vs cost-free {}", p.c1, upper);
        }
    }

    #[test]
    fn frontier_points_respect_constraints() {
        let spec = gen_market(5, 7).unwrap();
        for l1 in [1.0, 2.0, UNLIMITED_LEVERAGE] {
            let curve = build_frontier(&spec, l1, 12).unwrap();
            assert_eq!(curve.points.len(), 12);
            assert_eq!(curve.points[0].c1, curve.c_min);
            assert_eq!(curve.points[11].c1, curve.c_max);
            for p in curve.points.iter().filter(|p| p.feasible) {
                let x = SplitVector::from_weights(&p.weights).unwrap();
                assert!((p.weights.iter().sum::<f64>() - 1.0).abs() <= LINEAR_TOL);
                assert!(x.leverage() <= l1 + LINEAR_TOL);
                assert!((net_return(&x, &spec) - p.c1).abs() <= RETURN_TOL);
            }
            assert!(
                curve.points.iter().filter(|p| p.feasible).count() >= 10,
                "l1 {l1}"
            );
        }
    }

    #[test]
    fn two_point_frontier_is_the_endpoints() {
        let spec = gen_market(3, 1).unwrap();
        let curve = build_frontier(&spec, 2.0, 2).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert!(build_frontier(&spec, 2.0, 1).is_err());
    }

    #[test]
    fn frontier_is_deterministic_and_serializes() {
        let spec = gen_market(3, 9).unwrap();
        let a = build_frontier(&spec, 2.0, 6).unwrap();
        let b = build_frontier(&spec, 2.0, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("c1,sigma_p,w1,w2,w3,feasible\n"));
        let back: FrontierCurve = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.points.len(), 6);
        assert_eq!(a.spec_digest, spec.digest());
    }

    #[test]
    fn single_asset_portfolio() {
        let spec = one_asset(THETA, 0.07);
        let p = optimal_portfolio(1.0, 0.0, &spec, 2.0).unwrap();
        assert_relative_eq!(p.weights[0], 1.0, max_relative = 1e-9);
        let expected = 0.07 - vwap_cost(&THETA, 1.0, 0.1).unwrap() - 0.1;
        assert_relative_eq!(p.utility, expected, max_relative = 1e-9);
        assert_eq!(p.utility, (p.r_p - p.r_f) - p.lambda * p.sigma_p);
        assert!(optimal_portfolio(0.0, 0.0, &spec, 2.0).is_err());
    }

    #[test]
    fn heavy_risk_aversion_gives_minimum_variance() {
        let spec = gen_market(5, 2024).unwrap();
        let mk = Markowitz::new(&spec.without_costs()).unwrap();
        let w_mv: Vec<f64> = mk.weights(mk.apex_return()).iter().copied().collect();
        let gross: f64 = w_mv.iter().map(|w| w.abs()).sum();
        assert!(
            gross < 2.0,
            "minimum-variance portfolio must leave the cap slack"
        );
        let c1 = net_return(&SplitVector::from_weights(&w_mv).unwrap(), &spec);
        let apex = frontier_point(c1, &spec, 2.0, None).unwrap();
        assert!(apex.feasible);
        assert!((apex.sigma_p.powi(2) - mk.variance(mk.apex_return())).abs() <= 1e-12);
        for (a, b) in apex.weights.iter().zip(&w_mv) {
            assert!((a - b).abs() <= 1e-5);
        }
        let dist = |lambda: f64| {
            let p = optimal_portfolio(lambda, 0.0, &spec, 2.0).unwrap();
            assert!(p.utility >= portfolio_utility(&apex.weights, &spec, lambda, 0.0).unwrap());
            p.weights
                .iter()
                .zip(&apex.weights)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        // concave costs keep a gap of order 1/lambda; the small short of the
        // last asset is dropped entirely at lambda = 1e3
        let d3 = dist(1e3);
        assert!(d3 < 2e-2);
        assert!(dist(1e5) <= 1e-3);
        assert!(dist(1e6) < dist(1e5));
    }

    #[test]
    fn optimum_beats_every_frontier_portfolio() {
        let spec = gen_market(5, 2024).unwrap();
        let curve = build_frontier(&spec, 2.0, 30).unwrap();
        for lambda in DEFAULT_LAMBDAS {
            let p = optimal_portfolio(lambda, 0.0, &spec, 2.0).unwrap();
            for q in curve.points.iter().filter(|q| q.feasible) {
                let u = portfolio_utility(&q.weights, &spec, lambda, 0.0).unwrap();
                assert!(
                    p.utility >= u - 1e-6,
                    "lambda {lambda}: {} < {}",
                    p.utility,
                    u
                );
            }
        }
    }

    #[test]
    fn utility_loss_properties() {
        let spec = gen_market(5, 2024).unwrap();
        let truth = spec.thetas.clone();
        let doubled: Vec<ImpactParams> = truth
            .iter()
            .map(|t| ImpactParams {
                gamma: 2.0 * t.gamma,
                ..*t
            })
            .collect();
        for lambda in [0.5, 2.0] {
            let zero = utility_loss(&truth, &spec, lambda, 0.0, 2.0).unwrap();
            assert!(zero.abs() <= 1e-6, "{zero}");
            let loss = utility_loss(&doubled, &spec, lambda, 0.0, 2.0).unwrap();
            assert!(loss >= -1e-6);
        }
    }

    #[test]
    fn band_quantiles() {
        let spec = gen_market(3, 4).unwrap();
        let curves: Vec<FrontierCurve> = [0.5, 1.0, 1.5]
            .iter()
            .map(|s| {
                let t = spec.thetas.iter().map(|p| p.scaled(*s)).collect();
                build_frontier(&spec.with_thetas(t).unwrap(), 2.0, 8).unwrap()
            })
            .collect();
        let lo = curves
            .iter()
            .map(|c| c.upper_branch()[0].0)
            .fold(0.0, f64::max);
        let band = frontier_band(&curves, &[lo + 1e-3]);
        assert_eq!(band[0].count, 3);
        assert!(band[0].q05 <= band[0].median && band[0].median <= band[0].q95);
    }
}
