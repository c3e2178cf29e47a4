//! Closed-form Fisher information of each sampling design and PSD dominance
//! checks between designs.

use nalgebra::{DMatrix, Matrix2, Matrix2x4, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ij_cov, ImpactParams, Param};
use crate::quadrature::GaussLegendre;
use crate::sim::{Design, OrderDist, OrderSample, RateDist};

pub const QUADRATURE_NODES: usize = 64;

/// `d(T g, h) / d(gamma, eta, alpha, beta)` at `(T, v)`.
pub fn jacobian_ij(p: &ImpactParams, big_t: f64, v: f64) -> Result<Matrix2x4<f64>> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!(
            "participation rate must be positive, got {v}"
        )));
    }
    if !(big_t > 0.0) {
        return Err(Error::Domain(format!(
            "duration must be positive, got {big_t}"
        )));
    }
    let lv = v.ln();
    let va = v.powf(p.alpha);
    let vb = v.powf(p.beta);
    #[rustfmt::skip]
    let j = Matrix2x4::new(
        big_t * va, 0.0, big_t * p.gamma * va * lv, 0.0,
        0.0,        vb,  0.0,                       p.eta * vb * lv,
    );
    Ok(j)
}

/// Per-sample information kernel `W` so that the information carried by one
/// order is `J^T W J` with `J` from [`jacobian_ij`].
pub fn weight_matrix(design: &Design, big_t: f64, t_post: f64, sigma: f64) -> Result<Matrix2<f64>> {
    if !(big_t > 0.0 && t_post > big_t) {
        return Err(Error::Domain(format!(
            "need 0 < T < t_post, got T={big_t}, t_post={t_post}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "volatility must be positive, got {sigma}"
        )));
    }
    match design {
        Design::AlmgrenIJ => ij_cov(big_t, t_post, sigma)?
            .try_inverse()
            .ok_or(Error::Singular { rank: 1, dim: 2 }),
        Design::TwoPoint | Design::KPoint { .. } => {
            let tau = design.earliest_ratio().unwrap_or(1.0);
            let t = tau * big_t;
            if !(t > 0.0 && t <= big_t) {
                return Err(Error::Domain(format!(
                    "early sample time {t} outside (0, T]"
                )));
            }
            let s2 = sigma * sigma;
            let a = 1.0 / big_t;
            Ok(Matrix2::new(a, a, a, 1.0 / t + 1.0 / (t_post - big_t)) / s2)
        }
    }
}

/// Full 4x4 information of a single order.
pub fn order_information(
    design: &Design,
    p: &ImpactParams,
    big_t: f64,
    t_post: f64,
    v: f64,
    sigma: f64,
) -> Result<Matrix4<f64>> {
    let j = jacobian_ij(p, big_t, v)?;
    let w = weight_matrix(design, big_t, t_post, sigma)?;
    Ok(j.transpose() * w * j)
}

fn restrict(m: &Matrix4<f64>, free: &[Param]) -> DMatrix<f64> {
    DMatrix::from_fn(free.len(), free.len(), |r, c| {
        m[(free[r].index(), free[c].index())]
    })
}

fn check_free(free: &[Param]) -> Result<()> {
    if free.is_empty() {
        return Err(Error::Config(
            "at least one free parameter is required".into(),
        ));
    }
    for (i, a) in free.iter().enumerate() {
        if free[..i].contains(a) {
            return Err(Error::Config(format!(
                "parameter {} listed twice",
                a.name()
            )));
        }
    }
    Ok(())
}

/// Fisher information restricted to `params`, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub matrix: DMatrix<f64>,
    pub params: Vec<Param>,
    pub design: Design,
    pub order_dist: Option<OrderDist>,
}

impl InfoMatrix {
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Numerical rank at relative tolerance `1e-12`.
    pub fn rank(&self) -> usize {
        let e = self.eigenvalues();
        let top = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        e.iter()
            .filter(|x| x.abs() > 1e-12 * top.max(f64::MIN_POSITIVE))
            .count()
    }

    pub fn scaled(&self, n: f64) -> Self {
        Self {
            matrix: &self.matrix * n,
            ..self.clone()
        }
    }

    /// Asymptotic standard deviations `sqrt(diag(I^-1))`.
    pub fn standard_deviations(&self) -> Result<Vec<f64>> {
        let inv = pseudo_checked_inverse(&self.matrix)?;
        Ok((0..self.dim())
            .map(|i| inv[(i, i)].max(0.0).sqrt())
            .collect())
    }
}

/// Inverse of a symmetric PSD matrix; fails with the numerical rank when the
/// matrix is singular.
pub fn pseudo_checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE);
    let rank = eig.eigenvalues.iter().filter(|&&x| x > tol).count();
    if rank < dim || top == 0.0 {
        return Err(Error::Singular { rank, dim });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x));
    Ok(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

/// Expected per-order information under `dist`, restricted to `free`.
///
/// Uniform participation laws are integrated with a 64-node Gauss-Legendre
/// rule; point masses are evaluated exactly.
pub fn fisher(
    design: &Design,
    p: &ImpactParams,
    dist: &OrderDist,
    sigma: f64,
    free: &[Param],
) -> Result<InfoMatrix> {
    check_free(free)?;
    dist.validate()?;
    let t_post = dist.t_post();
    let full = match dist.rate {
        RateDist::Point { v } => order_information(design, p, dist.big_t, t_post, v, sigma)?,
        RateDist::Uniform { lo, hi } => {
            if !(lo > 0.0) {
                return Err(Error::Domain(
                    "uniform participation law needs lo > 0".into(),
                ));
            }
            let rule = GaussLegendre::new(QUADRATURE_NODES);
            let mut acc = Matrix4::zeros();
            for (v, w) in rule.uniform_expectation(lo, hi) {
                acc += order_information(design, p, dist.big_t, t_post, v, sigma)? * w;
            }
            acc
        }
    };
    Ok(InfoMatrix {
        matrix: restrict(&full, free),
        params: free.to_vec(),
        design: design.clone(),
        order_dist: Some(*dist),
    })
}

/// Observed information of a dataset: the sum of per-order information.
pub fn sample_information(
    design: &Design,
    p: &ImpactParams,
    data: &[OrderSample],
    sigma: f64,
    free: &[Param],
) -> Result<InfoMatrix> {
    check_free(free)?;
    let mut acc = Matrix4::zeros();
    for s in data {
        acc += order_information(design, p, s.big_t, s.t_post, s.v, sigma)?;
    }
    Ok(InfoMatrix {
        matrix: restrict(&acc, free),
        params: free.to_vec(),
        design: design.clone(),
        order_dist: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub psd: bool,
    pub min_eig: f64,
}

/// Whether `a - b` is positive semidefinite, up to `1e-10 * max(1, |a|)`.
pub fn dominance(a: &InfoMatrix, b: &InfoMatrix) -> Result<Dominance> {
    if a.params != b.params {
        return Err(Error::Shape(format!(
            "parameter orders differ: {:?} vs {:?}",
            a.params, b.params
        )));
    }
    Ok(matrix_dominance(&a.matrix, &b.matrix))
}

pub fn matrix_dominance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Dominance {
    let diff = a - b;
    let sym = (&diff + diff.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * a.norm().max(1.0);
    Dominance {
        psd: min_eig >= -tol,
        min_eig,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlySampleRules {
    /// `t/T <= 1/4`
    pub final_rule: bool,
    /// `t/T < T / (3 t_post)`
    pub draft_rule: bool,
}

pub fn early_sample_rules(t: f64, big_t: f64, t_post: f64) -> Result<EarlySampleRules> {
    if !(t > 0.0 && t < big_t && big_t < t_post) {
        return Err(Error::Domain(format!(
            "need 0 < t < T < t_post, got ({t}, {big_t}, {t_post})"
        )));
    }
    let ratio = t / big_t;
    Ok(EarlySampleRules {
        final_rule: ratio <= 0.25,
        draft_rule: ratio < big_t / (3.0 * t_post),
    })
}
