//! Randomized K-asset markets with per-asset impact parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ImpactParams;
use crate::rng::child_rng;

/// Leverage cap standing in for "no leverage limit".
pub const UNLIMITED_LEVERAGE: f64 = 1e3;
const MAX_CORR_ATTEMPTS: usize = 100;

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub k: usize,
    pub sigma: Vec<f64>,
    pub returns: Vec<f64>,
    pub corr: Vec<Vec<f64>>,
    #[serde(skip)]
    cov: DMatrix<f64>,
    pub thetas: Vec<ImpactParams>,
    /// Participation rate per unit of portfolio weight traded.
    pub m: f64,
    pub big_t: f64,
    pub t_post: f64,
    pub leverage: f64,
}

impl MarketSpec {
    pub fn new(
        sigma: Vec<f64>,
        returns: Vec<f64>,
        corr: DMatrix<f64>,
        thetas: Vec<ImpactParams>,
        m: f64,
        big_t: f64,
        t_post: f64,
        leverage: f64,
    ) -> Result<Self> {
        let k = sigma.len();
        let cov = cov_from(&sigma, &corr)?;
        let corr = (0..corr.nrows())
            .map(|i| corr.row(i).iter().copied().collect())
            .collect();
        let spec = Self {
            k,
            sigma,
            returns,
            corr,
            cov,
            thetas,
            m,
            big_t,
            t_post,
            leverage,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn corr_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |i, j| self.corr[i][j])
    }

    pub fn returns_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.returns)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::Config("a market needs at least one asset".into()));
        }
        if self.sigma.len() != k
            || self.returns.len() != k
            || self.thetas.len() != k
            || self.corr.len() != k
        {
            return Err(Error::Shape(
                "per-asset vectors disagree on the asset count".into(),
            ));
        }
        if self.corr.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("correlation matrix is not square".into()));
        }
        validate_corr(&self.corr_matrix())?;
        if self.sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("volatilities must be positive".into()));
        }
        for t in &self.thetas {
            let ok = t.gamma >= 0.0 && t.eta >= 0.0 && t.alpha > 0.0 && t.beta > 0.0;
            if !ok || !t.to_array().iter().all(|x| x.is_finite()) {
                return Err(Error::Config(format!("invalid impact parameters {t:?}")));
            }
        }
        if !(self.m > 0.0 && self.big_t > 0.0 && self.t_post > self.big_t && self.leverage >= 1.0) {
            return Err(Error::Config(format!(
                "need m > 0, 0 < T < t_post and leverage >= 1, got m={}, T={}, t_post={}, l1={}",
                self.m, self.big_t, self.t_post, self.leverage
            )));
        }
        Ok(())
    }

    /// Same market with every asset's impact parameters replaced.
    pub fn with_thetas(&self, thetas: Vec<ImpactParams>) -> Result<Self> {
        if thetas.len() != self.k {
            return Err(Error::Shape(format!(
                "expected {} parameter sets, got {}",
                self.k,
                thetas.len()
            )));
        }
        let spec = Self {
            thetas,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same market with impact switched off.
    pub fn without_costs(&self) -> Self {
        let thetas = self
            .thetas
            .iter()
            .map(|t| ImpactParams {
                gamma: 0.0,
                eta: 0.0,
                ..*t
            })
            .collect();
        Self {
            thetas,
            ..self.clone()
        }
    }

    pub fn with_leverage(&self, leverage: f64) -> Result<Self> {
        let spec = Self {
            leverage,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Content hash of the market, impact parameters included.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("market specs always serialize");
        crate::digest::sha256_hex(&json)
    }

    /// Parses a market document and rebuilds the covariance from `sigma` and
    /// `corr`.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: Self = serde_json::from_str(text)?;
        if spec.corr.len() != spec.sigma.len()
            || spec.corr.iter().any(|r| r.len() != spec.sigma.len())
        {
            return Err(Error::Shape(
                "correlation matrix does not match the asset count".into(),
            ));
        }
        spec.cov = cov_from(&spec.sigma, &spec.corr_matrix())?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `Sigma_ij = sigma_i sigma_j rho_ij`.
pub fn cov_from(sigma: &[f64], corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.len();
    if corr.shape() != (k, k) {
        return Err(Error::Shape(format!(
            "{k} volatilities but a {:?} correlation matrix",
            corr.shape()
        )));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        sigma[i] * sigma[j] * corr[(i, j)]
    }))
}

fn validate_corr(c: &DMatrix<f64>) -> Result<()> {
    let k = c.nrows();
    for i in 0..k {
        if c[(i, i)] != 1.0 {
            return Err(Error::Config("correlation diagonal must be 1".into()));
        }
        for j in 0..i {
            if c[(i, j)] != c[(j, i)] || c[(i, j)].abs() > 1.0 {
                return Err(Error::Config(
                    "correlation matrix must be symmetric with entries in [-1, 1]".into(),
                ));
            }
        }
    }
    if c.clone().cholesky().is_none() {
        return Err(Error::Config(
            "correlation matrix is not positive definite".into(),
        ));
    }
    Ok(())
}

/// Random correlation matrix rounded to 4 decimals: the normalized Gram
/// matrix of a K x K standard-normal draw, redrawn until the rounded matrix
/// is still positive definite.
pub fn gen_corr<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::Config("a correlation matrix needs k >= 1".into()));
    }
    for _ in 0..MAX_CORR_ATTEMPTS {
        let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram = &a * a.transpose();
        let d: Vec<f64> = (0..k).map(|i| gram[(i, i)].sqrt()).collect();
        let mut c = DMatrix::identity(k, k);
        for i in 0..k {
            for j in 0..i {
                let r = round4(gram[(i, j)] / (d[i] * d[j]));
                c[(i, j)] = r;
                c[(j, i)] = r;
            }
        }
        let min_eig = c.clone().symmetric_eigenvalues().min();
        if min_eig > 0.0 && validate_corr(&c).is_ok() {
            return Ok(c);
        }
    }
    Err(Error::Optimization(format!(
        "no positive definite correlation after {MAX_CORR_ATTEMPTS} draws"
    )))
}

/// Market with `k` assets drawn from the reference ranges, every value
/// rounded to 4 decimals. Uses `m = 0.1`, `T = 1`, `t_post = 1.5` and no
/// leverage cap.
pub fn gen_market(k: usize, seed: u64) -> Result<MarketSpec> {
    if k == 0 {
        return Err(Error::Config("a market needs k >= 1".into()));
    }
    let mut rng = child_rng(seed, 0);
    let mut uniform = |lo: f64, hi: f64| round4(rng.random_range(lo..=hi));
    let sigma: Vec<f64> = (0..k).map(|_| uniform(0.05, 0.15)).collect();
    let zeta: Vec<f64> = (0..k).map(|_| uniform(-4.0, 4.0)).collect();
    let returns: Vec<f64> = sigma
        .iter()
        .zip(&zeta)
        .map(|(s, z)| round4(s * z))
        .collect();
    let alpha: Vec<f64> = (0..k).map(|_| uniform(0.5, 0.9999)).collect();
    let beta: Vec<f64> = (0..k).map(|_| uniform(0.5, 0.9999)).collect();
    let gamma: Vec<f64> = (0..k).map(|_| uniform(0.1, 0.5)).collect();
    let eta: Vec<f64> = (0..k).map(|_| uniform(0.1, 0.5)).collect();
    let thetas = (0..k)
        .map(|i| ImpactParams::new(gamma[i], eta[i], alpha[i], beta[i]))
        .collect();
    let corr = gen_corr(k, &mut child_rng(seed, 1))?;
    MarketSpec::new(
        sigma,
        returns,
        corr,
        thetas,
        0.1,
        1.0,
        1.5,
        UNLIMITED_LEVERAGE,
    )
}
