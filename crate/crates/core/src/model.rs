//! The power-law Almgren-Chriss impact model and the analytic law of the
//! permanent/realized impact statistics.
//!
//! Prices are handled as relative returns `P_t = (S_t - S_0) / S_0`. Under
//! the model, conditional on the participation rate `v` and duration `T`,
//!
//! ```text
//! P_t = g(v) t + h(v) + sigma W_t        0 < t <= T
//! P_t = g(v) T        + sigma W_t        t > T
//! ```
//!
//! with `g(v) = gamma v^alpha` and `h(v) = eta v^beta`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Impact parameters `(gamma, eta, alpha, beta)`.
///
/// The canonical ordering used by every vector or matrix indexed by
/// parameter is `(gamma, eta, alpha, beta)`; see [`Param`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub gamma: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// One coordinate of [`ImpactParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Gamma,
    Eta,
    Alpha,
    Beta,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Gamma, Param::Eta, Param::Alpha, Param::Beta];

    pub fn index(self) -> usize {
        match self {
            Param::Gamma => 0,
            Param::Eta => 1,
            Param::Alpha => 2,
            Param::Beta => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Gamma => "gamma",
            Param::Eta => "eta",
            Param::Alpha => "alpha",
            Param::Beta => "beta",
        }
    }
}

impl std::str::FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma" => Ok(Param::Gamma),
            "eta" => Ok(Param::Eta),
            "alpha" => Ok(Param::Alpha),
            "beta" => Ok(Param::Beta),
            other => Err(Error::Config(format!("unknown parameter '{other}'"))),
        }
    }
}

impl ImpactParams {
    pub const fn new(gamma: f64, eta: f64, alpha: f64, beta: f64) -> Self {
        Self {
            gamma,
            eta,
            alpha,
            beta,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.gamma, self.eta, self.alpha, self.beta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let mut a = self.to_array();
        a[p.index()] = value;
        *self = Self::from_array(a);
    }

    /// Checks `gamma, eta > 0` and both exponents in `(0, 2)`.
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.eta > 0.0
            && self.alpha > 0.0
            && self.alpha < 2.0
            && self.beta > 0.0
            && self.beta < 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "impact parameters out of range: {self:?}"
            )))
        }
    }

    /// Scales both coefficients, leaving the exponents untouched.
    pub fn scaled(self, c: f64) -> Self {
        Self {
            gamma: self.gamma * c,
            eta: self.eta * c,
            ..self
        }
    }
}

/// Hyper-parameters of a single metaorder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    /// Initial price; only used when converting to and from currency units.
    pub s0: f64,
    pub sigma: f64,
    /// Trade duration in volume time.
    pub big_t: f64,
    /// Absolute post-trade observation time.
    pub t_post: f64,
    /// Participation rate.
    pub v: f64,
    /// Euler step.
    pub dt: f64,
}

impl OrderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.big_t > 0.0 && self.big_t < self.t_post) {
            return Err(Error::Domain(format!(
                "need 0 < T < t_post, got T={} t_post={}",
                self.big_t, self.t_post
            )));
        }
        if !(self.dt > 0.0 && self.dt <= self.big_t) {
            return Err(Error::Domain(format!(
                "need 0 < dt <= T, got dt={}",
                self.dt
            )));
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            return Err(Error::Domain(format!(
                "participation rate {} not in (0,1)",
                self.v
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!(
                "volatility {} must be >= 0",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Number of Euler steps covering `[0, T]`; fails unless `T / dt` is integral.
    pub fn steps(&self) -> Result<usize> {
        let n = self.big_t / self.dt;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Domain(format!(
                "T={} is not an integer multiple of dt={}",
                self.big_t, self.dt
            )));
        }
        Ok(rounded as usize)
    }

    pub fn with_rate(self, v: f64) -> Self {
        Self { v, ..self }
    }
}

/// Mean and covariance of `(I, J - I/2)` for one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

fn require_positive_rate(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "participation rate must be positive, got {v}"
        )))
    }
}

/// `coef * v^exp`, continuously extended by 0 at `v = 0`.
#[inline]
pub fn power_impact(coef: f64, exp: f64, v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        coef * v.powf(exp)
    }
}

/// Permanent impact rate `g(v) = gamma v^alpha`.
pub fn permanent_impact(v: f64, p: &ImpactParams) -> Result<f64> {
    require_positive_rate(v)?;
    Ok(p.gamma * v.powf(p.alpha))
}

/// Temporary impact `h(v) = eta v^beta`.
pub fn temporary_impact(v: f64, p: &ImpactParams) -> Result<f64> {
    require_positive_rate(v)?;
    Ok(p.eta * v.powf(p.beta))
}

/// Means of `(I, J - I/2)`: `(T g(v), h(v))`.
pub fn ij_mean(p: &ImpactParams, big_t: f64, v: f64) -> Result<Vector2<f64>> {
    if !(big_t > 0.0) {
        return Err(Error::Domain(format!(
            "duration must be positive, got {big_t}"
        )));
    }
    Ok(Vector2::new(
        big_t * permanent_impact(v, p)?,
        temporary_impact(v, p)?,
    ))
}

/// Covariance of `(I, J - I/2)`.
pub fn ij_cov(big_t: f64, t_post: f64, sigma: f64) -> Result<Matrix2<f64>> {
    if !(big_t > 0.0 && big_t < t_post) {
        return Err(Error::Domain(format!(
            "need 0 < T < t_post, got T={big_t} t_post={t_post}"
        )));
    }
    let s2 = sigma * sigma;
    let off = -(t_post - big_t) / 2.0;
    Ok(Matrix2::new(t_post, off, off, t_post / 4.0 - big_t / 6.0) * s2)
}

pub fn ij_moments(p: &ImpactParams, cfg: &OrderConfig) -> Result<MomentPair> {
    Ok(MomentPair {
        mean: ij_mean(p, cfg.big_t, cfg.v)?,
        cov: ij_cov(cfg.big_t, cfg.t_post, cfg.sigma)?,
    })
}

/// Expected VWAP execution cost in return units, `T g(v) / 2 + h(v)`.
///
/// `T = 0` is allowed and leaves only the temporary term.
pub fn vwap_cost(p: &ImpactParams, big_t: f64, v: f64) -> Result<f64> {
    if !(big_t >= 0.0) {
        return Err(Error::Domain(format!(
            "duration must be non-negative, got {big_t}"
        )));
    }
    Ok(0.5 * big_t * permanent_impact(v, p)? + temporary_impact(v, p)?)
}
