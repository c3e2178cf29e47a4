//! Euler simulation of metaorder price paths and extraction of the
//! statistics each estimation design observes.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{permanent_impact, temporary_impact, ImpactParams, OrderConfig};
use crate::rng::{child_rng, StreamRng};

const RATIO_TOL: f64 = 1e-9;

/// Which statistics of an order an estimator observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// Post-trade return `I` and average in-trade return `J`.
    AlmgrenIJ,
    /// `P_T` and `P_{t_post}`.
    TwoPoint,
    /// `P_{tau_i T}` for each ratio (the last one is 1) plus `P_{t_post}`.
    KPoint { ratios: Vec<f64> },
}

impl Design {
    pub fn k_point(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Config(
                "k-point design needs at least one ratio".into(),
            ));
        }
        if ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Config(format!(
                "sampling ratios must lie in (0,1]: {ratios:?}"
            )));
        }
        if ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "sampling ratios must increase: {ratios:?}"
            )));
        }
        if (ratios[ratios.len() - 1] - 1.0).abs() > RATIO_TOL {
            return Err(Error::Config(format!(
                "last sampling ratio must be 1: {ratios:?}"
            )));
        }
        Ok(Design::KPoint { ratios })
    }

    /// `(P_{tau T}, P_T, P_{t_post})`.
    pub fn three_point(tau: f64) -> Result<Self> {
        Self::k_point(vec![tau, 1.0])
    }

    /// `(P_{tau1 T}, P_{tau2 T}, P_T, P_{t_post})`.
    pub fn four_point(tau1: f64, tau2: f64) -> Result<Self> {
        Self::k_point(vec![tau1, tau2, 1.0])
    }

    /// In-trade ratios sampled by the design (empty for `AlmgrenIJ`).
    pub fn ratios(&self) -> Vec<f64> {
        match self {
            Design::AlmgrenIJ => Vec::new(),
            Design::TwoPoint => vec![1.0],
            Design::KPoint { ratios } => ratios.clone(),
        }
    }

    /// Earliest sampled in-trade ratio, which alone determines the information
    /// content of a point-sampling design.
    pub fn earliest_ratio(&self) -> Option<f64> {
        match self {
            Design::AlmgrenIJ => None,
            Design::TwoPoint => Some(1.0),
            Design::KPoint { ratios } => ratios.first().copied(),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::AlmgrenIJ => write!(f, "almgren"),
            Design::TwoPoint => write!(f, "two-point"),
            Design::KPoint { ratios } => {
                let inner: Vec<String> = ratios[..ratios.len() - 1]
                    .iter()
                    .map(|r| r.to_string())
                    .collect();
                write!(f, "k-point:{}", inner.join(";"))
            }
        }
    }
}

impl FromStr for Design {
    type Err = Error;

    /// Accepts `almgren`, `two-point`, `three-point:<tau>`,
    /// `four-point:<tau1>;<tau2>` and `k-point:<tau1>;...` (ratio 1 implied).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim().to_string(), Some(t.trim().to_string())),
            None => (s.clone(), None),
        };
        let parse_ratios = |t: &str| -> Result<Vec<f64>> {
            t.split([';', ','])
                .filter(|x| !x.trim().is_empty())
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad sampling ratio '{x}'")))
                })
                .collect()
        };
        match (head.as_str(), tail) {
            ("almgren" | "ij" | "almgren-ij", None) => Ok(Design::AlmgrenIJ),
            ("two-point" | "2p", None) => Ok(Design::TwoPoint),
            ("three-point" | "3p", Some(t)) => {
                let r = parse_ratios(&t)?;
                if r.len() != 1 {
                    return Err(Error::Config(format!("three-point takes one ratio: '{s}'")));
                }
                Design::three_point(r[0])
            }
            ("four-point" | "4p", Some(t)) => {
                let r = parse_ratios(&t)?;
                if r.len() != 2 {
                    return Err(Error::Config(format!("four-point takes two ratios: '{s}'")));
                }
                Design::four_point(r[0], r[1])
            }
            ("k-point", Some(t)) => {
                let mut r = parse_ratios(&t)?;
                if r.last().is_none_or(|&x| (x - 1.0).abs() > RATIO_TOL) {
                    r.push(1.0);
                }
                Design::k_point(r)
            }
            _ => Err(Error::Config(format!("unknown design '{s}'"))),
        }
    }
}

/// Law of the participation rate across orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateDist {
    Point {
        v: f64,
    },
    /// Uniform on `(lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl RateDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RateDist::Point { v } if v > 0.0 && v < 1.0 => Ok(()),
            RateDist::Uniform { lo, hi } if lo >= 0.0 && hi > lo && hi < 1.0 => Ok(()),
            other => Err(Error::Config(format!(
                "invalid participation law {other:?}"
            ))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RateDist::Point { v } => v,
            RateDist::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                hi - u * (hi - lo)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RateDist::Point { v } => v,
            RateDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

/// Distribution of order hyper-parameters `(v, T)` with a fixed post-trade
/// delay `t_post - T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderDist {
    pub rate: RateDist,
    pub big_t: f64,
    pub post_delay: f64,
}

impl OrderDist {
    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        if !(self.big_t > 0.0 && self.post_delay > 0.0) {
            return Err(Error::Config(format!(
                "need T > 0 and post delay > 0, got {} and {}",
                self.big_t, self.post_delay
            )));
        }
        Ok(())
    }

    pub fn t_post(&self) -> f64 {
        self.big_t + self.post_delay
    }
}

/// A simulated price path in relative-return units.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    /// `0 = t_0 < ... < t_n = T`, then `t_post`.
    pub times: Vec<f64>,
    /// `P` at each time; `values[0] = 0`.
    pub values: Vec<f64>,
    /// Right limit `P_{0+}`: the temporary impact switches on as trading starts.
    pub entry_value: f64,
    pub config: OrderConfig,
}

impl PricePath {
    /// Number of in-trade steps.
    pub fn steps(&self) -> usize {
        self.times.len() - 2
    }

    pub fn in_trade(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn post_trade(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Builds a path from in-trade values on a uniform grid over `[0, T]`
    /// followed by the post-trade value.
    pub fn from_values(config: OrderConfig, entry_value: f64, values: Vec<f64>) -> Result<Self> {
        let n = values
            .len()
            .checked_sub(2)
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::Shape(
                    "a path needs at least two in-trade nodes and a post-trade value".into(),
                )
            })?;
        let dt = config.big_t / n as f64;
        let mut times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        times.push(config.big_t);
        times.push(config.t_post);
        Ok(Self {
            times,
            values,
            entry_value,
            config,
        })
    }
}

/// One order's observed statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSample {
    pub v: f64,
    pub big_t: f64,
    pub t_post: f64,
    /// `I = P_{t_post}`.
    pub i_stat: f64,
    /// `J = (1/T) int_0^T P_t dt`.
    pub j_stat: f64,
    /// `(tau, P_{tau T})`, sorted by `tau`; always contains `tau = 1`.
    pub points: Vec<(f64, f64)>,
}

impl OrderSample {
    pub fn point(&self, tau: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|(r, _)| (r - tau).abs() <= RATIO_TOL)
            .map(|&(_, p)| p)
    }

    pub fn has_points(&self, design: &Design) -> bool {
        design.ratios().iter().all(|&r| self.point(r).is_some())
    }
}

/// Simulates one path by exact-increment Euler stepping of the Brownian part.
pub fn simulate_path<R: Rng + ?Sized>(
    cfg: &OrderConfig,
    p: &ImpactParams,
    rng: &mut R,
) -> Result<PricePath> {
    cfg.validate()?;
    let n = cfg.steps()?;
    let g = permanent_impact(cfg.v, p)?;
    let h = temporary_impact(cfg.v, p)?;
    let dt = cfg.big_t / n as f64;
    let sd = cfg.sigma * dt.sqrt();

    let mut times = Vec::with_capacity(n + 2);
    let mut values = Vec::with_capacity(n + 2);
    times.push(0.0);
    values.push(0.0);
    let mut noise = 0.0;
    for i in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        noise += sd * z;
        let t = if i == n { cfg.big_t } else { i as f64 * dt };
        times.push(t);
        values.push(g * t + h + noise);
    }
    // after T the temporary term is gone and only diffusion remains
    let z: f64 = rng.sample(StandardNormal);
    noise += cfg.sigma * (cfg.t_post - cfg.big_t).sqrt() * z;
    times.push(cfg.t_post);
    values.push(g * cfg.big_t + noise);

    Ok(PricePath {
        times,
        values,
        entry_value: h,
        config: *cfg,
    })
}

fn grid_index(tau: f64, steps: usize) -> Result<usize> {
    let x = tau * steps as f64;
    let k = x.round();
    if !(tau > 0.0 && tau <= 1.0) || (x - k).abs() > 1e-7 {
        return Err(Error::Alignment { ratio: tau, steps });
    }
    Ok(k as usize)
}

/// Reads `I`, the trapezoidal `J` and the sampled points requested by any of
/// `designs` off a path.
pub fn extract_stats(path: &PricePath, designs: &[Design]) -> Result<OrderSample> {
    let steps = path.steps();
    let trade = path.in_trade();
    let big_t = path.config.big_t;

    let mut sum = 0.5 * (path.entry_value + trade[1]) * (path.times[1] - path.times[0]);
    for i in 1..steps {
        sum += 0.5 * (trade[i] + trade[i + 1]) * (path.times[i + 1] - path.times[i]);
    }
    let j_stat = sum / big_t;

    let mut ratios: Vec<f64> = designs.iter().flat_map(Design::ratios).collect();
    ratios.push(1.0);
    ratios.sort_by(f64::total_cmp);
    ratios.dedup_by(|a, b| (*a - *b).abs() <= RATIO_TOL);
    let points = ratios
        .into_iter()
        .map(|tau| Ok((tau, trade[grid_index(tau, steps)?])))
        .collect::<Result<Vec<_>>>()?;

    Ok(OrderSample {
        v: path.config.v,
        big_t,
        t_post: path.config.t_post,
        i_stat: path.post_trade(),
        j_stat,
        points,
    })
}

/// Simulates `m` independent orders; order `k` draws its rate and path from
/// stream `k` of `master_seed`, so the output does not depend on scheduling.
pub fn simulate_orders(
    m: usize,
    dist: &OrderDist,
    template: &OrderConfig,
    p: &ImpactParams,
    master_seed: u64,
    designs: &[Design],
) -> Result<Vec<OrderSample>> {
    dist.validate()?;
    (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng: StreamRng = child_rng(master_seed, k as u64);
            simulate_order(&mut rng, dist, template, p, designs)
        })
        .collect()
}

pub(crate) fn simulate_order<R: Rng + ?Sized>(
    rng: &mut R,
    dist: &OrderDist,
    template: &OrderConfig,
    p: &ImpactParams,
    designs: &[Design],
) -> Result<OrderSample> {
    let v = dist.rate.sample(rng);
    let cfg = OrderConfig {
        v,
        big_t: dist.big_t,
        t_post: dist.t_post(),
        ..*template
    };
    let path = simulate_path(&cfg, p, rng)?;
    extract_stats(&path, designs)
}

/// Provenance written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub orders: usize,
    pub config: OrderConfig,
    pub order_dist: OrderDist,
    pub theta: ImpactParams,
    pub designs: Vec<Design>,
}

/// Writes samples as CSV: `order_id,v,T,t_post,I,J,point:<tau>...`.
pub fn write_dataset_csv<W: Write>(mut w: W, samples: &[OrderSample]) -> Result<()> {
    let ratios: Vec<f64> = samples
        .first()
        .map(|s| s.points.iter().map(|p| p.0).collect())
        .unwrap_or_default();
    write!(w, "order_id,v,T,t_post,I,J")?;
    for r in &ratios {
        write!(w, ",point:{r}")?;
    }
    writeln!(w)?;
    for (k, s) in samples.iter().enumerate() {
        if s.points.len() != ratios.len() {
            return Err(Error::Shape(format!(
                "order {k} samples a different set of points"
            )));
        }
        write!(
            w,
            "{k},{},{},{},{},{}",
            s.v, s.big_t, s.t_post, s.i_stat, s.j_stat
        )?;
        for (_, p) in &s.points {
            write!(w, ",{p}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(r: R) -> Result<Vec<OrderSample>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Shape("empty dataset".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 6 || cols[..6] != ["order_id", "v", "T", "t_post", "I", "J"] {
        return Err(Error::Shape(format!(
            "unexpected dataset header '{header}'"
        )));
    }
    let ratios = cols[6..]
        .iter()
        .map(|c| {
            c.strip_prefix("point:")
                .and_then(|x| x.parse::<f64>().ok())
                .ok_or_else(|| Error::Shape(format!("bad point column '{c}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Shape(format!("line {}: {e}", lineno + 2)))?;
        if fields.len() != cols.len() {
            return Err(Error::Shape(format!(
                "line {}: expected {} fields",
                lineno + 2,
                cols.len()
            )));
        }
        out.push(OrderSample {
            v: fields[1],
            big_t: fields[2],
            t_post: fields[3],
            i_stat: fields[4],
            j_stat: fields[5],
            points: ratios
                .iter()
                .copied()
                .zip(fields[6..].iter().copied())
                .collect(),
        });
    }
    Ok(out)
}
