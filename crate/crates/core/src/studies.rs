//! Seeded experiment drivers behind the command-line tools.
//!
//! Each study is a pure function of its configuration and master seed.
//! Parallel work goes through rayon's current pool, so callers pick the
//! worker count with `ThreadPool::install`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitResult, FitSpec};
use crate::fisher::{dominance, fisher, Dominance};
use crate::market::{gen_market, MarketSpec};
use crate::model::{ij_cov, ij_mean, ImpactParams, OrderConfig, Param};
use crate::portfolio::{
    build_frontier, frontier_band, optimal_portfolio, optimal_portfolio_from, portfolio_utility,
    BandPoint, FrontierCurve, DEFAULT_LAMBDAS,
};
use crate::rng::{child_rng, derive_seed};
use crate::sim::{extract_stats, simulate_orders, simulate_path, Design, OrderDist, RateDist};
use crate::stats::{mean, quantile, quantile_sorted, sample_cov, sample_sd};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 2024;

const BOOTSTRAP_TAG: u64 = 0xB007;
const TIE_TOL: f64 = 1e-9;

/// Provenance attached to every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION.to_string(),
            seed,
            config_hash,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

fn parse_designs(names: &[String]) -> Result<Vec<Design>> {
    if names.is_empty() {
        return Err(Error::Config("at least one design is required".into()));
    }
    names.iter().map(|s| s.parse()).collect()
}

// ---------------------------------------------------------------------------
// moment validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eq10Config {
    pub theta: ImpactParams,
    pub s0: f64,
    pub sigma: f64,
    pub big_t: f64,
    pub t_post: f64,
    pub dt: f64,
    pub v: f64,
    pub orders: usize,
    /// Bootstrap resamples for the covariance standard errors.
    pub bootstrap: usize,
}

impl Default for Eq10Config {
    fn default() -> Self {
        Self {
            theta: ImpactParams::new(0.3, 0.14, 0.9, 0.6),
            s0: 10.0,
            sigma: 0.1,
            big_t: 1.0,
            t_post: 1.5,
            dt: 0.01,
            v: 0.1,
            orders: 10_000,
            bootstrap: 200,
        }
    }
}

impl Eq10Config {
    fn order_config(&self) -> OrderConfig {
        OrderConfig {
            s0: self.s0,
            sigma: self.sigma,
            big_t: self.big_t,
            t_post: self.t_post,
            v: self.v,
            dt: self.dt,
        }
    }
}

/// One line of the empirical-versus-analytic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub quantity: String,
    pub empirical: f64,
    pub analytic: f64,
    /// Standard error of the empirical value: `sd / sqrt(M)` for means,
    /// bootstrap for covariance entries.
    pub std_error: f64,
}

impl MomentRow {
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.analytic) / self.std_error
    }

    pub fn rel_diff(&self) -> f64 {
        (self.empirical - self.analytic) / self.analytic
    }
}

/// Median and interquartile range of the simulated price at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBand {
    pub t: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eq10Report {
    pub orders: usize,
    pub rows: Vec<MomentRow>,
    /// Price quantiles in currency units.
    pub bands: Vec<PathBand>,
}

impl Eq10Report {
    pub fn row(&self, quantity: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("quantity,empirical,analytic,std_error,z,rel_diff\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.quantity,
                r.empirical,
                r.analytic,
                r.std_error,
                r.z_score(),
                r.rel_diff()
            ));
        }
        out
    }

    pub fn bands_csv(&self) -> String {
        let mut out = String::from("t,q25,median,q75\n");
        for b in &self.bands {
            out.push_str(&format!("{},{},{},{}\n", b.t, b.q25, b.median, b.q75));
        }
        out
    }
}

fn cov_triplet(i: &[f64], j: &[f64]) -> [f64; 3] {
    [sample_cov(i, i), sample_cov(i, j), sample_cov(j, j)]
}

pub fn run_eq10(cfg: &Eq10Config, seed: u64) -> Result<Eq10Report> {
    if cfg.orders == 0 {
        return Err(Error::EmptySimulation);
    }
    let order = cfg.order_config();
    order.validate()?;
    cfg.theta.validate()?;

    let sims: Vec<(f64, f64, Vec<f64>)> = (0..cfg.orders)
        .into_par_iter()
        .map(|k| {
            let mut rng = child_rng(seed, k as u64);
            let path = simulate_path(&order, &cfg.theta, &mut rng)?;
            let s = extract_stats(&path, &[])?;
            Ok((s.i_stat, s.j_stat - 0.5 * s.i_stat, path.values))
        })
        .collect::<Result<_>>()?;
    let times = simulate_path(&order, &cfg.theta, &mut child_rng(seed, 0))?.times;

    let i: Vec<f64> = sims.iter().map(|s| s.0).collect();
    let j: Vec<f64> = sims.iter().map(|s| s.1).collect();
    let m = i.len();
    let mu = ij_mean(&cfg.theta, cfg.big_t, cfg.v)?;
    let cov = ij_cov(cfg.big_t, cfg.t_post, cfg.sigma)?;

    let boot_seed = derive_seed(seed, BOOTSTRAP_TAG);
    let boots: Vec<[f64; 3]> = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|b| {
            use rand::Rng;
            let mut rng = child_rng(boot_seed, b as u64);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let bi: Vec<f64> = idx.iter().map(|&k| i[k]).collect();
            let bj: Vec<f64> = idx.iter().map(|&k| j[k]).collect();
            cov_triplet(&bi, &bj)
        })
        .collect();
    let boot_se = |c: usize| sample_sd(&boots.iter().map(|b| b[c]).collect::<Vec<_>>());

    let emp = cov_triplet(&i, &j);
    let sqrt_m = (m as f64).sqrt();
    let rows = vec![
        MomentRow {
            quantity: "mean_I".into(),
            empirical: mean(&i),
            analytic: mu[0],
            std_error: sample_sd(&i) / sqrt_m,
        },
        MomentRow {
            quantity: "mean_J_minus_I_half".into(),
            empirical: mean(&j),
            analytic: mu[1],
            std_error: sample_sd(&j) / sqrt_m,
        },
        MomentRow {
            quantity: "cov_I_I".into(),
            empirical: emp[0],
            analytic: cov[(0, 0)],
            std_error: boot_se(0),
        },
        MomentRow {
            quantity: "cov_I_J".into(),
            empirical: emp[1],
            analytic: cov[(0, 1)],
            std_error: boot_se(1),
        },
        MomentRow {
            quantity: "cov_J_J".into(),
            empirical: emp[2],
            analytic: cov[(1, 1)],
            std_error: boot_se(2),
        },
    ];

    let bands = times
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let mut col: Vec<f64> = sims.iter().map(|s| cfg.s0 * (1.0 + s.2[c])).collect();
            col.sort_by(f64::total_cmp);
            PathBand {
                t,
                q25: quantile_sorted(&col, 0.25),
                median: quantile_sorted(&col, 0.5),
                q75: quantile_sorted(&col, 0.75),
            }
        })
        .collect();

    Ok(Eq10Report {
        orders: m,
        rows,
        bands,
    })
}

// ---------------------------------------------------------------------------
// estimator comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCompareConfig {
    pub theta: ImpactParams,
    pub s0: f64,
    pub sigma: f64,
    pub big_t: f64,
    pub t_post: f64,
    pub dt: f64,
    pub rate: RateDist,
    pub designs: Vec<String>,
    pub free: Vec<Param>,
    pub sizes: Vec<usize>,
    pub replications: usize,
}

impl Default for FitCompareConfig {
    fn default() -> Self {
        Self {
            theta: ImpactParams::new(0.3, 0.14, 0.9, 0.5),
            s0: 10.0,
            sigma: 0.1,
            big_t: 1.0,
            t_post: 1.5,
            dt: 0.01,
            rate: RateDist::Uniform { lo: 0.05, hi: 0.15 },
            designs: [
                "almgren",
                "two-point",
                "three-point:0.1",
                "three-point:0.95",
                "four-point:0.1;0.5",
            ]
            .map(String::from)
            .to_vec(),
            free: vec![Param::Alpha, Param::Beta],
            sizes: vec![1000],
            replications: 100,
        }
    }
}

/// Outcome of one fit in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub design: String,
    pub result: std::result::Result<FitResult, String>,
}

/// One cell group of the comparison table: a design, sample size and
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub design: String,
    pub n: usize,
    pub param: Param,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_theoretical_sd: f64,
    pub empirical_sd: f64,
    pub fits: usize,
    pub failures: usize,
    /// Smallest theoretical SD among designs at this `(n, param)`.
    pub min_theoretical_sd: bool,
    pub min_empirical_sd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCompareReport {
    pub records: Vec<FitRecord>,
    pub summary: Vec<FitSummary>,
}

impl FitCompareReport {
    pub fn summary_for(&self, design: &str, n: usize, param: Param) -> Option<&FitSummary> {
        self.summary
            .iter()
            .find(|s| s.design == design && s.n == n && s.param == param)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "design,n,param,truth,mean_estimate,mean_theoretical_sd,empirical_sd,fits,failures,min_theoretical_sd,min_empirical_sd\n",
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                s.design,
                s.n,
                s.param.name(),
                s.truth,
                s.mean_estimate,
                s.mean_theoretical_sd,
                s.empirical_sd,
                s.fits,
                s.failures,
                s.min_theoretical_sd,
                s.min_empirical_sd
            ));
        }
        out
    }

    pub fn estimates_csv(&self) -> String {
        let mut out = format!("replication,{},error\n", FitResult::CSV_HEADER);
        for r in &self.records {
            match &r.result {
                Ok(f) => {
                    let d: Design = r.design.parse().expect("design labels round-trip");
                    out.push_str(&format!("{},{},\n", r.replication, f.csv_row(&d, r.seed)));
                }
                Err(e) => out.push_str(&format!(
                    "{},{},{},,,,,,,,,false,{},\"{}\"\n",
                    r.replication,
                    r.design,
                    r.n,
                    r.seed,
                    e.replace('"', "'")
                )),
            }
        }
        out
    }
}

pub fn run_fit_compare(cfg: &FitCompareConfig, seed: u64) -> Result<FitCompareReport> {
    let designs = parse_designs(&cfg.designs)?;
    if cfg.sizes.is_empty() || cfg.replications == 0 {
        return Err(Error::Config(
            "need at least one sample size and one replication".into(),
        ));
    }
    if cfg.sizes.contains(&0) {
        return Err(Error::EmptySimulation);
    }
    cfg.theta.validate()?;
    let template = OrderConfig {
        s0: cfg.s0,
        sigma: cfg.sigma,
        big_t: cfg.big_t,
        t_post: cfg.t_post,
        v: cfg.rate.mean(),
        dt: cfg.dt,
    };
    template.validate()?;
    let dist = OrderDist {
        rate: cfg.rate,
        big_t: cfg.big_t,
        post_delay: cfg.t_post - cfg.big_t,
    };
    dist.validate()?;
    let specs: Vec<FitSpec> = designs
        .iter()
        .map(|d| FitSpec::new(d.clone(), cfg.free.clone(), cfg.theta))
        .collect();
    if let Some(s) = specs.first() {
        s.validate()?;
    }

    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let records: Vec<Vec<FitRecord>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let rep_seed = derive_seed(derive_seed(seed, n as u64), r as u64);
            let data = simulate_orders(n, &dist, &template, &cfg.theta, rep_seed, &designs)?;
            Ok(specs
                .iter()
                .map(|spec| FitRecord {
                    n,
                    replication: r,
                    seed: rep_seed,
                    design: spec.design.label(),
                    result: fit(spec, &data, cfg.sigma).map_err(|e| e.to_string()),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: Vec<FitRecord> = records.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for &n in &cfg.sizes {
        let start = summary.len();
        for d in &designs {
            let label = d.label();
            let fits: Vec<&FitResult> = records
                .iter()
                .filter(|r| r.n == n && r.design == label)
                .filter_map(|r| r.result.as_ref().ok())
                .collect();
            let failures = cfg.replications - fits.len();
            for &p in &cfg.free {
                let est: Vec<f64> = fits.iter().map(|f| f.theta_hat.get(p)).collect();
                let sds: Vec<f64> = fits.iter().filter_map(|f| f.sd(p)).collect();
                summary.push(FitSummary {
                    design: label.clone(),
                    n,
                    param: p,
                    truth: cfg.theta.get(p),
                    mean_estimate: mean(&est),
                    mean_theoretical_sd: mean(&sds),
                    empirical_sd: sample_sd(&est),
                    fits: fits.len(),
                    failures,
                    min_theoretical_sd: false,
                    min_empirical_sd: false,
                });
            }
        }
        let block = &mut summary[start..];
        for &p in &cfg.free {
            let best = |f: fn(&FitSummary) -> f64, b: &[FitSummary]| {
                b.iter()
                    .filter(|s| s.param == p)
                    .map(f)
                    .filter(|x| x.is_finite())
                    .fold(f64::INFINITY, f64::min)
            };
            let min_th = best(|s| s.mean_theoretical_sd, block);
            let min_emp = best(|s| s.empirical_sd, block);
            for s in block.iter_mut().filter(|s| s.param == p) {
                s.min_theoretical_sd = s.mean_theoretical_sd <= min_th * (1.0 + TIE_TOL);
                s.min_empirical_sd = s.empirical_sd <= min_emp * (1.0 + TIE_TOL);
            }
        }
    }

    Ok(FitCompareReport { records, summary })
}

// ---------------------------------------------------------------------------
// market estimation shared by the frontier and portfolio studies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketStudyConfig {
    pub assets: usize,
    pub market_seed: u64,
    pub replications: usize,
    /// Historical orders per asset.
    pub orders: usize,
    pub rate: RateDist,
    pub s0: f64,
    pub dt: f64,
    /// Early sampling ratio of the three-point estimator.
    pub t1: f64,
}

impl Default for MarketStudyConfig {
    fn default() -> Self {
        Self {
            assets: 5,
            market_seed: DEFAULT_SEED,
            replications: 100,
            orders: 100,
            rate: RateDist::Uniform { lo: 0.0, hi: 0.2 },
            s0: 10.0,
            dt: 0.01,
            t1: 0.1,
        }
    }
}

impl MarketStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.assets == 0 {
            return Err(Error::Config("a market needs at least one asset".into()));
        }
        if self.orders == 0 {
            return Err(Error::EmptySimulation);
        }
        if self.replications == 0 {
            return Err(Error::Config("need at least one replication".into()));
        }
        positive("s0", self.s0)?;
        positive("dt", self.dt)?;
        Design::three_point(self.t1)?;
        self.rate.validate()
    }

    pub fn market(&self) -> Result<MarketSpec> {
        gen_market(self.assets, self.market_seed)
    }
}

/// Per-asset parameter estimates of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFits {
    pub almgren: Vec<ImpactParams>,
    pub three_point: Vec<ImpactParams>,
}

/// Simulates `cfg.orders` orders on every asset of `spec` and fits all four
/// parameters with the Almgren and three-point estimators.
pub fn estimate_market(
    spec: &MarketSpec,
    cfg: &MarketStudyConfig,
    seed: u64,
) -> Result<MarketFits> {
    let almgren = Design::AlmgrenIJ;
    let three = Design::three_point(cfg.t1)?;
    let designs = [almgren.clone(), three.clone()];
    let dist = OrderDist {
        rate: cfg.rate,
        big_t: spec.big_t,
        post_delay: spec.t_post - spec.big_t,
    };
    let mut fits = MarketFits {
        almgren: Vec::with_capacity(spec.k),
        three_point: Vec::with_capacity(spec.k),
    };
    for i in 0..spec.k {
        let template = OrderConfig {
            s0: cfg.s0,
            sigma: spec.sigma[i],
            big_t: spec.big_t,
            t_post: spec.t_post,
            v: cfg.rate.mean(),
            dt: cfg.dt,
        };
        let data = simulate_orders(
            cfg.orders,
            &dist,
            &template,
            &spec.thetas[i],
            derive_seed(seed, i as u64),
            &designs,
        )?;
        fits.almgren
            .push(fit(&FitSpec::all_free(almgren.clone()), &data, spec.sigma[i])?.theta_hat);
        fits.three_point
            .push(fit(&FitSpec::all_free(three.clone()), &data, spec.sigma[i])?.theta_hat);
    }
    Ok(fits)
}

// ---------------------------------------------------------------------------
// frontiers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontierStudyConfig {
    pub market: MarketStudyConfig,
    pub leverages: Vec<f64>,
    pub points: usize,
    pub band_points: usize,
}

impl Default for FrontierStudyConfig {
    fn default() -> Self {
        Self {
            market: MarketStudyConfig::default(),
            leverages: vec![2.0, crate::market::UNLIMITED_LEVERAGE],
            points: 30,
            band_points: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFrontiers {
    pub replication: usize,
    pub almgren: FrontierCurve,
    pub three_point: FrontierCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageFrontiers {
    pub l1: f64,
    pub cost_off: FrontierCurve,
    pub truth: FrontierCurve,
    pub replications: Vec<ReplicationFrontiers>,
    pub almgren_band: Vec<BandPoint>,
    pub three_point_band: Vec<BandPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub market: MarketSpec,
    pub fits: Vec<Option<MarketFits>>,
    pub failures: Vec<(usize, String)>,
    pub frontiers: Vec<LeverageFrontiers>,
}

impl FrontierReport {
    pub fn bands_csv(&self) -> String {
        let mut out = String::from("l1,method,sigma_p,median,q05,q95,count\n");
        for lev in &self.frontiers {
            for (name, band) in [
                ("almgren", &lev.almgren_band),
                ("three-point", &lev.three_point_band),
            ] {
                for b in band {
                    out.push_str(&format!(
                        "{},{name},{},{},{},{},{}\n",
                        lev.l1, b.sigma_p, b.median, b.q05, b.q95, b.count
                    ));
                }
            }
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let k = self.market.k;
        let mut out = format!("l1,method,replication,{}\n", FrontierCurve::csv_header(k));
        let mut push = |l1: f64, method: &str, rep: &str, c: &FrontierCurve| {
            for line in c.to_csv().lines().skip(1) {
                out.push_str(&format!("{l1},{method},{rep},{line}\n"));
            }
        };
        for lev in &self.frontiers {
            push(lev.l1, "cost-off", "", &lev.cost_off);
            push(lev.l1, "true", "", &lev.truth);
            for r in &lev.replications {
                let rep = r.replication.to_string();
                push(lev.l1, "almgren", &rep, &r.almgren);
                push(lev.l1, "three-point", &rep, &r.three_point);
            }
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn replicate_fits(
    spec: &MarketSpec,
    cfg: &MarketStudyConfig,
    seed: u64,
) -> (Vec<Option<MarketFits>>, Vec<(usize, String)>) {
    let out: Vec<std::result::Result<MarketFits, String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| estimate_market(spec, cfg, derive_seed(seed, r as u64)).map_err(|e| e.to_string()))
        .collect();
    let mut failures = Vec::new();
    let fits = out
        .into_iter()
        .enumerate()
        .map(|(r, f)| match f {
            Ok(f) => Some(f),
            Err(e) => {
                failures.push((r, e));
                None
            }
        })
        .collect();
    (fits, failures)
}

pub fn run_frontier(cfg: &FrontierStudyConfig, seed: u64) -> Result<FrontierReport> {
    cfg.market.validate()?;
    if cfg.leverages.is_empty() {
        return Err(Error::Config("need at least one leverage cap".into()));
    }
    if cfg.points < 2 || cfg.band_points == 0 {
        return Err(Error::Config(
            "need at least 2 frontier points and 1 band point".into(),
        ));
    }
    let spec = cfg.market.market()?;
    let (fits, mut failures) = replicate_fits(&spec, &cfg.market, seed);

    let mut frontiers = Vec::with_capacity(cfg.leverages.len());
    for &l1 in &cfg.leverages {
        let cost_off = build_frontier(&spec.without_costs(), l1, cfg.points)?;
        let truth = build_frontier(&spec, l1, cfg.points)?;
        let reps: Vec<std::result::Result<ReplicationFrontiers, (usize, String)>> = fits
            .par_iter()
            .enumerate()
            .filter_map(|(r, f)| f.as_ref().map(|f| (r, f)))
            .map(|(r, f)| {
                let curve = |thetas: &[ImpactParams]| {
                    build_frontier(&spec.with_thetas(thetas.to_vec())?, l1, cfg.points)
                };
                let built = curve(&f.almgren).and_then(|a| Ok((a, curve(&f.three_point)?)));
                built
                    .map(|(almgren, three_point)| ReplicationFrontiers {
                        replication: r,
                        almgren,
                        three_point,
                    })
                    .map_err(|e| (r, format!("l1={l1}: {e}")))
            })
            .collect();
        let mut replications = Vec::new();
        for rep in reps {
            match rep {
                Ok(x) => replications.push(x),
                Err(e) => failures.push(e),
            }
        }
        let branch = truth.upper_branch();
        let grid = match (branch.first(), branch.last()) {
            (Some(a), Some(b)) => linspace(a.0, b.0, cfg.band_points),
            _ => Vec::new(),
        };
        let almgren: Vec<FrontierCurve> = replications.iter().map(|r| r.almgren.clone()).collect();
        let three: Vec<FrontierCurve> =
            replications.iter().map(|r| r.three_point.clone()).collect();
        frontiers.push(LeverageFrontiers {
            l1,
            almgren_band: frontier_band(&almgren, &grid),
            three_point_band: frontier_band(&three, &grid),
            cost_off,
            truth,
            replications,
        });
    }

    Ok(FrontierReport {
        market: spec,
        fits,
        failures,
        frontiers,
    })
}

// ---------------------------------------------------------------------------
// optimal portfolios and utility loss

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioStudyConfig {
    pub market: MarketStudyConfig,
    pub lambdas: Vec<f64>,
    pub r_f: f64,
    pub leverage: f64,
}

impl Default for PortfolioStudyConfig {
    fn default() -> Self {
        Self {
            market: MarketStudyConfig::default(),
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            r_f: 0.0,
            leverage: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    True,
    Almgren,
    ThreePoint,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::True, Method::Almgren, Method::ThreePoint];

    pub fn name(self) -> &'static str {
        match self {
            Method::True => "true",
            Method::Almgren => "almgren",
            Method::ThreePoint => "three-point",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub replication: usize,
    pub lambda: f64,
    pub method: Method,
    pub weights: Vec<f64>,
    /// True utility of the chosen weights.
    pub utility: f64,
    /// Best true utility found.
    pub best_utility: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub method: Method,
    /// `None` pools every risk aversion.
    pub lambda: Option<f64>,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub market: MarketSpec,
    pub failures: Vec<(usize, String)>,
    pub records: Vec<LossRecord>,
    pub summary: Vec<LossSummary>,
}

impl PortfolioReport {
    pub fn pooled(&self, method: Method) -> Option<&LossSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.lambda.is_none())
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,lambda,mean,q05,q95,count\n");
        for s in &self.summary {
            let lambda = s.lambda.map_or("all".to_string(), |l| l.to_string());
            out.push_str(&format!(
                "{},{lambda},{},{},{},{}\n",
                s.method.name(),
                s.mean,
                s.q05,
                s.q95,
                s.count
            ));
        }
        out
    }

    pub fn records_csv(&self) -> String {
        let k = self.market.k;
        let mut out = String::from("replication,lambda,method,utility,best_utility,loss");
        for i in 1..=k {
            out.push_str(&format!(",w{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.replication,
                r.lambda,
                r.method.name(),
                r.utility,
                r.best_utility,
                r.loss
            ));
            for w in &r.weights {
                out.push_str(&format!(",{w}"));
            }
            out.push('\n');
        }
        out
    }
}

fn replication_losses(
    spec: &MarketSpec,
    fits: &MarketFits,
    cfg: &PortfolioStudyConfig,
    replication: usize,
) -> Result<Vec<LossRecord>> {
    let spec_a = spec.with_thetas(fits.almgren.clone())?;
    let spec_3 = spec.with_thetas(fits.three_point.clone())?;
    let mut out = Vec::with_capacity(3 * cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let chosen = [
            optimal_portfolio(lambda, cfg.r_f, spec, cfg.leverage)?.weights,
            optimal_portfolio(lambda, cfg.r_f, &spec_a, cfg.leverage)?.weights,
            optimal_portfolio(lambda, cfg.r_f, &spec_3, cfg.leverage)?.weights,
        ];
        let best = optimal_portfolio_from(lambda, cfg.r_f, spec, cfg.leverage, &chosen)?.utility;
        for (method, weights) in Method::ALL.into_iter().zip(chosen) {
            let utility = portfolio_utility(&weights, spec, lambda, cfg.r_f)?;
            out.push(LossRecord {
                replication,
                lambda,
                method,
                weights,
                utility,
                best_utility: best,
                loss: best - utility,
            });
        }
    }
    Ok(out)
}

fn summarize(method: Method, lambda: Option<f64>, losses: &[f64]) -> LossSummary {
    LossSummary {
        method,
        lambda,
        mean: mean(losses),
        q05: quantile(losses, 0.05),
        q95: quantile(losses, 0.95),
        count: losses.len(),
    }
}

pub fn run_portfolio(cfg: &PortfolioStudyConfig, seed: u64) -> Result<PortfolioReport> {
    cfg.market.validate()?;
    if cfg.lambdas.is_empty() {
        return Err(Error::Config("the risk-aversion grid is empty".into()));
    }
    for &l in &cfg.lambdas {
        positive("risk aversion", l)?;
    }
    if !(cfg.leverage >= 1.0) {
        return Err(Error::Config(format!(
            "leverage cap must be at least 1, got {}",
            cfg.leverage
        )));
    }
    let spec = cfg.market.market()?;
    let (fits, mut failures) = replicate_fits(&spec, &cfg.market, seed);
    let per_rep: Vec<std::result::Result<Vec<LossRecord>, (usize, String)>> = fits
        .par_iter()
        .enumerate()
        .filter_map(|(r, f)| f.as_ref().map(|f| (r, f)))
        .map(|(r, f)| replication_losses(&spec, f, cfg, r).map_err(|e| (r, e.to_string())))
        .collect();
    let mut records = Vec::new();
    for rep in per_rep {
        match rep {
            Ok(x) => records.extend(x),
            Err(e) => failures.push(e),
        }
    }

    let mut summary = Vec::new();
    for method in Method::ALL {
        let pick = |lambda: Option<f64>| -> Vec<f64> {
            records
                .iter()
                .filter(|r| r.method == method && lambda.is_none_or(|l| r.lambda == l))
                .map(|r| r.loss)
                .collect()
        };
        summary.push(summarize(method, None, &pick(None)));
        for &l in &cfg.lambdas {
            summary.push(summarize(method, Some(l), &pick(Some(l))));
        }
    }

    Ok(PortfolioReport {
        market: spec,
        failures,
        records,
        summary,
    })
}

// ---------------------------------------------------------------------------
// dominance grid

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceGridConfig {
    pub theta: ImpactParams,
    pub sigma: f64,
    pub v: f64,
    pub durations: Vec<f64>,
    /// Values of `t_post / T`.
    pub post_ratios: Vec<f64>,
    /// Values of `t / T` for the early sample.
    pub early_ratios: Vec<f64>,
}

impl Default for DominanceGridConfig {
    fn default() -> Self {
        Self {
            theta: ImpactParams::new(0.3, 0.14, 0.9, 0.6),
            sigma: 0.1,
            v: 0.1,
            durations: (1..=20).map(|i| 0.1 * i as f64).collect(),
            post_ratios: (1..=20).map(|i| 1.0 + 0.1 * i as f64).collect(),
            early_ratios: (1..=20).map(|i| i as f64 / 24.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCell {
    pub big_t: f64,
    pub post_ratio: f64,
    pub early_ratio: f64,
    pub three_point_over_ij: Dominance,
    /// Whether `t / T <= 1/4`.
    pub rule: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointCell {
    pub big_t: f64,
    pub post_ratio: f64,
    pub two_point_over_ij: Dominance,
    pub ij_over_two_point: Dominance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub cells: Vec<DominanceCell>,
    pub two_point: Vec<TwoPointCell>,
}

impl DominanceReport {
    /// Cells where the PSD test and the `t/T <= 1/4` rule disagree.
    pub fn mismatches(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.three_point_over_ij.psd != c.rule)
            .count()
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("T,t_post_over_T,t_over_T,psd,min_eig,rule\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.big_t,
                c.post_ratio,
                c.early_ratio,
                c.three_point_over_ij.psd,
                c.three_point_over_ij.min_eig,
                c.rule
            ));
        }
        out
    }

    pub fn two_point_csv(&self) -> String {
        let mut out = String::from(
            "T,t_post_over_T,two_point_over_ij,min_eig_two_point_over_ij,ij_over_two_point,min_eig_ij_over_two_point\n",
        );
        for c in &self.two_point {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.big_t,
                c.post_ratio,
                c.two_point_over_ij.psd,
                c.two_point_over_ij.min_eig,
                c.ij_over_two_point.psd,
                c.ij_over_two_point.min_eig
            ));
        }
        out
    }
}

pub fn run_dominance_grid(cfg: &DominanceGridConfig) -> Result<DominanceReport> {
    positive("sigma", cfg.sigma)?;
    if cfg.durations.is_empty() || cfg.post_ratios.is_empty() || cfg.early_ratios.is_empty() {
        return Err(Error::Config(
            "every grid axis needs at least one value".into(),
        ));
    }
    for &r in &cfg.post_ratios {
        if !(r > 1.0) {
            return Err(Error::Config(format!("t_post / T must exceed 1, got {r}")));
        }
    }
    let free = Param::ALL.to_vec();
    let info = |design: &Design, big_t: f64, post_ratio: f64| {
        let dist = OrderDist {
            rate: RateDist::Point { v: cfg.v },
            big_t,
            post_delay: big_t * (post_ratio - 1.0),
        };
        fisher(design, &cfg.theta, &dist, cfg.sigma, &free)
    };

    let pairs: Vec<(f64, f64)> = cfg
        .durations
        .iter()
        .flat_map(|&t| cfg.post_ratios.iter().map(move |&r| (t, r)))
        .collect();
    let blocks: Vec<(Vec<DominanceCell>, TwoPointCell)> = pairs
        .par_iter()
        .map(|&(big_t, post_ratio)| {
            positive("T", big_t)?;
            let ij = info(&Design::AlmgrenIJ, big_t, post_ratio)?;
            let two = info(&Design::TwoPoint, big_t, post_ratio)?;
            let cells = cfg
                .early_ratios
                .iter()
                .map(|&tau| {
                    let three = info(&Design::three_point(tau)?, big_t, post_ratio)?;
                    Ok(DominanceCell {
                        big_t,
                        post_ratio,
                        early_ratio: tau,
                        three_point_over_ij: dominance(&three, &ij)?,
                        rule: tau <= 0.25 + 1e-12,
                    })
                })
                .collect::<Result<_>>()?;
            let tp = TwoPointCell {
                big_t,
                post_ratio,
                two_point_over_ij: dominance(&two, &ij)?,
                ij_over_two_point: dominance(&ij, &two)?,
            };
            Ok((cells, tp))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut two_point = Vec::new();
    for (c, t) in blocks {
        cells.extend(c);
        two_point.push(t);
    }
    Ok(DominanceReport { cells, two_point })
}
