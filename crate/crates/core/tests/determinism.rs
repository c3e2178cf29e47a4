use impactkit::sim::simulate_orders;
use impactkit::studies::*;
use impactkit::*;

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
}

#[test]
fn datasets_do_not_depend_on_worker_count() {
    let dist = OrderDist {
        rate: RateDist::Uniform { lo: 0.05, hi: 0.15 },
        big_t: 1.0,
        post_delay: 0.5,
    };
    let template = OrderConfig {
        s0: 10.0,
        sigma: 0.1,
        big_t: 1.0,
        t_post: 1.5,
        v: 0.1,
        dt: 0.01,
    };
    let designs = [Design::AlmgrenIJ, Design::four_point(0.1, 0.5).unwrap()];
    let theta = ImpactParams::new(0.3, 0.14, 0.9, 0.5);
    let run = |n| pool(n).install(|| simulate_orders(500, &dist, &template, &theta, 77, &designs));
    assert_eq!(run(1).unwrap(), run(4).unwrap());
}

#[test]
fn fit_comparison_is_reproducible_across_pools() {
    let cfg = FitCompareConfig {
        sizes: vec![150, 300],
        replications: 3,
        ..Default::default()
    };
    let a = pool(1).install(|| run_fit_compare(&cfg, 5)).unwrap();
    let b = pool(3).install(|| run_fit_compare(&cfg, 5)).unwrap();
    assert_eq!(a.estimates_csv(), b.estimates_csv());
    assert_eq!(a.summary_csv(), b.summary_csv());
}

#[test]
fn portfolio_study_is_reproducible_across_pools() {
    let mut cfg = PortfolioStudyConfig::default();
    cfg.market.replications = 3;
    cfg.market.orders = 60;
    let a = pool(1).install(|| run_portfolio(&cfg, 9)).unwrap();
    let b = pool(4).install(|| run_portfolio(&cfg, 9)).unwrap();
    assert_eq!(a.records_csv(), b.records_csv());
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert!(a.records.iter().all(|r| r.loss >= -1e-6));
    let truth = a.pooled(Method::True).unwrap();
    assert!(truth.q95 <= 1e-6);
}

#[test]
fn frontier_study_emits_every_leverage_and_baseline() {
    let mut cfg = FrontierStudyConfig::default();
    cfg.market.replications = 2;
    cfg.market.orders = 60;
    cfg.points = 8;
    cfg.band_points = 5;
    let rep = run_frontier(&cfg, 3).unwrap();
    assert_eq!(rep.frontiers.len(), 2);
    for lev in &rep.frontiers {
        assert_eq!(lev.cost_off.points.len(), 8);
        assert_eq!(lev.truth.points.len(), 8);
        assert_eq!(lev.replications.len() + rep.failures.len(), 2);
        assert_eq!(lev.almgren_band.len(), 5);
        assert!(lev.cost_off.c_max >= lev.truth.c_max);
    }
    let again = run_frontier(&cfg, 3).unwrap();
    assert_eq!(rep.curves_csv(), again.curves_csv());
    assert_eq!(rep.bands_csv(), again.bands_csv());
}
