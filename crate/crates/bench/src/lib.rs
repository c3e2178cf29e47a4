//! Fixtures shared by the benchmarks.

use impactkit::sim::simulate_orders;
use impactkit::{Design, ImpactParams, OrderConfig, OrderDist, OrderSample, RateDist};

pub const THETA: ImpactParams = ImpactParams::new(0.3, 0.14, 0.9, 0.5);

pub fn order_dist() -> OrderDist {
    OrderDist {
        rate: RateDist::Uniform { lo: 0.05, hi: 0.15 },
        big_t: 1.0,
        post_delay: 0.5,
    }
}

pub fn template() -> OrderConfig {
    OrderConfig {
        s0: 10.0,
        sigma: 0.1,
        big_t: 1.0,
        t_post: 1.5,
        v: 0.1,
        dt: 0.01,
    }
}

pub fn designs() -> Vec<Design> {
    vec![
        Design::AlmgrenIJ,
        Design::TwoPoint,
        Design::three_point(0.1).unwrap(),
        Design::four_point(0.1, 0.5).unwrap(),
    ]
}

pub fn dataset(n: usize, seed: u64) -> Vec<OrderSample> {
    simulate_orders(n, &order_dist(), &template(), &THETA, seed, &designs()).unwrap()
}
