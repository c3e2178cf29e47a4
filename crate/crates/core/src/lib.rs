//! Power-law market impact: simulation, estimation, information geometry of
//! sampling designs and cost-aware mean-variance portfolios.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod digest;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod lm;
pub mod market;
pub mod model;
pub mod portfolio;
pub mod qp;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod sqp;
pub mod stats;
pub mod studies;

pub use error::{Error, Result};
pub use market::{gen_market, MarketSpec, UNLIMITED_LEVERAGE};
pub use model::{ImpactParams, MomentPair, OrderConfig, Param};
pub use portfolio::{FrontierCurve, FrontierPoint, OptimalPortfolio, SplitVector};
pub use sim::{Design, OrderDist, OrderSample, PricePath, RateDist};
