use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use impactkit::studies::{
    DominanceGridConfig, Eq10Config, FitCompareConfig, FrontierStudyConfig, PortfolioStudyConfig,
};

/// Contents of a `--config` file. Every section is optional and falls back
/// to the reference setup of its command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub validate_eq10: Eq10Config,
    pub fit_compare: FitCompareConfig,
    pub frontier: FrontierStudyConfig,
    pub portfolio: PortfolioStudyConfig,
    pub dominance_grid: DominanceGridConfig,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Parse(PathBuf, toml::de::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_owned(), e))?;
        Self::parse(&text).map_err(|e| ConfigError::Parse(path.to_owned(), e))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_setups() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.validate_eq10.orders, 10_000);
    }

    #[test]
    fn sections_override_selected_fields() {
        let cfg = ExperimentConfig::parse(
            r#"
seed = 7
[validate_eq10]
orders = 50
theta = { gamma = 0.3, eta = 0.14, alpha = 0.9, beta = 0.5 }
[fit_compare]
designs = ["almgren", "three-point:0.1"]
free = ["alpha", "beta", "gamma"]
rate = { kind = "uniform", lo = 0.1, hi = 0.2 }
[portfolio.market]
replications = 4
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.validate_eq10.orders, 50);
        assert_eq!(cfg.validate_eq10.theta.beta, 0.5);
        assert_eq!(cfg.validate_eq10.dt, 0.01);
        assert_eq!(cfg.fit_compare.free.len(), 3);
        assert_eq!(cfg.portfolio.market.replications, 4);
        assert_eq!(cfg.portfolio.market.orders, 100);
    }

    #[test]
    fn errors_report_the_line() {
        let err = ExperimentConfig::parse("seed = 1\n[validate_eq10]\nordrs = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("ordrs"), "{msg}");
    }
}
