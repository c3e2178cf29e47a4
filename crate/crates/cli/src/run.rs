use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use impactkit::digest::sha256_hex;
use impactkit::studies::{self, Manifest, Method, DEFAULT_SEED};
use impactkit::Error;

use crate::config::ExperimentConfig;
use crate::Command;

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

const DEFAULT_OUT: &str = "impactkit-out";

#[derive(Debug)]
pub struct RunError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::EmptySimulation
            | Error::Domain(_)
            | Error::Alignment { .. }
            | Error::Shape(_) => EXIT_CONFIG,
            Error::Identifiability(_) | Error::Singular { .. } | Error::Optimization(_) => {
                EXIT_NUMERIC
            }
            Error::Io(_) => EXIT_IO,
        };
        RunError {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: String) -> RunError {
    RunError {
        code: EXIT_CONFIG,
        message,
    }
}

fn numeric_error(message: String) -> RunError {
    RunError {
        code: EXIT_NUMERIC,
        message,
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Serialize)]
struct Hashed<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a T,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self, RunError> {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let body = serde_json::to_string_pretty(value).map_err(|e| io_error(Path::new(name), e))?;
        self.text(name, &(body + "\n"))
    }
}

fn manifest<T: Serialize>(command: Command, seed: u64, section: &T) -> Manifest {
    let hashed = Hashed {
        command: command.name(),
        seed,
        config: section,
    };
    let bytes = serde_json::to_vec(&hashed).expect("configs serialize");
    Manifest::new(command.name(), seed, sha256_hex(&bytes))
}

pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<String, RunError> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cfg.workers {
        Some(0) => return Err(config_error("workers must be at least 1".into())),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let pool = builder
        .build()
        .map_err(|e| config_error(format!("cannot start worker pool: {e}")))?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    pool.install(|| dispatch(command, cfg, seed, out))
}

fn dispatch(
    command: Command,
    cfg: &ExperimentConfig,
    seed: u64,
    out: PathBuf,
) -> Result<String, RunError> {
    let mut summary = String::new();
    let mut w;
    match command {
        Command::ValidateEq10 => {
            let section = &cfg.validate_eq10;
            let m = manifest(command, seed, section);
            let rep = studies::run_eq10(section, seed)?;
            w = Writer::new(out)?;
            w.text("eq10_table.csv", &rep.table_csv())?;
            w.text("eq10_bands.csv", &rep.bands_csv())?;
            w.json("manifest.json", &m)?;
            w.json(
                "report.json",
                &Report {
                    manifest: &m,
                    body: &serde_json::json!({ "orders": rep.orders, "rows": rep.rows }),
                },
            )?;
            for r in &rep.rows {
                let _ = writeln!(
                    summary,
                    "{:<22} empirical {:>12.6e}  analytic {:>12.6e}  z {:>6.2}",
                    r.quantity,
                    r.empirical,
                    r.analytic,
                    r.z_score()
                );
            }
        }
        Command::FitCompare => {
            let section = &cfg.fit_compare;
            let m = manifest(command, seed, section);
            let rep = studies::run_fit_compare(section, seed)?;
            w = Writer::new(out)?;
            w.text("fit_summary.csv", &rep.summary_csv())?;
            w.text("fit_estimates.csv", &rep.estimates_csv())?;
            w.json("manifest.json", &m)?;
            w.json(
                "report.json",
                &Report {
                    manifest: &m,
                    body: &serde_json::json!({ "summary": rep.summary }),
                },
            )?;
            for r in rep.records.iter().filter(|r| r.result.is_err()) {
                eprintln!(
                    "warning: {} n={} replication {}: {}",
                    r.design,
                    r.n,
                    r.replication,
                    r.result.as_ref().unwrap_err()
                );
            }
            if let Some(s) = rep.summary.iter().find(|s| s.fits == 0) {
                return Err(numeric_error(format!(
                    "no successful fit for design {} at n={}",
                    s.design, s.n
                )));
            }
            for s in &rep.summary {
                let _ = writeln!(
                    summary,
                    "{:<16} n={:<6} {:<6} mean {:>9.5} sd(theory) {:>9.5} sd(emp) {:>9.5}{}",
                    s.design,
                    s.n,
                    s.param.name(),
                    s.mean_estimate,
                    s.mean_theoretical_sd,
                    s.empirical_sd,
                    if s.min_empirical_sd { " *" } else { "" }
                );
            }
        }
        Command::Frontier => {
            let section = &cfg.frontier;
            let m = manifest(command, seed, section);
            let rep = studies::run_frontier(section, seed)?;
            for (r, e) in &rep.failures {
                eprintln!("warning: replication {r}: {e}");
            }
            if rep.frontiers.iter().any(|l| l.replications.is_empty()) {
                return Err(numeric_error("every replication failed".into()));
            }
            w = Writer::new(out)?;
            w.text("frontier_curves.csv", &rep.curves_csv())?;
            w.text("frontier_bands.csv", &rep.bands_csv())?;
            w.json("manifest.json", &m)?;
            w.json(
                "frontiers.json",
                &Report {
                    manifest: &m,
                    body: &rep,
                },
            )?;
            for lev in &rep.frontiers {
                let _ = writeln!(
                    summary,
                    "l1={}: {} replications, true return range [{:.4}, {:.4}]",
                    lev.l1,
                    lev.replications.len(),
                    lev.truth.c_min,
                    lev.truth.c_max
                );
            }
        }
        Command::Portfolio => {
            let section = &cfg.portfolio;
            let m = manifest(command, seed, section);
            let rep = studies::run_portfolio(section, seed)?;
            for (r, e) in &rep.failures {
                eprintln!("warning: replication {r}: {e}");
            }
            if rep.records.is_empty() {
                return Err(numeric_error("every replication failed".into()));
            }
            w = Writer::new(out)?;
            w.text("utility_loss_summary.csv", &rep.summary_csv())?;
            w.text("utility_loss.csv", &rep.records_csv())?;
            w.json("manifest.json", &m)?;
            w.json(
                "report.json",
                &Report {
                    manifest: &m,
                    body: &serde_json::json!({
                        "market": rep.market,
                        "failures": rep.failures,
                        "summary": rep.summary,
                    }),
                },
            )?;
            for method in Method::ALL {
                if let Some(s) = rep.pooled(method) {
                    let _ = writeln!(
                        summary,
                        "{:<12} mean loss {:>11.4e}  q05 {:>11.4e}  q95 {:>11.4e}",
                        method.name(),
                        s.mean,
                        s.q05,
                        s.q95
                    );
                }
            }
        }
        Command::DominanceGrid => {
            let section = &cfg.dominance_grid;
            let m = manifest(command, seed, section);
            let rep = studies::run_dominance_grid(section)?;
            w = Writer::new(out)?;
            w.text("dominance_three_point.csv", &rep.cells_csv())?;
            w.text("dominance_two_point.csv", &rep.two_point_csv())?;
            w.json("manifest.json", &m)?;
            let undecided = rep
                .two_point
                .iter()
                .filter(|c| !c.two_point_over_ij.psd && !c.ij_over_two_point.psd)
                .count();
            w.json(
                "report.json",
                &Report {
                    manifest: &m,
                    body: &serde_json::json!({
                        "cells": rep.cells.len(),
                        "rule_mismatches": rep.mismatches(),
                        "two_point_settings": rep.two_point.len(),
                        "two_point_undecided": undecided,
                    }),
                },
            )?;
            let _ = writeln!(
                summary,
                "{} cells, {} disagree with t/T <= 1/4; two-point vs almgren undecided in {} of {} settings",
                rep.cells.len(),
                rep.mismatches(),
                undecided,
                rep.two_point.len()
            );
        }
    }
    for p in &w.written {
        let _ = writeln!(summary, "wrote {}", p.display());
    }
    Ok(summary.trim_end().to_string())
}
