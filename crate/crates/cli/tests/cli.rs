use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn impactkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactkit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn zero_orders_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[validate_eq10]\norders = 0\n");
    let o = impactkit(&["validate-eq10", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty simulation"));
}

#[test]
fn parse_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 3\n\n[fit_compare]\nreplications = \"x\"\n",
    );
    let o = impactkit(&["fit-compare", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = impactkit(&["frontier", "--config", "nope.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eq10_outputs_are_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[validate_eq10]\norders = 400\nbootstrap = 30\n",
    );
    let run = |out: &str, seed: &str, workers: &str| {
        let o = impactkit(
            &[
                "validate-eq10",
                "--config",
                &cfg,
                "--out",
                out,
                "--seed",
                seed,
                "--workers",
                workers,
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("a", "11", "1");
    run("b", "11", "3");
    run("c", "12", "2");
    let dir = tmp.path();
    for f in [
        "eq10_table.csv",
        "eq10_bands.csv",
        "manifest.json",
        "report.json",
    ] {
        assert_eq!(read(&dir.join("a"), f), read(&dir.join("b"), f), "{f}");
    }
    assert_ne!(
        read(&dir.join("a"), "eq10_table.csv"),
        read(&dir.join("c"), "eq10_table.csv")
    );
    let m: serde_json::Value =
        serde_json::from_str(&read(&dir.join("a"), "manifest.json")).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["command"], "validate-eq10");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let table = read(&dir.join("a"), "eq10_table.csv");
    assert!(table.starts_with("quantity,empirical,analytic"));
    assert_eq!(table.lines().count(), 6);
}

#[test]
fn fit_compare_smoke_with_all_designs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[fit_compare]\nsizes = [500]\nreplications = 1\nfree = [\"gamma\", \"eta\", \"alpha\", \"beta\"]\n",
    );
    let start = Instant::now();
    let o = impactkit(
        &["fit-compare", "--config", &cfg, "--out", "fc"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(10));

    let summary = read(&tmp.path().join("fc"), "fit_summary.csv");
    assert_eq!(summary.lines().count(), 1 + 5 * 4);
    let est = read(&tmp.path().join("fc"), "fit_estimates.csv");
    let row = |design: &str| -> Vec<f64> {
        let line = est
            .lines()
            .find(|l| l.split(',').nth(1) == Some(design))
            .unwrap();
        line.split(',')
            .skip(3)
            .take(4)
            .map(|x| x.parse().unwrap())
            .collect()
    };
    let three = row("k-point:0.1");
    let four = row("k-point:0.1;0.5");
    for (a, b) in three.iter().zip(&four) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn unidentifiable_fits_exit_with_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"[fit_compare]
sizes = [50]
replications = 2
designs = ["almgren"]
free = ["gamma", "eta", "alpha", "beta"]
rate = { kind = "point", v = 0.1 }
"#,
    );
    let o = impactkit(&["fit-compare", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("not identifiable"), "{}", stderr(&o));
}

#[test]
fn frontier_and_portfolio_small_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 4
[frontier]
points = 6
band_points = 4
[frontier.market]
replications = 2
orders = 50
[portfolio]
lambdas = [0.5, 4.0]
[portfolio.market]
replications = 2
orders = 50
"#,
    );
    let o = impactkit(&["frontier", "--config", &cfg, "--out", "f"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let curves = read(&tmp.path().join("f"), "frontier_curves.csv");
    for tag in [
        "2,cost-off,",
        "1000,cost-off,",
        "2,true,",
        "1000,three-point,0,",
    ] {
        assert!(curves.contains(tag), "missing {tag}");
    }
    let bands = read(&tmp.path().join("f"), "frontier_bands.csv");
    assert_eq!(bands.lines().count(), 1 + 2 * 2 * 4);

    let o = impactkit(&["portfolio", "--config", &cfg, "--out", "p"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read(&tmp.path().join("p"), "utility_loss_summary.csv");
    let truth = summary
        .lines()
        .find(|l| l.starts_with("true,all,"))
        .unwrap();
    let q95: f64 = truth.split(',').nth(4).unwrap().parse().unwrap();
    assert!(q95 <= 1e-6);
    let losses = read(&tmp.path().join("p"), "utility_loss.csv");
    assert_eq!(losses.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn dominance_grid_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[dominance_grid]\ndurations = [1.0]\npost_ratios = [1.5, 2.0]\n",
    );
    let o = impactkit(
        &["dominance-grid", "--config", &cfg, "--out", "d"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&read(&tmp.path().join("d"), "report.json")).unwrap();
    assert_eq!(rep["cells"], 40);
    assert_eq!(rep["rule_mismatches"], 0);
    assert_eq!(rep["manifest"]["command"], "dominance-grid");
}

#[test]
fn zero_workers_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = impactkit(&["dominance-grid", "--workers", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
