use std::path::Path;
use std::process::{Command, Output};

use bubbletower_cli::config::RunConfig;
use serde_json::Value;
use statrs::function::gamma::gamma;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubbletower"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BUBBLETOWER_OUT")
        .output()
        .expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&o.stderr))
    })
}

fn status(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// `c_*` from Beta-function closed forms of both integrals.
fn cstar_oracle(n: u32) -> f64 {
    let nf = n as f64;
    let h = 0.5 * nf;
    let omega = 2.0 * std::f64::consts::PI.powf(h) / gamma(h);
    let beta = |a: f64, b: f64| gamma(a) * gamma(b) / gamma(a + b);
    let moment = |s: f64, q: f64| 0.5 * omega * beta(h + q, s - h - q);
    let m = 0.5 * (nf - 2.0);
    let p = (nf + 2.0) / (nf - 2.0);
    let amp = (nf * (nf - 2.0)).powf(0.25 * (nf - 2.0));
    let bubble_power = amp.powf(p) * moment(0.5 * (nf + 2.0), 0.0);
    let kernel_sq = (m * amp).powi(2) * (moment(nf - 2.0, 0.0) - 4.0 * moment(nf, 1.0));
    amp * m * bubble_power / kernel_sq
}

#[test]
fn constants_report_exponents_and_interaction_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["constants", "--n", "7", "--k", "3"], dir.path());
    assert_eq!(status(&o), 0);
    let v = json(&o);
    let alpha: Vec<f64> = v["results"]["alpha"].as_array().unwrap().iter().map(|a| a.as_f64().unwrap()).collect();
    assert_eq!(alpha, vec![0.0, 2.0, 12.0]);
    let c = v["results"]["c_star"].as_f64().unwrap();
    assert!((c / cstar_oracle(7) - 1.0).abs() < 1e-9, "{c} vs {}", cstar_oracle(7));
    let csv = std::fs::read_to_string(dir.path().join("constants.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("j [1],alpha [1]"));
}

#[test]
fn residual_writes_table_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["residual", "--n", "7", "--k", "2", "--t", "-1e4", "--emit-plot"], dir.path());
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("residual.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t [time],r [length],ustar [1],residual [1/time]"), "{header}");
    assert!(header.contains("envelope [1/time]"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), header.split(',').count());
    for cell in &row {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{cell}");
    }
    let script = std::fs::read_to_string(dir.path().join("residual_plot.py")).unwrap();
    assert!(script.contains("residual.csv") && script.contains("loglog") && script.contains("envelope"));
    let v = json(&o);
    assert!(v["results"][0]["eout_norm"]["value"].as_f64().unwrap() > 0.0);
    let artifacts = v["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().any(|a| a == "residual_plot.py"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["params", "--k", "3", "--samples", "21"];
    let first = run(&args, dir.path());
    assert_eq!(status(&first), 0);
    let csv = std::fs::read(dir.path().join("params.csv")).unwrap();
    let summary = std::fs::read(dir.path().join("params.json")).unwrap();
    let second = run(&args, dir.path());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(csv, std::fs::read(dir.path().join("params.csv")).unwrap());
    assert_eq!(summary, std::fs::read(dir.path().join("params.json")).unwrap());
}

#[test]
fn seeded_noise_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "--k", "1", "--nodes", "400", "--span", "0.05", "--noise", "0.01"];
    let read = |seed: &str| {
        let mut a = base.to_vec();
        a.extend(["--seed", seed]);
        let o = run(&a, dir.path());
        assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join("simulate_final.csv")).unwrap()
    };
    let a = read("5");
    assert_eq!(a, read("5"));
    assert_ne!(a, read("6"));
}

#[test]
fn simulate_writes_manifest_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["simulate", "--k", "2", "--nodes", "2000", "--span", "0.05", "--snapshot-every", "2"],
        dir.path(),
    );
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let r = &v["results"];
    assert_eq!(r["n"], 7);
    assert_eq!(r["grid"]["nodes"], 2000);
    assert!(r["completed"].as_bool().unwrap());
    assert!(r["scheme"]["dt_max"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("simulate_snapshot_0000.csv").exists());
    let series = std::fs::read_to_string(dir.path().join("simulate_series.csv")).unwrap();
    assert!(series.starts_with("elapsed [time],dt [time]"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "k = 3\nseed = 11\n[params]\nsigma = 0.02\n[grid]\nper_decade = 24\n").unwrap();
    let o = run(&["constants", "--config", file.to_str().unwrap(), "--k", "2"], dir.path());
    assert_eq!(status(&o), 0);
    let c = &json(&o)["config"];
    assert_eq!(c["k"], 2);
    assert_eq!(c["seed"], 11);
    assert_eq!(c["params"]["sigma"], 0.02);
    assert_eq!(c["grid"]["per_decade"], 24);
}

#[test]
fn resolved_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["constants", "--sigma", "0.0123456789012345", "--t0", "-123.456"], dir.path());
    assert_eq!(status(&o), 0);
    let first = json(&o);
    let cfg: RunConfig = serde_json::from_value(first["config"].clone()).unwrap();
    assert_eq!(serde_json::to_value(&cfg).unwrap(), first["config"]);
    let file = dir.path().join("resolved.toml");
    std::fs::write(&file, toml::to_string(&cfg).unwrap()).unwrap();
    let again = run(&["constants", "--config", file.to_str().unwrap()], dir.path());
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_bubbletower"))
        .args(["constants", "--k", "1"])
        .env("BUBBLETOWER_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(status(&o), 0);
    assert!(target.join("constants.json").exists());
}

#[test]
fn exit_codes_separate_usage_config_and_check_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(status(&run(&["constants", "--bogus"], dir.path())), 2);
    assert_eq!(status(&run(&["frobnicate"], dir.path())), 2);
    let bad = run(&["constants", "--alpha-w", "0.9"], dir.path());
    assert_eq!(status(&bad), 3);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha < a"));
    assert_eq!(status(&run(&["ansatz", "--t", "5"], dir.path())), 3);
    let bad_file = dir.path().join("bad.toml");
    std::fs::write(&bad_file, "colour = 3\n").unwrap();
    assert_eq!(status(&run(&["constants", "--config", bad_file.to_str().unwrap()], dir.path())), 3);
    // A coarse corrector grid misses the residual check.
    let coarse = run(&["corrector", "--nodes", "100"], dir.path());
    assert_eq!(status(&coarse), 1);
    assert_eq!(json(&coarse)["passed"], false);
    assert_eq!(status(&run(&["corrector"], dir.path())), 0);
}

#[test]
fn duhamel_check_selects_by_tag() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["duhamel-check", "--k", "3", "--tag", "origin", "--per-time", "4"], dir.path());
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let entries = json(&o)["results"].as_array().unwrap().clone();
    assert_eq!(entries.len(), 4);
    assert!(entries.iter().all(|e| e["tag"] == "origin" && e["passed"] == true));
    let csv = std::fs::read_to_string(dir.path().join("duhamel.csv")).unwrap();
    assert!(csv.starts_with("entry [1],region [1],t_ref [time],x [length],t [time],value [1],barrier [1],ratio [1]"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3 * 4);
    assert_eq!(status(&run(&["duhamel-check", "--tag", "nonsense"], dir.path())), 3);
}

#[test]
fn weights_dominance_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["weights", "--k", "2", "--check-dominance", "--points", "30"], dir.path());
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let regions = json(&o)["results"].as_array().unwrap().len();
    assert_eq!(regions, 7);
    let header = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("w1star_2 [1/time]"));
}

#[test]
fn ansatz_and_corrector_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ansatz", "--k", "2", "--t", "-1e3", "-1e4"], dir.path());
    assert_eq!(status(&o), 0);
    let r = &json(&o)["results"];
    let (a, b) = (r[0]["dominance_ratio"].as_f64().unwrap(), r[1]["dominance_ratio"].as_f64().unwrap());
    assert!(b < a);
    let c = run(&["corrector"], dir.path());
    let tail = json(&c)["results"]["tail_exponent"].as_f64().unwrap();
    assert!((tail + 2.0).abs() < 0.05, "{tail}");
}

#[test]
fn fast_selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest", "--fast"], dir.path());
    assert_eq!(status(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = json(&o)["results"].as_array().unwrap().len();
    assert_eq!(lines, 10);
}
