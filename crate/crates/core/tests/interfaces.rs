//! Black-box tests of the command-line surface: subcommands, config
//! validation, exit codes, and output file schemas.

use std::path::Path;
use std::process::{Command, Output};

fn s2rlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2rlab"))
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_produces_csv_and_svg_with_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"instance":"f1:H=5","algorithms":[{{"name":"direct_transfer","zeta":0.1,"t_episodes":80}},{{"name":"zeta_greedy","zeta":0.2,"t_episodes":80}}],"trials":2,"master_seed":7,"output_dir":{:?},"eval_stride":40}}"#,
            out_dir.to_str().unwrap()
        ),
    );
    let out = s2rlab(&["run", "--config", &cfg, "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# config {"), "config echo missing: {first}");
    assert!(first.contains(r#""master_seed":7"#));
    assert_eq!(
        lines.next().unwrap(),
        "algorithm,trial,episode,real_steps,sim_episodes,exact_suboptimality,mc_value_estimate,seed"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 8, "bad row: {line}");
        assert!(cols[0] == "direct_transfer" || cols[0] == "zeta_greedy");
        cols[1].parse::<u64>().unwrap();
        cols[2].parse::<u64>().unwrap();
        // 17 significant digits scientific notation.
        assert!(cols[5].contains('e'), "float format: {}", cols[5]);
        cols[5].parse::<f64>().unwrap();
    }
    let svg = std::fs::read_to_string(out_dir.join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("direct_transfer") && svg.contains("zeta_greedy"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown top-level key.
    let cfg = write_config(
        dir.path(),
        r#"{"instance":"f1:H=5","algorithms":[],"trials":1,"master_seed":0,"output_dir":"x","whoops":1}"#,
    );
    let out = s2rlab(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // Unknown instance family.
    let cfg = write_config(
        dir.path(),
        r#"{"instance":"nope:x=1","algorithms":[{"name":"direct_transfer","zeta":0.1,"t_episodes":10}],"trials":1,"master_seed":0,"output_dir":"/tmp/s2r_iface_x"}"#,
    );
    let out = s2rlab(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    // Missing file is a config error too.
    let out = s2rlab(&["run", "--config", "/nonexistent/conf.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    // A sim episode cap far below what staged coverage needs.
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"instance":"f1:H=5","algorithms":[{{"name":"sim2explore","epsilon":0.1,"delta":0.05,"t_episodes":100000,"sim_episode_cap":5}}],"trials":1,"master_seed":1,"output_dir":{:?}}}"#,
            out_dir.to_str().unwrap()
        ),
    );
    let out = s2rlab(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_battery_passes_and_rejects_bad_specs() {
    let out = s2rlab(&["check", "--battery", "rand:count=5,eps=0.15,seed=11"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("[PASS] value_transfer_bound"));
    assert!(stdout.contains("all checks passed"));
    let out = s2rlab(&["check", "--battery", "rand:bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calc_prints_diagnostics() {
    let out = s2rlab(&[
        "calc",
        "--d", "4",
        "--horizon", "10",
        "--num-actions", "2",
        "--eps-sim", "0",
        "--lambda-bar-min", "0.125",
        "--epsilon", "0.1",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("random-exploration depth k*:          1"));
    assert!(stdout.contains("constants suppressed"));
    // Degenerate parameters are a config error.
    let out = s2rlab(&[
        "calc",
        "--d", "4",
        "--horizon", "10",
        "--num-actions", "2",
        "--eps-sim", "0",
        "--lambda-bar-min", "0",
        "--epsilon", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_round_trips_a_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("r");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"instance":"f1:H=5","algorithms":[{{"name":"direct_transfer","zeta":0.1,"t_episodes":60}}],"trials":2,"master_seed":3,"output_dir":{:?},"eval_stride":20}}"#,
            out_dir.to_str().unwrap()
        ),
    );
    assert!(s2rlab(&["run", "--config", &cfg]).status.success());
    let csv = out_dir.join("results.csv");
    let svg2 = dir.path().join("replot.svg");
    let out = s2rlab(&["plot", "--in", csv.to_str().unwrap(), "--out", svg2.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Replotting from the CSV reproduces the run's own SVG byte for byte.
    assert_eq!(
        std::fs::read(out_dir.join("curve.svg")).unwrap(),
        std::fs::read(&svg2).unwrap()
    );
    // Garbage input is a config error.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,a,results,file\n1,2,3,4\n").unwrap();
    let out = s2rlab(&["plot", "--in", bad.to_str().unwrap(), "--out", svg2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
