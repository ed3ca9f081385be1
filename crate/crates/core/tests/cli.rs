use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spikenoc::analytics::{self, BisectionParams, SystemParams};
use spikenoc::cli::{EXIT_IO, EXIT_TIMEOUT, EXIT_USAGE};
use spikenoc::config::RunConfig;
use spikenoc::topology;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

fn spikenoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikenoc")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = spikenoc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut v = vec![r.headers().unwrap().iter().map(String::from).collect()];
    v.extend(r.records().map(|x| x.unwrap().iter().map(String::from).collect()));
    v
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn analyze_reports_headline_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    run_ok(&["analyze", "--config", config("paper-defaults").to_str().unwrap(), "--out", out, "--mode", "rederived"]);
    let table = rows(&tmp.path().join("analysis.csv"));
    assert_eq!(
        table[0],
        ["formula", "inputs", "paper_literal", "rederived", "paper_literal_degenerate", "rederived_degenerate", "selected"]
    );
    let get = |f: &str, col: usize| -> f64 { table.iter().find(|r| r[0] == f).unwrap()[col].parse().unwrap() };
    assert!((get("routing_memory_gib", 2) - 38.7).abs() / 38.7 < 1e-3);
    assert!((get("reduction_factor", 2) - 1.51).abs() <= 0.01);
    assert_eq!(get("conventional_min_bisection", 2), 5e6);
    let lit = get("latency_constrained_min_bisection", 2);
    let red = get("latency_constrained_min_bisection", 3);
    assert!((lit - 5e10).abs() / 5e10 < 1e-3 && (red - 5e10).abs() / 5e10 < 1e-3);
    assert_eq!(get("latency_constrained_min_bisection", 6), red);
}

#[test]
fn analyze_without_analytics_section_is_usage_error() {
    let out = spikenoc(&["analyze", "--config", config("two-router").to_str().unwrap(), "--out", "/tmp/unused-spikenoc"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("analytics"));
}

#[test]
fn two_router_deliveries() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["simulate", "--config", config("two-router").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    let d = rows(&tmp.path().join("deliveries.csv"));
    assert_eq!(d[0], ["spike_id", "src", "dst", "t_gen", "t_deliver", "hops"]);
    let ticks: Vec<&str> = d[1..].iter().map(|r| r[4].as_str()).collect();
    assert_eq!(ticks, ["5", "7", "9"]);
    let links = rows(&tmp.path().join("links.csv"));
    assert_eq!(links[0], ["link", "served", "utilization", "max_queue"]);
    assert!(links[1..].iter().any(|r| r[0] == "0->1" && r[1] == "3"));
}

#[test]
fn fig3_burst_max_latency_matches_last_packet_formula() {
    let tmp = tempfile::tempdir().unwrap();
    let path = config("fig3-burst");
    run_ok(&["simulate", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    let s = rows(&tmp.path().join("summary.csv"));
    let col = |name: &str| s[0].iter().position(|h| h == name).unwrap();
    let max_latency: f64 = s[1][col("max_latency")].parse().unwrap();

    let cfg = RunConfig::load(&path).unwrap();
    let t = cfg.build_topology().unwrap();
    let sec = cfg.topology.as_ref().unwrap();
    let c = topology::bisection_links(&t).unwrap() as u64;
    let o = sec.service_ticks as f64;
    let l = (sec.pipeline_ticks + sec.service_ticks) as f64;
    // every neuron of the left column fires once: N = 2·(left neurons), R = 1
    let n = t.neuron_count() as u64;
    let want = analytics::last_packet_latency(&SystemParams::new(n, 1, 1, 1.0), &BisectionParams::from_links(c, o, l)).unwrap();
    assert_eq!(max_latency, want.value);
}

#[test]
fn reruns_are_byte_identical_and_seed_override_matters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("torus-locality");
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["9", "9", "10"]) {
        run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--seed", seed]);
    }
    for f in ["deliveries.csv", "links.csv", "summary.csv"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        fs::read(dirs[0].join("deliveries.csv")).unwrap(),
        fs::read(dirs[2].join("deliveries.csv")).unwrap()
    );
}

#[test]
fn sweep_rate_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("low-load-sweep");
    let out = tmp.path().to_str().unwrap();
    let bad = spikenoc(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out, "--rates", "0.001,0.0001"]);
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ascending"));
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out, "--rates", "0.0005"]);
    let table = rows(&tmp.path().join("sweep.csv"));
    assert_eq!(&table[0][..4], ["rate", "mean_latency", "p99_latency", "saturated"]);
    assert_eq!(table.len(), 2);
    assert_eq!(table[1][0], "0.0005");
}

#[test]
fn report_power_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = config("table1-power");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    run_ok(&["report", "--config", cfg.to_str().unwrap(), "--out", out]);
    let table = rows(&tmp.path().join("power.csv"));
    assert_eq!(table[0], ["component", "watts", "share_percent"]);
    let watts = |c: &str| -> f64 { table.iter().find(|r| r[0] == c).unwrap()[1].parse().unwrap() };
    let share = |c: &str| -> f64 { table.iter().find(|r| r[0] == c).unwrap()[2].parse().unwrap() };
    assert!((share("compute") - 30.0).abs() < 0.1);
    assert!((share("communication") - 10.0).abs() < 0.1);
    assert!((share("static") - 60.0).abs() < 0.1);
    assert_eq!(watts("communication@d_scale=0.5"), watts("communication") / 2.0);
    assert_eq!(watts("communication@d_scale=1"), watts("communication"));
}

#[test]
fn zero_traffic_report_is_all_static() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = config("zero-traffic");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    run_ok(&["report", "--config", cfg.to_str().unwrap(), "--out", out]);
    let table = rows(&tmp.path().join("power.csv"));
    let stat = table.iter().find(|r| r[0] == "static").unwrap();
    assert_eq!(stat[2], "100");
}

#[test]
fn report_without_simulation_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spikenoc(&["report", "--config", config("table1-power").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_IO));
}

#[test]
fn missing_config_file_is_io_error() {
    let out = spikenoc(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_IO));
}

#[test]
fn unknown_key_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), "[topology]\nkind = \"mesh\"\nwidth = 2\nheight = 2\nradix = 4\n");
    let out = spikenoc(&["simulate", "--config", p.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radix"));
}

#[test]
fn timeout_writes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(
        tmp.path(),
        "[topology]\nkind = \"mesh\"\nwidth = 2\nheight = 1\nservice_ticks = 2\npipeline_ticks = 3\nneurons_per_cluster = 3\n\n\
         [workload]\nkind = \"burst\"\npairing = \"aligned\"\n\n[limits]\nmax_ticks = 6\n",
    );
    let out_dir = tmp.path().join("out");
    let out = spikenoc(&["simulate", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_TIMEOUT));
    let s = rows(&out_dir.join("summary.csv"));
    let col = |name: &str| s[0].iter().position(|h| h == name).unwrap();
    assert_eq!(s[1][col("delivered")], "1");
    assert_eq!(s[1][col("completed")], "false");
}

#[test]
fn replay_trace_with_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spikes.trace"), "# neuron,tick\n0,0\n1,0\n2,4\n").unwrap();
    fs::write(tmp.path().join("fanout.txt"), "3\n3 2\n0\n1\n").unwrap();
    let p = write_config(
        tmp.path(),
        "[topology]\nkind = \"mesh\"\nwidth = 2\nheight = 2\n\n\
         [workload]\nkind = \"replay\"\ntrace = \"spikes.trace\"\nconnectivity = \"fanout.txt\"\n",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&["simulate", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let d = rows(&out_dir.join("deliveries.csv"));
    let pairs: Vec<(&str, &str)> = d[1..].iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(pairs, [("0", "3"), ("1", "2"), ("1", "3"), ("2", "0")]);
}

#[test]
fn config_round_trip_for_bundled_files() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let a = RunConfig::load(&path).unwrap();
        let again = RunConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(RunConfig { base_dir: PathBuf::new(), ..a.clone() }, again, "{}", path.display());
        assert_eq!(again.to_toml(), a.to_toml());
    }
}
