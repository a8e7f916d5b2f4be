use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn g2lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, outputs: &Path) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{
  "source": {{"type": "coherent", "rate_hz": 2.38e6, "coherence_time_ns": 1000.0}},
  "detection": {{"reflectivity": 0.5, "detector_r": {{"efficiency": 0.5}}, "detector_t": {{"efficiency": 0.5}}}},
  "duration_s": 0.2,
  "seed": 9,
  "correlation": {{"binwidth_ns": 1.0, "max_lag_ns": 20.0}},
  "outputs": {:?}
}}"#,
        outputs.to_str().unwrap()
    );
    let path = dir.join("run.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn simulate_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let cfg = write_config(dir.path(), &out_a);
    let o = g2lab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("commutator "));
    for f in [
        "auto.csv",
        "cross.csv",
        "result.json",
        "auto.json",
        "cross.json",
    ] {
        assert!(out_a.join(f).exists(), "{f}");
    }
    let out_b = dir.path().join("b");
    let o = g2lab(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for f in ["auto.csv", "cross.csv", "result.json"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f}"
        );
    }
    let header = fs::read_to_string(out_a.join("cross.csv")).unwrap();
    assert!(header.starts_with("lag_ns,g2,stderr,raw_pairs\n"));

    // commutator from the written histograms
    let o = g2lab(&[
        "commutator",
        "--auto",
        out_a.join("auto.json").to_str().unwrap(),
        "--cross",
        out_a.join("cross.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_string();
    let value: f64 = first.split(" ± ").next().unwrap().parse().unwrap();
    assert!((value - 1.0).abs() < 0.05, "{first}");
}

#[test]
fn simulate_scale_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("x"));
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_g2lab"))
            .env("G2LAB_THREADS", threads)
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--scale",
                "0.5",
                "--out",
            ])
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("result.json")).unwrap()
    };
    assert_eq!(run("1", "one"), run("3", "three"));
    let o = Command::new(env!("CARGO_BIN_EXE_g2lab"))
        .env("G2LAB_THREADS", "lots")
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=config "),
        "{}",
        stderr(&o)
    );
}

#[test]
fn correlate_ttg1_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = g2lab::TimeTagStream::from_timestamps(vec![100, 1_200, 5_000], 0, 10_000).unwrap();
    let b = g2lab::TimeTagStream::from_timestamps(vec![150, 2_100], 1, 10_000).unwrap();
    let (pa, pb) = (dir.path().join("a.ttg"), dir.path().join("b.ttg"));
    g2lab::timetag::write_file(&pa, &a).unwrap();
    g2lab::timetag::write_file(&pb, &b).unwrap();
    let json = dir.path().join("cross.json");
    let o = g2lab(&[
        "correlate",
        "--in",
        pa.to_str().unwrap(),
        "--in",
        pb.to_str().unwrap(),
        "--binwidth-ns",
        "1",
        "--max-lag-ns",
        "2",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lag_ns,g2,stderr,raw_pairs");
    assert_eq!(lines.len(), 6);
    // bin offsets 0 (100→150), +2 (100→2100), −1 (1200→150), +1 (1200→2100)
    assert!(
        lines[3].starts_with("0.000,") && lines[3].ends_with(",1"),
        "{}",
        lines[3]
    );
    let doc = g2lab::correlator::HistogramDocument::from_json(&fs::read_to_string(json).unwrap())
        .unwrap();
    assert_eq!(doc.raw_pair_counts.iter().sum::<u64>(), 4);

    let o = g2lab(&[
        "correlate",
        "--in",
        pa.to_str().unwrap(),
        "--binwidth-ns",
        "1",
        "--max-lag-ns",
        "2",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn commutator_with_explicit_mean_n() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("r"));
    assert!(g2lab(&["simulate", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let auto = dir.path().join("r/auto.json");
    let cross = dir.path().join("r/cross.json");
    let o = g2lab(&[
        "commutator",
        "--auto",
        auto.to_str().unwrap(),
        "--cross",
        cross.to_str().unwrap(),
        "--mean-n",
        "1.19e-3",
        "--mean-n-err",
        "1e-5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("±"));
    let o = g2lab(&[
        "commutator",
        "--auto",
        cross.to_str().unwrap(),
        "--cross",
        auto.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = g2lab(&[
        "commutator",
        "--auto",
        auto.to_str().unwrap(),
        "--cross",
        cross.to_str().unwrap(),
        "--delay",
    ]);
    assert!(stdout(&o).starts_with("lag_ns,value,stderr\n"));
}

#[test]
fn calibrate_eta_from_counts_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("counts.csv");
    fs::write(&p, "k,frequency\n0,100\n1,100\n2,50\n").unwrap();
    let o = g2lab(&[
        "calibrate-eta",
        "--counts",
        p.to_str().unwrap(),
        "--branching",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // mean 0.8, η = 0.8 · 0.5 / 0.5
    let eta: f64 = stdout(&o).split(" ± ").next().unwrap().parse().unwrap();
    assert!((eta - 0.8).abs() < 1e-12);

    fs::write(&p, "0,1\n900,1\n").unwrap();
    let o = g2lab(&[
        "calibrate-eta",
        "--counts",
        p.to_str().unwrap(),
        "--branching",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: kind=infeasible message="), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn errors_are_single_line_and_usage_exits_two() {
    let o = g2lab(&["simulate", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=io "));
    let o = g2lab(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = g2lab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = g2lab(&["selftest"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn zero_duration_is_rejected_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = write_config(dir.path(), &out);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"duration_s\": 0.2", "\"duration_s\": 0.0");
    fs::write(&cfg, text).unwrap();
    let o = g2lab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=config "));
    assert!(!out.exists());
}
