use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gridshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn partition_lists_five_microgrids() {
    let out = gridshare(&["partition"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "microgrid,nodes,houses,neighbors");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("MG-I,"));
}

#[test]
fn synth_writes_fleet_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fleet.csv");
    let out = gridshare(&["synth", "--houses", "2", "--days", "1", "--seed", "5", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    // header plus 2 houses x 6 samples
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("house_id,floor_area_m2,panel_area_m2,storage_kwh,t_index,consumption_kwh,generation_kwh\n"));
}

#[test]
fn resilience_and_forecast_on_series_files() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut text = String::from("day,kwh\n");
    let mut state: u64 = 12345;
    for t in 0..120 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let jitter = (state >> 40) as f64 / (1u64 << 24) as f64;
        text.push_str(&format!("{t},{}\n", 100.0 + 2.0 * t as f64 + 3.0 * jitter));
    }
    fs::write(&series, text).unwrap();
    let edges = dir.path().join("edges.txt");
    let out = gridshare(&[
        "resilience",
        "--series",
        series.to_str().unwrap(),
        "--column",
        "kwh",
        "--trials",
        "50",
        "--edges",
        edges.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = stdout(&out);
    assert!(curve.starts_with("e,p,strength,susceptibility\n"));
    assert!(curve.lines().last().unwrap().starts_with("threshold,"));
    assert!(fs::read_to_string(edges).unwrap().lines().count() >= 119);

    let out = gridshare(&[
        "forecast",
        "--series",
        series.to_str().unwrap(),
        "--column",
        "kwh",
        "--train-len",
        "100",
        "--holdout-len",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout(&out);
    assert!(report.starts_with("day_index,actual_kwh,predicted_kwh\n100,"));
    assert!(report.contains("\nr2,rmse,mae\n"));
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(gridshare(&["study", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(gridshare(&["study", "--config", "/nonexistent/study.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "v\n1\nnot-a-number\n").unwrap();
    let out = gridshare(&["resilience", "--series", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, format!("v\n{}", "5\n".repeat(80))).unwrap();
    let out = gridshare(&["forecast", "--series", flat.to_str().unwrap(), "--train-len", "60", "--holdout-len", "10"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn study_bundle_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    fs::write(
        &config,
        r#"{"fleet": {"synthesize": {"houses": 516, "days": 120}}, "trials": 40, "seed": 11,
            "forecast": {"train_len": 100, "holdout_len": 20}}"#,
    )
    .unwrap();
    let run = |threads: &str, out: &Path| {
        let res = gridshare(&[
            "study",
            "--config",
            config.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("1", &a);
    run("3", &b);
    let files_a = read_dir_sorted(&a);
    assert!(files_a.iter().any(|(n, _)| n == "scenarios.csv"));
    assert!(files_a.iter().any(|(n, _)| n == "manifest.json"));
    let files_b = read_dir_sorted(&b);
    assert_eq!(
        files_a.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        files_b.iter().map(|(n, _)| n).collect::<Vec<_>>()
    );
    for ((name, x), (_, y)) in files_a.iter().zip(&files_b) {
        assert!(x == y, "{name} differs between thread counts");
    }

    // The manifest alone reproduces the bundle.
    let c = dir.path().join("c");
    let res = gridshare(&["study", "--config", a.join("manifest.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(files_a == read_dir_sorted(&c), "manifest rerun differs");
}

#[test]
fn study_refuses_to_clobber_foreign_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "mine").unwrap();
    let out = gridshare(&[
        "study",
        "--scenarios",
        "singles",
        "--trials",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_to_string(dir.path().join("keep.txt")).unwrap(), "mine");
}
