use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bnpirt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnpirt"))
        .args(args)
        .env("BNPIRT_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated 20 × 5 responses inside `dir`.
fn simulated(dir: &Path) -> std::path::PathBuf {
    let sim = dir.join("sim");
    ok(bnpirt(&[
        "simulate",
        "--persons",
        "20",
        "--items",
        "5",
        "--seed",
        "3",
        "--out",
        p(&sim),
    ]));
    sim.join("responses.csv")
}

fn fit(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "fit",
        "--data",
        p(data),
        "--iterations",
        "300",
        "--burnin",
        "100",
        "--thin",
        "2",
        "--seed",
        "11",
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    bnpirt(&args)
}

#[test]
fn fit_writes_every_artifact_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(fit(&data, &a, &["--plots"]));
    ok(fit(&data, &b, &["--plots"]));
    for name in [
        "samples.csv",
        "metadata.toml",
        "summary.csv",
        "fit.csv",
        "fit_stats.txt",
        "trace.csv",
        "boxplot.svg",
        "trace.svg",
    ] {
        assert!(a.join(name).is_file(), "missing {name}");
    }
    assert_eq!(
        fs::read(a.join("samples.csv")).unwrap(),
        fs::read(b.join("samples.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("summary.csv")).unwrap(),
        fs::read(b.join("summary.csv")).unwrap()
    );

    let samples = fs::read_to_string(a.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 100);
    let fit_csv = fs::read_to_string(a.join("fit.csv")).unwrap();
    assert_eq!(
        fit_csv.lines().next().unwrap(),
        "person,item,u,mean,variance,residual,outlier"
    );
    assert_eq!(fit_csv.lines().count(), 1 + 100);
    let stats = fs::read_to_string(a.join("fit_stats.txt")).unwrap();
    let value = |key: &str| -> f64 {
        let line = stats
            .lines()
            .find(|l| l.starts_with(&format!("{key} = ")))
            .unwrap();
        line.split(" = ").nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(value("criterion_d"), value("gof") + value("penalty"));
    let leftovers: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".bnpirt"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn summarize_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let run = dir.path().join("run");
    ok(fit(&data, &run, &[]));
    let again = dir.path().join("again");
    ok(bnpirt(&["summarize", "--run", p(&run), "--out", p(&again)]));
    assert_eq!(
        fs::read(run.join("summary.csv")).unwrap(),
        fs::read(again.join("summary.csv")).unwrap()
    );
    assert_eq!(
        fs::read(run.join("fit.csv")).unwrap(),
        fs::read(again.join("fit.csv")).unwrap()
    );
}

#[test]
fn mcci_adds_half_width_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let (plain, mcci) = (dir.path().join("plain"), dir.path().join("mcci"));
    ok(fit(&data, &plain, &[]));
    ok(fit(&data, &mcci, &["--mcci"]));
    let head = |d: &Path| {
        fs::read_to_string(d.join("summary.csv"))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .split(',')
            .count()
    };
    assert!(head(&mcci) > head(&plain));
}

#[test]
fn several_chains_get_suffixes() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("multi");
    ok(fit(&data, &out, &["--chains", "2"]));
    for k in 0..2 {
        assert!(out.join(format!("samples_chain{k}.csv")).is_file());
        assert!(out.join(format!("metadata_chain{k}.toml")).is_file());
    }
    assert_ne!(
        fs::read(out.join("samples_chain0.csv")).unwrap(),
        fs::read(out.join("samples_chain1.csv")).unwrap()
    );
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bnpirt(&["fit", "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unknown_trace_name_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("t");
    let res = fit(&data, &out, &["--trace", "nonsense[7]"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonsense[7]"));
    assert!(!out.exists());
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "person,item,score\n1,1,1\n1,x,0\n").unwrap();
    assert_eq!(
        fit(&data, &dir.path().join("o"), &[]).status.code(),
        Some(3)
    );
}

#[test]
fn failed_summarize_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let run = dir.path().join("run");
    ok(fit(&data, &run, &[]));
    // a data set with a different shape no longer matches the stored columns
    let other = dir.path().join("other");
    ok(bnpirt(&[
        "simulate",
        "--persons",
        "7",
        "--items",
        "3",
        "--out",
        p(&other),
    ]));
    let out = dir.path().join("summary-out");
    let res = bnpirt(&[
        "summarize",
        "--run",
        p(&run),
        "--data",
        p(&other.join("responses.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn simulate_is_reproducible_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(bnpirt(&[
            "simulate",
            "--persons",
            "50",
            "--items",
            "5",
            "--seed",
            "4",
            "--out",
            p(d),
        ]));
    }
    let responses = fs::read_to_string(a.join("responses.csv")).unwrap();
    assert_eq!(responses.lines().count(), 1 + 250);
    assert_eq!(
        responses,
        fs::read_to_string(b.join("responses.csv")).unwrap()
    );
    assert!(a.join("truth.toml").is_file());
}

#[test]
fn simulate_rejects_degenerate_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let res = bnpirt(&["simulate", "--sigma2", "0", "--out", p(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("cfg-out");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "data = {:?}\niterations = 120\nburnin = 20\nthin = 5\nout = {:?}\n",
            p(&data),
            p(&out)
        ),
    )
    .unwrap();
    ok(bnpirt(&["fit", "--config", p(&cfg)]));
    assert_eq!(
        fs::read_to_string(out.join("samples.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 20
    );
}
