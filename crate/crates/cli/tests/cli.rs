use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiband"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    fs::write(
        &cfg,
        "t = 128\nn = 6\nm = 3\nmax_blocks = 3\nwidth_range = [2, 8]\n",
    )
    .unwrap();
    cfg
}

#[test]
fn synth_acquire_reconstruct_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    assert!(
        run(&["synth", "--config", p(&cfg), "--out", p(d), "--seed", "4"])
            .status
            .success()
    );
    for f in [
        "observed.csv",
        "observed.bin",
        "latent.csv",
        "mixing.csv",
        "psd.json",
        "synth.json",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }

    let out = run(&[
        "acquire",
        "--observed",
        p(&d.join("observed.bin")),
        "--mixing",
        p(&d.join("mixing.csv")),
        "--psd",
        p(&d.join("psd.json")),
        "--out",
        p(d),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(&[
        "--config",
        p(&cfg),
        "reconstruct",
        "--samples",
        p(&d.join("samples.json")),
        "--mixing",
        p(&d.join("mixing.csv")),
        "--psd",
        p(&d.join("psd.json")),
        "--out",
        p(d),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let meta = json(&d.join("reconstructed.json"));
    assert_eq!(meta["sample_count"], meta["total_bandwidth"]);
    assert_eq!(meta["density"], meta["theoretical_density"]);
    assert!(!meta["subbands"].as_array().unwrap().is_empty());

    let out = run(&[
        "eval",
        "--reference",
        p(&d.join("observed.csv")),
        "--estimate",
        p(&d.join("reconstructed.csv")),
        "--out",
        p(d),
    ]);
    assert!(out.status.success());
    assert!(json(&d.join("eval.json"))["nmse_db"].as_f64().unwrap() <= -120.0);
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "t = 511\n").unwrap();
    let out = run(&["sweep", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "ratios = [1.5]\n").unwrap();
    let out = run(&["sweep", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["sweep", "--trials", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let out = run(&["sweep", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_exits_with_3_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let out = run(&["real", "--corpus", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn non_numeric_cell_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    assert!(run(&["synth", "--config", p(&cfg), "--out", p(d)])
        .status
        .success());
    fs::write(d.join("broken.csv"), "1,2\n3,oops\n").unwrap();
    let out = run(&[
        "eval",
        "--reference",
        p(&d.join("broken.csv")),
        "--estimate",
        p(&d.join("observed.csv")),
        "--out",
        p(d),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));
}

#[test]
fn ablated_sample_set_fails_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    assert!(
        run(&["synth", "--config", p(&cfg), "--out", p(d), "--seed", "1"])
            .status
            .success()
    );
    let (mixing, psd, observed) = (
        d.join("mixing.csv"),
        d.join("psd.json"),
        d.join("observed.csv"),
    );
    let common = ["--mixing", p(&mixing), "--psd", p(&psd), "--out", p(d)];
    let mut acquire = vec!["acquire", "--observed", p(&observed)];
    acquire.extend(common);
    acquire.extend(["--ablate-drop-subband", "0"]);
    assert!(run(&acquire).status.success());
    let samples = d.join("samples.json");
    let mut rec = vec!["reconstruct", "--samples", p(&samples)];
    rec.extend(common);
    let out = run(&rec);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sweep_csv_has_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(
        &cfg,
        "t = 128\nn = 4\nratios = [0.5, 1.0]\nwidth_range = [2, 8]\n",
    )
    .unwrap();
    let out = run(&[
        "sweep",
        "--config",
        p(&cfg),
        "--trials",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("ratio,m,trial,seed,nmse_db,density"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
}
