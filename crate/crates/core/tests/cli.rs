use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clusterscribe"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("CLUSTERSCRIBE_TEST_KEY")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dataset_arg() -> String {
    fixture("synth60.jsonl").to_string_lossy().into_owned()
}

#[test]
fn validate_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["validate", &dataset_arg()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(
        out.starts_with("records: 60\nfeature_dim: 16\ncaptions per record:\n"),
        "{out}"
    );
}

#[test]
fn invalid_datasets_exit_1_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["validate", fixture("duplicate_id.jsonl").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("line 2: duplicate id \"a\""),
        "{}",
        stderr(&o)
    );
    let o = run(
        dir.path(),
        &["validate", fixture("dim_mismatch.jsonl").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dimension mismatch for id \"b\": expected 2, got 1"));
    let o = run(dir.path(), &["validate", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.jsonl"));
}

#[test]
fn full_run_writes_all_cells_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset_arg();
    let args = [
        "run",
        "--cluster-first",
        "--dataset",
        &ds,
        "--k",
        "3",
        "--n",
        "10",
        "--out",
        "o",
    ];
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("o");
    let overall = std::fs::read_to_string(out.join("overall.csv")).unwrap();
    assert_eq!(overall.lines().count(), 1 + 6 * 3);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), overall);
    let per_cluster = std::fs::read_to_string(out.join("per_cluster.csv")).unwrap();
    assert_eq!(per_cluster.lines().count(), 1 + 6 * 3 * 3);
    let files = [
        "report.json",
        "overall.csv",
        "per_cluster.csv",
        "model.jsonl",
        "samples.jsonl",
        "descriptions.jsonl",
        "config_digest.txt",
    ];
    let first: Vec<Vec<u8>> = files
        .iter()
        .map(|f| std::fs::read(out.join(f)).unwrap())
        .collect();
    let report = String::from_utf8(first[0].clone()).unwrap();
    assert!(!report.contains(&*dir.path().to_string_lossy()));

    let o = run(
        dir.path(),
        &[
            "run",
            "--dataset",
            &ds,
            "--k",
            "3",
            "--n",
            "10",
            "--out",
            "o",
            "--jobs",
            "3",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(
            &std::fs::read(out.join(f)).unwrap(),
            bytes,
            "{f} changed between runs"
        );
    }
}

#[test]
fn filters_restrict_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset_arg();
    let o = run(
        dir.path(),
        &[
            "run",
            "--cluster-first",
            "--dataset",
            &ds,
            "--k",
            "3",
            "--strategy",
            "centroid",
            "--method",
            "llm",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let overall = std::fs::read_to_string(dir.path().join("out/overall.csv")).unwrap();
    let cells: Vec<&str> = overall
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(cells, ["centroid/llm-standard", "centroid/llm-cot"]);
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset_arg();
    let common = ["--dataset", ds.as_str(), "--k", "3", "--n", "10"];
    for (stage, extra) in [
        ("cluster", &[][..]),
        ("sample", &["--strategy", "hybrid"][..]),
        ("describe", &["--method", "tfidf"][..]),
        ("evaluate", &[][..]),
    ] {
        let mut args = vec![stage];
        args.extend(common);
        args.extend(extra);
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", stderr(&o));
    }
    let evals = std::fs::read_to_string(dir.path().join("out/evaluations.jsonl")).unwrap();
    assert_eq!(evals.lines().count(), 3);
}

#[test]
fn run_without_model_asks_for_clustering() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["run", "--dataset", &dataset_arg(), "--k", "3"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.jsonl"), "{}", stderr(&o));
}

#[test]
fn failing_cell_gives_partial_exit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "k = 3\nmatrix = [\"stratified/tfidf\", \"random/tfidf\"]\n[sampling]\nn = 7\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "run",
            "--cluster-first",
            "--config",
            "c.toml",
            "--dataset",
            &dataset_arg(),
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let overall = std::fs::read_to_string(dir.path().join("out/overall.csv")).unwrap();
    assert!(overall.contains("stratified/tfidf,stratified,tfidf,,incomplete"));
    assert!(overall.contains("random/tfidf,random,tfidf,,complete"));
}

#[test]
fn http_without_credentials_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("h.toml"),
        "[backend]\nkind = \"http\"\nbase_url = \"http://127.0.0.1:9\"\napi_key_env = \"CLUSTERSCRIBE_TEST_KEY\"\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "run",
            "--cluster-first",
            "--config",
            "h.toml",
            "--dataset",
            &dataset_arg(),
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CLUSTERSCRIBE_TEST_KEY"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unreachable_endpoint_gives_transport_exit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("h.toml"),
        "k = 3\nmatrix = [\"random/llm-standard\"]\n[backend]\nkind = \"http\"\nbase_url = \"http://127.0.0.1:9\"\n\
         api_key_env = \"CLUSTERSCRIBE_TEST_KEY\"\nmax_retries = 0\nretry_base_ms = 0\ntimeout_secs = 5\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_clusterscribe"))
        .current_dir(dir.path())
        .env("RUST_LOG", "error")
        .env("CLUSTERSCRIBE_TEST_KEY", "x")
        .args([
            "run",
            "--cluster-first",
            "--config",
            "h.toml",
            "--dataset",
            &dataset_arg(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("transport failure"));
}

#[test]
fn synth_writes_a_valid_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "synth",
            "--topics",
            "2",
            "--per-topic",
            "5",
            "--output",
            "d.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(dir.path(), &["validate", "d.jsonl"]);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .starts_with("records: 10\n"));
}
