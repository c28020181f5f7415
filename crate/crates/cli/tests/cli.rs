use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rashomon");

const SMALL: &[&str] = &[
    "--synthetic",
    "--synthetic-n",
    "400",
    "--seed",
    "5",
    "--folds",
    "3",
    "--budget",
    "2",
    "--families",
    "lr,lda,nb,dt",
    "--sizes",
    "16,32,64",
    "--background",
    "8",
    "--explain-rows",
    "20",
];

fn rashomon(args: &[&str], extra: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .args(extra)
        .env("RASHOMON_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn select_is_reproducible_and_epsilon_one_admits_everyone() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = rashomon(&["select", "--out", p(a.path())], SMALL);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    rashomon(&["select", "--out", p(b.path())], SMALL);
    for f in ["selection.json", "selection.csv", "config.resolved.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    let table = read(&a.path().join("selection.csv"));
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",true")).count(), 3, "three selected");

    let wide = tempfile::tempdir().unwrap();
    rashomon(&["select", "--out", p(wide.path()), "--epsilon", "1.0"], SMALL);
    let table = read(&wide.path().join("selection.csv"));
    for row in table.lines().skip(2) {
        assert_eq!(row.rsplit(',').nth(1), Some("true"), "{row}");
    }
}

#[test]
fn audit_cell_and_report() {
    let run = tempfile::tempdir().unwrap();
    let o = rashomon(&["audit", "--out", p(run.path())], SMALL);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(&run.path().join("summary.json"));
    assert_eq!(code(&o) == 2, !summary.contains("\"warnings\": []"), "exit code tracks warnings");

    // replay one cell from the run directory; its record equals the sweep's
    let cells: serde_json::Value = serde_json::from_str(&read(&run.path().join("cells.json"))).unwrap();
    let target = cells["data"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["size"] == 32 && c["fold"] == 1 && c["model"] != "bagging")
        .unwrap()
        .clone();
    let spec = format!("model={},s=32,fold=1", target["model"].as_str().unwrap());
    let o = rashomon(&["cell", &spec, "--run-dir", p(run.path())], &[]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let replay: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(replay["kind"], "cell");
    assert_eq!(replay["data"]["cell"], target);

    // the same through `audit --cell`, recomputing selection from flags
    let o = rashomon(&["audit", "--cell", &spec], SMALL);
    let again: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(again["data"]["cell"], target);

    // config flags conflict with --run-dir
    let o = rashomon(&["cell", &spec, "--run-dir", p(run.path()), "--seed", "1"], &[]);
    assert_eq!(code(&o), 1);

    let out = tempfile::tempdir().unwrap();
    let o = rashomon(&["report", p(run.path()), "--out", p(out.path()), "--format", "tsv"], &[]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    for t in ["corr_intra.tsv", "corr_inter.tsv", "corr_bagging.tsv", "performance.tsv", "selection.tsv"] {
        assert!(out.path().join("tables").join(t).exists(), "{t}");
    }
    assert!(out.path().join("plots/convergence.json").exists());
}

#[test]
fn report_without_bagging_warns() {
    let run = tempfile::tempdir().unwrap();
    rashomon(&["audit", "--out", p(run.path()), "--no-bagging"], SMALL);
    let out = tempfile::tempdir().unwrap();
    let o = rashomon(&["report", p(run.path()), "--out", p(out.path())], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bagging table omitted"));
    assert!(!out.path().join("tables/corr_bagging.csv").exists());
}

#[test]
fn failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\n  \"seed\": 3,\n  \"folds\": \"ten\"\n}\n").unwrap();
    let o = rashomon(&["select", "--config", p(&cfg), "--out", p(dir.path())], &[]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let o = rashomon(&["report", p(&dir.path().join("nothing")), "--out", p(dir.path())], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no run found"));

    let o = rashomon(&["audit", "--out", p(dir.path()), "--sizes", "16,99999"], SMALL);
    assert_eq!(code(&o), 1);

    let o = rashomon(&["audit", "--out", p(dir.path()), "--pairing", "sideways"], SMALL);
    assert_eq!(code(&o), 1);
}
