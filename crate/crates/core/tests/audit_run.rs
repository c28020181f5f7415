use std::path::Path;

use rashomon_core::config::AuditConfig;
use rashomon_core::pipeline::{CellStatus, BAGGING};
use rashomon_core::report::{self, load_run, run_audit, run_cell, write_report, ReportError, TableFormat};
use rashomon_core::synthetic::PlantedSpec;
use rashomon_core::Family;

fn small_config() -> AuditConfig {
    let mut cfg = AuditConfig::default();
    cfg.data.synthetic = Some(PlantedSpec { n: 400, ..PlantedSpec::default() });
    cfg.seed = 11;
    cfg.folds = 3;
    cfg.budget = 2;
    cfg.families = vec![Family::Lr, Family::Lda, Family::Nb, Family::Dt];
    cfg.grid.sizes = Some(vec![16, 32, 64, 128]);
    cfg.shap.background = 8;
    cfg.shap.explain_rows = Some(30);
    cfg
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn full_run_cardinality_determinism_and_report() {
    let cfg = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = run_audit(&cfg, a.path(), 1, None).unwrap();
    assert_eq!(run.cells.len(), 4 * 4 * 3, "(top 3 + bagging) × sizes × folds");
    assert!(run.cells.iter().filter(|c| c.model == BAGGING).count() == 12);

    // worker count must not change any byte
    run_audit(&cfg, b.path(), 3, None).unwrap();
    for f in ["cells.json", "attributions.json", "series.json", "correlations.json", "summary.json", "selection.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f} differs across worker counts");
    }

    // every similarity value lies in [0, 1]
    let s = &run.series.series;
    for a in &s.intra {
        for p in a.group.points.iter().chain(&a.per_fold.points) {
            assert!((0.0..=1.0).contains(&p.value));
        }
    }
    for c in &s.convergence {
        assert!(c.points.windows(2).all(|w| w[0].size < w[1].size));
    }

    // one cell recomputed alone matches the sweep
    let target = run.cells.iter().find(|c| c.model == run.selection.top_ids()[1] && c.size == 64 && c.fold == 2).unwrap();
    let alone = run_cell(&cfg, &run.selection, &target.model, 64, 2).unwrap();
    assert_eq!(&alone.cell, target);
    let bag = run_cell(&cfg, &run.selection, BAGGING, 32, 0).unwrap();
    assert_eq!(&bag.cell, run.cells.iter().find(|c| c.model == BAGGING && c.size == 32 && c.fold == 0).unwrap());

    // report: byte-identical on re-run, three tables + three plot bundles
    let r1 = tempfile::tempdir().unwrap();
    let r2 = tempfile::tempdir().unwrap();
    let out1 = write_report(&[a.path().to_path_buf()], r1.path(), TableFormat::Csv).unwrap();
    write_report(&[a.path().to_path_buf()], r2.path(), TableFormat::Csv).unwrap();
    for f in &out1.files {
        let rel = f.strip_prefix(r1.path()).unwrap();
        assert_eq!(read(f), read(&r2.path().join(rel)));
    }
    for t in ["corr_intra.csv", "corr_inter.csv", "corr_bagging.csv", "selection.csv", "performance.csv"] {
        assert!(r1.path().join("tables").join(t).exists(), "{t}");
    }
    for p in ["learning_curves.json", "topj.json", "convergence.json"] {
        assert!(r1.path().join("plots").join(p).exists(), "{p}");
    }
    let intra = read(&r1.path().join("tables/corr_intra.csv"));
    assert!(intra.starts_with("# schema_version=rashomon-audit/1"));
    assert!(intra.lines().nth(1).unwrap().contains("r,p,p_cor,power"));

    // merging two runs re-applies BH over the union and keeps both datasets
    let merged = tempfile::tempdir().unwrap();
    write_report(&[a.path().to_path_buf(), b.path().to_path_buf()], merged.path(), TableFormat::Tsv).unwrap();
    let m = read(&merged.path().join("tables/corr_intra.tsv"));
    assert!(m.contains("planted#2"));

    // a tampered artifact is caught
    let cells = a.path().join("cells.json");
    let text = read(&cells).replacen(&run.config_hash, "0000", 1);
    std::fs::write(&cells, text).unwrap();
    assert!(matches!(load_run(a.path()), Err(ReportError::ConfigMismatch { .. })));
}

#[test]
fn run_without_bagging_omits_bagging_table() {
    let mut cfg = small_config();
    cfg.bagging = false;
    cfg.grid.sizes = Some(vec![16, 32, 64]);
    let dir = tempfile::tempdir().unwrap();
    let run = run_audit(&cfg, dir.path(), 1, None).unwrap();
    assert_eq!(run.cells.len(), 3 * 3 * 3);
    assert!(run.correlations.bagging.is_none());
    let out = tempfile::tempdir().unwrap();
    let rep = write_report(&[dir.path().to_path_buf()], out.path(), TableFormat::Csv).unwrap();
    assert!(!out.path().join("tables/corr_bagging.csv").exists());
    assert!(rep.warnings.iter().any(|w| w.contains("bagging table omitted")));
}

#[test]
fn qda_on_sixteen_rows_is_repaired_not_failed() {
    let mut cfg = small_config();
    cfg.families = vec![Family::Qda, Family::Lr, Family::Nb];
    cfg.grid.sizes = Some(vec![16, 64]);
    cfg.bagging = false;
    let (d, split) = report::prepare_data(&cfg).unwrap();
    let mut sel = report::run_selection(&cfg, &d, &split).unwrap();
    // an unshrunk covariance from ~5 rows per class in 10 dimensions is singular
    let qda = sel.result.top.iter_mut().find(|s| s.family == Family::Qda).expect("qda selected");
    qda.hyperparams.insert("shrinkage".into(), 0.0);
    let dir = tempfile::tempdir().unwrap();
    let run = run_audit(&cfg, dir.path(), 1, Some(sel)).unwrap();
    let qda: Vec<_> = run.cells.iter().filter(|c| c.model == "qda" && c.size == 16).collect();
    assert_eq!(qda.len(), 3);
    for c in qda {
        assert_eq!(c.status, CellStatus::RepairedShrinkage);
        assert!(c.importance.is_some() && c.perf.is_some());
    }
    assert!(run.summary.warnings.iter().any(|w| w.contains("covariance repair")));
}

#[test]
fn bad_grid_is_rejected() {
    let mut cfg = small_config();
    cfg.grid.sizes = Some(vec![16, 100_000]);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run_audit(&cfg, dir.path(), 1, None), Err(ReportError::GridTooLarge { .. })));
    assert!(matches!(report::load_run(dir.path()), Err(ReportError::MissingRun(..))));
}
