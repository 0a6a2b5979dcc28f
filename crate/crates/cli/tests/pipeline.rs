use std::path::Path;
use std::process::Command;

use dynid::estimator::{ArchConfig, TrainConfig};
use dynid_cli::{build_tables, run_with_config, GridCell, PipelineConfig, Stage, Stages};

fn small(out: &Path) -> PipelineConfig {
    let arch = |d_model, n_layers| ArchConfig {
        d_model,
        n_layers,
        n_heads: 2,
        d_ff: 16,
        ..ArchConfig::default()
    };
    PipelineConfig {
        robots: 6,
        waypoints: 2,
        out_dir: out.to_path_buf(),
        grid: vec![
            GridCell { seq_len: 8, stride: 16, ssr: 8 },
            GridCell { seq_len: 4, stride: 32, ssr: 16 },
        ],
        architectures: vec![arch(8, 1), arch(8, 2)],
        train: TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        },
        ..PipelineConfig::desk()
    }
}

#[test]
fn second_run_is_fully_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let first = run_with_config(&cfg).unwrap();
    assert!(first.failure.is_none(), "{:?}", first.failure);
    assert_eq!(first.cells.len(), 4);
    assert!(!first.all_cached());
    assert!(first.cells.iter().all(|c| c.val_metrics.is_some()));
    let second = run_with_config(&cfg).unwrap();
    assert!(second.all_cached(), "{:?}", second.stages);
    assert_eq!(first.cells, second.cells);
    let text = std::fs::read_to_string(dir.path().join("report/tables.txt")).unwrap();
    assert!(text.contains("Friction parameters"));
}

#[test]
fn resumes_after_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages = Stages::through(Stage::Simulate);
    let partial = run_with_config(&cfg).unwrap();
    assert_eq!(partial.stages.len(), 2);
    assert!(partial.cells.is_empty());
    cfg.stages = Stages {
        generate: false,
        simulate: false,
        ..Stages::default()
    };
    let rest = run_with_config(&cfg).unwrap();
    assert!(rest.failure.is_none(), "{:?}", rest.failure);
    assert!(rest.stage("generate").unwrap().cached && rest.stage("simulate").unwrap().cached);
    assert!(!rest.stage("train").unwrap().cached);
    assert_eq!(rest.cells.len(), 4);
}

#[test]
fn disabled_stage_without_outputs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages = Stages {
        generate: false,
        ..Stages::through(Stage::Sample)
    };
    let e = run_with_config(&cfg).unwrap_err();
    assert_eq!(e.category(), "config");
    assert!(e.to_string().contains("generate"), "{e}");
}

#[test]
fn report_tables_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.grid.push(GridCell { seq_len: 64, stride: 64, ssr: 16 });
    // stop before training so every metric is absent
    cfg.stages = Stages::through(Stage::Sample);
    let report = run_with_config(&cfg).unwrap();
    let tables = build_tables(&report, 6);
    let names: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["dataset_grid", "architecture_grid", "friction", "mass_com", "inertia"]);
    let grid = &tables[0];
    assert_eq!(grid.rows.len(), 3);
    let row = grid.rows.iter().find(|r| r[0] == "64").unwrap();
    assert_eq!(row[3], "4.096");
    assert_eq!(row[4], "6.25%");
    assert_eq!(tables[1].rows.len(), 2);
    let friction = &tables[2];
    assert_eq!(friction.rows.len(), 6);
    assert!(friction.rows.iter().all(|r| r.len() == 5 && r[1..].iter().all(|c| c == "n/a")));
    assert_eq!(tables[3].rows.len(), 5);
    let inertia = &tables[4];
    assert_eq!(inertia.rows[0][1..5], ["-", "-", "-", "-"]);
    assert_eq!(inertia.rows[0][5], "n/a");
}

#[test]
fn binary_reports_categorised_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "robots = \"many\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dynid"))
        .args(["all", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let good = dir.path().join("small.toml");
    std::fs::write(&good, small(&dir.path().join("run")).to_toml()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dynid"))
        .args(["generate", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(dir.path().join("run/robots")).unwrap().count(), 6);
}
