use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5
[corpus]
recordings = 2
[synth]
recording_duration = 40.0
segment_length = 500.0
[prepare]
stride = 4
[train.gate]
max_epochs = 10
[train.experts]
max_components = 8
max_points = 4000
[evaluation]
density_bin_width = 5.0
"#;

fn lanepred(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanepred"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    (dir, config, out)
}

#[test]
fn synth_then_ingest_has_no_violations() {
    let (_dir, config, out) = setup();
    ok(&lanepred(&["synth"], &config, &out));
    assert!(out.join("manifest_events.tsv").exists());
    let stdout = ok(&lanepred(
        &["ingest", "--data", out.to_str().unwrap()],
        &config,
        &out,
    ));
    assert!(stdout.contains(" 0 violations"), "{stdout}");
    let report = std::fs::read_to_string(out.join("ingest_report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(out.join("run_ingest.json").exists());
}

#[test]
fn evaluate_without_train_is_a_missing_artifact() {
    let (_dir, config, out) = setup();
    let o = lanepred(&["evaluate"], &config, &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[missing_artifact]"), "{err}");
    let o = lanepred(&["predict"], &config, &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("models.json"));
}

#[test]
fn unknown_config_key_is_named() {
    let (dir, _, out) = setup();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[prepare]\nstrid = 3\n").unwrap();
    let o = lanepred(&["synth"], &bad, &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.starts_with("error[config]") && err.contains("strid"),
        "{err}"
    );
}

#[test]
fn full_pipeline_emits_reports_reproducibly() {
    let (_dir, config, out) = setup();
    ok(&lanepred(&["synth"], &config, &out));
    let data = out.to_str().unwrap().to_string();
    let stages: [&[&str]; 5] = [
        &["prepare", "--data", &data],
        &["train"],
        &["predict"],
        &["evaluate"],
        &["context-report"],
    ];
    for args in stages {
        ok(&lanepred(args, &config, &out));
    }
    let tables = [
        "table1.tsv",
        "fig2_errors.tsv",
        "fig3_roc.tsv",
        "fig4_density_errors.tsv",
        "fig5_lc_stats.tsv",
    ];
    let figures = ["fig2.svg", "fig3.svg", "fig4.svg", "fig5.svg"];
    let read = |n: &str| std::fs::read_to_string(out.join(n)).unwrap();
    let hash = read("table1.tsv").lines().next().unwrap().to_string();
    assert!(hash.starts_with("# config_hash="));
    for t in tables {
        assert_eq!(read(t).lines().next().unwrap(), hash, "{t}");
    }
    for f in figures {
        assert!(read(f).contains("</svg>"), "{f}");
    }
    let sha = |n: &str| {
        read(n)
            .lines()
            .find(|l| l.starts_with("# predictions_sha256="))
            .unwrap()
            .to_string()
    };
    assert_eq!(sha("fig2_errors.tsv"), sha("fig4_density_errors.tsv"));
    for stage in [
        "synth",
        "prepare",
        "train",
        "predict",
        "evaluate",
        "context-report",
    ] {
        let m = read(&format!("run_{stage}.json"));
        assert!(m.contains(&hash["# config_hash=".len()..]), "{stage}");
    }

    let before: Vec<String> = tables.iter().map(|t| read(t)).collect();
    std::fs::remove_file(out.join("predictions.json")).unwrap();
    for args in [&["train"][..], &["evaluate"], &["context-report"]] {
        ok(&lanepred(args, &config, &out));
    }
    let after: Vec<String> = tables.iter().map(|t| read(t)).collect();
    assert_eq!(before, after);
}
