//! End-to-end checks of the command-line contract: exit codes,
//! artifact layout, and the documented examples.

use std::process::Command;

fn gglab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gglab"))
}

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn height_example_exits_zero_with_height_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gglab()
        .args([
            "--out",
            tmp.path().to_str().unwrap(),
            "height",
            "--presentation",
            &fixture("f2.txt"),
            "--subgroup",
            &fixture("a.sub"),
            "--mode",
            "algebraic",
            "-L",
            "6",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("height.json")).unwrap())
            .unwrap();
    assert_eq!(v["height"], 1);
}

#[test]
fn delta_example_exits_zero_on_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gglab()
        .args([
            "--out",
            tmp.path().to_str().unwrap(),
            "delta",
            "--graph",
            &fixture("tree.json"),
            "--exact",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("delta.json")).unwrap())
            .unwrap();
    assert_eq!(v["delta4"], 0.0);
    assert_eq!(v["mode"], "exact");
}

#[test]
fn graded_on_flat_grid_exits_two_with_notice() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gglab()
        .args([
            "--out",
            tmp.path().to_str().unwrap(),
            "graded",
            "--presentation",
            &fixture("example65.txt"),
            "--subgroup",
            &fixture("a.sub"),
            "-R",
            "8",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("graded.json")).unwrap())
            .unwrap();
    // Verdict schema: height, levels, overall, truncated.
    assert!(v.get("height").is_some());
    assert!(v.get("levels").is_some());
    assert_eq!(v["overall"], false);
    assert!(v["truncated"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n.as_str().unwrap().contains("non-stabilizing")));
}

#[test]
fn small_cancellation_failure_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gglab()
        .args([
            "--out",
            tmp.path().to_str().unwrap(),
            "ball",
            "--presentation",
            &fixture("example66.txt"),
            "-R",
            "4",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:"), "stderr: {err}");
}

#[test]
fn numeric_series_come_with_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gglab()
        .args([
            "--out",
            tmp.path().to_str().unwrap(),
            "electrify",
            "--presentation",
            &fixture("f2.txt"),
            "--subgroup",
            &fixture("a.sub"),
            "-R",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(tmp.path().join("psi_table.csv")).unwrap();
    assert!(csv.starts_with('#'), "unit-annotated header comment missing");
    assert!(csv.lines().count() > 2);
}
