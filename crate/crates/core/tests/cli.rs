//! Integration tests driving the compiled binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_revalloc"))
}

fn data(file: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

#[test]
fn writes_parseable_reports_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args([
            "--input",
            data("numerical_example.csv").to_str().unwrap(),
            "--dims",
            "3,1,2",
            "--revenue",
            "100",
            "--mode",
            "secondary",
            "--concepts",
            "shapley,leastcore",
            "--format",
            "csv",
            "--output",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    for concept in ["shapley", "leastcore"] {
        let text =
            std::fs::read_to_string(out.join(format!("report_secondary_{concept}.csv"))).unwrap();
        let rows = revalloc::cli::parse_report_csv(&text).unwrap();
        assert_eq!(rows.len(), 14);
        let total: f64 = rows.iter().map(|r| r.2).sum();
        assert!((total - 100.0).abs() < 1e-6, "{concept} total {total}");

        let plot =
            std::fs::read_to_string(out.join(format!("plot_secondary_{concept}.csv"))).unwrap();
        assert_eq!(plot.lines().count(), 15);
        assert!(plot.starts_with("label,allocation,comparison\n"));
    }
    let cem = std::fs::read_to_string(out.join("cem.csv")).unwrap();
    assert_eq!(cem.lines().count(), 15);
}

#[test]
fn json_report_has_expected_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args([
            "--input",
            data("numerical_example.csv").to_str().unwrap(),
            "--dims",
            "3,1,2",
            "--revenue",
            "100",
            "--mode",
            "secondary",
            "--concepts",
            "shapley",
            "--output",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("report_secondary_shapley.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["mode"], "secondary");
    assert_eq!(doc["concept"], "shapley");
    assert_eq!(doc["R"], 100.0);
    let r1 = doc["R1"].as_f64().unwrap();
    let r2 = doc["R2"].as_f64().unwrap();
    assert!((r1 + r2 - 100.0).abs() < 1e-6);
    let players = doc["players"].as_array().unwrap();
    assert_eq!(players.len(), 14);
    for p in players {
        for key in ["label", "stage", "allocation", "rank", "avg_cree", "comparison"] {
            assert!(!p[key].is_null(), "missing {key}");
        }
    }
    let cem = doc["cem"].as_array().unwrap();
    assert_eq!(cem.len(), 14);
    assert_eq!(cem[0].as_array().unwrap().len(), 14);
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}"));
        let status = bin()
            .args([
                "--input",
                data("numerical_example.csv").to_str().unwrap(),
                "--dims",
                "3,1,2",
                "--revenue",
                "100",
                "--mode",
                "secondary",
                "--concepts",
                "nucleolus",
                "--format",
                "csv",
                "--seed",
                "42",
                "--output",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let mut bytes = Vec::new();
        for f in ["report_secondary_nucleolus.csv", "plot_secondary_nucleolus.csv", "cem.csv"] {
            bytes.extend(std::fs::read(out.join(f)).unwrap());
        }
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn direct_mode_on_large_case_exits_with_size_limit() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "--input",
            data("bank_branches.csv").to_str().unwrap(),
            "--dims",
            "3,2,2",
            "--revenue",
            "1000",
            "--mode",
            "direct",
            "--concepts",
            "shapley",
            "--output",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("secondary"), "hint missing: {stderr}");
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let output = bin()
        .args([
            "--input",
            dir.path().join("missing.csv").to_str().unwrap(),
            "--dims",
            "1,1,1",
            "--revenue",
            "10",
            "--output",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,x1,z1,y1\na,1,2,3\nb,4,oops,6\n").unwrap();
    let output = bin()
        .args([
            "--input",
            bad.to_str().unwrap(),
            "--dims",
            "1,1,1",
            "--revenue",
            "10",
            "--output",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("row 3"), "{stderr}");
    assert!(stderr.contains("column 3"), "{stderr}");
}
