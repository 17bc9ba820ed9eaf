use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spongedim::{emit_spec, gallery, gl_profile, CountReport, SpongeSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spongedim"))
}

fn write_spec(dir: &TempDir, name: &str, spec: SpongeSpec) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, emit_spec(&spec)).unwrap();
    path
}

fn run(args: &[&str], file: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(f) = file {
        cmd.arg(f);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn dim_reports_profile_and_packing_dimension() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let o = run(&["dim"], Some(&f));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("s = (1.0000000, 1.2924813)"), "{text}");
    assert!(text.contains("packing dimension = box dimension"));
}

#[test]
fn json_numbers_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let doc = json(&run(&["--json", "dim"], Some(&f)));
    let expected = gl_profile(&gallery::gl_a()).unwrap();
    let values: Vec<f64> =
        serde_json::from_value(doc["results"]["profile"]["values"].clone()).unwrap();
    assert_eq!(values, expected.values);
    assert_eq!(
        doc["results"]["box_dimension"].as_f64().unwrap(),
        expected.box_dimension()
    );
    assert_eq!(doc["command"], "dim");
}

#[test]
fn baranski_dim_prints_permutation_table() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "b.json", gallery::bar_a().into());
    let text = stdout(&run(&["dim"], Some(&f)));
    assert!(
        text.contains("sigma (1, 2): s = (1.0000000, 1.3690702)"),
        "{text}"
    );
    assert!(text.contains("sigma (2, 1)"));
    assert!(text.contains("maximizing sigma = (1, 2)"));
}

#[test]
fn variational_agrees_with_closed_form() {
    let dir = TempDir::new().unwrap();
    for (name, spec) in [
        ("a.json", SpongeSpec::from(gallery::gl_a())),
        ("3.json", gallery::gl_3().into()),
        ("b.json", gallery::bar_a().into()),
    ] {
        let f = write_spec(&dir, name, spec);
        let o = run(&["--json", "--seed", "9", "variational"], Some(&f));
        assert_eq!(o.status.code(), Some(0), "{name}");
        let doc = json(&o);
        assert!(doc["results"]["agreement_delta"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn count_matches_report_format() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let o = run(&["--json", "count", "--delta", "0.25", "--types"], Some(&f));
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["results"]["total"], "6");
    let report: CountReport = serde_json::from_value(doc["results"].clone()).unwrap();
    assert_eq!(report.per_type.unwrap().len(), 6);

    let text = stdout(&run(&["count", "--delta", "1/16", "--per-sigma"], Some(&f)));
    assert!(text.contains("total 36"));
    assert!(text.contains("sigma (1, 2): 36"));
}

#[test]
fn empirical_slope() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "u.json", gallery::gl_u().into());
    let o = run(
        &["--json", "empirical", "--deltas", "1/4,1/16,1/64,1/256"],
        Some(&f),
    );
    assert_eq!(o.status.code(), Some(0));
    let slope = json(&o)["results"]["slope"].as_f64().unwrap();
    assert!((slope - 1.5).abs() < 1e-12);
}

#[test]
fn hausdorff_comparison() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let o = run(&["hausdorff"], Some(&f));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("dim_H = 1.2715533"), "{text}");
    assert!(text.contains("uniform fibres: false"));
    assert!(text.contains("dim_B = 1.2924813"));

    let f = write_spec(&dir, "u.json", gallery::gl_u().into());
    let doc = json(&run(&["--json", "hausdorff"], Some(&f)));
    assert_eq!(doc["results"]["fibre"]["is_uniform"], true);
    assert!((doc["results"]["hausdorff"]["value"].as_f64().unwrap() - 1.5).abs() < 1e-5);

    let f = write_spec(&dir, "3.json", gallery::gl_3().into());
    assert_eq!(run(&["hausdorff"], Some(&f)).status.code(), Some(64));
}

#[test]
fn report_bundle_is_written() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let out = dir.path().join("bundle.json");
    let o = run(
        &["report", "--delta", "1/16", "--out", out.to_str().unwrap()],
        Some(&f),
    );
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in [
        "validation",
        "dimension",
        "variational",
        "hausdorff",
        "count",
    ] {
        assert!(doc["results"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["results"]["count"]["total"], "36");
    assert_eq!(doc["spec"]["kind"], "gatzouras-lalley");
}

#[test]
fn validation_failures_exit_one() {
    let dir = TempDir::new().unwrap();
    let mut spec = gallery::gl_a();
    spec.maps[0].ratios[1] = spongedim::Scalar::fraction(3, 4);
    let f = write_spec(&dir, "bad.json", spec.into());
    let o = run(&["validate"], Some(&f));
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("invalid"));
    assert_eq!(run(&["dim"], Some(&f)).status.code(), Some(1));

    let f = dir.path().join("syntax.json");
    std::fs::write(&f, "{ \"kind\": ").unwrap();
    assert_eq!(run(&["dim"], Some(&f)).status.code(), Some(1));

    let f = write_spec(&dir, "ok.json", gallery::gl_a().into());
    assert_eq!(run(&["validate"], Some(&f)).status.code(), Some(0));
}

#[test]
fn budget_failures_exit_two() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let o = bin()
        .args(["count", "--delta", "1/4096", "--types"])
        .arg(&f)
        .env("SPONGEDIM_BUDGET", "100")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn usage_errors_exit_sixty_four() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    assert_eq!(
        run(&["count", "--delta", "2"], Some(&f)).status.code(),
        Some(64)
    );
    assert_eq!(
        run(&["count", "--delta", "x"], Some(&f)).status.code(),
        Some(64)
    );
    assert_eq!(run(&["count"], Some(&f)).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(64));
    assert_eq!(
        run(&["dim"], Some(&dir.path().join("missing.json")))
            .status
            .code(),
        Some(64)
    );
    let o = bin()
        .args(["count", "--delta", "1/4"])
        .arg(&f)
        .env("SPONGEDIM_BUDGET", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(64));
    assert_eq!(run(&["--help"], None).status.code(), Some(0));
    assert_eq!(run(&["--version"], None).status.code(), Some(0));
}

#[test]
fn thread_cap_is_accepted() {
    let dir = TempDir::new().unwrap();
    let f = write_spec(&dir, "a.json", gallery::gl_a().into());
    let o = run(
        &["--threads", "2", "count", "--delta", "1/256", "--types"],
        Some(&f),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total 1296"));
    assert_eq!(
        run(&["--threads", "0", "dim"], Some(&f)).status.code(),
        Some(64)
    );
}
