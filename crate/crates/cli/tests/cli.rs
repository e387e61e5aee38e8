use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn steward(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steward"))
        .current_dir(dir)
        .env("STEWARD_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Relative path to bytes for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(
                    p.strip_prefix(root).unwrap().to_owned(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn last_stderr_json(out: &Output) -> Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("stderr has output");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

const SMALL: &[&str] = &[
    "--patients",
    "150",
    "--trees",
    "15",
    "--n-boot",
    "30",
    "--seed",
    "3",
];

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for w in ["a", "b"] {
        ok(&steward(
            tmp.path(),
            &["synth", "--workdir", w, "--patients", "500", "--seed", "7"],
        ));
    }
    let a = tree(&tmp.path().join("a"));
    let b = tree(&tmp.path().join("b"));
    assert!(a.keys().any(|k| k.extension().is_some_and(|e| e == "csv")));
    assert_eq!(a, b);
}

#[test]
fn bag_of_words_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["all", "--workdir", "w", "--representation", "bow"];
    args.extend_from_slice(SMALL);
    ok(&steward(tmp.path(), &args));
    let w = tmp.path().join("w");

    let metrics: Vec<Value> =
        serde_json::from_slice(&std::fs::read(w.join("report/metrics.json")).unwrap()).unwrap();
    let mut per_ab: BTreeMap<String, usize> = BTreeMap::new();
    for m in &metrics {
        *per_ab.entry(m["antibiotic"].to_string()).or_default() += 1;
        let (lo, p, hi) = (
            m["ci_low"].as_f64().unwrap(),
            m["point"].as_f64().unwrap(),
            m["ci_high"].as_f64().unwrap(),
        );
        assert!(lo <= p + 1e-9 && p <= hi + 1e-9, "{m}");
    }
    assert!(!per_ab.is_empty());
    assert!(per_ab.values().all(|&n| n == 4), "{per_ab:?}");

    let plots: Vec<PathBuf> = std::fs::read_dir(w.join("report/plots"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(plots.len(), 2 * per_ab.len());
    for p in &plots {
        let text = std::fs::read_to_string(p).unwrap();
        let doc =
            roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(doc
            .descendants()
            .any(|n| n.attribute("class") == Some("series")));
    }

    for stage in [
        "cohort",
        "notes",
        "features",
        "models/bow",
        "eval/bow",
        "cluster/bow",
        "report",
    ] {
        let m: Value = serde_json::from_slice(
            &std::fs::read(w.join(stage).join("run_manifest.json")).unwrap(),
        )
        .unwrap();
        let expected = if ["notes", "features", "report"].contains(&stage) {
            Value::Null
        } else {
            3.into()
        };
        assert_eq!(m["seed"], expected, "{stage}");
        assert!(m["config_fingerprint"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn all_matches_stages_run_one_by_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["all", "--workdir", "x"];
    args.extend_from_slice(SMALL);
    ok(&steward(tmp.path(), &args));
    for stage in [
        "synth",
        "ingest",
        "serialize",
        "embed",
        "train",
        "evaluate",
        "report",
    ] {
        let mut args = vec![stage, "--workdir", "y"];
        args.extend_from_slice(SMALL);
        ok(&steward(tmp.path(), &args));
    }
    let x = tree(&tmp.path().join("x"));
    let y = tree(&tmp.path().join("y"));
    assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
    for (k, v) in &x {
        assert!(v == &y[k], "{} differs", k.display());
    }
}

#[test]
fn unknown_flag_exits_with_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = steward(tmp.path(), &["all", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_input_fails_with_json_tail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = steward(
        tmp.path(),
        &["ingest", "--workdir", "w", "--input", "nowhere"],
    );
    assert_eq!(out.status.code(), Some(1));
    let tail = last_stderr_json(&out);
    assert_eq!(tail["status"], "error");
    assert_eq!(tail["stage"], "ingest");
    assert!(
        tail["message"].as_str().unwrap().contains("nowhere"),
        "{tail}"
    );
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.toml"),
        "workdir = \"fromfile\"\n[synth]\npatients = 40\nseed = 1\n",
    )
    .unwrap();
    ok(&steward(
        tmp.path(),
        &["synth", "--config", "run.toml", "--patients", "60"],
    ));
    let m: Value = serde_json::from_slice(
        &std::fs::read(tmp.path().join("fromfile/data/run_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["settings"]["synth"]["patients"], 60);
    assert_eq!(m["settings"]["synth"]["seed"], 1);
}

#[test]
fn malformed_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[synth]\npatient = 3\n").unwrap();
    let out = steward(tmp.path(), &["synth", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["kind"], "config");
}
