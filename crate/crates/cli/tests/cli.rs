use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn roomtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roomtree")).args(args).output().expect("spawn roomtree")
}

fn ok(args: &[&str]) -> Output {
    let out = roomtree(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn all_ones(report: &Value) {
    for m in ["room", "corner", "angle", "ma"] {
        for k in ["precision", "recall"] {
            assert_eq!(report[m][k].as_f64(), Some(1.0), "{m} {k}: {report}");
        }
    }
}

#[test]
fn noiseless_scene_solves_perfectly() {
    let t = tempfile::tempdir().unwrap();
    let (scene, out) = (t.path().join("scene"), t.path().join("out"));
    ok(&["synth", "--out", s(&scene), "--rooms", "3", "--seed", "2"]);
    for f in ["density.pgm", "density.json", "segments.json", "gt.json", "synth.json"] {
        assert!(scene.join(f).is_file(), "{f}");
    }
    ok(&["solve", "--scene", s(&scene), "--out", s(&out), "--iterations", "60", "--emit", "svg,pgm,json,trace"]);
    all_ones(&json(&out.join("metrics.json"))["report"]);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["iterations_run"].as_u64(), Some(60));
    assert_eq!(manifest["best_trace"].as_array().unwrap().len(), 60);
    assert!(manifest["config_hash"].as_str().unwrap().len() >= 16);
    let svg = fs::read_to_string(out.join("overlay.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 3);
    assert!(svg.contains("data:image/png;base64,"));
    assert!(fs::read(out.join("rooms.pgm")).unwrap().starts_with(b"P5"));

    // The plan scored against itself through the eval command.
    let plan = out.join("plan.json");
    let ev = t.path().join("ev");
    ok(&["eval", "--plan", s(&plan), "--gt", s(&plan), "--out", s(&ev)]);
    all_ones(&json(&ev.join("metrics.json"))["report"]);
}

#[test]
fn solve_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    ok(&["synth", "--out", s(&scene), "--rooms", "3", "--seed", "1000", "--noisy"]);
    let mut plans = Vec::new();
    for run in ["a", "b"] {
        let out = t.path().join(run);
        ok(&["solve", "--scene", s(&scene), "--out", s(&out), "--iterations", "40", "--seed", "7", "--emit", "json"]);
        plans.push(fs::read(out.join("plan.json")).unwrap());
    }
    assert_eq!(plans[0], plans[1]);
}

#[test]
fn synth_is_deterministic_and_validates() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["synth", "--out", s(&a), "--rooms", "5", "--seed", "1"]);
    ok(&["synth", "--out", s(&b), "--rooms", "5", "--seed", "1"]);
    for f in ["density.pgm", "density.json", "segments.json", "gt.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let out = roomtree(&["synth", "--out", s(&t.path().join("c")), "--rooms", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let rot = t.path().join("rot");
    ok(&["synth", "--out", s(&rot), "--rooms", "4", "--non-manhattan-prob", "1", "--seed", "3"]);
    let gt = json(&rot.join("gt.json"));
    let diagonal = gt["rooms"].as_array().unwrap().iter().any(|room| {
        let v: Vec<(f64, f64)> = room
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
            .collect();
        (0..v.len()).any(|i| {
            let (p, q) = (v[i], v[(i + 1) % v.len()]);
            (p.0 - q.0).abs() > 1e-6 && (p.1 - q.1).abs() > 1e-6
        })
    });
    assert!(diagonal);
}

#[test]
fn input_errors_exit_with_code_2() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    ok(&["synth", "--out", s(&scene), "--rooms", "2"]);

    let missing = t.path().join("nope.json");
    let out = roomtree(&["solve", "--scene", s(&scene), "--segments", s(&missing), "--out", s(&t.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let bad = t.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = roomtree(&["eval", "--plan", s(&bad), "--gt", s(&scene.join("gt.json"))]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = t.path().join("cfg.toml");
    fs::write(&cfg, "bogus_key = 3\n").unwrap();
    let out = roomtree(&["solve", "--config", s(&cfg), "--scene", s(&scene)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_corpus_aggregates_scenes() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    ok(&["synth", "--out", s(&corpus), "--count", "3", "--rooms", "3", "--seed", "4"]);
    let dirs: Vec<_> = (0..3).map(|k| corpus.join(format!("scene_{k:03}"))).collect();
    // Perfect plans for two scenes, an empty plan for the third.
    fs::copy(dirs[0].join("gt.json"), dirs[0].join("plan.json")).unwrap();
    fs::copy(dirs[1].join("gt.json"), dirs[1].join("plan.json")).unwrap();
    fs::write(dirs[2].join("plan.json"), r#"{"schema_version":1,"rooms":[]}"#).unwrap();
    let ev = t.path().join("ev");
    ok(&["eval", "--corpus", s(&corpus), "--out", s(&ev)]);
    let doc = json(&ev.join("metrics.json"));
    let rows = doc["scenes"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let room = doc["mean"]["room"]["recall"].as_f64().unwrap();
    assert!((room - 2.0 / 3.0).abs() < 1e-12, "{doc}");
}

#[test]
fn render_outputs() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    ok(&["synth", "--out", s(&scene), "--rooms", "3", "--seed", "9"]);
    let svg = t.path().join("plan.svg");
    ok(&["render", "--plan", s(&scene.join("gt.json")), "--out", s(&svg)]);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<path").count(), 3);
    let fills: std::collections::HashSet<_> = text.match_indices("fill=\"#").map(|(i, _)| &text[i..i + 13]).collect();
    assert!(fills.len() >= 3);

    let pgm = t.path().join("density.pgm");
    ok(&["render", "--scene", s(&scene), "--out", s(&pgm)]);
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5"));

    let overlay = t.path().join("overlay.svg");
    ok(&["render", "--scene", s(&scene), "--plan", s(&scene.join("gt.json")), "--out", s(&overlay)]);
    assert!(fs::read_to_string(&overlay).unwrap().contains("<image"));
}
