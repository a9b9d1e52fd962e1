use std::path::Path;
use std::process::{Command, Output};

use sketch_core::session::{open_project, save_project};
use sketch_core::{Graph, ParamMap, ParamValue, Position};

fn sketch(state: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketch"))
        .arg("--state-dir")
        .arg(state)
        .args(args)
        .output()
        .unwrap()
}

fn small_net() -> Graph {
    let mut g = Graph::new(9);
    let mut lp = ParamMap::new();
    lp.insert("in_features".into(), ParamValue::Int(784));
    lp.insert("out_features".into(), ParamValue::Int(10));
    let a = g.add_node("Input", None, Position::new(1.0, 2.0)).unwrap();
    let f = g.add_node("Flatten", None, Position::new(3.0, 4.0)).unwrap();
    let l = g.add_node("Linear", Some(&lp), Position::new(5.0, 6.0)).unwrap();
    g.connect(a, f).unwrap();
    g.connect(f, l).unwrap();
    g
}

#[test]
fn compile_then_import_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("net.sketch");
    save_project(&small_net(), &project).unwrap();

    let out = sketch(dir.path(), &["compile", project.to_str().unwrap(), "--kernel", "onnx", "--text"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let artifact = dir.path().join("net.onnx");
    assert_eq!(stdout.lines().next().unwrap(), artifact.display().to_string());
    assert!(stdout.contains("Gemm"), "{stdout}");

    let back = dir.path().join("back.sketch");
    let out = sketch(dir.path(), &["import", artifact.to_str().unwrap(), "-o", back.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = open_project(&back).unwrap();
    let types: Vec<_> = g.nodes().map(|n| n.layer_type().to_string()).collect();
    assert_eq!(types, ["Input", "Flatten", "Linear"]);
    assert_eq!(g.nodes().map(|n| n.position()).last(), Some(Position::new(5.0, 6.0)));

    let log = std::fs::read_to_string(dir.path().join("sketch.log")).unwrap();
    for kind in ["project.open", "binder.export", "binder.import", "project.save"] {
        assert!(log.contains(&format!("\"{kind}\"")), "missing {kind}");
    }
}

#[test]
fn pytorch_export_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("net.sketch");
    save_project(&small_net(), &project).unwrap();
    let out = sketch(dir.path(), &["compile", project.to_str().unwrap(), "--kernel", "pytorch-src"]);
    assert!(out.status.success());
    assert!(dir.path().join("net.py").is_file());
    assert!(dir.path().join("net.py.weights").is_file());
}

#[test]
fn failures_exit_nonzero_with_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("empty.sketch");
    save_project(&Graph::new(0), &project).unwrap();
    let out = sketch(dir.path(), &["compile", project.to_str().unwrap(), "--kernel", "onnx"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoSource"));

    let out = sketch(dir.path(), &["import", "/nonexistent.onnx", "-o", "x.sketch"]);
    assert_eq!(out.status.code(), Some(1));
    let out = sketch(dir.path(), &["compile", project.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "missing --kernel is a usage error");
}
