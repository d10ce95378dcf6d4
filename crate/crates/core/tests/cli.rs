use std::fs;
use std::path::Path;
use std::process::Command;

use dmn::network::params::Params2d;
use dmn::{NetworkParams, Rotation};

const RUN: &str = r#"
version = 1
[network]
fixture = 0.2
[[phase]]
material = { type = "isotropic", young = 500.0, poisson = 0.3 }
[[phase]]
material = { type = "isotropic", young = 100.0, poisson = 0.3 }
cohesive = { t_c = 0.15, g_c = 6e-4, beta = 1.0, tau = 1e-4 }
[macro_cell]
diameter = 1.0
[[load]]
steps = 10
dt = 1e-4
control = ["strain", "stress", "stress", "stress", "stress", "stress"]
end = [5e-4, 0.0, 0.0, 0.0, 0.0, 0.0]
"#;

const TRAIN: &str = r#"
version = 1
depth = 2
oracle = { type = "random-teacher", depth = 1, seed = 3 }
[training]
train_samples = 16
test_samples = 4
epochs = 4
batch_size = 4
restarts = 2
restart_epochs = 2
"#;

fn dmn(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dmn")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "run.toml", RUN);
    let out = dir.path().join("out");
    let o = dmn(&["run", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["stress_strain.csv", "cracks.csv", "cells.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("stress_strain.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "run.toml", RUN);
    let out = dir.path().join("sweep");
    let o = dmn(&["run", "--config", &config, "--out-dir", out.to_str().unwrap(), "--sweep", "macro_cell.diameter=0.5,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("macro_cell.diameter=0.5/stress_strain.csv").exists());
    assert!(out.join("macro_cell.diameter=2/stress_strain.csv").exists());
}

#[test]
fn configuration_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &RUN.replace("version = 1", "version = 9"));
    assert_eq!(dmn(&["run", "--config", &bad]).status.code(), Some(3));
    let missing = dir.path().join("missing.toml");
    assert_eq!(dmn(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(3));
    let negative = write(dir.path(), "neg.toml", &RUN.replace("diameter = 1.0", "diameter = -1.0"));
    assert_eq!(dmn(&["divide", "--config", &negative]).status.code(), Some(3));
}

#[test]
fn non_convergence_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{RUN}[solver]\nmax_iterations = 1\nmax_refinements = 0\n");
    let config = write(dir.path(), "run.toml", &text);
    let o = dmn(&["run", "--config", &config, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "train.toml", TRAIN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = dmn(&["train", "--config", &config, "--seed", "11", "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let pa = fs::read(a.join("params.toml")).unwrap();
    assert_eq!(pa, fs::read(b.join("params.toml")).unwrap());
    assert_eq!(fs::read(a.join("training.csv")).unwrap(), fs::read(b.join("training.csv")).unwrap());
    let p = NetworkParams::from_toml(std::str::from_utf8(&pa).unwrap()).unwrap();
    assert_eq!(p.depth(), 2);
}

#[test]
fn transfer_makes_every_plane_contain_axis_3() {
    let dir = tempfile::tempdir().unwrap();
    let p2 = Params2d::new(3, vec![0.2, 0.1, 0.15, 0.05], vec![0.3, -0.7, 1.1, 0.4, -0.2, 2.0, 0.9]);
    let input = write(dir.path(), "p2.toml", &p2.to_toml());
    let output = dir.path().join("p3.toml");
    let o = dmn(&["transfer", &input, output.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let p3 = NetworkParams::load(&output).unwrap();
    let angles: &[Rotation] = p3.angles();
    let mut frames = vec![angles[0].matrix()];
    for (node, angle) in angles.iter().enumerate().skip(1) {
        let parent = (node - 1) / 2;
        frames.push(angle.matrix() * frames[parent]);
    }
    for (node, o) in frames.iter().enumerate().take(3) {
        let normal = o.transpose() * nalgebra::Vector3::z();
        assert!(normal[2].abs() < 1e-12, "node {node}: {normal}");
    }
    let total: f64 = p3.leaf_weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}
