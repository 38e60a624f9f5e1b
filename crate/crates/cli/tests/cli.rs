//! End-to-end runs of the `polybc` binary on small configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polybc(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polybc"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Rows of a CSV written by the tool, header checked.
fn read_rows(path: &Path, header: &str) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(header));
    lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

const SQUARE: &str = "[domain]\nvertices = [[0, 0], [1, 0], [1, 1], [0, 1]]\n";
const TOP_LOADED: &str = "[boundary]\nedges = [\"0\", \"0\", \"sin(pi*x)\", \"0\"]\n";

const SMALL_SOLVE: &str = r#"
[domain]
vertices = [[0, 0], [1, 0], [1, 0.5], [0, 1]]
[boundary]
edges = ["(1 - y)*(-2 + 2*x + y)", "(1 - y)*(-2 + 2*x + y)", "(1 - y)*(-2 + 2*x + y)", "(1 - y)*(-2 + 2*x + y)"]
[problem]
source = "2"
exact = "(1 - y)*(-2 + 2*x + y)"
[network]
widths = [4, 6, 1]
[sampling]
strategy = "grid_quad"
nx = 4
ny = 4
delta = 0.05
[[phases]]
optimizer = "adam"
epochs = 5
[[phases]]
optimizer = "lbfgs"
epochs = 3
"#;

#[test]
fn coords_on_square_and_octagon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sq.toml", &format!("{SQUARE}{TOP_LOADED}[sampling]\nstrategy = \"grid_quad\"\nnx = 7\nny = 5\n"));
    let out = polybc("coords", &cfg, &dir.path().join("sq"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("sq/coords.csv"), "x,y,lambda_1,lambda_2,lambda_3,lambda_4");
    assert_eq!(rows.len(), 35);
    for r in &rows {
        assert!(r[2..].iter().all(|l| (-1e-12..=1.0 + 1e-12).contains(l)));
        assert!((r[2..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let oct = "[domain]\nregular = 8\n[boundary]\nhomogeneous = true\n[sampling]\nstrategy = \"refine\"\nlevel = 0\n";
    let cfg = write_config(dir.path(), "oct.toml", oct);
    assert!(polybc("coords", &cfg, &dir.path().join("oct"), &[]).status.success());
    let header = (1..=8).fold("x,y".to_string(), |h, i| format!("{h},lambda_{i}"));
    let rows = read_rows(&dir.path().join("oct/coords.csv"), &header);
    // The first refinement point is the centroid.
    assert!(rows[0][..2].iter().all(|c| c.abs() < 1e-15));
    assert!(rows[0][2..].iter().all(|l| (l - 0.125).abs() < 1e-14));
}

#[test]
fn lift_reproduces_boundary_data_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", &format!("{SQUARE}{TOP_LOADED}[sampling]\nstrategy = \"boundary\"\ncount = 400\n"));
    assert!(polybc("lift", &cfg, &dir.path().join("b"), &[]).status.success());
    let rows = read_rows(&dir.path().join("b/lift.csv"), "x,y,g,lap_g");
    assert_eq!(rows.len(), 400);
    for r in &rows {
        let b = if (r[1] - 1.0).abs() < 1e-12 { (std::f64::consts::PI * r[0]).sin() } else { 0.0 };
        assert!((r[2] - b).abs() <= 1e-10, "{r:?}");
    }

    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[domain]\nregular = 5\n[boundary]\nedges = [\"2.5\", \"2.5\", \"2.5\", \"2.5\", \"2.5\"]\n[sampling]\nstrategy = \"random\"\ncount = 50\n",
    );
    assert!(polybc("lift", &cfg, &dir.path().join("c"), &[]).status.success());
    for r in read_rows(&dir.path().join("c/lift.csv"), "x,y,g,lap_g") {
        assert!((r[2] - 2.5).abs() < 1e-13 && r[3].abs() < 1e-10);
    }
}

#[test]
fn meanvalue_lift_laplacian_blows_up_at_loaded_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let mut lap = Vec::new();
    for (k, delta) in ["1e-2", "1e-3", "1e-4"].iter().enumerate() {
        let text = format!(
            "{SQUARE}{TOP_LOADED}coordinates = \"mean_value\"\n[sampling]\nstrategy = \"grid_quad\"\nnx = 2\nny = 2\ndelta = {delta}\n"
        );
        let cfg = write_config(dir.path(), &format!("m{k}.toml"), &text);
        let out = polybc("lift", &cfg, &dir.path().join(format!("m{k}")), &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = read_rows(&dir.path().join(format!("m{k}/lift.csv")), "x,y,g,lap_g");
        // Row order: (d,d), (1-d,d), (d,1-d), (1-d,1-d); the last two sit by the loaded edge.
        lap.push(rows[3][3].abs());
    }
    assert!(lap[1] >= 5.0 * lap[0] && lap[2] >= 5.0 * lap[1], "{lap:?}");
}

#[test]
fn solve_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SOLVE);
    let out_dir = dir.path().join("s");
    let out = polybc("solve", &cfg, &out_dir, &["--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["loss_history.csv", "predictions.csv", "checkpoint.json", "manifest.json", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(out_dir.join("loss_history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,loss,lr,phase"));
    assert_eq!(lines.next().unwrap().split(',').next(), Some("1"));
    let preds = read_rows(&out_dir.join("predictions.csv"), "x,y,u_pred,u_exact,abs_err,grad_err");
    assert_eq!(preds.len(), 16);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config"]["network"]["widths"], serde_json::json!([4, 6, 1]));
    let ckpt = std::fs::read_to_string(out_dir.join("checkpoint.json")).unwrap();
    assert_eq!(polybc::network::Mlp::from_json(&ckpt).unwrap().params.len(), 4 * 6 + 6 + 7);

    // Same seed, same bytes.
    let again = dir.path().join("s2");
    assert!(polybc("solve", &cfg, &again, &["--seed", "5"]).status.success());
    assert_eq!(history, std::fs::read_to_string(again.join("loss_history.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_kind = write_config(dir.path(), "k.toml", &SMALL_SOLVE.replace("source = \"2\"", "kind = \"heat\"\nsource = \"2\""));
    let out = polybc("solve", &bad_kind, &dir.path().join("k"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variant"));
    assert!(!dir.path().join("k").exists(), "nothing is computed or written on a config error");

    let inverse = SMALL_SOLVE.replace("source = \"2\"", "kind = \"inverse_poisson\"") + "[inverse]\ndata_file = \"missing.csv\"\n";
    let cfg = write_config(dir.path(), "i.toml", &inverse);
    assert_eq!(polybc("inverse", &cfg, &dir.path().join("i"), &[]).status.code(), Some(1));
    assert_eq!(polybc("solve", &cfg, &dir.path().join("i"), &[]).status.code(), Some(2));

    let no_file = dir.path().join("absent.toml");
    assert_eq!(polybc("solve", &no_file, &dir.path().join("a"), &[]).status.code(), Some(1));

    // exp(u) overflows once a huge learning rate blows the network up.
    let diverge = SMALL_SOLVE
        .replace("source = \"2\"", "kind = \"nonlinear_poisson\"\nsource = \"2\"")
        .replace("epochs = 5", "epochs = 200\nlr = 1e4");
    let cfg = write_config(dir.path(), "d.toml", &diverge);
    let out_dir = dir.path().join("d");
    let out = polybc("solve", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["error"].as_str().unwrap().contains("epoch"));
    assert!(out_dir.join("loss_history.csv").exists() && out_dir.join("checkpoint.json").exists());
}
