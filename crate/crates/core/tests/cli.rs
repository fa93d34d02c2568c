use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use map_planner::cli::{checkpoint, CHECKPOINT_FILE, LOSS_LOG_FILE};
use map_planner::eval::{read_report, METRICS_FILE};

fn mapplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapplan"))
        .args(args)
        .env_remove("MAPPLAN_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mapplan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = mapplan(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().into(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

const TINY: &str = r#"
epochs = 2
batch_size = 4
[model]
channels = 6
token_stride = 8
d_model = 12
d_lin = 8
d_cmd = 4
d_att = 8
d_adapter = 8
d_decoder = 12
[model.map]
layers = 2
d_map = 8
n_queries = 4
"#;

#[test]
fn generate_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, z) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("z"));
    ok(&["generate", "--seed", "3", "--count", "10", "--out", s(&a)]);
    ok(&["generate", "--seed", "3", "--count", "10", "--out", s(&b)]);
    let ta = tree(&a);
    assert_eq!(ta.len(), 11);
    assert_eq!(ta.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "scene")).count(), 10);
    assert_eq!(ta, tree(&b));

    ok(&["generate", "--seed", "3", "--count", "0", "--out", s(&z)]);
    let manifest = std::fs::read_to_string(z.join("manifest.toml")).unwrap();
    assert!(!manifest.contains("[[scenes]]"));

    let err = fails(&["generate", "--count", "2", "--min-obstacles", "5", "--max-obstacles", "1", "--out", s(&z)]);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn score_command() {
    assert_eq!(ok(&["score", "--l2", "3.07", "--col", "0.71", "--off", "0.89"]).trim(), "0.591");
    assert_eq!(ok(&["score", "--l2", "2.56", "--col", "0.96", "--off", "0.39"]).trim(), "0.854");
    assert_eq!(ok(&["score", "--l2", "2.67", "--col", "0.67", "--off", "0.46"]).trim(), "0.841");
    assert_eq!(ok(&["score", "--l2", "3.5", "--col", "2.0", "--off", "2.5"]).trim(), "0.000");
    fails(&["score", "--l2", "abc", "--col", "1", "--off", "1"]);
}

#[test]
fn train_eval_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let (train, val) = (d.join("train"), d.join("val"));
    ok(&["generate", "--seed", "1", "--count", "12", "--out", s(&train)]);
    ok(&["generate", "--seed", "2", "--count", "6", "--out", s(&val)]);

    let run = |name: &str, extra: &[&str]| {
        let out = d.join(name);
        let mut args = vec!["train", "--config", s(&cfg), "--data", s(&train), "--val", s(&val), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let r1 = run("r1", &[]);
    let r2 = run("r2", &[]);
    let ck = std::fs::read(r1.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck, std::fs::read(r2.join(CHECKPOINT_FILE)).unwrap(), "training is deterministic");
    let log = std::fs::read_to_string(r1.join(LOSS_LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 3);

    // checkpoint save → load → save is byte-stable
    let state = checkpoint::load(&r1.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(checkpoint::encode(&state), ck);

    let no_ep = run("no_ep", &["--ablation", "NO_EP"]);
    assert!(no_ep.join(CHECKPOINT_FILE).exists());

    let ckpt = r1.join(CHECKPOINT_FILE);
    let eval = |name: &str, extra: &[&str]| {
        let out = d.join(name);
        let mut args = vec!["eval", "--checkpoint", s(&ckpt), "--data", s(&val), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let full = eval("e_full", &[]);
    let again = eval("e_again", &["--workers", "3"]);
    assert_eq!(tree(&full), tree(&again), "evaluation is reproducible and worker-count independent");
    let no_pom = eval("e_no_pom", &["--ablation", "NO_POM"]);
    let (a, b) = (
        read_report(&full.join(METRICS_FILE)).unwrap(),
        read_report(&no_pom.join(METRICS_FILE)).unwrap(),
    );
    assert_ne!(a, b);
    assert_eq!(a.n_scenes, 6);

    fails(&["eval", "--checkpoint", s(&ckpt), "--data", s(&val), "--out", s(&d.join("x")), "--horizons", "5,11"]);
    fails(&["eval", "--data", s(&val), "--out", s(&d.join("x"))]);
    fails(&["train", "--config", s(&cfg), "--data", s(&d.join("missing")), "--out", s(&d.join("x"))]);

    let gt = d.join("e_gt");
    ok(&["eval", "--gt-passthrough", "--data", s(&val), "--out", s(&gt)]);
    let rep = read_report(&gt.join(METRICS_FILE)).unwrap();
    assert_eq!(rep.l2.avg, Some(0.0));
    assert!((rep.score.unwrap() - 2.333).abs() < 1e-3);

    let scene = val.join("scene_00002.scene");
    let (p1, p2) = (d.join("p1.svg"), d.join("p2.svg"));
    ok(&["plot", "--report", s(&full), "--scene", s(&scene), "--out", s(&p1)]);
    ok(&["plot", "--report", s(&full), "--scene", s(&scene), "--out", s(&p2)]);
    let svg = std::fs::read_to_string(&p1).unwrap();
    assert_eq!(svg.as_bytes(), std::fs::read(&p2).unwrap());
    assert!(svg.starts_with(r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="640""#));

    let pg = d.join("gt.svg");
    ok(&["plot", "--report", s(&gt), "--scene", s(&scene), "--out", s(&pg), "--width", "300", "--height", "200"]);
    let svg = std::fs::read_to_string(&pg).unwrap();
    assert!(svg.contains(r#"width="300" height="200""#));
    let points = |id: &str| {
        let start = svg.find(&format!(r#"id="{id}" points=""#)).unwrap() + id.len() + 13;
        svg[start..].split('"').next().unwrap().to_string()
    };
    assert_eq!(points("gt"), points("pred"), "ground truth passed through overlays exactly");

    let other = d.join("other.scene");
    std::fs::copy(&scene, &other).unwrap();
    fails(&["plot", "--report", s(&full), "--scene", s(&other), "--out", s(&p1)]);
}

#[test]
fn interval_modes_on_jittered_and_exact_logs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tiny.toml");
    std::fs::write(&cfg, TINY.replacen("epochs = 2", "epochs = 0", 1)).unwrap();
    let (exact, jit) = (d.join("exact"), d.join("jit"));
    ok(&["generate", "--seed", "4", "--count", "6", "--out", s(&exact)]);
    ok(&["generate", "--seed", "4", "--count", "6", "--jitter", "0.2", "--out", s(&jit)]);
    let run = d.join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&exact), "--out", s(&run)]);
    let ckpt = run.join(CHECKPOINT_FILE);
    let eval = |data: &Path, mode: &str| {
        let out = d.join(format!("{}_{mode}", data.file_name().unwrap().to_str().unwrap()));
        ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(data), "--interval-mode", mode, "--out", s(&out)]);
        std::fs::read(out.join(METRICS_FILE)).unwrap()
    };
    assert_eq!(eval(&exact, "ACTUAL_DT"), eval(&exact, "FIXED_DT"));
    assert_ne!(eval(&jit, "ACTUAL_DT"), eval(&jit, "FIXED_DT"));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.toml");
    std::fs::write(&bad, "epochz = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mapplan"))
        .args(["train", "--data", s(d), "--out", s(&d.join("o"))])
        .env("MAPPLAN_CONFIG", &bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}
