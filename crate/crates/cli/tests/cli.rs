use std::path::Path;
use std::process::{Command, Output};

const HEAT: &str = "
[mesh]
annulus = 0.5 1.0 17 7
[pde]
pde = heat
[bc]
T bottom dirichlet param
T top dirichlet 0
T left periodic
T right periodic
[params]
kind = bc_value
train = 1 3
test = 2
input = interp
[train]
iterations = 5
batch = 2
hidden = 2 3 2
";

fn geopinn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geopinn")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&geopinn(&[], dir.path())), 1);
    assert_eq!(code(&geopinn(&["train"], dir.path())), 1);
    assert_eq!(code(&geopinn(&["frobnicate", "x.cfg"], dir.path())), 1);
    assert_eq!(code(&geopinn(&["--help"], dir.path())), 0);
    // unreadable or malformed config
    assert_eq!(code(&geopinn(&["mesh", "missing.cfg"], dir.path())), 1);
    std::fs::write(dir.path().join("bad.cfg"), HEAT.replace("T top dirichlet 0", "T top dirichlet zero")).unwrap();
    let o = geopinn(&["mesh", "bad.cfg"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:8:"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mesh_train_eval_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ring.cfg"), HEAT).unwrap();

    assert_eq!(code(&geopinn(&["mesh", "ring.cfg"], d)), 0);
    assert!(d.join("runs/ring/mesh_1.txt").exists());

    let o = geopinn(&["train", "ring.cfg", "--seed", "4"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hist = std::fs::read_to_string(d.join("runs/ring/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 6);
    assert!(hist.starts_with("iteration,loss,laplace\n"));

    let o = geopinn(&["eval", "ring.cfg", "--checkpoint", "runs/ring/checkpoint.bin", "--params", "1.5,2.5"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let errors = std::fs::read_to_string(d.join("runs/ring/errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 3);
    let field = std::fs::read_to_string(d.join("runs/ring/field_2.5.txt")).unwrap();
    assert!(field.starts_with("field 1 17 7 T"));

    assert_eq!(code(&geopinn(&["oracle", "ring.cfg", "--out", "ref"], d)), 0);
    assert!(d.join("ref/oracle_3.txt").exists());
}

#[test]
fn checkpoint_from_another_case_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.cfg"), HEAT).unwrap();
    std::fs::write(d.join("b.cfg"), HEAT.replace("hidden = 2 3 2", "hidden = 2 2 2")).unwrap();
    assert_eq!(code(&geopinn(&["train", "a.cfg", "--iterations", "1"], d)), 0);
    assert_eq!(code(&geopinn(&["eval", "b.cfg", "--checkpoint", "runs/a/checkpoint.bin"], d)), 1);
}

#[test]
fn diverging_training_exits_2_and_keeps_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("blowup.cfg"), HEAT.replace("iterations = 5", "iterations = 50\nlr = 1e200")).unwrap();
    let o = geopinn(&["train", "blowup.cfg"], d);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("runs/blowup/checkpoint.bin").exists());
}

#[test]
fn sample_source_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/case5_smoke.cfg");
    let cfg = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&geopinn(&["sample-source", cfg, "--seed", "11", "--out", out], d)), 0);
    }
    let a = std::fs::read(d.join("a/source_seed11.txt")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/source_seed11.txt")).unwrap());
    // heat case has no random field
    std::fs::write(d.join("ring.cfg"), HEAT).unwrap();
    assert_eq!(code(&geopinn(&["sample-source", "ring.cfg", "--seed", "1"], d)), 1);
}
