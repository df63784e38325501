use std::path::Path;
use std::process::{Command, Output};

fn aoi_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi-lab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "[network]\nepisode_slots = 20\n[train]\nepisodes = 2\n[experiment]\neval_episodes = 2\n";

#[test]
fn baseline_is_reproducible_and_guards_its_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = aoi_lab(&["baseline", "--config", &cfg, "--policy", "random", "--seed", "3,4", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "trace.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let again = aoi_lab(&["baseline", "--config", &cfg, "--policy", "random", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&again), 7);
    let forced = aoi_lab(&["baseline", "--config", &cfg, "--policy", "random", "--out", a.to_str().unwrap(), "--force"]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(code(&aoi_lab(&["baseline", "--policy", "nope", "--out", out])), 2);
    assert_eq!(code(&aoi_lab(&["baseline", "--policy", "mappo", "--out", out])), 2);
    assert_eq!(code(&aoi_lab(&["eval", "--out", out])), 2);
    assert_eq!(code(&aoi_lab(&["train", "--config", "/nonexistent/exp.toml", "--out", out])), 3);
    let bad = write_config(dir.path(), "[network]\nnum_linkz = 4\n");
    assert_eq!(code(&aoi_lab(&["train", "--config", &bad, "--out", out])), 3);
    assert_eq!(code(&aoi_lab(&["eval", "--checkpoint", "/nonexistent.ckpt", "--out", out])), 4);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let under_file = blocker.join("sub");
    assert_eq!(code(&aoi_lab(&["baseline", "--policy", "threshold", "--out", under_file.to_str().unwrap()])), 8);
}

#[test]
fn eval_rejects_a_checkpoint_from_another_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let train = dir.path().join("train");
    let o = aoi_lab(&["train", "--config", &cfg, "--out", train.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = train.join("seed0/final.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let ok = aoi_lab(&["eval", "--config", &cfg, "--checkpoint", ckpt, "--out", dir.path().join("e1").to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    let five = write_config(dir.path(), &SMALL.replace("episode_slots = 20", "episode_slots = 20\nnum_links = 5"));
    let bad = aoi_lab(&["eval", "--config", &five, "--checkpoint", ckpt, "--out", dir.path().join("e2").to_str().unwrap()]);
    assert_eq!(code(&bad), 5);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("different configuration"));
}
