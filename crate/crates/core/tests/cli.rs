use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowpf::cli::{LONG_HEADER, REPORT_HEADER, SUMMARY_HEADER};

const SMALL: &str = "\
image_size = 8
n_distractors = 1
steps = 4
n_train = 3
n_val = 1
n_test = 2
n_particles = 8
batch_size = 2
embed_dim = 4
obs_hidden = 8
state_hidden = 4
action_hidden = 4
flow_layers = 2
flow_hidden = 4
block_len = 2
";

fn flowpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowpf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flowpf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
    cfg: String,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
        let cfg = s(&dir.path().join("run.cfg")).to_string();
        let w = Workspace { dir, cfg };
        ok(&["generate", "--config", w.cfg(), "--seed", "3", "--out", w.path("data.bin").to_str().unwrap()]);
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cfg(&self) -> &str {
        &self.cfg
    }

    fn train(&self, method: &str, epochs: usize, out: &str, extra: &[&str]) -> String {
        let (ckpt, data) = (self.path(out), self.path("data.bin"));
        let epochs = format!("epochs={epochs}");
        let mut args = vec![
            "train", "--config", self.cfg(), "--method", method, "--seed", "1", "--set", &epochs,
            "--dataset", s(&data), "--out", s(&ckpt),
        ];
        args.extend_from_slice(extra);
        ok(&args)
    }
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = ok(&["generate", "--config", s(&cfg), "--set", "n_train=3", "--seed", "9", "--out", s(&a)]);
    assert!(out.contains("wrote 6 trajectories"), "{out}");
    ok(&["generate", "--config", s(&cfg), "--set", "n_train=3", "--seed", "9", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ok(&["generate", "--config", s(&cfg), "--seed", "10", "--out", s(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn generate_writes_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let frames = dir.path().join("frames");
    ok(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("d.bin")), "--png", s(&frames)]);
    let n = std::fs::read_dir(&frames).unwrap().count();
    assert_eq!(n, 3 * 4);
}

#[test]
fn bad_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.bin");
    for set in ["n_distractors=-1", "colour=red", "method=kalman", "lr"] {
        let r = flowpf(&["generate", "--set", set, "--out", s(&out)]);
        assert_eq!(r.status.code(), Some(2), "{set}");
        assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
    }
    assert!(!out.exists());
}

#[test]
fn unreadable_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a dataset").unwrap();
    let r = flowpf(&["train", "--dataset", s(&junk), "--out", s(&dir.path().join("c.ckpt"))]);
    assert_eq!(r.status.code(), Some(3));
    let missing = dir.path().join("missing.bin");
    let r = flowpf(&["train", "--dataset", s(&missing), "--out", s(&dir.path().join("c.ckpt"))]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.bin"));
}

#[test]
fn zero_epochs_write_initial_checkpoint() {
    let w = Workspace::new();
    let out = w.train("cnf-sdpf", 0, "c0.ckpt", &[]);
    assert!(out.contains("no epochs run"), "{out}");
    assert!(w.path("c0.ckpt").exists());
    let metrics = std::fs::read_to_string(w.path("c0.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
}

#[test]
fn metrics_have_one_row_per_epoch() {
    let w = Workspace::new();
    let m = w.path("m.csv");
    w.train("dpf", 3, "dpf.ckpt", &["--metrics", s(&m)]);
    let text = std::fs::read_to_string(&m).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    assert!(text.lines().skip(1).all(|l| !l.contains("NaN")));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let w = Workspace::new();
    w.train("cnf-sdpf", 4, "full.ckpt", &[]);
    w.train("cnf-sdpf", 2, "half.ckpt", &[]);
    let half = w.path("half.ckpt");
    w.train("cnf-sdpf", 4, "resumed.ckpt", &["--resume", s(&half)]);
    assert_eq!(std::fs::read(w.path("full.ckpt")).unwrap(), std::fs::read(w.path("resumed.ckpt")).unwrap());
    assert_eq!(std::fs::read(w.path("full.csv")).unwrap(), std::fs::read(w.path("resumed.csv")).unwrap());

    // a different method cannot pick up this checkpoint
    let r = flowpf(&[
        "train", "--config", w.cfg(), "--method", "dpf", "--seed", "1", "--dataset", s(&w.path("data.bin")),
        "--out", s(&w.path("x.ckpt")), "--resume", s(&half),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn eval_and_export_produce_tables() {
    let w = Workspace::new();
    w.train("sdpf", 1, "sdpf.ckpt", &[]);
    let report = w.path("report.csv");
    let summary = w.path("summary.csv");
    let out = ok(&[
        "eval", "--config", w.cfg(), "--dataset", s(&w.path("data.bin")), "--checkpoint", s(&w.path("sdpf.ckpt")),
        "--out", s(&report), "--summary", s(&summary),
    ]);
    assert!(out.starts_with("sdpf: test RMSE"), "{out}");

    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    assert_eq!(lines.count(), 2 * 4);

    let text = std::fs::read_to_string(&summary).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("sdpf,1,"));

    let long = w.path("long.csv");
    let overlay = w.path("overlay.csv");
    ok(&["export", "--report", s(&report), "--out", s(&long), "--overlay", s(&overlay), "--traj", "1"]);
    let text = std::fs::read_to_string(&long).unwrap();
    assert_eq!(text.lines().next(), Some(LONG_HEADER));
    assert_eq!(text.lines().count(), 1 + 4);
    let text = std::fs::read_to_string(&overlay).unwrap();
    assert_eq!(text.lines().next(), Some("t,truth_x,truth_y,sdpf_x,sdpf_y"));
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn export_of_empty_report_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("empty.csv");
    std::fs::write(&report, format!("{REPORT_HEADER}\n")).unwrap();
    let long = dir.path().join("long.csv");
    ok(&["export", "--report", s(&report), "--out", s(&long)]);
    assert_eq!(std::fs::read_to_string(&long).unwrap(), format!("{LONG_HEADER}\n"));
}
