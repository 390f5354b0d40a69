use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pim-ivfpq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const SMALL: &[&str] = &[
    "--set",
    "synthetic.points=3000",
    "--set",
    "synthetic.queries=20",
    "--set",
    "synthetic.dim=16",
    "--set",
    "synthetic.subspaces=4",
    "--set",
    "synthetic.groups=8",
    "--set",
    "nclusters=8",
    "--set",
    "m=4",
    "--set",
    "kstar=32",
    "--set",
    "nprobe=3",
    "--set",
    "ndpu=4",
];

fn with_small<'a>(cmd: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut v = vec![cmd, "-o", out];
    v.extend_from_slice(SMALL);
    v
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn stages_match_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let staged = tmp.path().join("staged");
    let (f, s) = (full.to_str().unwrap(), staged.to_str().unwrap());
    let o = run(&with_small("run", f));
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("simulated QPS"));
    for stage in ["train", "place", "schedule", "simulate", "report"] {
        let o = run(&with_small(stage, s));
        assert!(o.status.success(), "{stage}: {}", text(&o));
    }
    for name in ["index.json", "placement.txt", "assignment_0000.csv", "cost_0000.csv", "results.csv", "report.json"] {
        assert_eq!(fs::read(full.join(name)).unwrap(), fs::read(staged.join(name)).unwrap(), "{name}");
    }
    let o = run(&with_small("search", s));
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("recall@10"));
    // the host search returns the same lists as the simulator
    assert_eq!(
        fs::read(staged.join("results_host.csv")).unwrap(),
        fs::read(staged.join("results.csv")).unwrap()
    );
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small run\nnclusters = 8\nm = 4\nkstar = 32\nnprobe = 3\nndpu = 4\nsynthetic.points = 3000\nsynthetic.queries = 10\nsynthetic.dim = 16\nsynthetic.subspaces = 4\n").unwrap();
    let out = tmp.path().join("o");
    let o = run(&["run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--set", "cooccur=true"]);
    assert!(o.status.success(), "{}", text(&o));
    let saved = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(saved.contains("cooccur = true") && saved.contains("nclusters = 8"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = tmp.path().join("o").to_str().unwrap().to_owned();
    assert_eq!(run(&["run", "-o", &o, "--set", "nprobe=0"]).status.code(), Some(1));
    assert_eq!(run(&["run", "-o", &o, "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(run(&["run", "-c", "/nonexistent/cfg"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // a base file with mixed dims is a runtime failure
    let bad = tmp.path().join("bad.fvecs");
    let mut bytes = Vec::new();
    bytes.extend(2i32.to_le_bytes());
    bytes.extend([0u8; 8]);
    bytes.extend(3i32.to_le_bytes());
    bytes.extend([0u8; 12]);
    fs::write(&bad, bytes).unwrap();
    let b = bad.to_str().unwrap();
    let r = run(&["run", "-o", &o, "--set", &format!("base={b}"), "--set", &format!("query={b}")]);
    assert_eq!(r.status.code(), Some(2), "{}", text(&r));
    assert!(text(&r).contains("record 1"));
    assert!(!Path::new(&out).exists());
    // stage commands need earlier artifacts
    assert_eq!(run(&with_small("place", &o)).status.code(), Some(1));
}

#[test]
fn project_fits_measurements() {
    let o = run(&["project", "--measure", "64:100", "--measure", "128:200", "--measure", "256:400", "--target", "2560"]);
    assert!(o.status.success(), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("R^2 1.0000") && t.contains("4000.0 QPS"), "{t}");
    assert_eq!(run(&["project", "--measure", "1:1", "--target", "3"]).status.code(), Some(1));
}
