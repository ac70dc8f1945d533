use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn sphrtf(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sphrtf"));
    c.args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, n: &str) -> Output {
    sphrtf(&["synth", "--out", dir.to_str().unwrap()], &[("SPHRTF_SYNTH_SUBJECTS", n)])
}

#[test]
fn same_seed_gives_identical_datasets() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(synth(a.path(), "2").status.success());
    assert!(synth(b.path(), "2").status.success());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() >= 8, "{:?}", ta.keys());
    assert_eq!(ta, tb);
}

#[test]
fn single_subject_synth() {
    let d = tempfile::tempdir().unwrap();
    let o = synth(d.path(), "1");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("S01").join("head.mesh").exists());
    assert!(!d.path().join("S02").exists());
}

#[test]
fn prepare_is_idempotent_and_reports_corrupt_meshes() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("data");
    let work = d.path().join("work");
    assert!(synth(&data, "2").status.success());
    let env = [("SPHRTF_DATASET_ROOT", data.to_str().unwrap())];
    let prep = || sphrtf(&["prepare", "--out", work.to_str().unwrap()], &env);

    let first = prep();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(String::from_utf8_lossy(&first.stdout).matches(": prepared").count(), 2);
    let before = tree(&work.join("prepared"));
    let second = prep();
    assert!(second.status.success());
    assert_eq!(String::from_utf8_lossy(&second.stdout).matches(": up to date").count(), 2);
    assert_eq!(tree(&work.join("prepared")), before);

    std::fs::write(data.join("S02").join("head.mesh"), "v 0 0\n").unwrap();
    let third = prep();
    assert!(!third.status.success());
    let err = String::from_utf8_lossy(&third.stderr);
    assert!(err.contains("S02"), "{err}");
    assert!(String::from_utf8_lossy(&third.stdout).contains("S01: up to date"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = sphrtf(&["synth", "--seed", "11", "--out", a.path().to_str().unwrap()], &[("SPHRTF_SYNTH_SUBJECTS", "1")]);
    assert!(o.status.success());
    let echo = a.path().join("config.resolved.toml");
    let text = std::fs::read_to_string(&echo).unwrap();
    assert!(text.contains("subjects = 1"), "{text}");
    let o = sphrtf(&["synth", "--config", echo.to_str().unwrap(), "--out", b.path().to_str().unwrap()], &[]);
    assert!(o.status.success());
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn bad_input_exits_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let o = sphrtf(&["synth", "--out", d.path().to_str().unwrap()], &[("SPHRTF_NO_SUCH_KEY", "1")]);
    assert!(!o.status.success());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let o = sphrtf(&["prepare", "--out", d.path().join("w").to_str().unwrap()], &[("SPHRTF_DATASET_ROOT", "/nonexistent/sphrtf")]);
    assert!(!o.status.success());
}
