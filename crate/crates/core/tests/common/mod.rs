#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn impa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impa")).args(args).output().expect("spawn impa")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn run_ok(args: &[&str]) -> String {
    let o = impa(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

pub fn small() -> String {
    fixture("small.conf").display().to_string()
}

pub fn golden_cases(dir: &Path) -> Vec<(&'static str, Vec<String>)> {
    let cfg = small();
    let out = |n: &str| dir.join(n).display().to_string();
    let on = fixture("pump_on.csv").display().to_string();
    let off = fixture("pump_off.csv").display().to_string();
    let args = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    vec![
        ("flux-map.csv", args(&["flux-map", "--config", &cfg, "--out", &out("flux-map.csv")])),
        ("gain.csv", args(&["gain", "--config", &cfg, "--out", &out("gain.csv")])),
        ("saturate.csv", args(&["saturate", "--config", &cfg, "--out", &out("saturate.csv")])),
        ("noise.csv", args(&["noise", "--config", &cfg, "--out", &out("noise.csv")])),
        ("readout.csv", args(&["readout", "--config", &cfg, "--out", &out("readout.csv")])),
        ("tune.csv", args(&["tune", "--config", &cfg, "--out", &out("tune.csv")])),
        (
            "fit-t1.csv",
            args(&["fit", "t1", "--input", &fixture("t1_decay.csv").display().to_string(), "--out", &out("fit-t1.csv")]),
        ),
        (
            "fit-t2.csv",
            args(&["fit", "t2", "--input", &fixture("t2_ramsey.csv").display().to_string(), "--out", &out("fit-t2.csv")]),
        ),
        ("analyze.csv", args(&["analyze", "--config", &cfg, "--on", &on, "--off", &off, "--out", &out("analyze.csv")])),
    ]
}

/// Runs every golden case into `dir` and names the outputs that differ.
pub fn golden_mismatches(dir: &Path) -> Vec<String> {
    let mut bad = Vec::new();
    for (name, args) in golden_cases(dir) {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = impa(&refs);
        let same = o.status.success()
            && matches!(
                (std::fs::read(dir.join(name)), std::fs::read(golden(name))),
                (Ok(a), Ok(b)) if a == b
            );
        if !same {
            bad.push(name.to_string());
        }
    }
    bad
}
