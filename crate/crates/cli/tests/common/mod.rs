#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use stcx::config::RunConfig;

/// Small world and short runs so every subcommand finishes in seconds.
pub const SMALL: &str = "\
num_clips = 10
steps = 20
batch_size = 4
log_every = 5
eval_every = 0
ablation_seeds = 1
";

pub fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

/// Runs the `stcx` binary inside `dir`.
pub fn stcx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcx"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn stcx")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Config anchored in `dir` (paths resolved against it).
pub fn config_in(dir: &Path, text: &str) -> RunConfig {
    let mut config = RunConfig::parse(text).unwrap();
    config.data_dir = dir.join("data");
    config.checkpoint = dir.join("run/checkpoint.stcx");
    config.report = dir.join("run/report.txt");
    config
}

/// Every file below `dir` with its bytes, in path order.
pub fn snapshot(dir: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}
