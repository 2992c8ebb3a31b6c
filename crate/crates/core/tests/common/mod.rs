#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Copies a fixture directory (non-recursively for files, recursing into
/// subdirectories) into `dst`.
pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            fs::copy(entry.path(), to).unwrap();
        }
    }
}

/// Runs the CLI in-process and returns its exit code.
pub fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["morphvuln"];
    full.extend_from_slice(args);
    morphvuln::cli::run_from(full)
}

pub mod oracles;
pub mod synth;

/// A Python stub adapter from `tests/fixtures/adapters`.
pub fn stub_adapter(script: &str, args: &[&str]) -> morphvuln::adapter::AdapterCommand {
    let path = fixture_dir("adapters").join(script);
    let mut full = vec![path.display().to_string()];
    full.extend(args.iter().map(|a| a.to_string()));
    morphvuln::adapter::AdapterCommand::new("python3", full)
        .with_timeout(std::time::Duration::from_secs(30))
}
