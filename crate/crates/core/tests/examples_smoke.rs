//! Builds the examples and runs each one to completion.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: [&str; 11] = [
    "prune_operators",
    "cyclic_gap",
    "parallel_gap",
    "baselines",
    "coverage_coupon",
    "convergence_diagnostics",
    "checkpoint_roundtrip",
    "idx_dataset",
    "gradient_check",
    "partitions",
    "config_run",
];

fn examples_dir() -> PathBuf {
    // target/<profile>/deps/<this test> -> target/<profile>/examples
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("examples")
}

#[test]
fn every_example_runs() {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let profile_dir = examples_dir();
    let mut build = Command::new(cargo);
    build.args(["build", "--quiet", "--examples", "-p", "gapsparse"]);
    if profile_dir.parent().and_then(|p| p.file_name()) == Some("release".as_ref()) {
        build.arg("--release");
    }
    let status = build.status().expect("cargo build --examples");
    assert!(status.success());
    for name in EXAMPLES {
        let out = Command::new(profile_dir.join(name)).output().expect(name);
        assert!(
            out.status.success(),
            "{name} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}
