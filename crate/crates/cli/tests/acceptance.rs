//! Full acceptance battery. Prints every check and one PASS/FAIL line per
//! criterion; exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use torusflux::verify::{run_criterion, Check, Scale, CRITERIA, DEFAULT_SEED};

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Runs a fixed command sequence in two fresh directories and compares every
/// output file byte for byte.
fn command_determinism() -> Vec<Check> {
    let script: &[&[&str]] = &[
        &["generate", "--kind", "lacunary", "--n", "64", "--alpha", "0.5", "--p", "2", "--name", "lac"],
        &["generate", "--kind", "random-smooth", "--dim", "3", "--n", "16", "--decay-rate", "2", "--name", "rs"],
        &["generate", "--kind", "random-smooth", "--n", "64", "--decay-rate", "2", "--name", "rs2"],
        &["norms", "--input", "out/lac.tfld", "--alpha", "0.5", "--p", "2"],
        &["fluxscan", "--input", "out/rs.tfld", "--kind", "helicity_LP", "--p", "2.5", "--alpha", "0.4", "--theta", "2", "--beta", "0.3"],
        &["fluxscan", "--input", "out/rs2.tfld", "--kind", "energy_moll", "--p", "3", "--ladder", "0.78:0.4:1.18"],
        &["mollscan", "--input", "out/lac.tfld", "--ladder", "0.78:0.4:1.15", "--p", "2", "--alpha", "0.5"],
        &["simulate", "--input", "out/rs.tfld", "--t-final", "0.05", "--snapshot-every", "1"],
        &["report"],
    ];
    let mut roots = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        for args in script {
            let out = Command::new(env!("CARGO_BIN_EXE_torusflux"))
                .current_dir(dir.path())
                .args(["--seed", "21"])
                .args(*args)
                .output()
                .unwrap();
            if !out.status.success() {
                let msg = format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr));
                return vec![fail("command run", msg)];
            }
        }
        roots.push(dir);
    }
    let a = files(roots[0].path());
    let b = files(roots[1].path());
    let rel = |root: &Path, f: &[PathBuf]| f.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect::<Vec<_>>();
    let same_names = rel(roots[0].path(), &a) == rel(roots[1].path(), &b);
    let differing = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .count();
    let n = a.len();
    vec![
        check("command outputs: same file set", if same_names { 0.0 } else { 1.0 }, format!("{n} files")),
        check("command outputs: differing files", differing as f64, format!("{n} files")),
    ]
}

fn check(name: &str, value: f64, detail: String) -> Check {
    Check {
        criterion: 11,
        name: name.into(),
        passed: value == 0.0,
        value,
        relation: torusflux::verify::Relation::AtMost,
        tolerance: 0.0,
        detail,
    }
}

fn fail(name: &str, detail: String) -> Check {
    Check { passed: false, value: f64::NAN, ..check(name, 1.0, detail) }
}

fn main() -> ExitCode {
    let mut summary = Vec::new();
    for (id, title) in CRITERIA {
        let start = Instant::now();
        let mut checks = run_criterion(id, Scale::Full, DEFAULT_SEED);
        if id == 11 {
            checks.extend(command_determinism());
        }
        for c in &checks {
            println!("    {c}");
        }
        let passed = checks.iter().filter(|c| c.passed).count();
        let ok = passed == checks.len() && !checks.is_empty();
        let line = format!(
            "criterion {id:>2} {}: {title} ({passed}/{} checks, {:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            checks.len(),
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        summary.push((ok, line));
    }
    println!("\nacceptance summary");
    for (_, line) in &summary {
        println!("{line}");
    }
    if summary.iter().all(|(ok, _)| *ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
