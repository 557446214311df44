//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at full budget (several minutes on one core). Set
//! `GHOSTLAB_ACCEPTANCE_QUICK=1` for a smoke run with reduced trials and
//! frames; its verdicts are indicative only.

use ghostlab_cli::selftest::{run_all, SelftestOptions};

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance_criteria: test");
        return;
    }
    let quick = std::env::var("GHOSTLAB_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let opts = SelftestOptions {
        seed: 20240611,
        quick,
        artifact_dir: None,
    };
    let outcomes = run_all(&opts, |outcome, seconds| {
        println!("{outcome} ({seconds:.1} s)");
    });
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
