//! Acceptance suite: runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line each. Arguments that are criterion numbers
//! restrict the run; other arguments (as passed by `cargo test`) are ignored.

use std::process::ExitCode;

use zr_stefan::harness::acceptance::run_selected;

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let outcomes = run_selected(&selected, |o| println!("{o}"));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        println!("acceptance: {failed} of {} criteria failed", outcomes.len());
        ExitCode::FAILURE
    } else {
        println!("acceptance: {} criteria passed", outcomes.len());
        ExitCode::SUCCESS
    }
}
