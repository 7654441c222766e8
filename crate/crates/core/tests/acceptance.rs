//! Acceptance suite. Prints one line per criterion and fails if any fails.
//!
//! `ABPF_ACCEPTANCE_SIZE=small|full` selects the run sizes (default `full`).
//! Positional numeric arguments restrict the run to those criteria.

use std::process::ExitCode;
use std::time::Instant;

use abpf_core::acceptance::{self, Size};

fn main() -> ExitCode {
    let size: Size = std::env::var("ABPF_ACCEPTANCE_SIZE")
        .unwrap_or_else(|_| "full".into())
        .parse()
        .expect("ABPF_ACCEPTANCE_SIZE must be small or full");
    let mut ids: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|i| (1..=acceptance::COUNT).contains(i))
        .collect();
    if ids.is_empty() {
        ids = (1..=acceptance::COUNT).collect();
    }
    println!("acceptance suite ({size:?}), {} criteria", ids.len());
    let mut failed = vec![];
    for id in ids {
        let t = Instant::now();
        let o = acceptance::run(id, size);
        println!("{o}  ({:.1}s)", t.elapsed().as_secs_f64());
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
