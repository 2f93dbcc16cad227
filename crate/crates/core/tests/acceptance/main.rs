//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! `ACCEPTANCE_ONLY=4,8` restricts the run to the listed criteria.

mod numerics;
mod oracle;
mod ordering;
mod protocol;
mod replay;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one criterion: pass flag and a one-line summary of the measurements.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "numerics suite", numerics::run),
        (2, "replay statistics", replay::run),
        (3, "oracle tracking", oracle::run),
        (4, "imitation learning smoke", ordering::imitation_smoke),
        (5, "demo-count generalization ordering", ordering::demo_count),
        (6, "network ablation ordering", ordering::network_ablation),
        (7, "task-policy ordering", ordering::task_policies),
        (8, "determinism", oracle::determinism),
        (9, "protocol equivalence", protocol::run),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} ({name}): {status} [{:.1}s] {}", started.elapsed().as_secs_f64(), verdict.detail);
        if !verdict.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
