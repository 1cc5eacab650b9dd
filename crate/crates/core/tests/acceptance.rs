//! One PASS/FAIL line per acceptance criterion. Tolerances live in
//! `stability_core::harness`; this target only runs and prints them.

use std::process::ExitCode;
use std::time::Instant;

use stability_core::harness::{criterion, Settings, CRITERIA};
use stability_core::tape::RandomTape;

const SEED: u128 = 0x5eed;

fn main() -> ExitCode {
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let settings = Settings::default();
    let root = RandomTape::from_u128(SEED);
    let mut failed = 0;
    for (i, name) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let r = criterion(id, &settings, &root.derive(id as u64), &format!("{SEED:x}"));
        let detail: Vec<String> = r
            .metrics
            .iter()
            .map(|(k, m)| format!("{k}={:.6} ({:?} {:.6})", m.value, m.cmp, m.bound))
            .collect();
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1}s]",
            if r.pass { "PASS" } else { "FAIL" },
            detail.join(", "),
            start.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
