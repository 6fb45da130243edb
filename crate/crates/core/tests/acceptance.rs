//! Runs every end-to-end check and prints one verdict line per check.
//! Exits nonzero on any failure outside the documented unattainable set.

use bubbletower::acceptance::{run_all, KNOWN_UNATTAINABLE};

fn main() {
    let fast = std::env::args().any(|a| a == "--fast");
    let outcomes = run_all(fast);
    let mut unexpected = 0;
    for o in &outcomes {
        let note = if !o.passed && KNOWN_UNATTAINABLE.contains(&o.id) {
            " (known unattainable at double precision)"
        } else {
            ""
        };
        println!("{}{note}", o.line());
        if !o.passed && !KNOWN_UNATTAINABLE.contains(&o.id) {
            unexpected += 1;
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} passed, {unexpected} unexpected failure(s)", outcomes.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
