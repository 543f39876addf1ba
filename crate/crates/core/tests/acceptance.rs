//! Runs the ten acceptance criteria and prints one line per criterion.

use nlsplit::acceptance::{run_all, AcceptOptions};

#[test]
fn acceptance_suite() {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let report = run_all(&AcceptOptions { jobs, ..Default::default() });
    println!();
    for r in &report.results {
        println!("{}", r.line());
    }
    assert_eq!(report.results.len(), 10);
    let failed: Vec<u8> = report.results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
