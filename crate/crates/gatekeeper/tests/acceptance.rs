//! Acceptance suite: runs every criterion at its pinned tolerance and
//! prints one pass/fail line per criterion. `cargo test --test acceptance`
//! is the release gate; the `selfcheck` CLI subcommand runs the same
//! checks.

use gatekeeper::harness::selfcheck;

#[test]
fn acceptance_criteria() {
    let results = selfcheck::run_all(1);
    assert_eq!(results.len(), 10);
    let mut failed = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed.push(r.id);
        }
    }
    let total: f64 = results.iter().map(|r| r.seconds).sum();
    println!(
        "{}/{} criteria passed in {total:.1}s",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
