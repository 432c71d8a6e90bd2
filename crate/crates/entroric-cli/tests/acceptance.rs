//! Acceptance gate, frontend half: seeded runs must be exactly
//! reproducible. Prints one `criterion N: PASS/FAIL` line.

use std::process::{Command, Output};

fn entroric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroric"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn criterion_9_seeded_runs_are_reproducible() {
    let estimate_args = [
        "--seed",
        "11",
        "--format",
        "json",
        "estimate",
        "bl(4,2)",
        "--starts",
        "6",
        "--iterations",
        "80",
    ];
    let first = entroric(&estimate_args);
    let second = entroric(&estimate_args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(
        first.stdout, second.stdout,
        "estimate reports differ between identically seeded runs"
    );
    assert!(!first.stdout.is_empty());

    let transport_args = [
        "--seed",
        "11",
        "transport",
        "complete(3)",
        "--grid",
        "24",
        "--refinements",
        "1",
    ];
    let first = entroric(&transport_args);
    let second = entroric(&transport_args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(
        first.stdout, second.stdout,
        "transport reports differ between identically seeded runs"
    );

    // A different seed samples different endpoints, so the reports are
    // allowed (and expected) to differ; this guards against the seed flag
    // being ignored.
    let other = entroric(&[
        "--seed",
        "12",
        "transport",
        "complete(3)",
        "--grid",
        "24",
        "--refinements",
        "1",
    ]);
    assert_ne!(first.stdout, other.stdout, "seed flag has no effect");

    println!(
        "criterion 9: PASS - byte-identical estimate and transport reports under a fixed seed"
    );
}
