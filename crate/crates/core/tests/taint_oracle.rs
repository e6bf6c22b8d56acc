//! Taint events checked against a brute-force def-use tracker on random
//! straight-line programs.

mod support;

use support::taint_oracle::{check_random_programs, PROGRAMS, SEED};

#[test]
fn random_programs_match_the_def_use_oracle() {
    let (_, elapsed) = check_random_programs(PROGRAMS, SEED).unwrap();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
}
