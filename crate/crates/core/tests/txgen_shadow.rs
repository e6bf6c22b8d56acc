//! Sequence generation compared choice by choice with a shadow
//! implementation of the algorithm.

mod support;

use crbg_core::txgen::{categorize, ChoiceSource};
use support::shadow::{check, fallback_fixture, keyword_fixture, unprioritized_fixture, RUNS};

#[test]
fn keyword_fixture_matches_the_shadow() {
    let m = keyword_fixture();
    let groups = categorize(&m).unwrap();
    assert_eq!(groups.f_all.len(), 4, "the view is not selectable");
    let lines = check(&m, &groups).unwrap();
    assert_eq!(lines[&ChoiceSource::Keyword], RUNS as usize * 4);
    assert!(lines[&ChoiceSource::Dependency] > 0 && lines[&ChoiceSource::All] > 0);
}

#[test]
fn fallback_fixture_matches_the_shadow() {
    let m = fallback_fixture();
    let groups = categorize(&m).unwrap();
    assert!(groups.f_kws.is_empty());
    assert!(
        groups.f_payable.contains(&m.functions.len()),
        "payable fallback is a payable candidate"
    );
    let lines = check(&m, &groups).unwrap();
    assert_eq!(lines[&ChoiceSource::Payable], RUNS as usize * 4);
    assert!(lines[&ChoiceSource::Dependency] > 0);
}

#[test]
fn unprioritized_fixture_matches_the_shadow() {
    let (m, groups) = unprioritized_fixture();
    let lines = check(&m, &groups).unwrap();
    assert_eq!(lines[&ChoiceSource::AllFirst], RUNS as usize * 4);
    assert!(lines[&ChoiceSource::Dependency] > 0);
}
