mod support;

use leap_core::analytics::{aggregate_preconditions, compare, corpus_stats, truncate_sequence, CorpusStats};
use leap_core::corpus::{CLEAN_CUCUMBER, EXEMPLAR_LIBRARY, EXEMPLAR_VERB_CLASSES};
use leap_core::testing::arb_program;
use leap_core::{flatten, parse_corpus, parse_program, Program};
use proptest::prelude::*;
use support::line_counter::{count, verb_classes};

fn exemplar_stats() -> CorpusStats {
    let classes = verb_classes(EXEMPLAR_VERB_CLASSES);
    let corpus = parse_corpus(EXEMPLAR_LIBRARY);
    let programs: Vec<&Program> = corpus.programs().collect();
    corpus_stats(programs.iter().map(|p| (classes[&p.name].as_str(), *p)))
}

#[test]
fn exemplar_stats_match_the_line_counter() {
    let stats = exemplar_stats();
    let oracle = count(EXEMPLAR_LIBRARY, &verb_classes(EXEMPLAR_VERB_CLASSES));
    assert_eq!(stats.program_count, oracle.programs);
    assert_eq!(stats.program_count, 20);
    let lengths: std::collections::BTreeMap<(String, usize), usize> = stats
        .subactions_per_verb
        .iter()
        .flat_map(|(c, h)| h.iter().map(move |(k, n)| ((c.clone(), *k), *n)))
        .collect();
    assert_eq!(lengths, oracle.lengths);
    let objects: std::collections::BTreeMap<String, usize> = stats
        .object_frequency
        .iter()
        .map(|(o, n)| (o.as_str().to_string(), *n))
        .collect();
    assert_eq!(objects, oracle.objects);
}

#[test]
fn exemplar_stats_match_the_golden_csv() {
    let stats = exemplar_stats();
    assert_eq!(stats.subactions_csv(), include_str!("golden/exemplar_subactions.csv"));
    assert_eq!(stats.objects_csv(), include_str!("golden/exemplar_objects.csv"));
}

#[test]
fn golden_program_aggregates_its_conditions() {
    let p = parse_program(CLEAN_CUCUMBER).unwrap();
    assert_eq!(aggregate_preconditions(&p), "if cucumber not in hand and if cucumber not clean");
}

#[test]
fn truncation_keeps_at_most_nine() {
    let corpus = parse_corpus(EXEMPLAR_LIBRARY);
    for p in corpus.programs() {
        let seq = flatten(p);
        let t = truncate_sequence(&seq);
        assert_eq!(t.len(), seq.len().min(9));
        assert_eq!(t[..], seq[..t.len()]);
    }
}

proptest! {
    #[test]
    fn compare_is_reflexive_and_bounded(a in arb_program(), b in arb_program()) {
        let r = compare(&a, &a);
        prop_assert_eq!(r.containment_score, 1.0);
        prop_assert!(r.set_equal);
        let r = compare(&a, &b);
        prop_assert!((0.0..=1.0).contains(&r.containment_score));
        prop_assert_eq!(r.set_equal, compare(&b, &a).set_equal);
    }

    #[test]
    fn merge_is_associative(a in arb_program(), b in arb_program(), c in arb_program()) {
        let s = |p: &Program| corpus_stats([("x", p)]);
        prop_assert_eq!(
            s(&a).merge(s(&b)).merge(s(&c)),
            s(&a).merge(s(&b).merge(s(&c)))
        );
    }
}
