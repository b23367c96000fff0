//! Program comparison and corpus statistics.
//!
//! Comparison is set-level: each flattened sub-action becomes a verb paired
//! with the unordered set of its objects, and predictions are scored by the
//! fraction that also occur in the ground truth.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{conditions, flatten, ObjectName, Program, SubAction, Verb};

/// Longest flattened sequence kept for training targets.
pub const MAX_SEQUENCE_LEN: usize = 9;

/// A sub-action with its argument order forgotten.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SoftSubAction {
    pub verb: Verb,
    pub objects: BTreeSet<ObjectName>,
}

impl From<&SubAction> for SoftSubAction {
    fn from(sa: &SubAction) -> Self {
        SoftSubAction {
            verb: sa.verb,
            objects: sa.args.iter().cloned().collect(),
        }
    }
}

impl std::fmt::Display for SoftSubAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{{", self.verb)?;
        for (i, o) in self.objects.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{o}")?;
        }
        f.write_str("}")
    }
}

pub type SubActionSet = BTreeSet<SoftSubAction>;

pub fn subaction_set(program: &Program) -> SubActionSet {
    flatten(program).iter().map(SoftSubAction::from).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// |pred ∩ gt| / |pred|, or 1 when the prediction is empty.
    pub containment_score: f64,
    pub set_equal: bool,
    pub verb_accuracy: f64,
    pub object_accuracy: f64,
    /// In ground truth, not predicted.
    pub missing: SubActionSet,
    /// Predicted, not in ground truth.
    pub extra: SubActionSet,
}

fn containment<T: Ord>(pred: &BTreeSet<T>, gt: &BTreeSet<T>) -> f64 {
    if pred.is_empty() {
        1.0
    } else {
        pred.intersection(gt).count() as f64 / pred.len() as f64
    }
}

/// Verb accuracy uses the verb-only projection of both sets; object
/// accuracy uses the set of all objects named. Both share the containment
/// formula.
pub fn compare(predicted: &Program, ground_truth: &Program) -> ComparisonReport {
    let pred = subaction_set(predicted);
    let gt = subaction_set(ground_truth);
    let verbs = |s: &SubActionSet| s.iter().map(|x| x.verb).collect::<BTreeSet<_>>();
    let objects = |s: &SubActionSet| {
        s.iter()
            .flat_map(|x| x.objects.iter().cloned())
            .collect::<BTreeSet<_>>()
    };
    let missing: SubActionSet = gt.difference(&pred).cloned().collect();
    let extra: SubActionSet = pred.difference(&gt).cloned().collect();
    ComparisonReport {
        containment_score: containment(&pred, &gt),
        set_equal: missing.is_empty() && extra.is_empty(),
        verb_accuracy: containment(&verbs(&pred), &verbs(&gt)),
        object_accuracy: containment(&objects(&pred), &objects(&gt)),
        missing,
        extra,
    }
}

/// Every `if`/`while` condition rendered as `if <condition>`, joined with
/// ` and `.
pub fn aggregate_preconditions(program: &Program) -> String {
    conditions(program)
        .iter()
        .map(|(_, c)| format!("if {c}"))
        .collect::<Vec<_>>()
        .join(" and ")
}

pub fn truncate_sequence(seq: &[SubAction]) -> Vec<SubAction> {
    seq.iter().take(MAX_SEQUENCE_LEN).cloned().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    /// Verb class to (flattened length to number of programs).
    pub subactions_per_verb: BTreeMap<String, BTreeMap<usize, usize>>,
    pub object_frequency: BTreeMap<ObjectName, usize>,
    pub program_count: usize,
    pub parse_failure_count: usize,
}

impl CorpusStats {
    pub fn add(&mut self, verb_class: &str, program: &Program) {
        let len = flatten(program).len();
        *self
            .subactions_per_verb
            .entry(verb_class.to_string())
            .or_default()
            .entry(len)
            .or_default() += 1;
        for sa in flatten(program) {
            for o in sa.args {
                *self.object_frequency.entry(o).or_default() += 1;
            }
        }
        for (_, c) in conditions(program) {
            for o in c.predicate.args() {
                *self.object_frequency.entry(o.clone()).or_default() += 1;
            }
        }
        self.program_count += 1;
    }

    /// Associative, commutative combination of partial statistics.
    pub fn merge(mut self, other: CorpusStats) -> CorpusStats {
        for (class, hist) in other.subactions_per_verb {
            let mine = self.subactions_per_verb.entry(class).or_default();
            for (len, n) in hist {
                *mine.entry(len).or_default() += n;
            }
        }
        for (o, n) in other.object_frequency {
            *self.object_frequency.entry(o).or_default() += n;
        }
        self.program_count += other.program_count;
        self.parse_failure_count += other.parse_failure_count;
        self
    }

    /// `verb_class,subaction_count,frequency`, sorted by class then count.
    pub fn subactions_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["verb_class", "subaction_count", "frequency"])
            .expect("in-memory write");
        for (class, hist) in &self.subactions_per_verb {
            for (len, n) in hist {
                w.write_record([class.as_str(), &len.to_string(), &n.to_string()])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// `object,frequency`, sorted by object name.
    pub fn objects_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["object", "frequency"]).expect("in-memory write");
        for (o, n) in &self.object_frequency {
            w.write_record([o.as_str(), &n.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Histogram of flattened lengths per externally supplied verb class, and
/// object occurrence counts over sub-action arguments and conditions.
pub fn corpus_stats<'a>(programs: impl IntoIterator<Item = (&'a str, &'a Program)>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for (class, p) in programs {
        stats.add(class, p);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn prog(body: &str) -> Program {
        parse_program(&format!("def p(start_t=0, stop_t=1):\n{body}")).unwrap()
    }

    #[test]
    fn identity_scores_one() {
        let p = prog("    goto(cup)\n    grasp(cup)\n");
        let r = compare(&p, &p);
        assert_eq!(r.containment_score, 1.0);
        assert!(r.set_equal);
        assert_eq!((r.verb_accuracy, r.object_accuracy), (1.0, 1.0));
    }

    #[test]
    fn strict_subset_is_contained_but_not_equal() {
        let pred = prog("    grasp(cup)\n");
        let gt = prog("    goto(cup)\n    grasp(cup)\n");
        let r = compare(&pred, &gt);
        assert_eq!(r.containment_score, 1.0);
        assert!(!r.set_equal);
        assert_eq!(r.missing.len(), 1);
    }

    #[test]
    fn extra_prediction_halves_score() {
        let pred = prog("    grasp(cup)\n    use(faucet, cup)\n");
        let gt = prog("    grasp(cup)\n");
        let r = compare(&pred, &gt);
        assert_eq!(r.containment_score, 0.5);
        let extra: Vec<String> = r.extra.iter().map(ToString::to_string).collect();
        assert_eq!(extra, ["use{cup,faucet}"]);
        assert_eq!(r.verb_accuracy, 0.5);
        assert_eq!(r.object_accuracy, 0.5);
    }

    #[test]
    fn argument_order_is_soft() {
        let a = prog("    use(faucet, cup)\n");
        let b = prog("    use(cup, faucet)\n");
        assert!(compare(&a, &b).set_equal);
    }

    #[test]
    fn empty_prediction_scores_one() {
        let r = compare(&prog(""), &prog("    wait()\n"));
        assert_eq!(r.containment_score, 1.0);
        assert!(!r.set_equal);
    }

    #[test]
    fn aggregation_sentence() {
        let p = prog("    if cucumber not in hand:\n        grab(cucumber)\n    if faucet not open:\n        use(faucet)\n");
        assert_eq!(
            aggregate_preconditions(&p),
            "if cucumber not in hand and if faucet not open"
        );
        assert_eq!(aggregate_preconditions(&prog("    wait()\n")), "");
    }

    #[test]
    fn truncation_boundary() {
        let seq = |n: usize| vec![SubAction::parse_call(Verb::Wait, &[]); n];
        assert_eq!(truncate_sequence(&seq(3)).len(), 3);
        assert_eq!(truncate_sequence(&seq(9)).len(), 9);
        assert_eq!(truncate_sequence(&seq(12)), seq(9));
    }

    #[test]
    fn stats_histogram_and_csv() {
        let a = prog("    goto(carrot)\n    grasp(carrot)\n");
        let b = prog("    if fridge not open:\n        use(fridge)\n    goto(carrot)\n    grasp(carrot)\n    release(carrot)\n");
        let stats = corpus_stats([("take", &a), ("take", &b)]);
        assert_eq!(stats.subactions_per_verb["take"], BTreeMap::from([(2, 1), (4, 1)]));
        assert_eq!(stats.object_frequency[&ObjectName::new("carrot").unwrap()], 5);
        assert_eq!(stats.object_frequency[&ObjectName::new("fridge").unwrap()], 2);
        assert_eq!(stats.subactions_csv(), "verb_class,subaction_count,frequency\ntake,2,1\ntake,4,1\n");
        assert_eq!(stats.objects_csv(), "object,frequency\ncarrot,5\nfridge,2\n");
        let empty = corpus_stats(std::iter::empty());
        assert_eq!(empty, CorpusStats::default());
        assert_eq!(
            corpus_stats([("take", &a)]).merge(corpus_stats([("take", &b)])),
            stats
        );
    }
}
