//! Proptest strategies for well-formed programs.

use proptest::prelude::*;

use crate::ast::{
    Comment, Condition, ObjectName, Predicate, Program, Seconds, Stmt, SubAction, Verb,
    MAX_NESTING_DEPTH,
};

const OBJECTS: [&str; 10] = [
    "cup", "milk", "knife", "carrot", "faucet", "fridge", "table", "bowl", "cutting_board", "pan2",
];
const GENERIC_NAMES: [&str; 6] = ["near", "full", "sliced", "hot", "on_top", "positioned"];

pub fn arb_object() -> impl Strategy<Value = ObjectName> {
    prop::sample::select(OBJECTS.to_vec()).prop_map(|s| ObjectName::new(s).expect("valid"))
}

pub fn arb_verb() -> impl Strategy<Value = Verb> {
    prop::sample::select(Verb::ALL.to_vec())
}

pub fn arb_subaction() -> impl Strategy<Value = SubAction> {
    arb_verb().prop_flat_map(|verb| {
        let (lo, hi) = verb.arity();
        prop::collection::vec(arb_object(), lo..=hi)
            .prop_map(move |args| SubAction::new(verb, args).expect("arity in range"))
    })
}

pub fn arb_predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![
        arb_object().prop_map(Predicate::InHand),
        arb_object().prop_map(Predicate::At),
        arb_object().prop_map(Predicate::Open),
        arb_object().prop_map(Predicate::Clean),
        (
            prop::sample::select(GENERIC_NAMES.to_vec()),
            prop::collection::vec(arb_object(), 0..=3)
        )
            .prop_map(|(n, args)| Predicate::generic(n, args).expect("valid")),
        (arb_object(), arb_object())
            .prop_map(|(a, b)| Predicate::generic("at", vec![a, b]).expect("valid")),
    ]
}

pub fn arb_condition() -> impl Strategy<Value = Condition> {
    (any::<bool>(), arb_predicate()).prop_map(|(negated, predicate)| Condition {
        negated,
        predicate,
    })
}

/// A block of statements nested no deeper than `depth` further levels.
pub fn arb_block(depth: usize, max_len: usize) -> BoxedStrategy<Vec<Stmt>> {
    let leaf = arb_subaction().prop_map(Stmt::Act).boxed();
    let stmt = if depth == 0 {
        leaf
    } else {
        let inner = arb_block(depth - 1, max_len.clamp(1, 3));
        prop_oneof![
            4 => leaf,
            1 => (arb_condition(), inner.clone()).prop_map(|(cond, body)| Stmt::If { cond, body }),
            1 => (arb_condition(), inner).prop_map(|(cond, body)| Stmt::While { cond, body }),
        ]
        .boxed()
    };
    prop::collection::vec(stmt, 1..=max_len.max(1)).boxed()
}

fn arb_comment_text() -> impl Strategy<Value = String> {
    "[ -~\t]{0,24}"
}

/// Programs satisfying every AST invariant, including comments at arbitrary
/// indentation anchored anywhere after the header.
pub fn arb_program() -> impl Strategy<Value = Program> {
    let name = "[a-z][a-z0-9_]{0,12}";
    let times = (0u64..600_000, 0u64..600_000).prop_map(|(a, b)| (a.min(b), a.max(b)));
    let depth = 0..=MAX_NESTING_DEPTH;
    (name, times, depth)
        .prop_flat_map(|(name, (start, stop), depth)| {
            (
                Just(name),
                Just((start, stop)),
                prop_oneof![Just(Vec::new()), arb_block(depth.min(4), 5)],
                prop::collection::vec((0usize..=12, arb_comment_text(), any::<prop::sample::Index>()), 0..4),
                Just(depth),
            )
        })
        .prop_map(|(name, (start, stop), body, raw_comments, depth)| {
            let body = if depth > 4 { deepen(body, depth) } else { body };
            let mut p = Program {
                name,
                start_t: Seconds::from_millis(start),
                stop_t: Seconds::from_millis(stop),
                comments: Vec::new(),
                body,
            };
            let stmt_lines = p.line_count() - 1;
            let mut slots: Vec<usize> = raw_comments
                .iter()
                .map(|(_, _, ix)| ix.index(stmt_lines + 1))
                .collect();
            slots.sort_unstable();
            // Slot k means "before the k-th statement line"; convert to
            // final line anchors by counting earlier comments.
            for (i, ((indent, text, _), slot)) in raw_comments.into_iter().zip(slots).enumerate() {
                p.comments.push(Comment {
                    anchor: slot + 1 + i,
                    indent,
                    text,
                });
            }
            p.validate().expect("generated program is well formed");
            p
        })
}

/// Appends a chain of nested `if`s reaching `depth`.
fn deepen(mut body: Vec<Stmt>, depth: usize) -> Vec<Stmt> {
    let cond = Condition::not(Predicate::InHand(ObjectName::new("cup").expect("valid")));
    let mut inner = vec![Stmt::Act(
        SubAction::new(Verb::Wait, Vec::new()).expect("arity"),
    )];
    for _ in 0..depth {
        inner = vec![Stmt::If {
            cond: cond.clone(),
            body: inner,
        }];
    }
    body.extend(inner);
    body
}
