//! Reference planner for tests: for each length k it keeps, per reachable
//! state, the lexicographically smallest length-k sequence reaching it.
//! No state is ever pruned across lengths, so it visits every sequence's
//! effect exactly.

use std::collections::BTreeMap;

use leap_core::semantics::{execute_with, step_with, EvalMode, ExecOptions, DEFAULT_FUEL};
use leap_core::{Condition, ObjectName, Program, SchemaTable, SubAction, Truth, Verb, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum OracleStep {
    Primitive(String, Vec<String>),
    Call(String),
}

pub fn primitives(universe: &[ObjectName]) -> Vec<SubAction> {
    let mut objs = universe.to_vec();
    objs.sort();
    objs.dedup();
    let mut out = Vec::new();
    for verb in Verb::ALL {
        let (lo, hi) = verb.arity();
        for n in lo..=hi {
            let mut tuples: Vec<Vec<ObjectName>> = vec![vec![]];
            for _ in 0..n {
                tuples = tuples
                    .into_iter()
                    .flat_map(|t| {
                        objs.iter().map(move |o| {
                            let mut t = t.clone();
                            t.push(o.clone());
                            t
                        })
                    })
                    .collect();
            }
            out.extend(tuples.into_iter().map(|args| SubAction::new(verb, args).unwrap()));
        }
    }
    out.sort_by_key(key);
    out
}

fn key(sa: &SubAction) -> OracleStep {
    OracleStep::Primitive(
        sa.verb.to_string(),
        sa.args.iter().map(|a| a.as_str().to_string()).collect(),
    )
}

fn goal_met(state: &WorldState, goal: &[Condition]) -> bool {
    goal.iter()
        .all(|c| leap_core::semantics::holds(state, c) == Truth::True)
}

fn successors(
    state: &WorldState,
    prims: &[SubAction],
    library: &[Program],
    schemas: &SchemaTable,
) -> Vec<(OracleStep, WorldState)> {
    let mut out = Vec::new();
    for sa in prims {
        if let Ok(s) = step_with(state, sa, schemas, EvalMode::ClosedWorld) {
            if s.failure.is_none() {
                out.push((key(sa), s.state));
            }
        }
    }
    for p in library {
        let r = execute_with(p, state, schemas, ExecOptions { mode: EvalMode::ClosedWorld, fuel: DEFAULT_FUEL });
        if r.valid && !r.fuel_exhausted {
            out.push((OracleStep::Call(p.name.clone()), r.final_state));
        }
    }
    out
}

/// Smallest (length, sequence) reaching the goal within `max_depth`.
pub fn shortest_plan(
    initial: &WorldState,
    goal: &[Condition],
    library: &[Program],
    schemas: &SchemaTable,
    universe: &[ObjectName],
    max_depth: usize,
) -> Option<Vec<OracleStep>> {
    let prims = primitives(universe);
    let mut level: BTreeMap<WorldState, Vec<OracleStep>> = BTreeMap::from([(initial.clone(), vec![])]);
    for _ in 0..=max_depth {
        if let Some(best) = level
            .iter()
            .filter(|(s, _)| goal_met(s, goal))
            .map(|(_, seq)| seq)
            .min()
        {
            return Some(best.clone());
        }
        let mut next: BTreeMap<WorldState, Vec<OracleStep>> = BTreeMap::new();
        for (s, seq) in &level {
            for (step, t) in successors(s, &prims, library, schemas) {
                let mut cand = seq.clone();
                cand.push(step);
                match next.get(&t) {
                    Some(old) if *old <= cand => {}
                    _ => {
                        next.insert(t, cand);
                    }
                }
            }
        }
        level = next;
    }
    None
}

/// Literal enumeration of every sequence up to `max_depth`, for cross-checks
/// on tiny instances.
pub fn brute_force(
    initial: &WorldState,
    goal: &[Condition],
    library: &[Program],
    schemas: &SchemaTable,
    universe: &[ObjectName],
    max_depth: usize,
) -> Option<Vec<OracleStep>> {
    let prims = primitives(universe);
    let mut frontier = vec![(initial.clone(), Vec::<OracleStep>::new())];
    for _ in 0..=max_depth {
        let mut hits: Vec<&Vec<OracleStep>> = frontier
            .iter()
            .filter(|(s, _)| goal_met(s, goal))
            .map(|(_, seq)| seq)
            .collect();
        hits.sort();
        if let Some(best) = hits.first() {
            return Some((*best).clone());
        }
        frontier = frontier
            .iter()
            .flat_map(|(s, seq)| {
                successors(s, &prims, library, schemas).into_iter().map(move |(step, t)| {
                    let mut seq = seq.clone();
                    seq.push(step);
                    (t, seq)
                })
            })
            .collect();
    }
    None
}
