//! Goal-directed synthesis of sub-action sequences.
//!
//! Breadth-first search over every grounded primitive plus whole library
//! programs. Preconditions are checked in [`EvalMode::ClosedWorld`]: a
//! plan may rely on a fact only if it is known or is the absence of a fact.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::ast::{flatten, is_identifier, Condition, ObjectName, Program, Seconds, Stmt, SubAction};
use crate::semantics::{
    execute_with, holds, step_with, EvalMode, ExecOptions, SchemaTable, Truth, WorldState,
    DEFAULT_FUEL,
};

/// Largest accepted search depth.
pub const MAX_DEPTH_GUARD: usize = 12;
/// Largest accepted object universe.
pub const MAX_UNIVERSE: usize = 64;

/// Conjunction of conditions to make true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    conditions: Vec<Condition>,
}

impl Goal {
    pub fn new(conditions: Vec<Condition>) -> Result<Self, PlanError> {
        if conditions.is_empty() {
            return Err(PlanError::EmptyGoal);
        }
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].contains(c) {
                return Err(PlanError::DuplicateGoal(c.to_string()));
            }
        }
        Ok(Goal { conditions })
    }

    /// Parses conditions joined by ` and `, e.g.
    /// `milk in hand and cup at workspace`.
    pub fn parse(text: &str) -> Result<Self, PlanError> {
        let conditions = text
            .split(" and ")
            .map(|part| {
                crate::parser::parse_condition(part.trim())
                    .map_err(|(_, m)| PlanError::BadGoal(format!("`{}`: {m}", part.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Goal::new(conditions)
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn satisfied_by(&self, state: &WorldState) -> bool {
        self.conditions.iter().all(|c| holds(state, c) == Truth::True)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlanStep {
    Primitive(SubAction),
    /// Whole library program, by name.
    Call(String),
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::Primitive(sa) => write!(f, "{sa}"),
            PlanStep::Call(name) => write!(f, "call {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no plan within depth {0}")]
    NoPlan(usize),
    #[error("max depth {0} exceeds the guard of {MAX_DEPTH_GUARD}")]
    DepthGuard(usize),
    #[error("max depth must be positive")]
    ZeroDepth,
    #[error("object universe of {0} exceeds the guard of {MAX_UNIVERSE}")]
    UniverseGuard(usize),
    #[error("object universe is empty")]
    EmptyUniverse,
    #[error("goal has no conditions")]
    EmptyGoal,
    #[error("goal repeats condition `{0}`")]
    DuplicateGoal(String),
    #[error("bad goal: {0}")]
    BadGoal(String),
    #[error("invalid program name `{0}`")]
    BadName(String),
    #[error("plan calls unknown library program `{0}`")]
    UnknownCall(String),
    #[error("step {index} ({step}) is not applicable on replay")]
    ReplayFailed { index: usize, step: String },
}

/// Inputs of one planning query.
#[derive(Debug, Clone, Copy)]
pub struct PlanQuery<'a> {
    pub initial: &'a WorldState,
    pub goal: &'a Goal,
    pub library: &'a [Program],
    pub schemas: &'a SchemaTable,
    pub universe: &'a [ObjectName],
    pub max_depth: usize,
}

/// Every grounded primitive over `universe`, ordered by verb name then
/// argument names.
pub fn ground_primitives(schemas: &SchemaTable, universe: &[ObjectName]) -> Vec<SubAction> {
    let mut objs: Vec<ObjectName> = universe.to_vec();
    objs.sort();
    objs.dedup();
    let mut out = Vec::new();
    for schema in schemas.iter() {
        match schema.arity {
            0 => out.push(SubAction {
                verb: schema.verb,
                args: vec![],
            }),
            1 => out.extend(objs.iter().map(|a| SubAction {
                verb: schema.verb,
                args: vec![a.clone()],
            })),
            _ => {
                for a in &objs {
                    for b in &objs {
                        out.push(SubAction {
                            verb: schema.verb,
                            args: vec![a.clone(), b.clone()],
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|l, r| primitive_key(l).cmp(&primitive_key(r)));
    out
}

fn primitive_key(sa: &SubAction) -> (&'static str, Vec<&str>) {
    (sa.verb.as_str(), sa.args.iter().map(ObjectName::as_str).collect())
}

/// Applies a library program as one step. Admissible only when it runs
/// without violations and without exhausting its fuel.
pub fn apply_call(program: &Program, state: &WorldState, schemas: &SchemaTable) -> Option<WorldState> {
    let report = execute_with(
        program,
        state,
        schemas,
        ExecOptions {
            mode: EvalMode::ClosedWorld,
            fuel: DEFAULT_FUEL,
        },
    );
    (report.valid && !report.fuel_exhausted).then_some(report.final_state)
}

fn apply_primitive(sa: &SubAction, state: &WorldState, schemas: &SchemaTable) -> Option<WorldState> {
    let out = step_with(state, sa, schemas, EvalMode::ClosedWorld).ok()?;
    out.failure.is_none().then_some(out.state)
}

/// Shortest plan reaching `goal`. Among shortest plans the first in
/// lexicographic step order wins, primitives before calls.
pub fn plan(q: &PlanQuery<'_>) -> Result<Plan, PlanError> {
    if q.max_depth == 0 {
        return Err(PlanError::ZeroDepth);
    }
    if q.max_depth > MAX_DEPTH_GUARD {
        return Err(PlanError::DepthGuard(q.max_depth));
    }
    if q.universe.is_empty() {
        return Err(PlanError::EmptyUniverse);
    }
    if q.universe.len() > MAX_UNIVERSE {
        return Err(PlanError::UniverseGuard(q.universe.len()));
    }

    let primitives = ground_primitives(q.schemas, q.universe);
    let mut calls: Vec<&Program> = Vec::new();
    for p in q.library {
        if !calls.iter().any(|c| c.name == p.name) {
            calls.push(p);
        }
    }
    calls.sort_by(|a, b| a.name.cmp(&b.name));

    // Nodes store a parent index so paths are rebuilt only on success.
    struct Node {
        state: WorldState,
        parent: Option<(usize, PlanStep)>,
        depth: usize,
    }
    let mut nodes = vec![Node {
        state: q.initial.clone(),
        parent: None,
        depth: 0,
    }];
    let mut seen: HashSet<WorldState> = HashSet::from([q.initial.clone()]);
    let mut queue = VecDeque::from([0usize]);

    while let Some(idx) = queue.pop_front() {
        if q.goal.satisfied_by(&nodes[idx].state) {
            let mut steps = Vec::new();
            let mut cur = idx;
            while let Some((parent, step)) = &nodes[cur].parent {
                steps.push(step.clone());
                cur = *parent;
            }
            steps.reverse();
            return Ok(Plan { steps });
        }
        if nodes[idx].depth == q.max_depth {
            continue;
        }
        let successors = primitives
            .iter()
            .filter_map(|sa| {
                apply_primitive(sa, &nodes[idx].state, q.schemas)
                    .map(|s| (PlanStep::Primitive(sa.clone()), s))
            })
            .chain(calls.iter().filter_map(|p| {
                apply_call(p, &nodes[idx].state, q.schemas).map(|s| (PlanStep::Call(p.name.clone()), s))
            }))
            .collect::<Vec<_>>();
        let depth = nodes[idx].depth + 1;
        for (step, state) in successors {
            if seen.insert(state.clone()) {
                nodes.push(Node {
                    state,
                    parent: Some((idx, step)),
                    depth,
                });
                queue.push_back(nodes.len() - 1);
            }
        }
    }
    Err(PlanError::NoPlan(q.max_depth))
}

/// Re-executes `plan` from `initial` with the planner's evaluation mode and
/// returns the final state. Fails on the first inapplicable step.
pub fn replay(
    plan: &Plan,
    initial: &WorldState,
    library: &[Program],
    schemas: &SchemaTable,
) -> Result<WorldState, PlanError> {
    let mut state = initial.clone();
    for (index, step) in plan.steps.iter().enumerate() {
        let next = match step {
            PlanStep::Primitive(sa) => apply_primitive(sa, &state, schemas),
            PlanStep::Call(name) => {
                let p = library
                    .iter()
                    .find(|p| &p.name == name)
                    .ok_or_else(|| PlanError::UnknownCall(name.clone()))?;
                apply_call(p, &state, schemas)
            }
        };
        state = next.ok_or_else(|| PlanError::ReplayFailed {
            index,
            step: step.to_string(),
        })?;
    }
    Ok(state)
}

/// Emits a plan as a program. Calls are inlined as the callee's body,
/// preceded by a comment naming it.
pub fn plan_to_program(plan: &Plan, name: &str, library: &[Program]) -> Result<Program, PlanError> {
    if !is_identifier(name) {
        return Err(PlanError::BadName(name.to_string()));
    }
    let mut program = Program {
        name: name.to_string(),
        start_t: Seconds::ZERO,
        stop_t: Seconds::ZERO,
        comments: Vec::new(),
        body: Vec::new(),
    };
    for step in &plan.steps {
        match step {
            PlanStep::Primitive(sa) => program.body.push(Stmt::Act(sa.clone())),
            PlanStep::Call(callee) => {
                let p = library
                    .iter()
                    .find(|p| &p.name == callee)
                    .ok_or_else(|| PlanError::UnknownCall(callee.clone()))?;
                program.push_comment(4, format!(" from library program {callee}"));
                program.body.extend(p.body.iter().cloned());
            }
        }
    }
    Ok(program)
}

/// Objects mentioned anywhere in a state, goal, or programs; a convenient
/// default universe.
pub fn collect_universe<'a>(
    state: &WorldState,
    goal: &Goal,
    programs: impl IntoIterator<Item = &'a Program>,
) -> Vec<ObjectName> {
    let mut out: Vec<ObjectName> = state
        .iter()
        .flat_map(|(p, _)| p.args().to_vec())
        .chain(goal.conditions.iter().flat_map(|c| c.predicate.args().to_vec()))
        .collect();
    for p in programs {
        out.extend(flatten(p).into_iter().flat_map(|sa| sa.args));
        out.extend(
            crate::ast::conditions(p)
                .into_iter()
                .flat_map(|(_, c)| c.predicate.args().to_vec()),
        );
    }
    out.sort();
    out.dedup();
    out
}
