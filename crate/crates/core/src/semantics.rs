//! World-state model and interpreter for pre/post-condition chaining.
//!
//! States are three-valued: a predicate is `True`, `False`, or absent
//! (`Unknown`). A sub-action whose precondition is explicitly `False` is a
//! violation. How `Unknown` preconditions are treated depends on
//! [`EvalMode`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{Condition, ObjectName, Predicate, Program, Stmt, SubAction, Verb};
use crate::parser::parse_condition;

/// Iteration budget used when the caller does not pick one.
pub const DEFAULT_FUEL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn negate(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Truth::True => Some(true),
            Truth::False => Some(false),
            Truth::Unknown => None,
        }
    }
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::True => "true",
            Truth::False => "false",
            Truth::Unknown => "unknown",
        })
    }
}

/// Assignment of truth values to ground predicates. Absent predicates are
/// `Unknown`, so no entry ever stores `Unknown`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState {
    facts: BTreeMap<Predicate, bool>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, p: &Predicate) -> Truth {
        self.facts.get(p).copied().map_or(Truth::Unknown, Truth::from)
    }

    pub fn set(&mut self, p: Predicate, t: Truth) {
        match t.as_bool() {
            Some(b) => {
                self.facts.insert(p, b);
            }
            None => {
                self.facts.remove(&p);
            }
        }
    }

    /// Makes `cond` true.
    pub fn assert(&mut self, cond: &Condition) {
        self.set(cond.predicate.clone(), Truth::from(!cond.negated));
    }

    pub fn with(mut self, cond: &Condition) -> Self {
        self.assert(cond);
        self
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Predicate, bool)> {
        self.facts.iter().map(|(p, b)| (p, *b))
    }

    /// Known facts as conditions, in canonical order.
    pub fn as_conditions(&self) -> Vec<Condition> {
        self.iter()
            .map(|(p, b)| Condition {
                negated: !b,
                predicate: p.clone(),
            })
            .collect()
    }

    /// Parses a state file: one condition per line in the program condition
    /// syntax; blank lines and `#` comments are skipped. Later lines win.
    pub fn parse(text: &str) -> Result<Self, StateParseError> {
        let mut state = WorldState::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let cond = parse_condition(t).map_err(|(_, message)| StateParseError {
                line: i + 1,
                message,
            })?;
            state.assert(&cond);
        }
        Ok(state)
    }
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.as_conditions().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct StateParseError {
    pub line: usize,
    pub message: String,
}

/// Three-valued evaluation of a condition; negation swaps `True`/`False`
/// and leaves `Unknown` fixed.
pub fn holds(state: &WorldState, condition: &Condition) -> Truth {
    let t = state.get(&condition.predicate);
    if condition.negated {
        t.negate()
    } else {
        t
    }
}

/// How `Unknown` preconditions and control conditions are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// `Unknown` preconditions are assumed true and the assumption is
    /// written into the state.
    #[default]
    Optimistic,
    /// `Unknown` preconditions are violations.
    Strict,
    /// Absent facts are false: an `Unknown` negative literal is assumed
    /// (and recorded), an `Unknown` positive literal is a violation. Used
    /// by the planner, which must establish every positive fact it uses.
    ClosedWorld,
}

/// A condition over the argument slots `x` (first) and `y` (second).
pub type ConditionTemplate = Condition;

/// Disjunction of templates; a schema's preconditions are a conjunction of
/// clauses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause(pub Vec<ConditionTemplate>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Effect {
    pub template: ConditionTemplate,
    /// Truth the condition takes after the action; `Unknown` forgets it.
    pub value: Truth,
}

pub const SLOT_NAMES: [&str; 2] = ["x", "y"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub verb: Verb,
    pub arity: usize,
    pub preconditions: Vec<Clause>,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{verb}({arity}): template references undeclared slot `{slot}`")]
    UndeclaredSlot {
        verb: Verb,
        arity: usize,
        slot: String,
    },
    #[error("{verb} does not accept arity {arity}")]
    Arity { verb: Verb, arity: usize },
}

impl ActionSchema {
    pub fn new(
        verb: Verb,
        arity: usize,
        preconditions: Vec<Clause>,
        effects: Vec<Effect>,
    ) -> Result<Self, SchemaError> {
        if !verb.accepts_arity(arity) {
            return Err(SchemaError::Arity { verb, arity });
        }
        let schema = ActionSchema {
            verb,
            arity,
            preconditions,
            effects,
        };
        let templates = schema
            .preconditions
            .iter()
            .flat_map(|c| c.0.iter())
            .chain(schema.effects.iter().map(|e| &e.template));
        for t in templates {
            for a in t.predicate.args() {
                if !SLOT_NAMES[..arity].contains(&a.as_str()) {
                    return Err(SchemaError::UndeclaredSlot {
                        verb,
                        arity,
                        slot: a.to_string(),
                    });
                }
            }
        }
        Ok(schema)
    }

    /// Preconditions substituted with the action's arguments.
    pub fn ground_preconditions(&self, args: &[ObjectName]) -> Vec<Vec<Condition>> {
        self.preconditions
            .iter()
            .map(|clause| clause.0.iter().map(|t| ground(t, args)).collect())
            .collect()
    }

    pub fn ground_effects(&self, args: &[ObjectName]) -> Vec<(Condition, Truth)> {
        self.effects
            .iter()
            .map(|e| (ground(&e.template, args), e.value))
            .collect()
    }
}

fn ground(template: &Condition, args: &[ObjectName]) -> Condition {
    let predicate = template
        .predicate
        .try_map_args::<()>(|slot| {
            let idx = SLOT_NAMES
                .iter()
                .position(|s| *s == slot.as_str())
                .expect("schema templates only reference declared slots");
            Ok(args[idx].clone())
        })
        .expect("infallible");
    Condition {
        negated: template.negated,
        predicate,
    }
}

/// Renders one schema in the overlay-file syntax.
impl fmt::Display for ActionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}): pre", self.verb, self.arity)?;
        for (i, clause) in self.preconditions.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            for (j, c) in clause.0.iter().enumerate() {
                if j > 0 {
                    f.write_str(" | ")?;
                }
                write!(f, "{c}")?;
            }
        }
        f.write_str("; post")?;
        for (i, e) in self.effects.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            write!(f, "{}={}", e.template, e.value)?;
        }
        Ok(())
    }
}

fn slot(name: &str) -> ObjectName {
    ObjectName::new(name).expect("slot names are valid object names")
}

fn x() -> ObjectName {
    slot("x")
}

fn y() -> ObjectName {
    slot("y")
}

fn lit(c: Condition) -> Clause {
    Clause(vec![c])
}

fn effect(c: Condition, value: bool) -> Effect {
    Effect {
        template: c,
        value: value.into(),
    }
}

fn generic(name: &str, args: Vec<ObjectName>) -> Predicate {
    Predicate::Generic {
        name: name.into(),
        args,
    }
}

/// The built-in schema table, one entry per accepted (verb, arity).
pub fn default_schemas() -> Vec<ActionSchema> {
    use Condition as C;
    use Predicate as P;
    let s = |verb, arity, pre, post| ActionSchema {
        verb,
        arity,
        preconditions: pre,
        effects: post,
    };
    let in_hand_x = || lit(C::holds(P::InHand(x())));
    vec![
        s(Verb::DoNothing, 0, vec![], vec![]),
        s(Verb::DoNothing, 1, vec![], vec![]),
        s(
            Verb::Grasp,
            1,
            vec![lit(C::holds(P::At(x()))), lit(C::not(P::InHand(x())))],
            vec![effect(C::holds(P::InHand(x())), true)],
        ),
        s(
            Verb::Release,
            1,
            vec![in_hand_x()],
            vec![effect(C::holds(P::InHand(x())), false)],
        ),
        s(Verb::Move, 1, vec![in_hand_x()], vec![]),
        s(
            Verb::Move,
            2,
            vec![in_hand_x()],
            vec![effect(C::holds(generic("near", vec![x(), y()])), true)],
        ),
        s(Verb::Use, 1, vec![in_hand_x()], vec![]),
        s(
            Verb::Use,
            2,
            vec![
                in_hand_x(),
                Clause(vec![C::holds(P::At(y())), C::holds(P::InHand(y()))]),
            ],
            vec![],
        ),
        s(
            Verb::Position,
            1,
            vec![in_hand_x()],
            vec![effect(C::holds(generic("positioned", vec![x()])), true)],
        ),
        s(
            Verb::Position,
            2,
            vec![in_hand_x()],
            vec![effect(C::holds(generic("positioned", vec![x(), y()])), true)],
        ),
        s(
            Verb::Goto,
            1,
            vec![lit(C::not(P::At(x())))],
            vec![effect(C::holds(P::At(x())), true)],
        ),
        s(Verb::Wait, 0, vec![], vec![]),
        s(Verb::Wait, 1, vec![], vec![]),
    ]
}

/// Schemas indexed by (verb, arity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaTable {
    schemas: BTreeMap<(Verb, usize), ActionSchema>,
}

impl Default for SchemaTable {
    fn default() -> Self {
        SchemaTable::from_schemas(default_schemas())
    }
}

impl SchemaTable {
    pub fn from_schemas(schemas: impl IntoIterator<Item = ActionSchema>) -> Self {
        SchemaTable {
            schemas: schemas
                .into_iter()
                .map(|s| ((s.verb, s.arity), s))
                .collect(),
        }
    }

    pub fn get(&self, verb: Verb, arity: usize) -> Option<&ActionSchema> {
        self.schemas.get(&(verb, arity))
    }

    /// Replaces the entries for every (verb, arity) in `overlay`.
    pub fn apply(&mut self, overlay: impl IntoIterator<Item = ActionSchema>) {
        for s in overlay {
            self.schemas.insert((s.verb, s.arity), s);
        }
    }

    pub fn with_overlay(mut self, overlay: impl IntoIterator<Item = ActionSchema>) -> Self {
        self.apply(overlay);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSchema> {
        self.schemas.values()
    }
}

/// Parses a schema overlay file. One schema per line:
///
/// ```text
/// use(2): pre x in hand, y at workspace | y in hand; post y clean=true
/// ```
///
/// Conditions use the program condition syntax over the slots `x` and `y`;
/// `|` separates alternatives within one precondition; effect values are
/// `true`, `false`, or `unknown`. Blank lines and `#` comments are ignored.
pub fn parse_overlay(text: &str) -> Result<Vec<ActionSchema>, SchemaError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: String| SchemaError::Syntax {
            line: i + 1,
            message,
        };
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| syntax("expected `verb(arity):`".into()))?;
        let (verb_text, arity_text) = head
            .trim()
            .strip_suffix(')')
            .and_then(|h| h.split_once('('))
            .ok_or_else(|| syntax(format!("malformed schema head `{head}`")))?;
        let verb = Verb::from_surface(verb_text.trim())
            .ok_or_else(|| syntax(format!("unknown verb `{}`", verb_text.trim())))?;
        let arity: usize = arity_text
            .trim()
            .parse()
            .map_err(|_| syntax(format!("bad arity `{arity_text}`")))?;
        let (pre_text, post_text) = rest
            .split_once(';')
            .ok_or_else(|| syntax("expected `; post`".into()))?;
        let pre_text = pre_text
            .trim()
            .strip_prefix("pre")
            .ok_or_else(|| syntax("expected `pre`".into()))?;
        let post_text = post_text
            .trim()
            .strip_prefix("post")
            .ok_or_else(|| syntax("expected `post`".into()))?;

        let mut preconditions = Vec::new();
        for clause in split_list(pre_text) {
            let alts = clause
                .split('|')
                .map(|alt| {
                    parse_condition(alt.trim()).map_err(|(_, m)| syntax(format!("`{alt}`: {m}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            preconditions.push(Clause(alts));
        }
        let mut effects = Vec::new();
        for item in split_list(post_text) {
            let (cond, value) = item
                .rsplit_once('=')
                .ok_or_else(|| syntax(format!("effect `{item}` needs `=<true|false|unknown>`")))?;
            let value = match value.trim() {
                "true" => Truth::True,
                "false" => Truth::False,
                "unknown" => Truth::Unknown,
                other => return Err(syntax(format!("bad effect value `{other}`"))),
            };
            let template = parse_condition(cond.trim())
                .map_err(|(_, m)| syntax(format!("`{cond}`: {m}")))?;
            effects.push(Effect { template, value });
        }
        out.push(ActionSchema::new(verb, arity, preconditions, effects)?);
    }
    Ok(out)
}

/// Splits on commas that are not inside parentheses.
fn split_list(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationReason {
    /// The failed condition is `False` in the snapshot.
    Contradicted,
    /// The failed condition is `Unknown` and the mode does not allow
    /// assuming it.
    Unestablished,
}

/// Why `step` refused to apply an action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    /// First literal of the failing precondition clause.
    pub condition: Condition,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stepped {
    pub state: WorldState,
    pub failure: Option<Failure>,
    /// Preconditions that were `Unknown` and got assumed into `state`.
    pub assumed: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("no schema for {verb} with {arity} argument(s)")]
    NoSchema { verb: Verb, arity: usize },
}

/// Applies one sub-action optimistically. See [`step_with`].
pub fn step(
    state: &WorldState,
    action: &SubAction,
    schemas: &SchemaTable,
) -> Result<Stepped, StepError> {
    step_with(state, action, schemas, EvalMode::Optimistic)
}

/// Checks preconditions clause by clause against a working copy of
/// `state`, assuming `Unknown` literals as `mode` allows, then applies the
/// effects. On failure the returned state equals the input.
pub fn step_with(
    state: &WorldState,
    action: &SubAction,
    schemas: &SchemaTable,
    mode: EvalMode,
) -> Result<Stepped, StepError> {
    let schema = schemas
        .get(action.verb, action.args.len())
        .ok_or(StepError::NoSchema {
            verb: action.verb,
            arity: action.args.len(),
        })?;
    let mut work = state.clone();
    let mut assumed = Vec::new();
    for clause in schema.ground_preconditions(&action.args) {
        match check_clause(&work, &clause, mode) {
            ClauseCheck::Satisfied => {}
            ClauseCheck::Assume(c) => {
                work.assert(&c);
                assumed.push(c);
            }
            ClauseCheck::Fail(failure) => {
                return Ok(Stepped {
                    state: state.clone(),
                    failure: Some(failure),
                    assumed: Vec::new(),
                })
            }
        }
    }
    for (cond, value) in schema.ground_effects(&action.args) {
        let t = if cond.negated { value.negate() } else { value };
        work.set(cond.predicate, t);
    }
    Ok(Stepped {
        state: work,
        failure: None,
        assumed,
    })
}

enum ClauseCheck {
    Satisfied,
    Assume(Condition),
    Fail(Failure),
}

fn check_clause(state: &WorldState, clause: &[Condition], mode: EvalMode) -> ClauseCheck {
    let truths: Vec<Truth> = clause.iter().map(|c| holds(state, c)).collect();
    if clause.is_empty() || truths.contains(&Truth::True) {
        return ClauseCheck::Satisfied;
    }
    let unknown = |want_negated: Option<bool>| {
        clause
            .iter()
            .zip(&truths)
            .find(|(c, t)| **t == Truth::Unknown && want_negated.is_none_or(|n| c.negated == n))
            .map(|(c, _)| c.clone())
    };
    let first_unknown = unknown(None);
    let Some(first_unknown) = first_unknown else {
        return ClauseCheck::Fail(Failure {
            condition: clause[0].clone(),
            reason: ViolationReason::Contradicted,
        });
    };
    let negative = unknown(Some(true));
    match mode {
        EvalMode::Optimistic => ClauseCheck::Assume(negative.unwrap_or(first_unknown)),
        EvalMode::ClosedWorld => match negative {
            Some(c) => ClauseCheck::Assume(c),
            None => ClauseCheck::Fail(Failure {
                condition: first_unknown,
                reason: ViolationReason::Unestablished,
            }),
        },
        EvalMode::Strict => ClauseCheck::Fail(Failure {
            condition: first_unknown,
            reason: ViolationReason::Unestablished,
        }),
    }
}

/// A sub-action that could not be applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position in the trace where the action would have appeared.
    pub step: usize,
    pub sub_action: SubAction,
    pub failed: Condition,
    pub reason: ViolationReason,
    pub state_snapshot: WorldState,
    /// Index of the program within a chain (0 for a single program).
    pub program: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub sub_action: SubAction,
    pub state_after: WorldState,
}

/// Identifies a `while` statement: program index within a chain plus the
/// statement-index path from the program body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LoopSite {
    pub program: usize,
    pub path: Vec<usize>,
}

impl fmt::Display for LoopSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.program)?;
        for (i, p) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assumption {
    /// Trace index of the action that relied on it.
    pub step: usize,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecReport {
    pub valid: bool,
    pub final_state: WorldState,
    pub trace: Vec<TraceStep>,
    pub violations: Vec<Violation>,
    pub loop_iterations: BTreeMap<LoopSite, usize>,
    /// Set when some loop still wanted to run but the fuel was spent.
    pub fuel_exhausted: bool,
    pub assumptions: Vec<Assumption>,
    /// Trace index at which each chained program starts.
    pub boundaries: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub mode: EvalMode,
    /// Loop iterations allowed per program, summed over all its loops.
    pub fuel: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mode: EvalMode::Optimistic,
            fuel: DEFAULT_FUEL,
        }
    }
}

/// Runs `program` optimistically from `initial`.
pub fn execute(
    program: &Program,
    initial: &WorldState,
    schemas: &SchemaTable,
    fuel: usize,
) -> ExecReport {
    execute_with(
        program,
        initial,
        schemas,
        ExecOptions {
            mode: EvalMode::Optimistic,
            fuel,
        },
    )
}

pub fn execute_with(
    program: &Program,
    initial: &WorldState,
    schemas: &SchemaTable,
    opts: ExecOptions,
) -> ExecReport {
    chain_with(std::slice::from_ref(program), initial, schemas, opts)
}

/// Executes `programs` in order, threading each final state into the next.
/// Every program gets its own fuel budget.
pub fn chain(
    programs: &[Program],
    initial: &WorldState,
    schemas: &SchemaTable,
    fuel: usize,
) -> ExecReport {
    chain_with(
        programs,
        initial,
        schemas,
        ExecOptions {
            mode: EvalMode::Optimistic,
            fuel,
        },
    )
}

pub fn chain_with(
    programs: &[Program],
    initial: &WorldState,
    schemas: &SchemaTable,
    opts: ExecOptions,
) -> ExecReport {
    let mut exec = Executor {
        schemas,
        mode: opts.mode,
        state: initial.clone(),
        fuel: 0,
        program: 0,
        report: ExecReport {
            valid: true,
            final_state: WorldState::new(),
            trace: Vec::new(),
            violations: Vec::new(),
            loop_iterations: BTreeMap::new(),
            fuel_exhausted: false,
            assumptions: Vec::new(),
            boundaries: Vec::new(),
        },
    };
    for (i, p) in programs.iter().enumerate() {
        exec.program = i;
        exec.fuel = opts.fuel;
        exec.report.boundaries.push(exec.report.trace.len());
        let mut path = Vec::new();
        exec.run_block(&p.body, &mut path);
    }
    let mut report = exec.report;
    report.final_state = exec.state;
    report.valid = report.violations.is_empty();
    report
}

struct Executor<'a> {
    schemas: &'a SchemaTable,
    mode: EvalMode,
    state: WorldState,
    fuel: usize,
    program: usize,
    report: ExecReport,
}

impl Executor<'_> {
    fn run_block(&mut self, body: &[Stmt], path: &mut Vec<usize>) {
        for (i, stmt) in body.iter().enumerate() {
            path.push(i);
            match stmt {
                Stmt::Act(sa) => self.act(sa),
                Stmt::If { cond, body } => {
                    if self.control(cond).0 {
                        self.run_block(body, path);
                    }
                }
                Stmt::While { cond, body } => self.run_loop(cond, body, path),
            }
            path.pop();
        }
    }

    fn run_loop(&mut self, cond: &Condition, body: &[Stmt], path: &mut Vec<usize>) {
        let site = LoopSite {
            program: self.program,
            path: path.clone(),
        };
        self.report.loop_iterations.entry(site.clone()).or_insert(0);
        loop {
            let (run, assumed) = self.control(cond);
            if !run {
                break;
            }
            if self.fuel == 0 {
                self.report.fuel_exhausted = true;
                break;
            }
            self.fuel -= 1;
            *self.report.loop_iterations.get_mut(&site).expect("inserted") += 1;
            self.run_block(body, path);
            // An assumed-true loop condition that no effect settled is
            // treated as false from here on.
            if assumed && holds(&self.state, cond) == Truth::Unknown {
                break;
            }
        }
    }

    /// Whether a control condition admits its block, and whether that
    /// relied on an `Unknown` value.
    fn control(&self, cond: &Condition) -> (bool, bool) {
        match holds(&self.state, cond) {
            Truth::True => (true, false),
            Truth::False => (false, false),
            Truth::Unknown => match self.mode {
                EvalMode::ClosedWorld => (cond.negated, false),
                EvalMode::Optimistic | EvalMode::Strict => (true, true),
            },
        }
    }

    fn act(&mut self, sa: &SubAction) {
        let at = self.report.trace.len();
        match step_with(&self.state, sa, self.schemas, self.mode) {
            Ok(Stepped {
                state,
                failure: None,
                assumed,
            }) => {
                self.report
                    .assumptions
                    .extend(assumed.into_iter().map(|condition| Assumption { step: at, condition }));
                self.state = state;
                self.report.trace.push(TraceStep {
                    sub_action: sa.clone(),
                    state_after: self.state.clone(),
                });
            }
            Ok(Stepped {
                failure: Some(f), ..
            }) => self.report.violations.push(Violation {
                step: at,
                sub_action: sa.clone(),
                failed: f.condition,
                reason: f.reason,
                state_snapshot: self.state.clone(),
                program: self.program,
            }),
            Err(StepError::NoSchema { .. }) => self.report.violations.push(Violation {
                step: at,
                sub_action: sa.clone(),
                // No schema means nothing can be established about it.
                failed: Condition::holds(Predicate::Generic {
                    name: "has_schema".into(),
                    args: sa.args.clone(),
                }),
                reason: ViolationReason::Unestablished,
                state_snapshot: self.state.clone(),
                program: self.program,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn o(s: &str) -> ObjectName {
        ObjectName::new(s).unwrap()
    }

    fn sa(v: Verb, args: &[&str]) -> SubAction {
        SubAction::parse_call(v, args)
    }

    fn cond(s: &str) -> Condition {
        parse_condition(s).unwrap()
    }

    fn state(lines: &str) -> WorldState {
        WorldState::parse(lines).unwrap()
    }

    #[test]
    fn grasp_preconditions_on_milk() {
        let table = SchemaTable::default();
        let grasp = table.get(Verb::Grasp, 1).unwrap();
        assert_eq!(
            grasp.ground_preconditions(&[o("milk")]),
            vec![
                vec![Condition::holds(Predicate::At(o("milk")))],
                vec![Condition::not(Predicate::InHand(o("milk")))],
            ]
        );
        assert!(table.get(Verb::Wait, 0).unwrap().preconditions.is_empty());
        assert!(table.get(Verb::Wait, 1).unwrap().preconditions.is_empty());
    }

    #[test]
    fn default_table_covers_every_accepted_arity() {
        let table = SchemaTable::default();
        for v in Verb::ALL {
            for n in 0..=2 {
                assert_eq!(table.get(v, n).is_some(), v.accepts_arity(n), "{v}/{n}");
            }
        }
        for s in default_schemas() {
            ActionSchema::new(s.verb, s.arity, s.preconditions.clone(), s.effects.clone()).unwrap();
        }
    }

    #[test]
    fn holds_is_three_valued() {
        let s = state("milk in hand");
        assert_eq!(holds(&s, &cond("milk not in hand")), Truth::False);
        assert_eq!(holds(&WorldState::new(), &cond("cucumber clean")), Truth::Unknown);
        let s = state("milk not open");
        assert_eq!(holds(&s, &cond("milk not open")), Truth::True);
    }

    #[test]
    fn goto_after_grasp_is_a_violation() {
        let s = state("milk in hand\nmilk at workspace");
        let out = step(&s, &sa(Verb::Goto, &["milk"]), &SchemaTable::default()).unwrap();
        let f = out.failure.unwrap();
        assert_eq!(f.condition, cond("milk not at workspace"));
        assert_eq!(f.reason, ViolationReason::Contradicted);
        assert_eq!(out.state, s);
    }

    #[test]
    fn wait_is_a_no_op() {
        let out = step(&WorldState::new(), &sa(Verb::Wait, &[]), &SchemaTable::default()).unwrap();
        assert_eq!(out.state, WorldState::new());
        assert!(out.failure.is_none());
    }

    #[test]
    fn goto_grasp_release_sequence() {
        let table = SchemaTable::default();
        let mut s = WorldState::new();
        for a in [
            sa(Verb::Goto, &["milk"]),
            sa(Verb::Grasp, &["milk"]),
            sa(Verb::Release, &["milk"]),
        ] {
            let out = step(&s, &a, &table).unwrap();
            assert!(out.failure.is_none());
            s = out.state;
        }
        assert_eq!(s, state("milk at workspace\nmilk not in hand"));
    }

    #[test]
    fn modes_differ_on_unknown_preconditions() {
        let table = SchemaTable::default();
        let empty = WorldState::new();
        let grasp = sa(Verb::Grasp, &["milk"]);
        let opt = step_with(&empty, &grasp, &table, EvalMode::Optimistic).unwrap();
        assert!(opt.failure.is_none());
        assert_eq!(opt.assumed, vec![cond("milk at workspace"), cond("milk not in hand")]);

        let strict = step_with(&empty, &grasp, &table, EvalMode::Strict).unwrap();
        assert_eq!(strict.failure.unwrap().reason, ViolationReason::Unestablished);

        let cw = step_with(&empty, &grasp, &table, EvalMode::ClosedWorld).unwrap();
        assert_eq!(cw.failure.unwrap().condition, cond("milk at workspace"));
        let goto = step_with(&empty, &sa(Verb::Goto, &["milk"]), &table, EvalMode::ClosedWorld).unwrap();
        assert!(goto.failure.is_none());
    }

    #[test]
    fn use_disjunction_on_second_argument() {
        let table = SchemaTable::default();
        let s = state("knife in hand\ncarrot not at workspace\ncarrot not in hand");
        let out = step(&s, &sa(Verb::Use, &["knife", "carrot"]), &table).unwrap();
        assert_eq!(out.failure.unwrap().condition, cond("carrot at workspace"));
        let s = state("knife in hand\ncarrot in hand");
        assert!(step(&s, &sa(Verb::Use, &["knife", "carrot"]), &table).unwrap().failure.is_none());
    }

    #[test]
    fn overlay_round_trips_through_display() {
        let text = "use(2): pre x in hand, y at workspace | y in hand; post y clean=true\n# comment\nwait(0): pre; post\nmove(2): pre x in hand; post near(x, y)=true, x not open=unknown\n";
        let parsed = parse_overlay(text).unwrap();
        assert_eq!(parsed.len(), 3);
        let rendered: String = parsed.iter().map(|s| format!("{s}\n")).collect();
        assert_eq!(parse_overlay(&rendered).unwrap(), parsed);
        for s in default_schemas() {
            assert_eq!(parse_overlay(&s.to_string()).unwrap(), vec![s]);
        }
    }

    #[test]
    fn overlay_errors() {
        assert!(matches!(
            parse_overlay("grasp(1): pre z in hand; post"),
            Err(SchemaError::UndeclaredSlot { .. })
        ));
        assert!(matches!(
            parse_overlay("grasp(1): pre y in hand; post"),
            Err(SchemaError::UndeclaredSlot { .. })
        ));
        assert!(matches!(parse_overlay("grasp(2): pre; post"), Err(SchemaError::Arity { .. })));
        assert!(matches!(parse_overlay("pour(1): pre; post"), Err(SchemaError::Syntax { line: 1, .. })));
        assert!(matches!(parse_overlay("\ngrasp(1) pre; post"), Err(SchemaError::Syntax { line: 2, .. })));
        assert!(matches!(parse_overlay("grasp(1): pre; post x in hand=maybe"), Err(SchemaError::Syntax { .. })));
    }

    #[test]
    fn while_loop_spends_fuel_and_flags_exhaustion() {
        let p = parse_program(
            "def scrub(start_t=0, stop_t=1):\n    while cup not clean:\n        use(sponge, cup)\n",
        )
        .unwrap();
        let r = execute(&p, &state("cup not clean"), &SchemaTable::default(), 5);
        assert!(r.fuel_exhausted);
        assert!(r.valid);
        assert_eq!(r.trace.len(), 5);
        let site = LoopSite { program: 0, path: vec![0] };
        assert_eq!(r.loop_iterations[&site], 5);
    }

    #[test]
    fn unknown_loop_condition_runs_once() {
        let p = parse_program(
            "def scrub(start_t=0, stop_t=1):\n    while cup not clean:\n        use(sponge, cup)\n",
        )
        .unwrap();
        let r = execute(&p, &WorldState::new(), &SchemaTable::default(), 5);
        assert!(!r.fuel_exhausted);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn if_skips_on_false() {
        let p = parse_program(
            "def p(start_t=0, stop_t=1):\n    if cup not in hand:\n        goto(cup)\n",
        )
        .unwrap();
        let r = execute(&p, &state("cup in hand"), &SchemaTable::default(), 4);
        assert!(r.trace.is_empty());
        let r = execute(&p, &WorldState::new(), &SchemaTable::default(), 4);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn violations_skip_and_continue() {
        let p = parse_program(
            "def p(start_t=0, stop_t=1):\n    release(cup)\n    goto(cup)\n",
        )
        .unwrap();
        let r = execute(&p, &state("cup not in hand"), &SchemaTable::default(), 4);
        assert!(!r.valid);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].step, 0);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].sub_action, sa(Verb::Goto, &["cup"]));
    }

    #[test]
    fn missing_schema_is_reported_not_fatal() {
        let table = SchemaTable::from_schemas(
            default_schemas().into_iter().filter(|s| s.verb != Verb::Wait),
        );
        assert_eq!(
            step(&WorldState::new(), &sa(Verb::Wait, &[]), &table),
            Err(StepError::NoSchema { verb: Verb::Wait, arity: 0 })
        );
        let p = parse_program("def p(start_t=0, stop_t=1):\n    wait()\n").unwrap();
        let r = execute(&p, &WorldState::new(), &table, 1);
        assert!(!r.valid);
    }

    #[test]
    fn state_file_parsing() {
        let s = WorldState::parse("# start\nmilk at workspace\n\nmilk not in hand\nnear(milk, cup)\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.to_string(), "{milk not in hand, milk at workspace, near(milk, cup)}");
        let e = WorldState::parse("milk at workspace\nmilk in the hand").unwrap_err();
        assert_eq!(e.line, 2);
    }
}
