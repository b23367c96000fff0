//! Abstract syntax of action programs and the canonical text serializer.
//!
//! A program is a header (`def name(start_t=.., stop_t=..):`), a list of
//! metadata comments anchored to source lines, and a body of statements.
//! Statements are sub-action calls or `if`/`while` blocks guarded by a
//! [`Condition`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Maximum `if`/`while` nesting depth accepted by the parser and validator.
pub const MAX_NESTING_DEPTH: usize = 8;

/// Indentation unit of the canonical text form.
pub const INDENT: &str = "    ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("invalid object name {0:?}")]
    ObjectName(String),
    #[error("invalid identifier {0:?}")]
    Identifier(String),
    #[error("invalid time value {0:?}")]
    Seconds(String),
    #[error("{verb} takes {expected} argument(s), got {got}")]
    Arity {
        verb: Verb,
        expected: &'static str,
        got: usize,
    },
    #[error("stop_t {stop} precedes start_t {start}")]
    TimeOrder { start: Seconds, stop: Seconds },
    #[error("{0} block has an empty body")]
    EmptyBlock(&'static str),
    #[error("nesting depth exceeds {MAX_NESTING_DEPTH}")]
    TooDeep,
    #[error("comment anchors must be strictly increasing and within the program ({0})")]
    CommentAnchor(usize),
    #[error("comment text contains a line break")]
    CommentText,
    #[error("built-in predicate {0} takes exactly one argument")]
    PredicateArity(&'static str),
}

/// The closed set of sub-action primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verb {
    DoNothing,
    Grasp,
    Release,
    Move,
    Use,
    Position,
    Goto,
    Wait,
}

impl Verb {
    pub const ALL: [Verb; 8] = [
        Verb::DoNothing,
        Verb::Grasp,
        Verb::Release,
        Verb::Move,
        Verb::Use,
        Verb::Position,
        Verb::Goto,
        Verb::Wait,
    ];

    /// Canonical surface spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::DoNothing => "do_nothing",
            Verb::Grasp => "grasp",
            Verb::Release => "release",
            Verb::Move => "move",
            Verb::Use => "use",
            Verb::Position => "position",
            Verb::Goto => "goto",
            Verb::Wait => "wait",
        }
    }

    /// Accepts canonical spellings plus the `grab` alias.
    pub fn from_surface(s: &str) -> Option<Verb> {
        match s {
            "grab" => Some(Verb::Grasp),
            _ => Verb::ALL.into_iter().find(|v| v.as_str() == s),
        }
    }

    /// Inclusive range of accepted argument counts.
    pub fn arity(self) -> (usize, usize) {
        match self {
            Verb::Use | Verb::Position | Verb::Move => (1, 2),
            Verb::Grasp | Verb::Release | Verb::Goto => (1, 1),
            Verb::Wait | Verb::DoNothing => (0, 1),
        }
    }

    pub fn accepts_arity(self, n: usize) -> bool {
        let (lo, hi) = self.arity();
        (lo..=hi).contains(&n)
    }

    fn arity_label(self) -> &'static str {
        match self.arity() {
            (1, 2) => "1 or 2",
            (1, 1) => "exactly 1",
            _ => "0 or 1",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verb {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::from_surface(s).ok_or(())
    }
}

/// Lowercase, underscore-joined object identifier such as `washing_liquid`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectName(String);

impl ObjectName {
    /// Accepts an already-normalized name.
    pub fn new(s: impl Into<String>) -> Result<Self, AstError> {
        let s = s.into();
        if is_object_name(&s) {
            Ok(ObjectName(s))
        } else {
            Err(AstError::ObjectName(s))
        }
    }

    /// Lowercases and joins words with `_`; `"Washing Liquid"` becomes
    /// `washing_liquid`. Idempotent on its own output.
    pub fn normalize(raw: &str) -> Result<Self, AstError> {
        let mut out = String::with_capacity(raw.len());
        for word in raw
            .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
            .filter(|w| !w.is_empty())
        {
            if !out.is_empty() {
                out.push('_');
            }
            out.extend(word.chars().flat_map(char::to_lowercase));
        }
        ObjectName::new(out).map_err(|_| AstError::ObjectName(raw.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ObjectName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn is_object_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

/// Program and generic-predicate names: `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Non-negative time in whole milliseconds, rendered with the fewest
/// fraction digits that represent it exactly (`0`, `3`, `4.88`, `1.625`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seconds(u64);

impl Seconds {
    pub const ZERO: Seconds = Seconds(0);

    pub fn from_millis(ms: u64) -> Self {
        Seconds(ms)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    /// Rounds to the nearest millisecond. Negative and non-finite inputs
    /// are rejected.
    pub fn from_secs_f64(s: f64) -> Option<Self> {
        if !s.is_finite() || s < 0.0 {
            return None;
        }
        Some(Seconds((s * 1000.0).round() as u64))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / 1000;
        let frac = self.0 % 1000;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:03}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Seconds {
    type Err = AstError;

    /// Plain decimal with at most three fraction digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AstError::Seconds(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty()
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 3
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || (s.contains('.') && frac.is_empty())
        {
            return Err(bad());
        }
        let whole: u64 = whole.parse().map_err(|_| bad())?;
        let mut ms = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            ms += u64::from(b - b'0') * 10u64.pow(2 - i as u32);
        }
        whole
            .checked_mul(1000)
            .and_then(|w| w.checked_add(ms))
            .map(Seconds)
            .ok_or_else(bad)
    }
}

/// One primitive applied to its object arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubAction {
    pub verb: Verb,
    pub args: Vec<ObjectName>,
}

impl SubAction {
    pub fn new(verb: Verb, args: Vec<ObjectName>) -> Result<Self, AstError> {
        if !verb.accepts_arity(args.len()) {
            return Err(AstError::Arity {
                verb,
                expected: verb.arity_label(),
                got: args.len(),
            });
        }
        Ok(SubAction { verb, args })
    }

    /// Convenience constructor for tests and fixtures; panics on bad input.
    pub fn parse_call(verb: Verb, args: &[&str]) -> Self {
        let args = args
            .iter()
            .map(|a| ObjectName::new(*a).expect("valid object name"))
            .collect();
        SubAction::new(verb, args).expect("valid arity")
    }
}

impl fmt::Display for SubAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.verb)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Ground predicate over objects. Built-in kinds take exactly one argument.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    InHand(ObjectName),
    /// The object is within the actor's workspace.
    At(ObjectName),
    Open(ObjectName),
    Clean(ObjectName),
    Generic {
        name: String,
        args: Vec<ObjectName>,
    },
}

/// Words that cannot name a generic predicate in the `<obj> <name>` form.
pub(crate) const RESERVED_PHRASE_WORDS: [&str; 5] = ["not", "in", "at", "open", "clean"];

/// Keyword closing the `<obj> at workspace` phrase for [`Predicate::At`].
pub const WORKSPACE: &str = "workspace";

impl Predicate {
    pub fn generic(name: impl Into<String>, args: Vec<ObjectName>) -> Result<Self, AstError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(AstError::Identifier(name));
        }
        Ok(Predicate::Generic { name, args })
    }

    pub fn args(&self) -> &[ObjectName] {
        match self {
            Predicate::InHand(o) | Predicate::At(o) | Predicate::Open(o) | Predicate::Clean(o) => {
                std::slice::from_ref(o)
            }
            Predicate::Generic { args, .. } => args,
        }
    }

    pub fn kind_name(&self) -> &str {
        match self {
            Predicate::InHand(_) => "in_hand",
            Predicate::At(_) => "at",
            Predicate::Open(_) => "open",
            Predicate::Clean(_) => "clean",
            Predicate::Generic { name, .. } => name,
        }
    }

    /// Rebuilds the predicate with every argument passed through `f`.
    pub fn try_map_args<E>(
        &self,
        mut f: impl FnMut(&ObjectName) -> Result<ObjectName, E>,
    ) -> Result<Predicate, E> {
        Ok(match self {
            Predicate::InHand(o) => Predicate::InHand(f(o)?),
            Predicate::At(o) => Predicate::At(f(o)?),
            Predicate::Open(o) => Predicate::Open(f(o)?),
            Predicate::Clean(o) => Predicate::Clean(f(o)?),
            Predicate::Generic { name, args } => Predicate::Generic {
                name: name.clone(),
                args: args.iter().map(f).collect::<Result<_, _>>()?,
            },
        })
    }

    fn write_phrase(&self, negated: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let not = if negated { "not " } else { "" };
        match self {
            Predicate::InHand(o) => write!(f, "{o} {not}in hand"),
            Predicate::At(o) => write!(f, "{o} {not}at {WORKSPACE}"),
            Predicate::Open(o) => write!(f, "{o} {not}open"),
            Predicate::Clean(o) => write!(f, "{o} {not}clean"),
            Predicate::Generic { name, args }
                if name == "at" && args.len() == 2 && args[1].as_str() != WORKSPACE =>
            {
                write!(f, "{} {not}at {}", args[0], args[1])
            }
            Predicate::Generic { name, args }
                if args.len() == 1 && !RESERVED_PHRASE_WORDS.contains(&name.as_str()) =>
            {
                write!(f, "{} {not}{name}", args[0])
            }
            Predicate::Generic { name, args } => {
                write!(f, "{not}{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A possibly negated predicate. Negation is a flag, so double negation
/// cannot be expressed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub negated: bool,
    pub predicate: Predicate,
}

impl Condition {
    pub fn holds(predicate: Predicate) -> Self {
        Condition {
            negated: false,
            predicate,
        }
    }

    pub fn not(predicate: Predicate) -> Self {
        Condition {
            negated: true,
            predicate,
        }
    }

    pub fn negate(&self) -> Self {
        Condition {
            negated: !self.negated,
            predicate: self.predicate.clone(),
        }
    }
}

/// Renders the condition surface syntax used after `if`/`while`, e.g.
/// `cucumber not in hand` or `not near(milk, table)`.
impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.predicate.write_phrase(self.negated, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    If,
    While,
}

impl BlockKind {
    pub fn keyword(self) -> &'static str {
        match self {
            BlockKind::If => "if",
            BlockKind::While => "while",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Act(SubAction),
    If { cond: Condition, body: Vec<Stmt> },
    While { cond: Condition, body: Vec<Stmt> },
}

impl Stmt {
    pub fn block(&self) -> Option<(BlockKind, &Condition, &[Stmt])> {
        match self {
            Stmt::Act(_) => None,
            Stmt::If { cond, body } => Some((BlockKind::If, cond, body)),
            Stmt::While { cond, body } => Some((BlockKind::While, cond, body)),
        }
    }

    /// Number of text lines this statement occupies when serialized.
    pub fn line_count(&self) -> usize {
        match self.block() {
            None => 1,
            Some((_, _, body)) => 1 + body.iter().map(Stmt::line_count).sum::<usize>(),
        }
    }
}

/// A `#` comment preserved byte-exact. `anchor` is the index of the line
/// among the program's non-blank lines, with the header at 0; `text` is
/// everything after the `#`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub anchor: usize,
    pub indent: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub start_t: Seconds,
    pub stop_t: Seconds,
    pub comments: Vec<Comment>,
    pub body: Vec<Stmt>,
}

impl Program {
    /// Builds a program with no comments, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        start_t: Seconds,
        stop_t: Seconds,
        body: Vec<Stmt>,
    ) -> Result<Self, AstError> {
        let p = Program {
            name: name.into(),
            start_t,
            stop_t,
            comments: Vec::new(),
            body,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AstError> {
        if !is_identifier(&self.name) {
            return Err(AstError::Identifier(self.name.clone()));
        }
        if self.stop_t < self.start_t {
            return Err(AstError::TimeOrder {
                start: self.start_t,
                stop: self.stop_t,
            });
        }
        validate_block(&self.body, 0)?;
        let total = self.line_count();
        let mut prev = 0;
        for c in &self.comments {
            if c.anchor <= prev || c.anchor >= total {
                return Err(AstError::CommentAnchor(c.anchor));
            }
            if c.text.contains(['\n', '\r']) {
                return Err(AstError::CommentText);
            }
            prev = c.anchor;
        }
        Ok(())
    }

    /// Lines of the canonical text, header included.
    pub fn line_count(&self) -> usize {
        1 + self.comments.len() + self.body.iter().map(Stmt::line_count).sum::<usize>()
    }

    /// Appends a comment on a new line after everything serialized so far.
    pub fn push_comment(&mut self, indent: usize, text: impl Into<String>) {
        let anchor = self.line_count();
        self.comments.push(Comment {
            anchor,
            indent,
            text: text.into(),
        });
    }

    pub fn header(&self) -> String {
        format!(
            "def {}(start_t={}, stop_t={}):",
            self.name, self.start_t, self.stop_t
        )
    }
}

fn validate_block(body: &[Stmt], depth: usize) -> Result<(), AstError> {
    for stmt in body {
        match stmt {
            Stmt::Act(sa) => {
                if !sa.verb.accepts_arity(sa.args.len()) {
                    return Err(AstError::Arity {
                        verb: sa.verb,
                        expected: sa.verb.arity_label(),
                        got: sa.args.len(),
                    });
                }
            }
            Stmt::If { cond, body } | Stmt::While { cond, body } => {
                if let Predicate::Generic { name, .. } = &cond.predicate {
                    if !is_identifier(name) {
                        return Err(AstError::Identifier(name.clone()));
                    }
                }
                if body.is_empty() {
                    let kind = stmt.block().map(|b| b.0.keyword()).unwrap_or("block");
                    return Err(AstError::EmptyBlock(kind));
                }
                if depth + 1 > MAX_NESTING_DEPTH {
                    return Err(AstError::TooDeep);
                }
                validate_block(body, depth + 1)?;
            }
        }
    }
    Ok(())
}

/// Canonical text: LF line endings, 4-space indentation, one statement per
/// line, comments reinserted at their anchors. Every line ends in `\n`.
pub fn serialize(program: &Program) -> String {
    let mut stmt_lines = Vec::new();
    collect_lines(&program.body, 1, &mut stmt_lines);

    let mut out = program.header();
    out.push('\n');
    let mut stmts = stmt_lines.into_iter().peekable();
    let mut comments = program.comments.iter().peekable();
    let mut line = 1;
    loop {
        let take_comment = match (comments.peek(), stmts.peek()) {
            (None, None) => break,
            (Some(c), Some(_)) => c.anchor <= line,
            (Some(_), None) => true,
            (None, Some(_)) => false,
        };
        if take_comment {
            let c = comments.next().expect("peeked");
            out.extend(std::iter::repeat_n(' ', c.indent));
            out.push('#');
            out.push_str(&c.text);
        } else {
            out.push_str(&stmts.next().expect("peeked"));
        }
        out.push('\n');
        line += 1;
    }
    out
}

fn collect_lines(body: &[Stmt], level: usize, out: &mut Vec<String>) {
    for stmt in body {
        let indent = INDENT.repeat(level);
        match stmt.block() {
            None => {
                if let Stmt::Act(sa) = stmt {
                    out.push(format!("{indent}{sa}"));
                }
            }
            Some((kind, cond, body)) => {
                out.push(format!("{indent}{} {cond}:", kind.keyword()));
                collect_lines(body, level + 1, out);
            }
        }
    }
}

/// Every sub-action in depth-first source order, conditions ignored.
pub fn flatten(program: &Program) -> Vec<SubAction> {
    fn walk(body: &[Stmt], out: &mut Vec<SubAction>) {
        for stmt in body {
            match stmt {
                Stmt::Act(sa) => out.push(sa.clone()),
                Stmt::If { body, .. } | Stmt::While { body, .. } => walk(body, out),
            }
        }
    }
    let mut out = Vec::new();
    walk(&program.body, &mut out);
    out
}

/// Conditions of every `if`/`while` in source order.
pub fn conditions(program: &Program) -> Vec<(BlockKind, &Condition)> {
    fn walk<'a>(body: &'a [Stmt], out: &mut Vec<(BlockKind, &'a Condition)>) {
        for stmt in body {
            if let Some((kind, cond, body)) = stmt.block() {
                out.push((kind, cond));
                walk(body, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(&program.body, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(s: &str) -> ObjectName {
        ObjectName::new(s).unwrap()
    }

    fn act(verb: Verb, args: &[&str]) -> Stmt {
        Stmt::Act(SubAction::parse_call(verb, args))
    }

    #[test]
    fn verb_set_is_closed() {
        assert_eq!(Verb::ALL.len(), 8);
        assert_eq!(Verb::from_surface("grab"), Some(Verb::Grasp));
        assert_eq!(Verb::from_surface("grasp"), Some(Verb::Grasp));
        assert_eq!(Verb::from_surface("pour"), None);
        assert_eq!(Verb::DoNothing.as_str(), "do_nothing");
    }

    #[test]
    fn arity_table() {
        for v in [Verb::Use, Verb::Position, Verb::Move] {
            assert!(!v.accepts_arity(0) && v.accepts_arity(1) && v.accepts_arity(2));
        }
        for v in [Verb::Grasp, Verb::Release, Verb::Goto] {
            assert!(!v.accepts_arity(0) && v.accepts_arity(1) && !v.accepts_arity(2));
        }
        for v in [Verb::Wait, Verb::DoNothing] {
            assert!(v.accepts_arity(0) && v.accepts_arity(1) && !v.accepts_arity(2));
        }
        assert!(SubAction::new(Verb::Grasp, vec![obj("a"), obj("b")]).is_err());
    }

    #[test]
    fn object_name_normalization() {
        assert_eq!(
            ObjectName::normalize("Washing Liquid").unwrap().as_str(),
            "washing_liquid"
        );
        assert_eq!(
            ObjectName::normalize("washing_liquid").unwrap().as_str(),
            "washing_liquid"
        );
        assert_eq!(ObjectName::normalize(" towel-kitchen ").unwrap().as_str(), "towel_kitchen");
        assert!(ObjectName::normalize("  ").is_err());
        assert!(ObjectName::normalize("2cups").is_err());
        assert!(ObjectName::new("Milk").is_err());
    }

    #[test]
    fn seconds_render_and_parse() {
        for (text, ms) in [("0", 0), ("1.63", 1630), ("4.88", 4880), ("3", 3000), ("0.125", 125)] {
            let s: Seconds = text.parse().unwrap();
            assert_eq!(s.millis(), ms);
            assert_eq!(s.to_string(), text);
        }
        assert_eq!("1.50".parse::<Seconds>().unwrap().to_string(), "1.5");
        for bad in ["", "-1", "1.2345", "1.", ".5", "1e3", "x"] {
            assert!(bad.parse::<Seconds>().is_err(), "{bad}");
        }
    }

    #[test]
    fn header_and_comments_serialize() {
        let mut p = Program::new(
            "wipe_spoon",
            Seconds::ZERO,
            "1.63".parse().unwrap(),
            vec![],
        )
        .unwrap();
        p.push_comment(4, " Heard sound of scrub at time");
        p.push_comment(4, " 0.55 sec to 0.93 sec");
        assert_eq!(
            serialize(&p),
            "def wipe_spoon(start_t=0, stop_t=1.63):\n    # Heard sound of scrub at time\n    # 0.55 sec to 0.93 sec\n"
        );
    }

    #[test]
    fn empty_program_is_header_only() {
        let p = Program::new("noop", Seconds::ZERO, Seconds::ZERO, vec![]).unwrap();
        assert_eq!(serialize(&p), "def noop(start_t=0, stop_t=0):\n");
    }

    #[test]
    fn condition_surface_forms() {
        let c = Condition::not(Predicate::InHand(obj("cucumber")));
        assert_eq!(c.to_string(), "cucumber not in hand");
        assert_eq!(
            Condition::holds(Predicate::At(obj("milk"))).to_string(),
            "milk at workspace"
        );
        let near = Predicate::generic("near", vec![obj("milk"), obj("table")]).unwrap();
        assert_eq!(Condition::not(near).to_string(), "not near(milk, table)");
        let sliced = Predicate::generic("sliced", vec![obj("carrot")]).unwrap();
        assert_eq!(Condition::holds(sliced).to_string(), "carrot sliced");
        let at2 = Predicate::generic("at", vec![obj("milk"), obj("table")]).unwrap();
        assert_eq!(Condition::holds(at2).to_string(), "milk at table");
        let open1 = Predicate::generic("open", vec![obj("tap")]).unwrap();
        assert_eq!(Condition::holds(open1).to_string(), "open(tap)");
        let empty = Predicate::generic("dark", vec![]).unwrap();
        assert_eq!(Condition::holds(empty).to_string(), "dark()");
    }

    #[test]
    fn flatten_orders_leaves_depth_first() {
        let body = vec![
            Stmt::If {
                cond: Condition::not(Predicate::InHand(obj("cup"))),
                body: vec![act(Verb::Grasp, &["cup"])],
            },
            Stmt::While {
                cond: Condition::not(Predicate::Clean(obj("cup"))),
                body: vec![act(Verb::Use, &["faucet", "cup"])],
            },
        ];
        let p = Program::new("p", Seconds::ZERO, Seconds::ZERO, body).unwrap();
        assert_eq!(
            flatten(&p),
            vec![
                SubAction::parse_call(Verb::Grasp, &["cup"]),
                SubAction::parse_call(Verb::Use, &["faucet", "cup"]),
            ]
        );
        let empty = Program::new("p", Seconds::ZERO, Seconds::ZERO, vec![]).unwrap();
        assert!(flatten(&empty).is_empty());
    }

    #[test]
    fn validation_rejects_bad_programs() {
        let zero = Seconds::ZERO;
        assert!(matches!(
            Program::new("p", "2".parse().unwrap(), "1".parse().unwrap(), vec![]),
            Err(AstError::TimeOrder { .. })
        ));
        assert!(matches!(
            Program::new("bad name", zero, zero, vec![]),
            Err(AstError::Identifier(_))
        ));
        let empty_if = Stmt::If {
            cond: Condition::holds(Predicate::Open(obj("tap"))),
            body: vec![],
        };
        assert!(matches!(
            Program::new("p", zero, zero, vec![empty_if]),
            Err(AstError::EmptyBlock("if"))
        ));
        let mut deep = act(Verb::Wait, &[]);
        for _ in 0..=MAX_NESTING_DEPTH {
            deep = Stmt::If {
                cond: Condition::holds(Predicate::Open(obj("tap"))),
                body: vec![deep],
            };
        }
        assert_eq!(
            Program::new("p", zero, zero, vec![deep]),
            Err(AstError::TooDeep)
        );
    }

    #[test]
    fn comments_interleave_at_anchors() {
        let mut p = Program::new(
            "p",
            Seconds::ZERO,
            Seconds::ZERO,
            vec![
                Stmt::If {
                    cond: Condition::not(Predicate::InHand(obj("cup"))),
                    body: vec![act(Verb::Goto, &["cup"]), act(Verb::Grasp, &["cup"])],
                },
            ],
        )
        .unwrap();
        p.comments.push(Comment {
            anchor: 2,
            indent: 8,
            text: " fetch it".into(),
        });
        p.validate().unwrap();
        assert_eq!(
            serialize(&p),
            "def p(start_t=0, stop_t=0):\n    if cup not in hand:\n        # fetch it\n        goto(cup)\n        grasp(cup)\n"
        );
        p.comments[0].anchor = 5;
        assert!(p.validate().is_err());
    }
}
