//! Toolkit for egocentric action programs: sub-action primitives nested
//! under `if`/`while` conditions, written in a small Python-like syntax.
//!
//! - [`ast`] and [`parser`]: the program representation and its text form.
//! - [`semantics`]: three-valued world states, schemas, and execution.
//! - [`planner`]: breadth-first synthesis of plans from primitives and a
//!   program library.
//! - [`prompt`]: compiling clip descriptors into completion queries and
//!   ingesting the completions.
//! - [`analytics`]: set-level comparison and corpus statistics.

pub mod analytics;
pub mod ast;
pub mod corpus;
pub mod parser;
pub mod planner;
pub mod prompt;
pub mod semantics;

#[cfg(feature = "testing")]
pub mod testing;

pub use ast::{flatten, serialize, Condition, ObjectName, Predicate, Program, Stmt, SubAction, Verb};
pub use parser::{parse_corpus, parse_program, ParseError, ParseErrorKind};
pub use semantics::{SchemaTable, Truth, WorldState};
