//! Program files bundled with the crate.

/// Twenty hand-written exemplar programs, used as the default query
/// library.
pub const EXEMPLAR_LIBRARY: &str = include_str!("../data/exemplar_library.leap");

/// Verb class of each exemplar, as `program,verb_class` CSV.
pub const EXEMPLAR_VERB_CLASSES: &str = include_str!("../data/exemplar_verbs.csv");

/// The clean-cucumber program, reconstructed by hand from its prose
/// description; the canonical serializer must reproduce it byte for byte.
pub const CLEAN_CUCUMBER: &str = include_str!("../data/clean_cucumber.leap");
