//! Compiles per-clip event records into program stubs whose comments
//! describe the clip, assembles batched completion queries, and ingests
//! the completed programs.
//!
//! # Comment templates
//!
//! Components are emitted in this order; empty ones are omitted. Times are
//! clip-relative seconds with exactly two fraction digits.
//!
//! | component  | lines                                                     |
//! |------------|-----------------------------------------------------------|
//! | audio      | `Heard sound of {label} at time` / `{begin} sec to {end} sec` |
//! | locomotion | `Go to object from time {begin} sec to` / `time {end} sec` |
//! | narration  | `The actions performed right before this were {list}.` + `The actions performed right after this were {list}`, wrapped |
//! | objects    | `objects = [{a}, {b}, ...]`, wrapped                      |
//! | contacts   | `Holding nothing at start.` / `Holding {obj} at start.` / `Grabbed {obj} at time(s) {t}` / `Released {obj} at time(s) {t}` |
//!
//! Narration lists quote each entry and join with `, ` and a final ` and `.
//! Wrapped components break greedily at [`WRAP_WIDTH`] characters of
//! comment text, never inside a quoted narration.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::{is_identifier, ObjectName, Program, Seconds};
use crate::parser::{normalize_bare_calls, parse_corpus, ParseError};

/// Maximum stubs per query.
pub const MAX_BATCH: usize = 35;
/// Comment text width used when wrapping narration and object lists.
pub const WRAP_WIDTH: usize = 34;
/// Line between the library and the stubs in an assembled query.
pub const SEPARATOR_LINE: &str = "# Complete the following programs.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioEvent {
    pub label: String,
    pub begin_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub begin_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Grabbed,
    Released,
    HoldingAtStart,
    HoldingNothingAtStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub kind: ContactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
}

/// Structured descriptors for one clip. Event times share the timeline of
/// `start_t`/`stop_t` and are made clip-relative on compilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBundle {
    pub clip_id: String,
    pub start_t: f64,
    pub stop_t: f64,
    #[serde(default)]
    pub audio_events: Vec<AudioEvent>,
    #[serde(default)]
    pub locomotion: Vec<Segment>,
    #[serde(default)]
    pub narration_before: Vec<String>,
    #[serde(default)]
    pub narration_after: Vec<String>,
    #[serde(default)]
    pub detected_objects: Vec<String>,
    #[serde(default)]
    pub contacts: Vec<Contact>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("clip_id `{0}` is not an identifier")]
    ClipId(String),
    #[error("{clip}: bad clip bounds")]
    Bounds { clip: String },
    #[error("{clip}: {what} time {time} outside the clip")]
    OutOfClip { clip: String, what: String, time: f64 },
    #[error("{clip}: {what} ends before it begins")]
    Reversed { clip: String, what: String },
    #[error("{clip}: bad object name `{name}`")]
    Object { clip: String, name: String },
    #[error("{clip}: {kind:?} contact is missing {missing}")]
    Contact {
        clip: String,
        kind: ContactKind,
        missing: &'static str,
    },
    #[error("{clip}: audio label must be a non-empty single line")]
    Label { clip: String },
    #[error("{clip}: narration must be a non-empty single line without quotes")]
    Narration { clip: String },
}

impl EventBundle {
    /// Parses one bundle or a JSON array of bundles.
    pub fn parse_many(text: &str) -> Result<Vec<EventBundle>, serde_json::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            Many(Vec<EventBundle>),
            One(Box<EventBundle>),
        }
        Ok(match serde_json::from_str(text)? {
            OneOrMany::Many(v) => v,
            OneOrMany::One(b) => vec![*b],
        })
    }

    /// Checks invariants and converts to clip-relative millisecond times.
    /// Object names are normalized and deduplicated, keeping detector
    /// order.
    pub fn validate(&self) -> Result<ValidBundle, BundleError> {
        let clip = || self.clip_id.clone();
        if !is_identifier(&self.clip_id) {
            return Err(BundleError::ClipId(self.clip_id.clone()));
        }
        let start = Seconds::from_secs_f64(self.start_t).ok_or(BundleError::Bounds { clip: clip() })?;
        let stop = Seconds::from_secs_f64(self.stop_t).ok_or(BundleError::Bounds { clip: clip() })?;
        if stop < start {
            return Err(BundleError::Bounds { clip: clip() });
        }
        let rel = |t: f64, what: &str| -> Result<u64, BundleError> {
            let out = || BundleError::OutOfClip {
                clip: clip(),
                what: what.to_string(),
                time: t,
            };
            let s = Seconds::from_secs_f64(t).ok_or_else(out)?;
            if s < start || s > stop {
                return Err(out());
            }
            Ok(s.millis() - start.millis())
        };
        let span = |b: f64, e: f64, what: &str| -> Result<(u64, u64), BundleError> {
            let (b, e) = (rel(b, what)?, rel(e, what)?);
            if e < b {
                return Err(BundleError::Reversed {
                    clip: clip(),
                    what: what.to_string(),
                });
            }
            Ok((b, e))
        };
        let object = |name: &str| {
            ObjectName::normalize(name).map_err(|_| BundleError::Object {
                clip: clip(),
                name: name.to_string(),
            })
        };

        let mut audio = Vec::new();
        for a in &self.audio_events {
            if a.label.trim().is_empty() || a.label.contains(['\n', '\r']) {
                return Err(BundleError::Label { clip: clip() });
            }
            let (b, e) = span(a.begin_s, a.end_s, "audio")?;
            audio.push((a.label.trim().to_string(), b, e));
        }
        let locomotion = self
            .locomotion
            .iter()
            .map(|s| span(s.begin_s, s.end_s, "locomotion"))
            .collect::<Result<Vec<_>, _>>()?;
        for n in self.narration_before.iter().chain(&self.narration_after) {
            if n.trim().is_empty() || n.contains(['\n', '\r', '"']) {
                return Err(BundleError::Narration { clip: clip() });
            }
        }
        let mut objects: Vec<ObjectName> = Vec::new();
        for o in &self.detected_objects {
            let o = object(o)?;
            if !objects.contains(&o) {
                objects.push(o);
            }
        }
        let mut contacts = Vec::new();
        for c in &self.contacts {
            let missing = |what| BundleError::Contact {
                clip: clip(),
                kind: c.kind,
                missing: what,
            };
            contacts.push(match c.kind {
                ContactKind::HoldingNothingAtStart => ValidContact::HoldingNothing,
                ContactKind::HoldingAtStart => {
                    ValidContact::Holding(object(c.object.as_deref().ok_or_else(|| missing("object"))?)?)
                }
                ContactKind::Grabbed | ContactKind::Released => {
                    let obj = object(c.object.as_deref().ok_or_else(|| missing("object"))?)?;
                    let t = rel(c.time_s.ok_or_else(|| missing("time_s"))?, "contact")?;
                    if c.kind == ContactKind::Grabbed {
                        ValidContact::Grabbed(obj, t)
                    } else {
                        ValidContact::Released(obj, t)
                    }
                }
            });
        }
        Ok(ValidBundle {
            clip_id: self.clip_id.clone(),
            duration: Seconds::from_millis(stop.millis() - start.millis()),
            audio,
            locomotion,
            narration_before: self.narration_before.iter().map(|s| s.trim().to_string()).collect(),
            narration_after: self.narration_after.iter().map(|s| s.trim().to_string()).collect(),
            objects,
            contacts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidContact {
    HoldingNothing,
    Holding(ObjectName),
    Grabbed(ObjectName, u64),
    Released(ObjectName, u64),
}

/// A bundle that passed validation; times are clip-relative milliseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidBundle {
    pub clip_id: String,
    pub duration: Seconds,
    pub audio: Vec<(String, u64, u64)>,
    pub locomotion: Vec<(u64, u64)>,
    pub narration_before: Vec<String>,
    pub narration_after: Vec<String>,
    pub objects: Vec<ObjectName>,
    pub contacts: Vec<ValidContact>,
}

/// Two fraction digits, rounding half up.
fn secs2(ms: u64) -> String {
    let centis = (ms + 5) / 10;
    format!("{}.{:02}", centis / 100, centis % 100)
}

/// Greedy wrap of atomic tokens joined by single spaces.
fn wrap(tokens: &[String], width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut cur = String::new();
    for t in tokens {
        if !cur.is_empty() && cur.len() + 1 + t.len() > width {
            lines.push(std::mem::take(&mut cur));
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(t);
    }
    if !cur.is_empty() {
        lines.push(cur);
    }
    lines
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(' ').map(str::to_string)
}

/// Quoted items joined with `, ` and a final ` and `; the last token gets
/// `suffix` appended.
fn quoted_list(items: &[String], suffix: &str) -> Vec<String> {
    let n = items.len();
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let mut tok = format!("\"{item}\"");
        if i + 2 < n {
            tok.push(',');
        }
        if i + 1 == n {
            tok.push_str(suffix);
        }
        out.push(tok);
        if i + 2 == n {
            out.push("and".into());
        }
    }
    out
}

/// Comment lines (text after `# `) for each component, in emission order.
pub fn descriptor_lines(b: &ValidBundle) -> Vec<String> {
    let mut lines = Vec::new();
    for (label, begin, end) in &b.audio {
        lines.push(format!("Heard sound of {label} at time"));
        lines.push(format!("{} sec to {} sec", secs2(*begin), secs2(*end)));
    }
    for (begin, end) in &b.locomotion {
        lines.push(format!("Go to object from time {} sec to", secs2(*begin)));
        lines.push(format!("time {} sec", secs2(*end)));
    }
    if !b.narration_before.is_empty() || !b.narration_after.is_empty() {
        let mut tokens: Vec<String> = Vec::new();
        if !b.narration_before.is_empty() {
            let suffix = if b.narration_after.is_empty() { "" } else { "." };
            tokens.extend(words("The actions performed right before this were"));
            tokens.extend(quoted_list(&b.narration_before, suffix));
        }
        if !b.narration_after.is_empty() {
            tokens.extend(words("The actions performed right after this were"));
            tokens.extend(quoted_list(&b.narration_after, ""));
        }
        lines.extend(wrap(&tokens, WRAP_WIDTH));
    }
    if !b.objects.is_empty() {
        let mut tokens = vec!["objects".to_string(), "=".to_string()];
        let n = b.objects.len();
        for (i, o) in b.objects.iter().enumerate() {
            let mut t = String::new();
            if i == 0 {
                t.push('[');
            }
            t.push_str(o.as_str());
            t.push(if i + 1 == n { ']' } else { ',' });
            tokens.push(t);
        }
        lines.extend(wrap(&tokens, WRAP_WIDTH));
    }
    for c in &b.contacts {
        lines.push(match c {
            ValidContact::HoldingNothing => "Holding nothing at start.".to_string(),
            ValidContact::Holding(o) => format!("Holding {o} at start."),
            ValidContact::Grabbed(o, t) => format!("Grabbed {o} at time(s) {}", secs2(*t)),
            ValidContact::Released(o, t) => format!("Released {o} at time(s) {}", secs2(*t)),
        });
    }
    lines
}

/// Stub program text: the header followed by one comment per descriptor
/// line. Every line ends in `\n`.
pub fn compile_stub(bundle: &ValidBundle) -> String {
    let mut out = format!(
        "def {}(start_t=0, stop_t={}):\n",
        bundle.clip_id, bundle.duration
    );
    for line in descriptor_lines(bundle) {
        out.push_str("    # ");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// The stub as a program value (comments only, empty body).
pub fn stub_program(bundle: &ValidBundle) -> Program {
    let mut p = Program {
        name: bundle.clip_id.clone(),
        start_t: Seconds::ZERO,
        stop_t: bundle.duration,
        comments: Vec::new(),
        body: Vec::new(),
    };
    for line in descriptor_lines(bundle) {
        p.push_comment(4, format!(" {line}"));
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    /// Exemplar program library, verbatim.
    pub library_text: String,
    pub bundles: Vec<EventBundle>,
    /// Instructions placed before the library; empty by default.
    pub preamble: String,
    pub estimated_cost_note: String,
}

impl QuerySpec {
    pub fn new(library_text: impl Into<String>, bundles: Vec<EventBundle>) -> Self {
        QuerySpec {
            library_text: library_text.into(),
            bundles,
            preamble: String::new(),
            estimated_cost_note: String::new(),
        }
    }

    pub fn clip_ids(&self) -> Vec<&str> {
        self.bundles.iter().map(|b| b.clip_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub stub_count: usize,
}

impl Query {
    pub fn hash(&self) -> String {
        query_hash(&self.text)
    }
}

/// Lowercase hex SHA-256 of the query text; the cache key.
pub fn query_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("a query needs at least one clip")]
    Empty,
    #[error("{0} clips exceed the batch limit of {MAX_BATCH}")]
    TooMany(usize),
    #[error("duplicate clip_id `{0}`")]
    DuplicateClip(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Query layout:
///
/// ```text
/// [preamble "\n"]  library_text  "\n"  SEPARATOR_LINE  "\n"  "\n"
/// stub_1 "\n" stub_2 ... "\n" stub_k
/// ```
///
/// Each stub ends with a newline, so stubs are separated by one blank line.
pub fn assemble_query(spec: &QuerySpec) -> Result<Query, QueryError> {
    let n = spec.bundles.len();
    if n == 0 {
        return Err(QueryError::Empty);
    }
    if n > MAX_BATCH {
        return Err(QueryError::TooMany(n));
    }
    let mut seen = BTreeSet::new();
    let mut stubs = Vec::with_capacity(n);
    for b in &spec.bundles {
        if !seen.insert(b.clip_id.as_str()) {
            return Err(QueryError::DuplicateClip(b.clip_id.clone()));
        }
        stubs.push(compile_stub(&b.validate()?));
    }
    let mut text = String::new();
    if !spec.preamble.is_empty() {
        text.push_str(&spec.preamble);
        text.push('\n');
    }
    text.push_str(&spec.library_text);
    text.push('\n');
    text.push_str(SEPARATOR_LINE);
    text.push_str("\n\n");
    text.push_str(&stubs.join("\n"));
    Ok(Query {
        text,
        stub_count: n,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("quota exhausted: {0}")]
    Quota(String),
}

/// Minimal completion service: send the query, get raw bytes back.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, query: &str) -> Result<Vec<u8>, ClientError>;
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("completion is not UTF-8 text")]
    MalformedResponse,
    #[error("response cache: {0}")]
    Cache(#[from] io::Error),
}

impl SubmitError {
    /// Whether resubmitting the same query may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            SubmitError::Client(_) | SubmitError::MalformedResponse => true,
            SubmitError::Cache(_) => false,
        }
    }
}

/// Stores completions on disk under the hash of their query.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.txt"))
    }

    fn lock(&self, hash: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(hash.to_string()).or_default().clone()
    }

    pub fn get(&self, hash: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path(hash)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes through a temporary file and renames it into place.
    pub fn put(&self, hash: &str, text: &str) -> io::Result<()> {
        let tmp = self.dir.join(format!(".{hash}.{}.tmp", std::process::id()));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.path(hash))
    }
}

/// Sends `query` unless a cached completion exists; returns the completion
/// verbatim. Concurrent submits of the same query through one cache call
/// the client at most once.
pub fn submit(
    query: &str,
    client: &dyn CompletionClient,
    cache: Option<&ResponseCache>,
) -> Result<String, SubmitError> {
    let Some(cache) = cache else {
        return fetch(query, client);
    };
    let hash = query_hash(query);
    let lock = cache.lock(&hash);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(hit) = cache.get(&hash)? {
        return Ok(hit);
    }
    let text = fetch(query, client)?;
    cache.put(&hash, &text)?;
    Ok(text)
}

fn fetch(query: &str, client: &dyn CompletionClient) -> Result<String, SubmitError> {
    let bytes = client.complete(query)?;
    String::from_utf8(bytes).map_err(|_| SubmitError::MalformedResponse)
}

/// Replays canned completions and counts invocations.
#[derive(Debug, Default)]
pub struct StubClient {
    by_hash: HashMap<String, Result<Vec<u8>, ClientError>>,
    fallback: Option<Result<Vec<u8>, ClientError>>,
    calls: AtomicUsize,
}

impl StubClient {
    /// Answers every query with `response`.
    pub fn replaying(response: impl Into<Vec<u8>>) -> Self {
        StubClient {
            fallback: Some(Ok(response.into())),
            ..Default::default()
        }
    }

    pub fn failing(err: ClientError) -> Self {
        StubClient {
            fallback: Some(Err(err)),
            ..Default::default()
        }
    }

    /// Answers the query with this exact text with `response`.
    pub fn with_fixture(mut self, query: &str, response: impl Into<Vec<u8>>) -> Self {
        self.by_hash.insert(query_hash(query), Ok(response.into()));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionClient for StubClient {
    fn complete(&self, query: &str) -> Result<Vec<u8>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.by_hash
            .get(&query_hash(query))
            .or(self.fallback.as_ref())
            .cloned()
            .unwrap_or_else(|| Err(ClientError::Transport("no fixture for query".into())))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    /// In query order.
    pub matched: Vec<(String, Result<Program, ParseError>)>,
    /// Clips the completion did not contain.
    pub missing: Vec<String>,
    /// Completed programs whose name matches no clip, or repeats one.
    pub extra: Vec<(String, Result<Program, ParseError>)>,
    /// Entries whose header was too broken to recover a name.
    pub unattributed: Vec<ParseError>,
}

/// Pairs completed programs with the query's clips by function name.
/// Bare `verb obj` lines are rewritten to call syntax first.
pub fn ingest_results(raw: &str, spec: &QuerySpec) -> IngestReport {
    let corpus = parse_corpus(&normalize_bare_calls(raw));
    let mut found: HashMap<String, Result<Program, ParseError>> = HashMap::new();
    let mut report = IngestReport::default();
    let wanted: BTreeSet<&str> = spec.clip_ids().into_iter().collect();
    for entry in corpus.entries {
        match entry.name {
            Some(name) if wanted.contains(name.as_str()) && !found.contains_key(&name) => {
                found.insert(name, entry.result);
            }
            Some(name) => report.extra.push((name, entry.result)),
            None => {
                if let Err(e) = entry.result {
                    report.unattributed.push(e);
                }
            }
        }
    }
    for id in spec.clip_ids() {
        match found.remove(id) {
            Some(r) => report.matched.push((id.to_string(), r)),
            None => report.missing.push(id.to_string()),
        }
    }
    report
}
