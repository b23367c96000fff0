//! The `leap` command: parse, validate, plan, compile, stats and compare
//! over action-program corpora.
//!
//! Exit codes are stable: 0 success, 1 findings, 2 usage, 3 I/O, 4 client.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use leap_core::analytics::{compare, corpus_stats, CorpusStats};
use leap_core::ast::serialize;
use leap_core::corpus::EXEMPLAR_LIBRARY;
use leap_core::parser::{parse_corpus, Corpus, ParseError};
use leap_core::planner::{collect_universe, plan, plan_to_program, Goal, PlanError, PlanQuery};
use leap_core::prompt::{assemble_query, EventBundle, QuerySpec, MAX_BATCH};
use leap_core::semantics::{
    execute_with, parse_overlay, EvalMode, ExecOptions, ExecReport, ViolationReason, DEFAULT_FUEL,
};
use leap_core::{Program, SchemaTable, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Findings,
    Usage,
    Io,
    Client,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Findings => 1,
            ExitStatus::Usage => 2,
            ExitStatus::Io => 3,
            ExitStatus::Client => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "leap", about = "Work with egocentric action programs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse program files and report errors.
    Parse {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Emit one JSON record per program.
        #[arg(long)]
        json: bool,
    },
    /// Execute each program against the schema table and report violations.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Initial world state, one condition per line.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Schema overlay replacing default schemas.
        #[arg(long)]
        schemas: Option<PathBuf>,
        /// Loop iterations allowed per program.
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: usize,
        /// Treat unknown preconditions as violations.
        #[arg(long)]
        strict: bool,
    },
    /// Search for a shortest program reaching a goal.
    Plan {
        #[arg(long)]
        state: Option<PathBuf>,
        /// Conditions joined with ` and `, e.g. "milk in hand".
        #[arg(long)]
        goal: String,
        /// Directory of `.leap` files usable as whole-program steps.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        max_depth: usize,
        /// Name of the emitted program.
        #[arg(long, default_value = "plan")]
        emit: String,
    },
    /// Compile event bundles into completion queries.
    Compile {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Exemplar library; the bundled one when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = MAX_BATCH)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sub-action length histograms and object frequencies.
    Stats {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// CSV `program,verb_class`.
        #[arg(long)]
        verbs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Set-level comparison of predicted and ground-truth programs.
    Compare {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Failure that ends a command early with a given status.
struct Abort(ExitStatus, String);

impl Abort {
    fn io(path: &Path, e: io::Error) -> Self {
        Abort(ExitStatus::Io, format!("{}: {e}", path.display()))
    }

    fn usage(msg: impl Into<String>) -> Self {
        Abort(ExitStatus::Usage, msg.into())
    }
}

type CmdResult = Result<ExitStatus, Abort>;

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                ExitStatus::Usage
            } else {
                let _ = write!(out, "{text}");
                ExitStatus::Success
            };
        }
    };
    let result = match cli.command {
        Command::Parse { paths, json } => cmd_parse(&paths, json, out),
        Command::Validate {
            paths,
            state,
            schemas,
            fuel,
            strict,
        } => cmd_validate(&paths, state.as_deref(), schemas.as_deref(), fuel, strict, out),
        Command::Plan {
            state,
            goal,
            library,
            max_depth,
            emit,
        } => cmd_plan(state.as_deref(), &goal, library.as_deref(), max_depth, &emit, out),
        Command::Compile {
            bundles,
            library,
            batch,
            out: dir,
        } => cmd_compile(&bundles, library.as_deref(), batch, &dir, out),
        Command::Stats { paths, verbs, out: dir } => cmd_stats(&paths, verbs.as_deref(), dir.as_deref(), out),
        Command::Compare { pred, gt, json } => cmd_compare(&pred, &gt, json, out),
    };
    match result {
        Ok(status) => status,
        Err(Abort(status, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            status
        }
    }
}

fn read(path: &Path) -> Result<String, Abort> {
    fs::read_to_string(path).map_err(|e| Abort::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Abort> {
    out.write_all(text.as_bytes())
        .map_err(|e| Abort(ExitStatus::Io, format!("writing output: {e}")))
}

/// Reads and parses every file in parallel, keeping input order.
fn load_corpora(paths: &[PathBuf]) -> Result<Vec<(PathBuf, Corpus)>, Abort> {
    paths
        .par_iter()
        .map(|p| read(p).map(|text| (p.clone(), parse_corpus(&text))))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn error_line(path: &Path, e: &ParseError) -> String {
    format!(
        "{}:{}:{}: error[{}]: {}\n",
        path.display(),
        e.line,
        e.column,
        e.kind.as_str(),
        e.message
    )
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    line: usize,
    column: usize,
    kind: &'a str,
    message: &'a str,
}

impl<'a> From<&'a ParseError> for ErrorRecord<'a> {
    fn from(e: &'a ParseError) -> Self {
        ErrorRecord {
            line: e.line,
            column: e.column,
            kind: e.kind.as_str(),
            message: &e.message,
        }
    }
}

/// One line of `parse --json`.
#[derive(Serialize)]
struct ParseRecord<'a> {
    file: String,
    name: Option<&'a str>,
    line: usize,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    subactions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorRecord<'a>>,
}

fn cmd_parse(paths: &[PathBuf], json: bool, out: &mut dyn Write) -> CmdResult {
    let corpora = load_corpora(paths)?;
    let mut failed = false;
    let mut text = String::new();
    for (path, corpus) in &corpora {
        for entry in &corpus.entries {
            failed |= entry.result.is_err();
            if json {
                let rec = ParseRecord {
                    file: path.display().to_string(),
                    name: entry.name.as_deref(),
                    line: entry.line,
                    ok: entry.result.is_ok(),
                    subactions: entry.result.as_ref().ok().map(|p| leap_core::flatten(p).len()),
                    error: entry.result.as_ref().err().map(ErrorRecord::from),
                };
                text.push_str(&serde_json::to_string(&rec).expect("serializable"));
                text.push('\n');
            } else {
                match &entry.result {
                    Ok(p) => text.push_str(&format!(
                        "{}:{}: ok {} ({} sub-actions)\n",
                        path.display(),
                        entry.line,
                        p.name,
                        leap_core::flatten(p).len()
                    )),
                    Err(e) => text.push_str(&error_line(path, e)),
                }
            }
        }
    }
    emit(out, &text)?;
    Ok(if failed { ExitStatus::Findings } else { ExitStatus::Success })
}

fn load_state(path: Option<&Path>) -> Result<WorldState, Abort> {
    match path {
        None => Ok(WorldState::new()),
        Some(p) => WorldState::parse(&read(p)?)
            .map_err(|e| Abort::usage(format!("{}:{}: {}", p.display(), e.line, e.message))),
    }
}

fn load_schemas(path: Option<&Path>) -> Result<SchemaTable, Abort> {
    let table = SchemaTable::default();
    match path {
        None => Ok(table),
        Some(p) => {
            let overlay = parse_overlay(&read(p)?).map_err(|e| Abort::usage(format!("{}: {e}", p.display())))?;
            Ok(table.with_overlay(overlay))
        }
    }
}

fn render_report(path: &Path, p: &Program, r: &ExecReport) -> String {
    let mut s = format!("{}: {}: ", path.display(), p.name);
    if r.valid {
        s.push_str("valid");
    } else {
        s.push_str(&format!("{} violation(s)", r.violations.len()));
    }
    if r.fuel_exhausted {
        s.push_str(", fuel exhausted");
    }
    if !r.assumptions.is_empty() {
        s.push_str(&format!(", {} assumption(s)", r.assumptions.len()));
    }
    s.push('\n');
    for v in &r.violations {
        let reason = match v.reason {
            ViolationReason::Contradicted => "contradicted",
            ViolationReason::Unestablished => "unestablished",
        };
        s.push_str(&format!(
            "  step {}: {} requires `{}` ({reason})\n",
            v.step, v.sub_action, v.failed
        ));
    }
    s
}

fn cmd_validate(
    paths: &[PathBuf],
    state: Option<&Path>,
    schemas: Option<&Path>,
    fuel: usize,
    strict: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let initial = load_state(state)?;
    let table = load_schemas(schemas)?;
    let opts = ExecOptions {
        mode: if strict { EvalMode::Strict } else { EvalMode::Optimistic },
        fuel,
    };
    let corpora = load_corpora(paths)?;
    let results: Vec<(String, bool)> = corpora
        .par_iter()
        .map(|(path, corpus)| {
            let mut text = String::new();
            let mut findings = false;
            for entry in &corpus.entries {
                match &entry.result {
                    Ok(p) => {
                        let r = execute_with(p, &initial, &table, opts);
                        findings |= !r.valid;
                        text.push_str(&render_report(path, p, &r));
                    }
                    Err(e) => {
                        findings = true;
                        text.push_str(&error_line(path, e));
                    }
                }
            }
            (text, findings)
        })
        .collect();
    let mut findings = false;
    for (text, f) in results {
        emit(out, &text)?;
        findings |= f;
    }
    Ok(if findings { ExitStatus::Findings } else { ExitStatus::Success })
}

fn load_library_dir(dir: &Path) -> Result<Vec<Program>, Abort> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Abort::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "leap"))
        .collect();
    files.sort();
    let mut programs = Vec::new();
    for (path, corpus) in load_corpora(&files)? {
        if let Some(e) = corpus.errors().next() {
            return Err(Abort::usage(error_line(&path, e).trim_end().to_string()));
        }
        programs.extend(corpus.programs().cloned());
    }
    Ok(programs)
}

fn cmd_plan(
    state: Option<&Path>,
    goal: &str,
    library: Option<&Path>,
    max_depth: usize,
    name: &str,
    out: &mut dyn Write,
) -> CmdResult {
    let initial = load_state(state)?;
    let goal = Goal::parse(goal).map_err(|e| Abort::usage(e.to_string()))?;
    let library = match library {
        Some(dir) => load_library_dir(dir)?,
        None => Vec::new(),
    };
    let schemas = SchemaTable::default();
    let universe = collect_universe(&initial, &goal, &library);
    let q = PlanQuery {
        initial: &initial,
        goal: &goal,
        library: &library,
        schemas: &schemas,
        universe: &universe,
        max_depth,
    };
    match plan(&q) {
        Ok(p) => {
            let program = plan_to_program(&p, name, &library).map_err(|e| Abort::usage(e.to_string()))?;
            emit(out, &serialize(&program))?;
            Ok(ExitStatus::Success)
        }
        Err(e @ PlanError::NoPlan(_)) => Err(Abort(ExitStatus::Findings, e.to_string())),
        Err(e) => Err(Abort::usage(e.to_string())),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    clips: Vec<String>,
}

#[derive(Serialize)]
struct Manifest {
    batch_size: usize,
    queries: Vec<ManifestEntry>,
}

fn cmd_compile(
    paths: &[PathBuf],
    library: Option<&Path>,
    batch: usize,
    dir: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    if !(1..=MAX_BATCH).contains(&batch) {
        return Err(Abort::usage(format!("--batch must be between 1 and {MAX_BATCH}")));
    }
    let library_text = match library {
        Some(p) => read(p)?,
        None => EXEMPLAR_LIBRARY.to_string(),
    };
    let mut bundles = Vec::new();
    let mut bad = String::new();
    for path in paths {
        match EventBundle::parse_many(&read(path)?) {
            Ok(bs) => {
                for b in bs {
                    if let Err(e) = b.validate() {
                        bad.push_str(&format!("{}: {}: {e}\n", path.display(), b.clip_id));
                    }
                    bundles.push(b);
                }
            }
            Err(e) => bad.push_str(&format!("{}: malformed bundle: {e}\n", path.display())),
        }
    }
    if !bad.is_empty() {
        emit(out, &bad)?;
        return Ok(ExitStatus::Findings);
    }
    let mut queries = Vec::new();
    for chunk in bundles.chunks(batch) {
        let spec = QuerySpec::new(library_text.clone(), chunk.to_vec());
        let q = assemble_query(&spec).map_err(|e| Abort(ExitStatus::Findings, e.to_string()))?;
        queries.push((q, spec.clip_ids().iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    }
    fs::create_dir_all(dir).map_err(|e| Abort::io(dir, e))?;
    let mut manifest = Manifest {
        batch_size: batch,
        queries: Vec::new(),
    };
    for (i, (q, clips)) in queries.into_iter().enumerate() {
        let file = format!("query_{:03}.txt", i + 1);
        let path = dir.join(&file);
        fs::write(&path, &q.text).map_err(|e| Abort::io(&path, e))?;
        emit(out, &format!("{}: {} clip(s), sha256 {}\n", path.display(), clips.len(), q.hash()))?;
        manifest.queries.push(ManifestEntry {
            file,
            sha256: q.hash(),
            clips,
        });
    }
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).expect("serializable");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Abort::io(&path, e))?;
    Ok(ExitStatus::Success)
}

pub const UNCLASSIFIED: &str = "unclassified";

fn load_verb_classes(path: &Path) -> Result<Vec<(String, String)>, Abort> {
    let text = read(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Abort::usage(format!("{}: {e}", path.display())))?;
        match (rec.get(0), rec.get(1)) {
            (Some(p), Some(c)) => out.push((p.trim().to_string(), c.trim().to_string())),
            _ => return Err(Abort::usage(format!("{}: expected program,verb_class", path.display()))),
        }
    }
    Ok(out)
}

fn cmd_stats(paths: &[PathBuf], verbs: Option<&Path>, dir: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let classes: std::collections::HashMap<String, String> = match verbs {
        Some(p) => load_verb_classes(p)?.into_iter().collect(),
        None => Default::default(),
    };
    let corpora = load_corpora(paths)?;
    let stats = corpora
        .par_iter()
        .map(|(_, corpus)| {
            let programs: Vec<&Program> = corpus.programs().collect();
            let mut s = corpus_stats(programs.iter().map(|p| {
                let class = classes.get(&p.name).map_or(UNCLASSIFIED, String::as_str);
                (class, *p)
            }));
            s.parse_failure_count = corpus.errors().count();
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(CorpusStats::default(), CorpusStats::merge);
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Abort::io(dir, e))?;
            for (file, body) in [
                ("subactions.csv", stats.subactions_csv()),
                ("objects.csv", stats.objects_csv()),
            ] {
                let path = dir.join(file);
                fs::write(&path, body).map_err(|e| Abort::io(&path, e))?;
            }
        }
        None => {
            emit(out, &stats.subactions_csv())?;
            emit(out, "\n")?;
            emit(out, &stats.objects_csv())?;
        }
    }
    let summary = format!(
        "programs: {}, parse failures: {}\n",
        stats.program_count, stats.parse_failure_count
    );
    if dir.is_some() {
        emit(out, &summary)?;
    }
    Ok(ExitStatus::Success)
}

/// One line of `compare --json`.
#[derive(Serialize)]
struct CompareRecord<'a> {
    name: &'a str,
    containment: f64,
    set_equal: bool,
    verb_accuracy: f64,
    object_accuracy: f64,
    missing: Vec<String>,
    extra: Vec<String>,
}

#[derive(Serialize)]
struct CompareSummary {
    pairs: usize,
    unmatched_predicted: Vec<String>,
    unmatched_ground_truth: Vec<String>,
    mean_containment: f64,
    mean_verb_accuracy: f64,
    mean_object_accuracy: f64,
}

fn cmd_compare(pred: &Path, gt: &Path, json: bool, out: &mut dyn Write) -> CmdResult {
    let parsed = load_corpora(&[pred.to_path_buf(), gt.to_path_buf()])?;
    let mut errors = String::new();
    for (path, corpus) in &parsed {
        for e in corpus.errors() {
            errors.push_str(&error_line(path, e));
        }
    }
    let by_name = |c: &Corpus| {
        let mut m = std::collections::BTreeMap::new();
        for p in c.programs() {
            m.entry(p.name.clone()).or_insert_with(|| p.clone());
        }
        m
    };
    let preds = by_name(&parsed[0].1);
    let gts = by_name(&parsed[1].1);

    let mut text = String::new();
    let (mut sum_c, mut sum_v, mut sum_o, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (name, p) in &preds {
        let Some(g) = gts.get(name) else { continue };
        let r = compare(p, g);
        sum_c += r.containment_score;
        sum_v += r.verb_accuracy;
        sum_o += r.object_accuracy;
        n += 1;
        let missing: Vec<String> = r.missing.iter().map(ToString::to_string).collect();
        let extra: Vec<String> = r.extra.iter().map(ToString::to_string).collect();
        if json {
            let rec = CompareRecord {
                name,
                containment: r.containment_score,
                set_equal: r.set_equal,
                verb_accuracy: r.verb_accuracy,
                object_accuracy: r.object_accuracy,
                missing,
                extra,
            };
            text.push_str(&serde_json::to_string(&rec).expect("serializable"));
            text.push('\n');
        } else {
            text.push_str(&format!(
                "{name}: containment={:.3} set_equal={} verb={:.3} object={:.3} missing=[{}] extra=[{}]\n",
                r.containment_score,
                r.set_equal,
                r.verb_accuracy,
                r.object_accuracy,
                missing.join(" "),
                extra.join(" ")
            ));
        }
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    let summary = CompareSummary {
        pairs: n,
        unmatched_predicted: preds.keys().filter(|k| !gts.contains_key(*k)).cloned().collect(),
        unmatched_ground_truth: gts.keys().filter(|k| !preds.contains_key(*k)).cloned().collect(),
        mean_containment: mean(sum_c),
        mean_verb_accuracy: mean(sum_v),
        mean_object_accuracy: mean(sum_o),
    };
    if json {
        text.push_str(&serde_json::to_string(&summary).expect("serializable"));
        text.push('\n');
    } else {
        for name in &summary.unmatched_predicted {
            text.push_str(&format!("unmatched prediction: {name}\n"));
        }
        for name in &summary.unmatched_ground_truth {
            text.push_str(&format!("unmatched ground truth: {name}\n"));
        }
        text.push_str(&format!(
            "mean over {n} pair(s): containment={:.3} verb={:.3} object={:.3}\n",
            summary.mean_containment, summary.mean_verb_accuracy, summary.mean_object_accuracy
        ));
    }
    text.push_str(&errors);
    emit(out, &text)?;
    Ok(if errors.is_empty() { ExitStatus::Success } else { ExitStatus::Findings })
}
