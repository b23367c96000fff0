//! Line-oriented, indentation-sensitive parser for program text.
//!
//! Each non-blank line is either a `#` comment (kept verbatim with its
//! anchor), a block opener (`if <cond>:` / `while <cond>:`), or a call
//! (`verb(arg, ...)`). Blocks are delimited by indentation; tabs are
//! rejected.

use std::fmt;

use crate::ast::{
    is_identifier, is_object_name, Comment, Condition, ObjectName, Predicate, Program, Seconds,
    Stmt, SubAction, Verb, MAX_NESTING_DEPTH, RESERVED_PHRASE_WORDS, WORKSPACE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorKind {
    BadHeader,
    BadIndent,
    UnknownVerb,
    BadCondition,
    BadArity,
    UnexpectedToken,
    EmptyBlock,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::BadHeader => "bad_header",
            ParseErrorKind::BadIndent => "bad_indent",
            ParseErrorKind::UnknownVerb => "unknown_verb",
            ParseErrorKind::BadCondition => "bad_condition",
            ParseErrorKind::BadArity => "bad_arity",
            ParseErrorKind::UnexpectedToken => "unexpected_token",
            ParseErrorKind::EmptyBlock => "empty_block",
        }
    }
}

/// Byte range into the parsed source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.line,
            self.column,
            self.kind.as_str(),
            self.message
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy)]
struct Line<'a> {
    /// 1-based line number in the original source.
    number: usize,
    /// Byte offset of the line start in the original source.
    offset: usize,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn error_at(&self, byte_col: usize, len: usize, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        let byte_col = byte_col.min(self.text.len());
        let column = self.text[..byte_col].chars().count() + 1;
        let end = (byte_col + len).min(self.text.len());
        ParseError {
            line: self.number,
            column,
            kind,
            message: msg.into(),
            span: SourceSpan {
                begin: self.offset + byte_col,
                end: self.offset + end,
            },
        }
    }
}

/// Splits on `\n`, dropping a trailing `\r`. Always yields at least one
/// line, so the empty input has a single empty line 1.
fn split_lines(text: &str, first_number: usize, base_offset: usize) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split('\n').enumerate() {
        let t = raw.strip_suffix('\r').unwrap_or(raw);
        out.push(Line {
            number: first_number + i,
            offset: base_offset + offset,
            text: t,
        });
        offset += raw.len() + 1;
    }
    out
}

struct StmtLine<'a> {
    line: Line<'a>,
    indent: usize,
    content: &'a str,
}

/// Parses exactly one program. Leading blank lines are skipped; the first
/// non-blank line must be the header at column 1.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    parse_lines(&split_lines(text, 1, 0))
}

fn parse_lines(lines: &[Line<'_>]) -> Result<Program, ParseError> {
    let Some(header_idx) = lines.iter().position(|l| !l.text.trim().is_empty()) else {
        let last = lines.last().copied().unwrap_or(Line {
            number: 1,
            offset: 0,
            text: "",
        });
        let first = lines.first().copied().unwrap_or(last);
        return Err(first.error_at(0, 0, ParseErrorKind::BadHeader, "missing program header"));
    };
    let header = lines[header_idx];
    let (name, start_t, stop_t) = parse_header(&header)?;

    let mut comments = Vec::new();
    let mut stmts = Vec::new();
    let mut anchor = 0;
    for line in &lines[header_idx + 1..] {
        if line.text.trim().is_empty() {
            continue;
        }
        anchor += 1;
        let indent_len = line.text.len() - line.text.trim_start().len();
        if let Some(tab) = line.text[..indent_len].find('\t') {
            return Err(line.error_at(tab, 1, ParseErrorKind::BadIndent, "tab in indentation"));
        }
        if !line.text[..indent_len].bytes().all(|b| b == b' ') {
            return Err(line.error_at(0, indent_len, ParseErrorKind::BadIndent, "non-space indentation"));
        }
        let content = line.text[indent_len..].trim_end();
        if let Some(text) = content.strip_prefix('#') {
            // Trailing whitespace of comments is kept verbatim.
            debug_assert!(line.text[indent_len + 1..].starts_with(text));
            comments.push(Comment {
                anchor,
                indent: indent_len,
                text: line.text[indent_len + 1..].to_string(),
            });
            continue;
        }
        if indent_len == 0 {
            let kind = if content.starts_with("def ") {
                ParseErrorKind::UnexpectedToken
            } else {
                ParseErrorKind::BadIndent
            };
            return Err(line.error_at(0, content.len(), kind, "expected an indented statement"));
        }
        stmts.push(StmtLine {
            line: *line,
            indent: indent_len,
            content,
        });
    }

    let mut pos = 0;
    let body = match stmts.first() {
        Some(first) => parse_block(&stmts, &mut pos, first.indent, 0)?,
        None => Vec::new(),
    };
    if let Some(extra) = stmts.get(pos) {
        return Err(extra.line.error_at(
            0,
            extra.indent,
            ParseErrorKind::BadIndent,
            "unindent does not match any outer indentation level",
        ));
    }
    Ok(Program {
        name,
        start_t,
        stop_t,
        comments,
        body,
    })
}

fn parse_header(line: &Line<'_>) -> Result<(String, Seconds, Seconds), ParseError> {
    let bad = |col: usize, msg: &str| line.error_at(col, 1, ParseErrorKind::BadHeader, msg.to_string());
    let text = line.text;
    if text.starts_with(char::is_whitespace) {
        return Err(bad(0, "header must start at column 1"));
    }
    if !text.starts_with("def ") {
        return Err(bad(0, "expected `def <name>(start_t=<t>, stop_t=<t>):`"));
    }
    let mut cur = Cursor::new(text, 4);
    cur.skip_ws();
    let name_start = cur.pos;
    cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
    let name = &text[name_start..cur.pos];
    if !is_identifier(name) {
        return Err(bad(name_start, "invalid program name"));
    }
    cur.skip_ws();
    if !cur.eat("(") {
        return Err(bad(cur.pos, "expected `(`"));
    }
    let start_t = header_param(&mut cur, line, "start_t")?;
    cur.skip_ws();
    if !cur.eat(",") {
        return Err(bad(cur.pos, "expected `,`"));
    }
    let stop_t = header_param(&mut cur, line, "stop_t")?;
    cur.skip_ws();
    if !cur.eat(")") {
        return Err(bad(cur.pos, "expected `)`"));
    }
    cur.skip_ws();
    if !cur.eat(":") {
        return Err(bad(cur.pos, "expected `:`"));
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(bad(cur.pos, "trailing text after header"));
    }
    if stop_t < start_t {
        return Err(bad(0, "stop_t precedes start_t"));
    }
    Ok((name.to_string(), start_t, stop_t))
}

fn header_param(cur: &mut Cursor<'_>, line: &Line<'_>, key: &str) -> Result<Seconds, ParseError> {
    cur.skip_ws();
    if !cur.eat(key) {
        return Err(line.error_at(cur.pos, key.len(), ParseErrorKind::BadHeader, format!("expected `{key}`")));
    }
    cur.skip_ws();
    if !cur.eat("=") {
        return Err(line.error_at(cur.pos, 1, ParseErrorKind::BadHeader, "expected `=`"));
    }
    cur.skip_ws();
    let start = cur.pos;
    cur.take_while(|c| c.is_ascii_digit() || c == '.');
    let raw = &cur.src[start..cur.pos];
    raw.parse::<Seconds>().map_err(|_| {
        line.error_at(
            start,
            raw.len().max(1),
            ParseErrorKind::BadHeader,
            format!("`{key}` must be a non-negative decimal with at most 3 fraction digits"),
        )
    })
}

fn parse_block(
    stmts: &[StmtLine<'_>],
    pos: &mut usize,
    indent: usize,
    depth: usize,
) -> Result<Vec<Stmt>, ParseError> {
    let mut body = Vec::new();
    while let Some(sl) = stmts.get(*pos) {
        if sl.indent < indent {
            break;
        }
        if sl.indent > indent {
            return Err(sl.line.error_at(0, sl.indent, ParseErrorKind::BadIndent, "unexpected indent"));
        }
        *pos += 1;
        match parse_statement(sl)? {
            Parsed::Act(sa) => body.push(Stmt::Act(sa)),
            Parsed::Block(keyword, cond) => {
                let child_indent = match stmts.get(*pos) {
                    Some(next) if next.indent > indent => next.indent,
                    _ => {
                        return Err(sl.line.error_at(
                            sl.indent,
                            sl.content.len(),
                            ParseErrorKind::EmptyBlock,
                            format!("`{keyword}` block has no indented body"),
                        ))
                    }
                };
                if depth + 1 > MAX_NESTING_DEPTH {
                    return Err(sl.line.error_at(
                        sl.indent,
                        sl.content.len(),
                        ParseErrorKind::BadIndent,
                        format!("nesting depth exceeds {MAX_NESTING_DEPTH}"),
                    ));
                }
                let inner = parse_block(stmts, pos, child_indent, depth + 1)?;
                if let Some(next) = stmts.get(*pos) {
                    if next.indent > indent && next.indent < child_indent {
                        return Err(next.line.error_at(
                            0,
                            next.indent,
                            ParseErrorKind::BadIndent,
                            "unindent does not match any outer indentation level",
                        ));
                    }
                }
                body.push(if keyword == "if" {
                    Stmt::If { cond, body: inner }
                } else {
                    Stmt::While { cond, body: inner }
                });
            }
        }
    }
    Ok(body)
}

enum Parsed {
    Act(SubAction),
    Block(&'static str, Condition),
}

fn parse_statement(sl: &StmtLine<'_>) -> Result<Parsed, ParseError> {
    let base = sl.indent;
    let content = sl.content;
    for keyword in ["if", "while"] {
        let Some(rest) = content.strip_prefix(keyword) else {
            continue;
        };
        if !rest.starts_with(char::is_whitespace) {
            continue;
        }
        let Some(cond_text) = rest.strip_suffix(':') else {
            return Err(sl.line.error_at(
                base + content.len(),
                0,
                ParseErrorKind::UnexpectedToken,
                format!("expected `:` after `{keyword}` condition"),
            ));
        };
        let cond_offset = base + keyword.len() + (cond_text.len() - cond_text.trim_start().len());
        let cond = parse_condition(cond_text.trim()).map_err(|(rel, msg)| {
            sl.line.error_at(
                cond_offset + rel,
                cond_text.trim().len().saturating_sub(rel).max(1),
                ParseErrorKind::BadCondition,
                msg,
            )
        })?;
        return Ok(Parsed::Block(keyword, cond));
    }
    parse_call(content).map(Parsed::Act).map_err(|e| {
        sl.line
            .error_at(base + e.col, e.len, e.kind, e.message)
    })
}

struct LocalError {
    col: usize,
    len: usize,
    kind: ParseErrorKind,
    message: String,
}

fn parse_call(content: &str) -> Result<SubAction, LocalError> {
    let err = |col: usize, len: usize, kind, msg: String| LocalError {
        col,
        len,
        kind,
        message: msg,
    };
    let mut cur = Cursor::new(content, 0);
    cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
    let name = &content[..cur.pos];
    if name.is_empty() {
        return Err(err(0, 1, ParseErrorKind::UnexpectedToken, "expected a sub-action call".into()));
    }
    cur.skip_ws();
    if !cur.eat("(") {
        let kind = if content.ends_with(':') || Verb::from_surface(name).is_some() {
            ParseErrorKind::UnexpectedToken
        } else {
            ParseErrorKind::UnknownVerb
        };
        let msg = if kind == ParseErrorKind::UnknownVerb {
            format!("unknown sub-action `{name}`")
        } else {
            format!("expected `(` after `{name}`")
        };
        let col = if kind == ParseErrorKind::UnknownVerb { 0 } else { cur.pos };
        return Err(err(col, name.len().max(1), kind, msg));
    }
    let Some(verb) = Verb::from_surface(name) else {
        return Err(err(0, name.len(), ParseErrorKind::UnknownVerb, format!("unknown sub-action `{name}`")));
    };
    let mut args = Vec::new();
    cur.skip_ws();
    if !cur.eat(")") {
        loop {
            cur.skip_ws();
            let start = cur.pos;
            let raw = if cur.eat("\"") {
                cur.take_while(|c| c != '"');
                let inner = &content[start + 1..cur.pos];
                if !cur.eat("\"") {
                    return Err(err(start, content.len() - start, ParseErrorKind::UnexpectedToken, "unterminated string".into()));
                }
                inner
            } else if cur.eat("'") {
                cur.take_while(|c| c != '\'');
                let inner = &content[start + 1..cur.pos];
                if !cur.eat("'") {
                    return Err(err(start, content.len() - start, ParseErrorKind::UnexpectedToken, "unterminated string".into()));
                }
                inner
            } else {
                cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                &content[start..cur.pos]
            };
            let obj = ObjectName::normalize(raw).map_err(|_| {
                err(start, (cur.pos - start).max(1), ParseErrorKind::UnexpectedToken, format!("invalid object name `{raw}`"))
            })?;
            args.push(obj);
            cur.skip_ws();
            if cur.eat(")") {
                break;
            }
            if !cur.eat(",") {
                return Err(err(cur.pos, 1, ParseErrorKind::UnexpectedToken, "expected `,` or `)`".into()));
            }
        }
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(err(cur.pos, content.len() - cur.pos, ParseErrorKind::UnexpectedToken, "trailing text after call".into()));
    }
    let n = args.len();
    SubAction::new(verb, args).map_err(|e| err(0, content.len(), ParseErrorKind::BadArity, format!("{e} (got {n})")))
}

/// Parses condition surface syntax (the text between `if`/`while` and
/// `:`). On failure returns a byte offset into `text` and a message.
///
/// Accepted forms:
/// - `<obj> [not] in hand`, `<obj> [not] open`, `<obj> [not] clean`
/// - `<obj> [not] at workspace` for the workspace predicate
/// - `<obj> [not] at <other>` as the generic `at(obj, other)`
/// - `<obj> [not] <name>` as the unary generic `name(obj)`
/// - `[not] <name>(<obj>, ...)` for generics of any arity
pub fn parse_condition(text: &str) -> Result<Condition, (usize, String)> {
    let text_trim = text.trim();
    let lead = text.len() - text.trim_start().len();
    if text_trim.is_empty() {
        return Err((0, "empty condition".into()));
    }
    if text_trim.contains('(') {
        return parse_call_condition(text_trim).map_err(|(c, m)| (c + lead, m));
    }
    // Token list with byte offsets.
    let mut tokens = Vec::new();
    let mut idx = 0;
    for tok in text_trim.split(' ') {
        if !tok.is_empty() {
            tokens.push((lead + idx, tok));
        }
        idx += tok.len() + 1;
    }
    let (subj_col, subj) = tokens[0];
    if !is_object_name(subj) {
        return Err((subj_col, format!("`{subj}` is not an object name")));
    }
    let subj = ObjectName::new(subj).expect("checked");
    let mut rest = &tokens[1..];
    let negated = matches!(rest.first(), Some((_, "not")));
    if negated {
        rest = &rest[1..];
    }
    let words: Vec<&str> = rest.iter().map(|t| t.1).collect();
    let predicate = match words.as_slice() {
        ["in", "hand"] => Predicate::InHand(subj),
        ["open"] => Predicate::Open(subj),
        ["clean"] => Predicate::Clean(subj),
        ["at", place] if *place == WORKSPACE => Predicate::At(subj),
        ["at", place] if is_object_name(place) => Predicate::Generic {
            name: "at".into(),
            args: vec![subj, ObjectName::new(*place).expect("checked")],
        },
        [name] if is_identifier(name) && !RESERVED_PHRASE_WORDS.contains(name) => {
            Predicate::Generic {
                name: (*name).to_string(),
                args: vec![subj],
            }
        }
        [] => {
            let col = tokens.last().map(|t| t.0 + t.1.len()).unwrap_or(0);
            return Err((col, "missing predicate phrase".into()));
        }
        _ => {
            return Err((
                rest[0].0,
                format!("unrecognized predicate phrase `{}`", words.join(" ")),
            ))
        }
    };
    Ok(Condition { negated, predicate })
}

fn parse_call_condition(text: &str) -> Result<Condition, (usize, String)> {
    let (negated, body, off) = match text.strip_prefix("not") {
        Some(rest) if rest.starts_with(char::is_whitespace) => {
            let trimmed = rest.trim_start();
            (true, trimmed, text.len() - trimmed.len())
        }
        _ => (false, text, 0),
    };
    let Some(open) = body.find('(') else {
        return Err((off, "expected `(`".into()));
    };
    let name = body[..open].trim_end();
    if !is_identifier(name) {
        return Err((off, format!("invalid predicate name `{name}`")));
    }
    let Some(inner) = body[open + 1..].strip_suffix(')') else {
        return Err((off + body.len(), "expected `)` at end of condition".into()));
    };
    let mut args = Vec::new();
    if !inner.trim().is_empty() {
        let mut col = off + open + 1;
        for raw in inner.split(',') {
            let a = raw.trim();
            if !is_object_name(a) {
                return Err((col, format!("`{a}` is not an object name")));
            }
            args.push(ObjectName::new(a).expect("checked"));
            col += raw.len() + 1;
        }
    }
    Ok(Condition {
        negated,
        predicate: Predicate::Generic {
            name: name.to_string(),
            args,
        },
    })
}

/// Minimal byte cursor over ASCII-oriented syntax.
struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, pos: usize) -> Self {
        Cursor { src, pos }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        self.take_while(|c| c == ' ');
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) {
        let n = self
            .rest()
            .char_indices()
            .find(|&(_, c)| !pred(c))
            .map(|(i, _)| i)
            .unwrap_or(self.rest().len());
        self.pos += n;
    }
}

/// One program slot in a multi-program file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    /// Name taken leniently from the `def` line, available even when the
    /// rest of the program fails to parse.
    pub name: Option<String>,
    /// 1-based line of the `def`.
    pub line: usize,
    pub result: Result<Program, ParseError>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    /// Lines before the first program (imports, comments), verbatim.
    pub preamble: Vec<String>,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn programs(&self) -> impl Iterator<Item = &Program> {
        self.entries.iter().filter_map(|e| e.result.as_ref().ok())
    }

    pub fn errors(&self) -> impl Iterator<Item = &ParseError> {
        self.entries.iter().filter_map(|e| e.result.as_ref().err())
    }
}

/// Splits a file on `def ` at column 1 and parses each program
/// independently. Preamble lines must be blank, comments, or
/// `import`/`from` statements; anything else becomes an error entry.
pub fn parse_corpus(text: &str) -> Corpus {
    let lines = split_lines(text, 1, 0);
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.text.starts_with("def ") || l.text == "def")
        .map(|(i, _)| i)
        .collect();
    let first = starts.first().copied().unwrap_or(lines.len());
    let mut corpus = Corpus::default();
    for line in &lines[..first] {
        let t = line.text.trim_start();
        let opaque = t.is_empty()
            || t.starts_with('#')
            || t.starts_with("import ")
            || t.starts_with("from ");
        if !opaque {
            corpus.entries.push(CorpusEntry {
                name: None,
                line: line.number,
                result: Err(line.error_at(
                    0,
                    line.text.len(),
                    ParseErrorKind::UnexpectedToken,
                    "expected a program header, import, or comment",
                )),
            });
        }
        corpus.preamble.push(line.text.to_string());
    }
    // The empty string after a final newline is not a preamble line.
    if starts.is_empty() && (text.is_empty() || text.ends_with('\n')) {
        corpus.preamble.pop();
    }
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(lines.len());
        let chunk = &lines[s..end];
        corpus.entries.push(CorpusEntry {
            name: lenient_name(chunk[0].text),
            line: chunk[0].number,
            result: parse_lines(chunk),
        });
    }
    corpus
}

fn lenient_name(header: &str) -> Option<String> {
    let rest = header.strip_prefix("def")?.trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    let name = &rest[..end];
    is_identifier(name).then(|| name.to_string())
}

/// Rewrites bare sub-action lines such as `grab cucumber` or
/// `use faucet, cucumber` into call syntax. Lines that are already calls,
/// block openers, comments, or headers are left untouched, as is anything
/// whose first word is not a known verb.
pub fn normalize_bare_calls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, raw) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let indent_len = raw.len() - raw.trim_start_matches(' ').len();
        let content = raw[indent_len..].trim_end();
        let rewritten = (indent_len > 0)
            .then(|| bare_to_call(content))
            .flatten();
        match rewritten {
            Some(call) => {
                out.push_str(&raw[..indent_len]);
                out.push_str(&call);
            }
            None => out.push_str(raw),
        }
    }
    out
}

fn bare_to_call(content: &str) -> Option<String> {
    if content.contains(['(', ')', ':', '#']) {
        return None;
    }
    let (word, rest) = match content.split_once(' ') {
        Some((w, r)) => (w, r.trim()),
        None => (content, ""),
    };
    Verb::from_surface(word)?;
    let args: Vec<String> = rest
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            ObjectName::normalize(a)
                .map(|o| o.to_string())
                .unwrap_or_else(|_| a.to_string())
        })
        .collect();
    Some(format!("{word}({})", args.join(", ")))
}
