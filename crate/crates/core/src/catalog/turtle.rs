//! Turtle for dataset metadata, restricted to the DSV subset we emit.
//!
//! The parser is deliberately lenient about directive syntax: it accepts
//! `@prefix p: <iri> .`, `PREFIX p: <iri>` and the lowercase `prefix p:<iri>.`
//! seen in hand-written listings, and a stray `.` right before a closing `]`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use super::{is_absolute_iri, ColumnMeta, DatasetMeta, Role};

const DSV: &str = "https://w3id.org/dsv-ontology#";
const DCTERMS: &str = "http://purl.org/dc/terms/";
const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
const DBPEDIA: &str = "http://dbpedia.org/ontology/";
const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

const PREFIXES: [(&str, &str); 4] = [("dsv", DSV), ("dcterms", DCTERMS), ("rdfs", RDFS), ("dbpedia", DBPEDIA)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurtleError {
    pub line: usize,
    pub message: String,
}

impl TurtleError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        TurtleError {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for TurtleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for TurtleError {}

/// Render one dataset as a Turtle document.
pub fn serialize_turtle(d: &DatasetMeta, base_iri: &str) -> String {
    let base = base_iri.trim_end_matches('/');
    let dataset_iri = format!("{base}/datasets/{}", d.id);
    let column_iris: Vec<String> = d.column_ids().iter().map(|cid| format!("{dataset_iri}/column/{cid}")).collect();

    let mut out = String::new();
    for (prefix, ns) in PREFIXES {
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    out.push('\n');
    let _ = writeln!(out, "<{dataset_iri}> a dsv:Dataset ;");
    let _ = writeln!(out, "    dcterms:subject {} ;", literal(&d.topic));
    let _ = writeln!(out, "    dcterms:title {} ;", literal(&d.title));
    let _ = writeln!(out, "    dcterms:type {} ;", literal(d.role.as_str()));
    out.push_str("    dsv:datasetSchema [ dsv:column\n");
    for (i, iri) in column_iris.iter().enumerate() {
        let sep = if i + 1 == column_iris.len() { " ] ." } else { "," };
        let _ = writeln!(out, "        <{iri}>{sep}");
    }

    for (c, iri) in d.columns.iter().zip(&column_iris) {
        out.push('\n');
        let _ = write!(out, "<{iri}> a dsv:Column ;\n    rdfs:label {}", literal(&c.label));
        if let Some(ty) = &c.semantic_type {
            let _ = write!(out, " ;\n    dcterms:type {}", literal(ty));
        }
        if let Some(prop) = &c.vocab_property {
            let _ = write!(out, " ;\n    dsv:columnProperty {}", compact_iri(prop));
        }
        out.push_str(" .\n");
    }
    out
}

fn literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn compact_iri(iri: &str) -> String {
    for (prefix, ns) in PREFIXES {
        if let Some(local) = iri.strip_prefix(ns) {
            let simple = local.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && local.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if simple {
                return format!("{prefix}:{local}");
            }
        }
    }
    format!("<{iri}>")
}

/// Parse a dataset document; ignored triples are logged.
pub fn parse_turtle(doc: &str) -> Result<DatasetMeta, TurtleError> {
    let (d, warnings) = parse_turtle_with_warnings(doc)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(d)
}

/// Parse a dataset document, returning a warning for every triple that does
/// not belong to the supported subset.
pub fn parse_turtle_with_warnings(doc: &str) -> Result<(DatasetMeta, Vec<String>), TurtleError> {
    let tokens = tokenize(doc)?;
    let triples = Parser::new(tokens).parse()?;
    build_dataset(&triples)
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Literal(String),
    /// Numbers, booleans and other bare words the subset never needs.
    Bare(String),
    LangTag,
    DatatypeMark,
    A,
    PrefixKw {
        at: bool,
    },
    BaseKw {
        at: bool,
    },
    Dot,
    Semi,
    Comma,
    LBracket,
    RBracket,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

fn tokenize(doc: &str) -> Result<Vec<Token>, TurtleError> {
    let chars: Vec<char> = doc.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '<' => {
                let start = line;
                let mut j = i + 1;
                let mut iri = String::new();
                while j < chars.len() && chars[j] != '>' {
                    if chars[j] == '\n' || chars[j] == '<' {
                        return Err(TurtleError::new(start, "unterminated IRI"));
                    }
                    iri.push(chars[j]);
                    j += 1;
                }
                if j == chars.len() {
                    return Err(TurtleError::new(start, "unterminated IRI"));
                }
                tokens.push(Token {
                    tok: Tok::Iri(iri),
                    line: start,
                });
                i = j + 1;
            }
            '"' | '\'' => {
                let start = line;
                let (value, next, lines) = read_string(&chars, i).map_err(|m| TurtleError::new(start, m))?;
                line += lines;
                tokens.push(Token {
                    tok: Tok::Literal(value),
                    line: start,
                });
                i = next;
            }
            '.' => {
                tokens.push(Token { tok: Tok::Dot, line });
                i += 1;
            }
            ';' => {
                tokens.push(Token { tok: Tok::Semi, line });
                i += 1;
            }
            ',' => {
                tokens.push(Token { tok: Tok::Comma, line });
                i += 1;
            }
            '[' => {
                tokens.push(Token { tok: Tok::LBracket, line });
                i += 1;
            }
            ']' => {
                tokens.push(Token { tok: Tok::RBracket, line });
                i += 1;
            }
            '^' if chars.get(i + 1) == Some(&'^') => {
                tokens.push(Token {
                    tok: Tok::DatatypeMark,
                    line,
                });
                i += 2;
            }
            '@' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '-') {
                    j += 1;
                }
                let word: String = chars[i + 1..j].iter().collect();
                let tok = match word.as_str() {
                    "prefix" => Tok::PrefixKw { at: true },
                    "base" => Tok::BaseKw { at: true },
                    "" => return Err(TurtleError::new(line, "stray '@'")),
                    _ => Tok::LangTag,
                };
                tokens.push(Token { tok, line });
                i = j;
            }
            _ => {
                let mut j = i;
                while j < chars.len() && is_name_char(chars[j]) {
                    j += 1;
                }
                // a trailing '.' terminates the statement rather than the name
                while j > i && chars[j - 1] == '.' {
                    j -= 1;
                }
                if j == i {
                    return Err(TurtleError::new(line, format!("unexpected character {c:?}")));
                }
                let word: String = chars[i..j].iter().collect();
                let tok = if let Some((prefix, local)) = word.split_once(':') {
                    Tok::PName(prefix.to_string(), local.to_string())
                } else if word == "a" {
                    Tok::A
                } else if word.eq_ignore_ascii_case("prefix") {
                    Tok::PrefixKw { at: false }
                } else if word.eq_ignore_ascii_case("base") {
                    Tok::BaseKw { at: false }
                } else {
                    Tok::Bare(word)
                };
                tokens.push(Token { tok, line });
                i = j;
            }
        }
    }
    Ok(tokens)
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | ':' | '.' | '+' | '%')
}

/// Returns (unescaped value, index after the closing quote, newlines consumed).
fn read_string(chars: &[char], start: usize) -> Result<(String, usize, usize), String> {
    let quote = chars[start];
    let long = chars.get(start + 1) == Some(&quote) && chars.get(start + 2) == Some(&quote);
    let mut i = start + if long { 3 } else { 1 };
    let mut out = String::new();
    let mut lines = 0;
    loop {
        let Some(&c) = chars.get(i) else {
            return Err("unterminated string literal".into());
        };
        if long {
            if c == quote && chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                return Ok((out, i + 3, lines));
            }
        } else if c == quote {
            return Ok((out, i + 1, lines));
        } else if c == '\n' {
            return Err("newline in string literal".into());
        }
        if c == '\\' {
            let esc = *chars.get(i + 1).ok_or("dangling escape")?;
            i += 2;
            match esc {
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                't' => out.push('\t'),
                'b' => out.push('\u{8}'),
                'f' => out.push('\u{c}'),
                '"' | '\'' | '\\' => out.push(esc),
                'u' | 'U' => {
                    let n = if esc == 'u' { 4 } else { 8 };
                    let hex: String = chars.get(i..i + n).ok_or("truncated unicode escape")?.iter().collect();
                    let code = u32::from_str_radix(&hex, 16).map_err(|_| "bad unicode escape")?;
                    out.push(char::from_u32(code).ok_or("invalid code point")?);
                    i += n;
                }
                other => return Err(format!("unknown escape \\{other}")),
            }
            continue;
        }
        if c == '\n' {
            lines += 1;
        }
        out.push(c);
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Triples

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Term {
    Iri(String),
    Blank(usize),
    Literal(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "<{iri}>"),
            Term::Blank(n) => write!(f, "_:b{n}"),
            Term::Literal(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Triple {
    subject: Term,
    predicate: String,
    object: Term,
    line: usize,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<String>,
    blank_labels: BTreeMap<String, usize>,
    next_blank: usize,
    triples: Vec<Triple>,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser {
            tokens,
            pos: 0,
            prefixes: BTreeMap::new(),
            base: None,
            blank_labels: BTreeMap::new(),
            next_blank: 0,
            triples: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.tokens.get(self.pos).or_else(|| self.tokens.last()).map_or(1, |t| t.line)
    }

    fn next(&mut self) -> Result<Token, TurtleError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| TurtleError::new(self.line(), "unexpected end of document"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), TurtleError> {
        let t = self.next()?;
        if t.tok == want {
            Ok(())
        } else {
            Err(TurtleError::new(t.line, format!("expected {what}, found {:?}", t.tok)))
        }
    }

    fn parse(mut self) -> Result<Vec<Triple>, TurtleError> {
        while let Some(tok) = self.peek().cloned() {
            match tok {
                Tok::PrefixKw { at } => self.prefix_directive(at)?,
                Tok::BaseKw { at } => self.base_directive(at)?,
                _ => self.statement()?,
            }
        }
        Ok(self.triples)
    }

    fn prefix_directive(&mut self, at: bool) -> Result<(), TurtleError> {
        self.next()?;
        let t = self.next()?;
        let Tok::PName(prefix, local) = t.tok else {
            return Err(TurtleError::new(t.line, "expected prefix name"));
        };
        if !local.is_empty() {
            return Err(TurtleError::new(t.line, format!("malformed prefix {prefix}:{local}")));
        }
        let t = self.next()?;
        let Tok::Iri(iri) = t.tok else {
            return Err(TurtleError::new(t.line, "expected namespace IRI"));
        };
        let iri = self.resolve_iri(iri);
        self.prefixes.insert(prefix, iri);
        if at {
            self.expect(Tok::Dot, "'.' after @prefix")?;
        } else if self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
        }
        Ok(())
    }

    fn base_directive(&mut self, at: bool) -> Result<(), TurtleError> {
        self.next()?;
        let t = self.next()?;
        let Tok::Iri(iri) = t.tok else {
            return Err(TurtleError::new(t.line, "expected base IRI"));
        };
        self.base = Some(iri);
        if at {
            self.expect(Tok::Dot, "'.' after @base")?;
        } else if self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
        }
        Ok(())
    }

    fn resolve_iri(&self, iri: String) -> String {
        match &self.base {
            Some(base) if !is_absolute_iri(&iri) => format!("{base}{iri}"),
            _ => iri,
        }
    }

    fn expand(&mut self, prefix: &str, local: &str, line: usize) -> Result<Term, TurtleError> {
        if prefix == "_" {
            let next = &mut self.next_blank;
            let id = *self.blank_labels.entry(local.to_string()).or_insert_with(|| {
                *next += 1;
                *next - 1
            });
            return Ok(Term::Blank(id));
        }
        let ns = self
            .prefixes
            .get(prefix)
            .ok_or_else(|| TurtleError::new(line, format!("undeclared prefix {prefix:?}")))?;
        Ok(Term::Iri(format!("{ns}{local}")))
    }

    fn fresh_blank(&mut self) -> Term {
        self.next_blank += 1;
        Term::Blank(self.next_blank - 1)
    }

    fn statement(&mut self) -> Result<(), TurtleError> {
        let t = self.next()?;
        let subject = match t.tok {
            Tok::Iri(iri) => Term::Iri(self.resolve_iri(iri)),
            Tok::PName(p, l) => self.expand(&p, &l, t.line)?,
            Tok::LBracket => {
                let node = self.fresh_blank();
                if self.peek() != Some(&Tok::RBracket) {
                    self.predicate_object_list(&node, true)?;
                }
                self.expect(Tok::RBracket, "']'")?;
                if self.peek() == Some(&Tok::Dot) {
                    self.pos += 1;
                    return Ok(());
                }
                node
            }
            other => return Err(TurtleError::new(t.line, format!("expected subject, found {other:?}"))),
        };
        self.predicate_object_list(&subject, false)?;
        self.expect(Tok::Dot, "'.' ending the statement")
    }

    fn predicate_object_list(&mut self, subject: &Term, in_brackets: bool) -> Result<(), TurtleError> {
        loop {
            let t = self.next()?;
            let predicate = match t.tok {
                Tok::A => RDF_TYPE.to_string(),
                Tok::Iri(iri) => self.resolve_iri(iri),
                Tok::PName(p, l) => match self.expand(&p, &l, t.line)? {
                    Term::Iri(iri) => iri,
                    _ => return Err(TurtleError::new(t.line, "blank node used as predicate")),
                },
                other => return Err(TurtleError::new(t.line, format!("expected predicate, found {other:?}"))),
            };
            loop {
                let line = self.line();
                let object = self.object()?;
                self.triples.push(Triple {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                    line,
                });
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            // tolerate `<x>. ]` inside a blank node
            if in_brackets && self.peek() == Some(&Tok::Dot) && self.tokens.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::RBracket) {
                self.pos += 1;
            }
            if self.peek() != Some(&Tok::Semi) {
                return Ok(());
            }
            while self.peek() == Some(&Tok::Semi) {
                self.pos += 1;
            }
            match self.peek() {
                Some(Tok::Dot) | Some(Tok::RBracket) | None => return Ok(()),
                _ => {}
            }
        }
    }

    fn object(&mut self) -> Result<Term, TurtleError> {
        let t = self.next()?;
        match t.tok {
            Tok::Iri(iri) => Ok(Term::Iri(self.resolve_iri(iri))),
            Tok::PName(p, l) => self.expand(&p, &l, t.line),
            Tok::Literal(s) => {
                match self.peek() {
                    Some(Tok::LangTag) => self.pos += 1,
                    Some(Tok::DatatypeMark) => {
                        self.pos += 1;
                        let dt = self.next()?;
                        if !matches!(dt.tok, Tok::Iri(_) | Tok::PName(..)) {
                            return Err(TurtleError::new(dt.line, "expected datatype IRI"));
                        }
                    }
                    _ => {}
                }
                Ok(Term::Literal(s))
            }
            Tok::Bare(word) => Ok(Term::Literal(word)),
            Tok::LBracket => {
                let node = self.fresh_blank();
                if self.peek() != Some(&Tok::RBracket) {
                    self.predicate_object_list(&node, true)?;
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(node)
            }
            other => Err(TurtleError::new(t.line, format!("expected object, found {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Triples → DatasetMeta

fn build_dataset(triples: &[Triple]) -> Result<(DatasetMeta, Vec<String>), TurtleError> {
    let dsv = |local: &str| format!("{DSV}{local}");
    let dcterms = |local: &str| format!("{DCTERMS}{local}");
    let label_pred = format!("{RDFS}label");
    let first_line = triples.first().map_or(1, |t| t.line);

    let mut used = vec![false; triples.len()];
    let datasets: Vec<(usize, &Triple)> = triples
        .iter()
        .enumerate()
        .filter(|(_, t)| t.predicate == RDF_TYPE && t.object == Term::Iri(dsv("Dataset")))
        .collect();
    let (type_idx, type_triple) = match datasets.as_slice() {
        [one] => *one,
        [] => return Err(TurtleError::new(first_line, "no dsv:Dataset node")),
        [_, second, ..] => return Err(TurtleError::new(second.1.line, "more than one dsv:Dataset node")),
    };
    used[type_idx] = true;
    let node = type_triple.subject.clone();
    let node_line = type_triple.line;
    let Term::Iri(dataset_iri) = &node else {
        return Err(TurtleError::new(node_line, "dataset node must be an IRI"));
    };

    let single_literal = |subject: &Term, predicate: &str, used: &mut Vec<bool>| -> Result<Option<(String, usize)>, TurtleError> {
        let mut found = None;
        for (i, t) in triples.iter().enumerate() {
            if &t.subject == subject && t.predicate == predicate {
                let Term::Literal(s) = &t.object else {
                    return Err(TurtleError::new(t.line, format!("<{predicate}> must be a literal")));
                };
                if found.is_some() {
                    return Err(TurtleError::new(t.line, format!("repeated <{predicate}>")));
                }
                used[i] = true;
                found = Some((s.clone(), t.line));
            }
        }
        Ok(found)
    };

    let topic = single_literal(&node, &dcterms("subject"), &mut used)?
        .ok_or_else(|| TurtleError::new(node_line, "dataset has no dcterms:subject"))?
        .0;
    if topic.trim().is_empty() {
        return Err(TurtleError::new(node_line, "empty dcterms:subject"));
    }
    let title = single_literal(&node, &dcterms("title"), &mut used)?
        .ok_or_else(|| TurtleError::new(node_line, "dataset has no dcterms:title"))?
        .0;
    let role = match single_literal(&node, &dcterms("type"), &mut used)? {
        None => Role::Candidate,
        Some((s, line)) => Role::parse(&s).ok_or_else(|| TurtleError::new(line, format!("unknown dataset role {s:?}")))?,
    };

    let id = dataset_iri
        .rsplit('/')
        .next()
        .filter(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .ok_or_else(|| TurtleError::new(node_line, format!("cannot take a dataset id from <{dataset_iri}>")))?
        .to_string();

    let mut column_nodes: Vec<(Term, usize)> = Vec::new();
    for (i, t) in triples.iter().enumerate() {
        if t.subject == node && t.predicate == dsv("datasetSchema") {
            used[i] = true;
            for (j, u) in triples.iter().enumerate() {
                if u.subject == t.object && u.predicate == dsv("column") {
                    used[j] = true;
                    column_nodes.push((u.object.clone(), u.line));
                }
            }
        }
    }
    if column_nodes.is_empty() {
        return Err(TurtleError::new(node_line, "dataset has no dsv:column entries"));
    }

    let mut columns = Vec::with_capacity(column_nodes.len());
    for (col, line) in &column_nodes {
        let (label, label_line) = single_literal(col, &label_pred, &mut used)?
            .ok_or_else(|| TurtleError::new(*line, format!("column {col} has no rdfs:label")))?;
        let mut column = ColumnMeta::new(&label).ok_or_else(|| TurtleError::new(label_line, format!("column {col} has an empty label")))?;
        column.semantic_type = single_literal(col, &dcterms("type"), &mut used)?.map(|(s, _)| s);
        for (i, t) in triples.iter().enumerate() {
            if &t.subject == col && t.predicate == dsv("columnProperty") {
                let Term::Iri(iri) = &t.object else {
                    return Err(TurtleError::new(t.line, "dsv:columnProperty must be an IRI"));
                };
                if column.vocab_property.is_some() {
                    return Err(TurtleError::new(t.line, "repeated dsv:columnProperty"));
                }
                if !is_absolute_iri(iri) {
                    return Err(TurtleError::new(t.line, format!("not an absolute IRI: {iri}")));
                }
                used[i] = true;
                column.vocab_property = Some(iri.clone());
            }
            if &t.subject == col && t.predicate == RDF_TYPE && t.object == Term::Iri(dsv("Column")) {
                used[i] = true;
            }
        }
        columns.push(column);
    }

    let warnings = triples
        .iter()
        .zip(&used)
        .filter(|(_, used)| !**used)
        .map(|(t, _)| format!("line {}: ignored triple {} <{}> {}", t.line, t.subject, t.predicate, t.object))
        .collect();

    Ok((
        DatasetMeta {
            id,
            title,
            topic,
            role,
            columns,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const PSYCHOLOGY_LISTING: &str = r#" prefix dsv:<https://w3id.org/dsv-ontology#>.
 prefix dcterms: <http://purl.org/dc/terms/>.
 prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
 prefix dbpedia: <http://dbpedia.org/ontology/> .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N> a dsv:Dataset ;
    dcterms:subject "psychology" ;
    dcterms:title "Psychology_UEA3GE8N.csv" ;
    dsv:datasetSchema [ dsv:column
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Gender>,
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Age>,
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/EducationLevel>,
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Occupation>,
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/MaritalStatus>,
    <http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/HasChildren>. ] .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Gender> a dsv:Column ;
    rdfs:label " Gender" ;
    dcterms:type "gender" ;
    dsv:columnProperty dbpedia:gender .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Age> a dsv:Column ;
    rdfs:label "Age" ;
    dcterms:type "age" ;
    dsv:columnProperty dbpedia:age .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/EducationLevel> a dsv:Column ;
    rdfs:label "EducationLevel" ;
    dcterms:type "education" ;
    dsv:columnProperty dbpedia:education .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Occupation> a dsv:Column ;
    rdfs:label "Occupation" ;
    dcterms:type "position" ;
    dsv:columnProperty dbpedia:occupation .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/MaritalStatus> a dsv:Column ;
    rdfs:label "MaritalStatus" ;
    dcterms:type "status" ;
    dsv:columnProperty dbpedia:spouse .

<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/HasChildren> a dsv:Column ;
    rdfs:label "HasChildren" ;
    dcterms:type "status" ;
    dsv:columnProperty dbpedia:child .
"#;

    #[test]
    fn parses_psychology_listing() {
        let (d, warnings) = parse_turtle_with_warnings(PSYCHOLOGY_LISTING).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(d.id, "PsychologyUEA3GE8N");
        assert_eq!(d.topic, "psychology");
        assert_eq!(d.title, "Psychology_UEA3GE8N.csv");
        assert_eq!(d.role, Role::Candidate);
        let labels: Vec<&str> = d.columns.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            ["Gender", "Age", "EducationLevel", "Occupation", "MaritalStatus", "HasChildren"]
        );
        let marital = &d.columns[4];
        assert_eq!(marital.semantic_type.as_deref(), Some("status"));
        assert_eq!(marital.vocab_property.as_deref(), Some("http://dbpedia.org/ontology/spouse"));
    }

    #[test]
    fn serializes_enriched_and_plain_columns() {
        let d = DatasetMeta {
            id: "PsychologyUEA3GE8N".into(),
            title: "Psychology_UEA3GE8N.csv".into(),
            topic: "psychology".into(),
            role: Role::Query,
            columns: vec![
                ColumnMeta::new("Gender")
                    .unwrap()
                    .with_semantic_type("gender")
                    .with_vocab_property(format!("{DBPEDIA}gender"))
                    .unwrap(),
                ColumnMeta::new("Age").unwrap(),
            ],
        };
        let ttl = serialize_turtle(&d, "http://metaUnionSearch");
        assert!(ttl.contains("dcterms:type \"gender\" ;"), "{ttl}");
        assert!(ttl.contains("dsv:columnProperty dbpedia:gender"), "{ttl}");
        assert!(ttl.contains("<http://metaUnionSearch/datasets/PsychologyUEA3GE8N/column/Gender>"));
        let age_block = ttl.split("/column/Age> a dsv:Column").nth(1).unwrap();
        assert!(age_block.contains("rdfs:label \"Age\" ."));
        assert!(!age_block.contains("dcterms:type") && !age_block.contains("columnProperty"));
        assert_eq!(ttl.matches("@prefix").count(), 4);
        assert_eq!(parse_turtle(&ttl).unwrap(), d);
    }

    #[test]
    fn trims_hand_written_label() {
        let doc = r#"@prefix dsv: <https://w3id.org/dsv-ontology#> .
@prefix dcterms: <http://purl.org/dc/terms/> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
<http://x/datasets/D> a dsv:Dataset ; dcterms:subject "t" ; dcterms:title "D.csv" ;
  dsv:datasetSchema [ dsv:column <http://x/datasets/D/column/Gender> ] .
<http://x/datasets/D/column/Gender> a dsv:Column ; rdfs:label " Gender" .
"#;
        assert_eq!(parse_turtle(doc).unwrap().columns[0].label, "Gender");
    }

    #[test]
    fn missing_subject_reports_line() {
        let doc = PSYCHOLOGY_LISTING.replace("    dcterms:subject \"psychology\" ;\n", "");
        let err = parse_turtle(&doc).unwrap_err();
        assert_eq!(err.line, 6);
        assert!(err.message.contains("dcterms:subject"));
    }

    #[test]
    fn zero_columns_is_an_error() {
        let doc = r#"@prefix dsv: <https://w3id.org/dsv-ontology#> .
@prefix dcterms: <http://purl.org/dc/terms/> .
<http://x/datasets/D> a dsv:Dataset ; dcterms:subject "t" ; dcterms:title "D.csv" .
"#;
        let err = parse_turtle(doc).unwrap_err();
        assert!(err.message.contains("dsv:column"), "{err}");
    }

    #[test]
    fn unknown_triples_are_warnings() {
        let doc = PSYCHOLOGY_LISTING.replace(
            "    dcterms:title \"Psychology_UEA3GE8N.csv\" ;\n",
            "    dcterms:title \"Psychology_UEA3GE8N.csv\" ;\n    dcterms:creator \"someone\"@en ;\n    dcterms:extent 42 ;\n",
        );
        let (d, warnings) = parse_turtle_with_warnings(&doc).unwrap();
        assert_eq!(d.columns.len(), 6);
        assert_eq!(warnings.len(), 2, "{warnings:?}");
        assert!(warnings[0].contains("creator"));
    }

    #[test]
    fn undeclared_prefix_is_an_error() {
        let err = parse_turtle("<http://x/datasets/D> a foo:Dataset .").unwrap_err();
        assert!(err.message.contains("undeclared prefix"));
    }

    #[test]
    fn escapes_survive() {
        assert_eq!(literal("a\"b\\c\nd"), r#""a\"b\\c\nd""#);
        let (s, next, _) = read_string(&r#""xé\"y" rest"#.chars().collect::<Vec<_>>(), 0).unwrap();
        assert_eq!(s, "xé\"y");
        assert_eq!(next, 7);
    }

    #[test]
    fn non_compactable_iris_stay_bracketed() {
        assert_eq!(compact_iri("http://dbpedia.org/ontology/birthDate"), "dbpedia:birthDate");
        assert_eq!(compact_iri("http://dbpedia.org/ontology/a.b"), "<http://dbpedia.org/ontology/a.b>");
        assert_eq!(compact_iri("http://example.org/p"), "<http://example.org/p>");
    }

    fn arb_label() -> impl Strategy<Value = String> {
        "[ -~àéü\t\n\"\\\\]{0,12}[A-Za-z0-9\"\\\\é,;.#<>]{1,3}"
            .prop_map(|s| s.trim().to_string())
            .prop_filter("non-empty", |s| !s.is_empty())
    }

    fn arb_iri() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-z][A-Za-z0-9_]{0,10}".prop_map(|l| format!("{DBPEDIA}{l}")),
            "[a-z][a-z0-9.]{0,6}".prop_map(|l| format!("http://example.org/{l}#x")),
            "[a-z0-9._-]{1,8}".prop_map(|l| format!("urn:vocab:{l}")),
        ]
    }

    prop_compose! {
        fn arb_column()(label in arb_label(),
                        ty in proptest::option::of("[a-z ]{1,10}"),
                        prop in proptest::option::of(arb_iri())) -> ColumnMeta {
            ColumnMeta { label, semantic_type: ty, vocab_property: prop }
        }
    }

    prop_compose! {
        pub(crate) fn arb_dataset()(id in "[A-Za-z0-9]{1,16}",
                         title in "[ -~é]{0,20}",
                         topic in "[a-z][a-z '\"]{0,12}",
                         query in any::<bool>(),
                         columns in proptest::collection::vec(arb_column(), 1..8)) -> DatasetMeta {
            DatasetMeta {
                id, title, topic, columns,
                role: if query { Role::Query } else { Role::Candidate },
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn round_trip(d in arb_dataset(), base in prop_oneof![Just(super::super::DEFAULT_BASE_IRI.to_string()), Just("https://example.org/lake/".to_string())]) {
            let ttl = serialize_turtle(&d, &base);
            let (back, warnings) = parse_turtle_with_warnings(&ttl).unwrap();
            prop_assert!(warnings.is_empty());
            prop_assert_eq!(back, d);
        }
    }
}
