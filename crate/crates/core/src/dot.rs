//! A small DOT dialect for Mealy machines.
//!
//! ```text
//! digraph cc2650 {
//!   inputs="scan_req connection_req";
//!   q0 [initial=true];
//!   q0 -> q0 [label="scan_req/ADV"];
//!   q0 -> q1 [label="connection_req/BTLE,BTLE_DATA"];
//! }
//! ```
//!
//! The optional graph attributes `inputs` and `outputs` declare the alphabets
//! (space separated); without `inputs` the input order is that of first use.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::DotError;
use crate::mealy::{MealyBuilder, MealyMachine};

pub fn to_dot(m: &MealyMachine, name: &str) -> String {
    let m = m.canonical();
    let mut s = String::new();
    let _ = writeln!(s, "digraph {} {{", quote(name));
    let _ = writeln!(s, "  inputs={};", quote(&m.inputs().join(" ")));
    for q in 0..m.num_states() {
        if q == m.initial() {
            let _ = writeln!(s, "  q{q} [initial=true];");
        } else {
            let _ = writeln!(s, "  q{q};");
        }
    }
    for q in 0..m.num_states() {
        for (i, input) in m.inputs().iter().enumerate() {
            let (t, o) = m.step_index(q, i);
            let _ = writeln!(
                s,
                "  q{q} -> q{t} [label={}];",
                quote(&format!("{input}/{o}"))
            );
        }
    }
    s.push_str("}\n");
    s
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Eq,
    Arrow,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> DotError {
    DotError {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, DotError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(err(l0, c0, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        let simple = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = simple {
            advance(&mut i, &mut line, &mut col, c);
            toks.push(Spanned {
                tok,
                line: l0,
                column: c0,
            });
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            advance(&mut i, &mut line, &mut col, '-');
            advance(&mut i, &mut line, &mut col, '>');
            toks.push(Spanned {
                tok: Tok::Arrow,
                line: l0,
                column: c0,
            });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(l0, c0, "unterminated string")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') if i + 1 < chars.len() => {
                        let n = chars[i + 1];
                        advance(&mut i, &mut line, &mut col, '\\');
                        advance(&mut i, &mut line, &mut col, n);
                        if n != '"' && n != '\\' {
                            s.push('\\');
                        }
                        s.push(n);
                    }
                    Some(&ch) => {
                        advance(&mut i, &mut line, &mut col, ch);
                        s.push(ch);
                    }
                }
            }
            toks.push(Spanned {
                tok: Tok::Str(s),
                line: l0,
                column: c0,
            });
            continue;
        }
        if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' {
            let mut s = String::new();
            while i < chars.len()
                && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.' | '-'))
            {
                if chars[i] == '-' && chars.get(i + 1) == Some(&'>') {
                    break;
                }
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            toks.push(Spanned {
                tok: Tok::Id(s),
                line: l0,
                column: c0,
            });
            continue;
        }
        return Err(err(l0, c0, format!("unexpected character `{c}`")));
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

type Attrs = Vec<(String, Option<String>, usize, usize)>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.column))
            .unwrap_or(self.end)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, DotError> {
        let (l, c) = self.here();
        Err(err(l, c, message))
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), DotError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, DotError> {
        match self.peek() {
            Some(Tok::Id(s)) | Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail("expected identifier"),
        }
    }

    fn attrs(&mut self) -> Result<Attrs, DotError> {
        let mut out = Vec::new();
        if self.peek() != Some(&Tok::LBracket) {
            return Ok(out);
        }
        self.pos += 1;
        loop {
            match self.peek() {
                Some(Tok::RBracket) => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(Tok::Comma) | Some(Tok::Semi) => self.pos += 1,
                Some(Tok::Id(_)) | Some(Tok::Str(_)) => {
                    let (l, c) = self.here();
                    let key = self.ident()?;
                    let value = if self.peek() == Some(&Tok::Eq) {
                        self.pos += 1;
                        Some(self.ident()?)
                    } else {
                        None
                    };
                    out.push((key, value, l, c));
                }
                _ => return self.fail("expected attribute or `]`"),
            }
        }
    }
}

struct Edge {
    from: usize,
    to: usize,
    input: String,
    output: String,
    line: usize,
    column: usize,
}

fn is_true(v: &Option<String>) -> bool {
    match v {
        None => true,
        Some(s) => matches!(s.as_str(), "true" | "1" | "yes"),
    }
}

pub fn from_dot(text: &str) -> Result<MealyMachine, DotError> {
    let toks = lex(text)?;
    let end = {
        let lines: Vec<&str> = text.split('\n').collect();
        (
            lines.len(),
            lines.last().map_or(0, |l| l.chars().count()) + 1,
        )
    };
    let mut p = Parser { toks, pos: 0, end };
    if let Some(Tok::Id(s)) = p.peek() {
        if s == "strict" {
            p.pos += 1;
        }
    }
    match p.next() {
        Some(Spanned {
            tok: Tok::Id(s), ..
        }) if s == "digraph" => {}
        _ => {
            p.pos = p.pos.saturating_sub(1);
            return p.fail("expected `digraph`");
        }
    }
    if matches!(p.peek(), Some(Tok::Id(_)) | Some(Tok::Str(_))) {
        p.ident()?;
    }
    p.expect(Tok::LBrace, "`{`")?;

    let mut nodes: Vec<String> = Vec::new();
    let mut node_pos: Vec<(usize, usize)> = Vec::new();
    let mut node_index: HashMap<String, usize> = HashMap::new();
    let mut initial: Option<(usize, usize, usize)> = None;
    let mut declared_inputs: Option<Vec<String>> = None;
    let mut declared_outputs: Option<Vec<String>> = None;
    let mut edges: Vec<Edge> = Vec::new();

    let mut node_id = |name: &str, pos: (usize, usize)| -> usize {
        if let Some(&i) = node_index.get(name) {
            return i;
        }
        nodes.push(name.to_string());
        node_pos.push(pos);
        node_index.insert(name.to_string(), nodes.len() - 1);
        nodes.len() - 1
    };

    loop {
        match p.peek() {
            None => return p.fail("expected `}`"),
            Some(Tok::RBrace) => {
                p.pos += 1;
                break;
            }
            Some(Tok::Semi) => {
                p.pos += 1;
                continue;
            }
            _ => {}
        }
        let (l, c) = p.here();
        let first = p.ident()?;
        match p.peek() {
            Some(Tok::Eq) => {
                p.pos += 1;
                let value = p.ident()?;
                let list = value.split_whitespace().map(str::to_string).collect();
                match first.as_str() {
                    "inputs" => declared_inputs = Some(list),
                    "outputs" => declared_outputs = Some(list),
                    _ => {}
                }
            }
            Some(Tok::Arrow) => {
                p.pos += 1;
                let (tl, tc) = p.here();
                let target = p.ident()?;
                if p.peek() == Some(&Tok::Arrow) {
                    return p.fail("edge chains are not supported");
                }
                let attrs = p.attrs()?;
                let label = attrs
                    .iter()
                    .find(|(k, ..)| k == "label")
                    .and_then(|(_, v, ..)| v.clone())
                    .ok_or_else(|| err(l, c, "edge without label"))?;
                let parts: Vec<&str> = label.split('/').collect();
                if parts.len() != 2 || parts[0].is_empty() || parts[1].is_empty() {
                    let (ll, lc) = attrs
                        .iter()
                        .find(|(k, ..)| k == "label")
                        .map(|(.., ll, lc)| (*ll, *lc))
                        .unwrap_or((l, c));
                    return Err(err(
                        ll,
                        lc,
                        format!("edge label `{label}` is not of the form input/output"),
                    ));
                }
                let from = node_id(&first, (l, c));
                let to = node_id(&target, (tl, tc));
                edges.push(Edge {
                    from,
                    to,
                    input: parts[0].to_string(),
                    output: parts[1].to_string(),
                    line: l,
                    column: c,
                });
            }
            _ => {
                let attrs = p.attrs()?;
                if matches!(first.as_str(), "graph" | "node" | "edge") {
                    for (k, v, ..) in &attrs {
                        if first == "graph" {
                            let list = v
                                .as_deref()
                                .unwrap_or("")
                                .split_whitespace()
                                .map(str::to_string)
                                .collect();
                            match k.as_str() {
                                "inputs" => declared_inputs = Some(list),
                                "outputs" => declared_outputs = Some(list),
                                _ => {}
                            }
                        }
                    }
                } else {
                    let id = node_id(&first, (l, c));
                    if attrs.iter().any(|(k, v, ..)| k == "initial" && is_true(v)) {
                        if let Some((_, il, ic)) = initial {
                            if initial.map(|(q, ..)| q) != Some(id) {
                                return Err(err(
                                    l,
                                    c,
                                    format!("second initial node (first at {il}:{ic})"),
                                ));
                            }
                        }
                        initial = Some((id, l, c));
                    }
                }
            }
        }
        if p.peek() == Some(&Tok::Semi) {
            p.pos += 1;
        }
    }
    if p.peek().is_some() {
        return p.fail("trailing input after graph");
    }

    let (initial, ..) =
        initial.ok_or_else(|| err(1, 1, "no node carries the `initial` attribute"))?;
    let inputs = match declared_inputs {
        Some(list) => {
            for e in &edges {
                if !list.contains(&e.input) {
                    return Err(err(
                        e.line,
                        e.column,
                        format!("input `{}` is not declared", e.input),
                    ));
                }
            }
            list
        }
        None => {
            let mut list: Vec<String> = Vec::new();
            for e in &edges {
                if !list.contains(&e.input) {
                    list.push(e.input.clone());
                }
            }
            list
        }
    };
    if let Some(outs) = &declared_outputs {
        for e in &edges {
            if !outs.contains(&e.output) {
                return Err(err(
                    e.line,
                    e.column,
                    format!("output `{}` is not declared", e.output),
                ));
            }
        }
    }
    if inputs.is_empty() {
        return Err(err(end.0, end.1, "empty input alphabet"));
    }
    let mut b = MealyBuilder::new(&inputs, nodes.len()).initial(initial);
    for e in &edges {
        if b.is_defined(e.from, &e.input) {
            return Err(err(
                e.line,
                e.column,
                format!(
                    "duplicate transition for `{}` on `{}`",
                    nodes[e.from], e.input
                ),
            ));
        }
        b.transition(e.from, &e.input, &e.output, e.to)
            .map_err(|x| err(e.line, e.column, x.to_string()))?;
    }
    for (q, name) in nodes.iter().enumerate() {
        for input in &inputs {
            if !b.is_defined(q, input) {
                let (l, c) = node_pos[q];
                return Err(err(
                    l,
                    c,
                    format!("state `{name}` has no transition on `{input}`"),
                ));
            }
        }
    }
    b.build().map_err(|x| match x {
        crate::error::MealyError::Unreachable(q) => {
            let (l, c) = node_pos[q];
            err(l, c, format!("state `{}` is unreachable", nodes[q]))
        }
        other => err(end.0, end.1, other.to_string()),
    })
}
