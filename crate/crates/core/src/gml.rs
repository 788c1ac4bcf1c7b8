//! GML interchange for maps.
//!
//! Export writes one line per node and per edge:
//!
//! ```text
//! graph [
//!   directed 0
//!   node [ id 1 label "italy" group "europe" value 1 graphics [ x 0.5 y -2.0 ] ]
//!   edge [ source 1 target 2 ]
//! ]
//! ```
//!
//! `group` is omitted for ungrouped nodes and `layout_seed` is written after
//! `directed` only when the map has one. Topic texts are not carried. The
//! reader accepts any whitespace layout, `#` line comments, and ignores
//! keys it does not know.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{display_name, name_key, MapEdge, MapGraph, MapNode, NodeId, Point};

#[derive(Debug, Error, PartialEq)]
#[error("GML line {line}: {message}")]
pub struct GmlError {
    pub line: usize,
    pub message: String,
}

impl GmlError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn export_gml(graph: &MapGraph) -> String {
    let mut out = String::from("graph [\n  directed 0\n");
    if let Some(seed) = graph.layout_seed {
        let _ = writeln!(out, "  layout_seed {seed}");
    }
    let mut nodes: Vec<&MapNode> = graph.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    for node in nodes {
        let _ = write!(out, "  node [ id {} label \"{}\"", node.id.0, escape(&node.name));
        if let Some(group) = &node.group {
            let _ = write!(out, " group \"{}\"", escape(group));
        }
        let _ = writeln!(
            out,
            " value {} graphics [ x {:?} y {:?} ] ]",
            node.query_count, node.position.x, node.position.y
        );
    }
    for edge in &graph.edges {
        let _ = writeln!(out, "  edge [ source {} target {} ]", edge.source.0, edge.target.0);
    }
    out.push_str("]\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Key(String),
    Int(i128),
    Float(f64),
    Str(String),
    Open,
    Close,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(doc: &'a str) -> Self {
        Self {
            chars: doc.chars().peekable(),
            line: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next();
        if c == Some('\n') {
            self.line += 1;
        }
        c
    }

    fn tokens(mut self) -> Result<Vec<(Token, usize)>, GmlError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            let line = self.line;
            match c {
                c if c.is_whitespace() => {
                    self.bump();
                }
                '#' => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                '[' => {
                    self.bump();
                    out.push((Token::Open, line));
                }
                ']' => {
                    self.bump();
                    out.push((Token::Close, line));
                }
                '"' => {
                    self.bump();
                    out.push((Token::Str(self.string(line)?), line));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut key = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            key.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    out.push((Token::Key(key), line));
                }
                c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                    out.push((self.number(line)?, line));
                }
                other => return Err(GmlError::new(line, format!("unexpected character {other:?}"))),
            }
        }
        Ok(out)
    }

    fn string(&mut self, start: usize) -> Result<String, GmlError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(GmlError::new(start, "unterminated string")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some(c) => s.push(c),
                    None => return Err(GmlError::new(start, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self, line: usize) -> Result<Token, GmlError> {
        let mut text = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if let Ok(i) = text.parse::<i128>() {
            return Ok(Token::Int(i));
        }
        match text.parse::<f64>() {
            Ok(f) if f.is_finite() => Ok(Token::Float(f)),
            _ => Err(GmlError::new(line, format!("malformed number {text:?}"))),
        }
    }
}

#[derive(Debug)]
enum Value {
    Int(i128),
    Float(f64),
    Str(String),
    List(Vec<Entry>),
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: Value,
    line: usize,
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn last_line(&self) -> usize {
        self.tokens.last().map_or(1, |(_, l)| *l)
    }

    fn list(&mut self, nested: bool, open_line: usize) -> Result<Vec<Entry>, GmlError> {
        let mut entries = Vec::new();
        loop {
            let Some((tok, line)) = self.tokens.get(self.pos).cloned() else {
                if nested {
                    return Err(GmlError::new(
                        self.last_line(),
                        format!("unexpected end of document; list opened on line {open_line} is not closed"),
                    ));
                }
                return Ok(entries);
            };
            self.pos += 1;
            let key = match tok {
                Token::Close if nested => return Ok(entries),
                Token::Key(k) => k,
                other => return Err(GmlError::new(line, format!("expected a key, found {other:?}"))),
            };
            let Some((tok, vline)) = self.tokens.get(self.pos).cloned() else {
                return Err(GmlError::new(line, format!("key {key:?} has no value")));
            };
            self.pos += 1;
            let value = match tok {
                Token::Int(i) => Value::Int(i),
                Token::Float(f) => Value::Float(f),
                Token::Str(s) => Value::Str(s),
                Token::Open => Value::List(self.list(true, vline)?),
                other => return Err(GmlError::new(vline, format!("expected a value for {key:?}, found {other:?}"))),
            };
            entries.push(Entry { key, value, line });
        }
    }
}

fn int_field(e: &Entry) -> Result<i128, GmlError> {
    match e.value {
        Value::Int(i) => Ok(i),
        _ => Err(GmlError::new(e.line, format!("{} must be an integer", e.key))),
    }
}

fn uint_field(e: &Entry) -> Result<u64, GmlError> {
    let i = int_field(e)?;
    u64::try_from(i).map_err(|_| GmlError::new(e.line, format!("{} must be non-negative", e.key)))
}

fn float_field(e: &Entry) -> Result<f64, GmlError> {
    match e.value {
        Value::Int(i) => Ok(i as f64),
        Value::Float(f) => Ok(f),
        _ => Err(GmlError::new(e.line, format!("{} must be a number", e.key))),
    }
}

fn str_field(e: &Entry) -> Result<&str, GmlError> {
    match &e.value {
        Value::Str(s) => Ok(s),
        _ => Err(GmlError::new(e.line, format!("{} must be a string", e.key))),
    }
}

fn read_node(entries: &[Entry], line: usize) -> Result<MapNode, GmlError> {
    let mut id = None;
    let mut label = None;
    let mut group = None;
    let mut value = 0;
    let mut position = Point::ORIGIN;
    for e in entries {
        match e.key.as_str() {
            "id" => id = Some(NodeId(uint_field(e)?)),
            "label" => label = Some(str_field(e)?.to_owned()),
            "group" => group = Some(display_name(str_field(e)?)).filter(|g| !g.is_empty()),
            "value" => value = uint_field(e)?,
            "graphics" => {
                let Value::List(items) = &e.value else {
                    return Err(GmlError::new(e.line, "graphics must be a list"));
                };
                for g in items {
                    match g.key.as_str() {
                        "x" => position.x = float_field(g)?,
                        "y" => position.y = float_field(g)?,
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    let id = id.ok_or_else(|| GmlError::new(line, "node without id"))?;
    let label = label.ok_or_else(|| GmlError::new(line, format!("node {id} without label")))?;
    let name = display_name(&label);
    if name.is_empty() {
        return Err(GmlError::new(line, format!("node {id} has an empty label")));
    }
    Ok(MapNode {
        id,
        name,
        group,
        topics: Vec::new(),
        query_count: value,
        position,
    })
}

pub fn import_gml(doc: &str) -> Result<MapGraph, GmlError> {
    let tokens = Lexer::new(doc).tokens()?;
    let mut parser = Parser { tokens, pos: 0 };
    let top = parser.list(false, 1)?;
    let graph_entry = top
        .iter()
        .find(|e| e.key == "graph")
        .ok_or_else(|| GmlError::new(parser.last_line(), "document has no graph block"))?;
    let Value::List(body) = &graph_entry.value else {
        return Err(GmlError::new(graph_entry.line, "graph must be a list"));
    };

    let mut graph = MapGraph::new();
    let mut nodes: BTreeMap<NodeId, MapNode> = BTreeMap::new();
    let mut names: BTreeMap<String, NodeId> = BTreeMap::new();
    let mut pending_edges = Vec::new();
    for e in body {
        match e.key.as_str() {
            "directed" => {
                if int_field(e)? != 0 {
                    tracing::warn!(line = e.line, "directed graph imported as undirected");
                }
            }
            "layout_seed" => graph.layout_seed = Some(uint_field(e)?),
            "node" => {
                let Value::List(items) = &e.value else {
                    return Err(GmlError::new(e.line, "node must be a list"));
                };
                let node = read_node(items, e.line)?;
                if nodes.contains_key(&node.id) {
                    return Err(GmlError::new(e.line, format!("duplicate node id {}", node.id)));
                }
                if let Some(other) = names.insert(name_key(&node.name), node.id) {
                    return Err(GmlError::new(
                        e.line,
                        format!("node {} repeats the name of node {other}: {:?}", node.id, node.name),
                    ));
                }
                nodes.insert(node.id, node);
            }
            "edge" => {
                let Value::List(items) = &e.value else {
                    return Err(GmlError::new(e.line, "edge must be a list"));
                };
                let mut source = None;
                let mut target = None;
                for f in items {
                    match f.key.as_str() {
                        "source" => source = Some(NodeId(uint_field(f)?)),
                        "target" => target = Some(NodeId(uint_field(f)?)),
                        _ => {}
                    }
                }
                match (source, target) {
                    (Some(s), Some(t)) => pending_edges.push((s, t, e.line)),
                    _ => return Err(GmlError::new(e.line, "edge needs source and target")),
                }
            }
            _ => {}
        }
    }
    graph.nodes = nodes.into_values().collect();
    for (s, t, line) in pending_edges {
        if s == t {
            return Err(GmlError::new(line, format!("self-loop on node {s}")));
        }
        for id in [s, t] {
            if graph.index_of(id).is_none() {
                return Err(GmlError::new(line, format!("edge references missing node {id}")));
            }
        }
        graph.edges.insert(MapEdge::new(s, t));
    }
    Ok(graph)
}
