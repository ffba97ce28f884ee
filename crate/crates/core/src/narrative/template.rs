//! Narrative template text format.
//!
//! ```text
//! @name default
//! @version 1
//! The vehicle was a {vehicle_type}.[? speed_zone:  The speed zone was {speed_zone}.]
//! ```
//!
//! `{field}` substitutes a field, `[? field: body]` renders `body` only when
//! `field` is known. A conditional may contain one further conditional.
//! `\{`, `\}`, `\[`, `\]` and `\\` escape the markup characters. Leading
//! `@name` / `@version` lines set template metadata.

use crate::crash_data::Field;

use super::NarrativeError;

/// Maximum number of nested conditional levels.
const MAX_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Placeholder(Field),
    Conditional { field: Field, body: Vec<Segment> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeTemplate {
    pub name: String,
    pub version: String,
    pub segments: Vec<Segment>,
}

impl NarrativeTemplate {
    /// Parses template text. Metadata lines override `name`/`version`.
    pub fn parse(text: &str) -> Result<Self, NarrativeError> {
        let mut name = String::from("unnamed");
        let mut version = String::from("0");
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if let Some(v) = trimmed.strip_prefix("@name") {
                name = v.trim().to_string();
            } else if let Some(v) = trimmed.strip_prefix("@version") {
                version = v.trim().to_string();
            } else {
                break;
            }
            body_start += line.len();
        }
        let chars: Vec<char> = text[body_start..].chars().collect();
        let mut parser = Parser { chars: &chars, pos: 0 };
        let segments = parser.segments(0)?;
        Ok(NarrativeTemplate {
            name,
            version,
            segments,
        })
    }

    /// Every placeholder in document order, including those inside conditionals.
    pub fn placeholders(&self) -> Vec<Field> {
        fn walk(segs: &[Segment], out: &mut Vec<Field>) {
            for s in segs {
                match s {
                    Segment::Placeholder(f) => out.push(*f),
                    Segment::Conditional { body, .. } => walk(body, out),
                    Segment::Literal(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.segments, &mut out);
        out
    }
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn error(&self, msg: impl Into<String>) -> NarrativeError {
        NarrativeError::TemplateSyntax {
            offset: self.pos,
            message: msg.into(),
        }
    }

    /// Parses until end of input (depth 0) or the closing `]` of a block.
    fn segments(&mut self, depth: usize) -> Result<Vec<Segment>, NarrativeError> {
        let mut out = Vec::new();
        let mut literal = String::new();
        let flush = |literal: &mut String, out: &mut Vec<Segment>| {
            if !literal.is_empty() {
                out.push(Segment::Literal(std::mem::take(literal)));
            }
        };
        while let Some(c) = self.peek() {
            match c {
                '\\' => {
                    self.pos += 1;
                    match self.peek() {
                        Some(e @ ('{' | '}' | '[' | ']' | '\\')) => literal.push(e),
                        _ => return Err(self.error("invalid escape")),
                    }
                    self.pos += 1;
                }
                '{' => {
                    flush(&mut literal, &mut out);
                    self.pos += 1;
                    let name = self.take_until('}')?;
                    out.push(Segment::Placeholder(resolve_field(&name)?));
                }
                '}' => return Err(self.error("unmatched `}`")),
                '[' if self.chars.get(self.pos + 1) == Some(&'?') => {
                    if depth >= MAX_DEPTH {
                        return Err(self.error("conditional blocks nest at most one level"));
                    }
                    flush(&mut literal, &mut out);
                    self.pos += 2;
                    let name = self.take_until(':')?;
                    let field = resolve_field(&name)?;
                    // a single space after the colon is part of the syntax
                    if self.peek() == Some(' ') {
                        self.pos += 1;
                    }
                    let body = self.segments(depth + 1)?;
                    out.push(Segment::Conditional { field, body });
                }
                ']' if depth > 0 => {
                    self.pos += 1;
                    flush(&mut literal, &mut out);
                    return Ok(out);
                }
                _ => {
                    literal.push(c);
                    self.pos += 1;
                }
            }
        }
        if depth > 0 {
            return Err(self.error("unterminated conditional block"));
        }
        flush(&mut literal, &mut out);
        Ok(out)
    }

    fn take_until(&mut self, end: char) -> Result<String, NarrativeError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == end {
                let s: String = self.chars[start..self.pos].iter().collect();
                self.pos += 1;
                return Ok(s.trim().to_string());
            }
            if matches!(c, '{' | '}' | '[' | ']' | '\n') {
                break;
            }
            self.pos += 1;
        }
        Err(self.error(format!("expected `{end}`")))
    }
}

fn resolve_field(name: &str) -> Result<Field, NarrativeError> {
    // snake-case names only, so templates read consistently
    Field::ALL
        .iter()
        .copied()
        .find(|f| f.name() == name)
        .ok_or_else(|| NarrativeError::UnresolvedPlaceholder {
            name: name.to_string(),
        })
}
