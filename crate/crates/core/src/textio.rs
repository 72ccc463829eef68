//! Shared line-oriented parsing helpers for the plain-text model formats.

use std::path::Path;

use crate::error::{Error, Result};

/// Line cursor that tracks position for error messages.
pub(crate) struct Cursor<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        Cursor { path, lines: text.lines(), line_no: 0 }
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| self.err("unexpected end of file"))
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.path, format!("line {}: {}", self.line_no, msg.into()))
    }

    /// Reads a `key value` line and returns the value part.
    pub(crate) fn kv(&mut self, key: &str) -> Result<KvValue<'a>> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => {
                Ok(KvValue { raw: v, err: self.err(format!("bad value for {key}")) })
            }
            _ => Err(self.err(format!("expected `{key} <value>`"))),
        }
    }
}

pub(crate) struct KvValue<'a> {
    raw: &'a str,
    err: Error,
}

impl<'a> KvValue<'a> {
    pub(crate) fn parse_field<T: std::str::FromStr>(self, _name: &str) -> Result<T> {
        self.raw.parse::<T>().map_err(|_| self.err)
    }
}

pub(crate) trait FieldIter<'a> {
    fn field<T: std::str::FromStr>(&mut self, cursor: &Cursor, what: &str) -> Result<T>;
}

impl<'a, I: Iterator<Item = &'a str>> FieldIter<'a> for I {
    fn field<T: std::str::FromStr>(&mut self, cursor: &Cursor, what: &str) -> Result<T> {
        let raw = self.next().ok_or_else(|| cursor.err(format!("missing {what}")))?;
        raw.parse::<T>().map_err(|_| cursor.err(format!("bad {what} {raw:?}")))
    }
}

/// Space-joins a float slice in shortest round-trip decimal form.
pub(crate) fn join_floats(row: &[f64]) -> String {
    let mut out = String::new();
    for (i, x) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{x}"));
    }
    out
}

/// Parses exactly `dim` floats from a whitespace-separated line.
pub(crate) fn parse_floats(cursor: &mut Cursor, dim: usize, what: &str) -> Result<Vec<f64>> {
    let line = cursor.next_line()?;
    let mut fields = line.split_whitespace();
    let mut row = Vec::with_capacity(dim);
    for _ in 0..dim {
        row.push(fields.field(cursor, what)?);
    }
    if fields.next().is_some() {
        return Err(cursor.err(format!("too many fields in {what} row")));
    }
    Ok(row)
}
