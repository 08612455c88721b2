//! Line-oriented `key = value` documents with optional `[section]` headers.
//!
//! Every text format the toolkit reads (model and dataset manifests,
//! calibration tables, search-space and GA configuration, decomposed
//! layers) is built on this reader. Blank lines and `#` comments are
//! ignored; keys are unique within a section.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Section {
    /// Header text between the brackets; empty for the leading section.
    pub header: String,
    pub line: usize,
    pub entries: Vec<Entry>,
    /// Non key/value lines inside the section, used by formats with
    /// free-form bodies (e.g. triplet lists).
    pub body: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct Document {
    pub file: String,
    pub sections: Vec<Section>,
}

impl Document {
    /// Parses `text`. Lines without `=` are kept as section body lines
    /// only when `allow_body` is set.
    pub fn parse(file: &str, text: &str, allow_body: bool) -> Result<Document> {
        let mut sections = vec![Section::default()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let header = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    file: file.to_string(),
                    line,
                    msg: "unterminated section header".into(),
                })?;
                sections.push(Section {
                    header: header.trim().to_string(),
                    line,
                    ..Section::default()
                });
                continue;
            }
            let section = sections.last_mut().expect("leading section");
            match content.split_once('=') {
                Some((k, v)) => {
                    let key = k.trim();
                    if key.is_empty() {
                        return Err(Error::Parse {
                            file: file.to_string(),
                            line,
                            msg: "empty key".into(),
                        });
                    }
                    if section.entries.iter().any(|e| e.key == key) {
                        return Err(Error::Parse {
                            file: file.to_string(),
                            line,
                            msg: format!("duplicate key `{key}`"),
                        });
                    }
                    section.entries.push(Entry {
                        key: key.to_string(),
                        value: v.trim().to_string(),
                        line,
                    });
                }
                None if allow_body => section.body.push((line, content.to_string())),
                None => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        line,
                        msg: format!("expected `key = value`, found `{content}`"),
                    })
                }
            }
        }
        Ok(Document {
            file: file.to_string(),
            sections,
        })
    }

    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn view<'a>(&'a self, section: &'a Section) -> SectionView<'a> {
        SectionView { doc: self, section }
    }
}

/// Typed accessors over one section, producing located parse errors.
#[derive(Clone, Copy)]
pub struct SectionView<'a> {
    doc: &'a Document,
    section: &'a Section,
}

impl<'a> SectionView<'a> {
    pub fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.doc.file.clone(),
            line,
            msg: msg.into(),
        }
    }

    pub fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.section.entries.iter().find(|e| e.key == key)
    }

    pub fn entries(&self) -> &'a [Entry] {
        &self.section.entries
    }

    pub fn str(&self, key: &str) -> Result<&'a str> {
        self.entry(key)
            .map(|e| e.value.as_str())
            .ok_or_else(|| self.err(self.section.line, format!("missing key `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let entry = self
            .entry(key)
            .ok_or_else(|| self.err(self.section.line, format!("missing key `{key}`")))?;
        parse_value(entry).map_err(|m| self.err(entry.line, m))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(entry) => parse_value(entry).map(Some).map_err(|m| self.err(entry.line, m)),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let entry = self
            .entry(key)
            .ok_or_else(|| self.err(self.section.line, format!("missing key `{key}`")))?;
        parse_list(&entry.value).map_err(|m| self.err(entry.line, m))
    }

    pub fn list_opt<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entry(key) {
            None => Ok(None),
            Some(entry) => parse_list(&entry.value)
                .map(Some)
                .map_err(|m| self.err(entry.line, m)),
        }
    }

    /// Rejects keys outside `known`.
    pub fn deny_unknown(&self, known: &[&str]) -> Result<()> {
        for e in &self.section.entries {
            if !known.contains(&e.key.as_str()) {
                return Err(self.err(e.line, format!("unknown key `{}`", e.key)));
            }
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(entry: &Entry) -> std::result::Result<T, String> {
    entry
        .value
        .parse()
        .map_err(|_| format!("invalid value `{}` for `{}`", entry.value, entry.key))
}

pub fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse().map_err(|_| format!("invalid list element `{s}`"))
        })
        .collect()
}

pub fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Ordered writer producing the canonical text form.
#[derive(Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.out, "# {text}");
        self
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn section(&mut self, header: &str) -> &mut Self {
        let _ = writeln!(self.out, "\n[{header}]");
        self
    }

    pub fn line(&mut self, text: &str) -> &mut Self {
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Collects `prefix[a,b] = v` keys into a map keyed by the bracketed pair.
pub fn indexed_pairs(
    view: &SectionView<'_>,
    prefix: &str,
) -> Result<BTreeMap<(u32, u32), i64>> {
    let mut out = BTreeMap::new();
    for e in view.entries() {
        let Some(rest) = e.key.strip_prefix(prefix) else {
            continue;
        };
        let Some(inner) = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')) else {
            continue;
        };
        let idx: Vec<u32> =
            parse_list(inner).map_err(|m| view.err(e.line, format!("bad index: {m}")))?;
        if idx.len() != 2 {
            return Err(view.err(e.line, format!("`{}` needs two indices", e.key)));
        }
        let v: i64 = e
            .value
            .parse()
            .map_err(|_| view.err(e.line, format!("invalid value `{}`", e.value)))?;
        out.insert((idx[0], idx[1]), v);
    }
    Ok(out)
}
