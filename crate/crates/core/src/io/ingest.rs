//! Line-oriented interaction files: `user<sep>item[<sep>extra...]` with a
//! tab or comma separator detected from the first line.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;

use crate::error::{Result, SagcnError};

/// Dense index assignment for string tokens in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line, line number = index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for t in &self.tokens {
            body.push_str(t);
            body.push('\n');
        }
        super::write_atomic(path, body.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut map = IdMap::default();
        for (n, line) in text.lines().enumerate() {
            if map.intern(line) != n {
                return Err(SagcnError::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    msg: format!("duplicate token `{line}`"),
                });
            }
        }
        Ok(map)
    }
}

/// Interactions remapped to dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interactions {
    /// Deduplicated `(user, item)` pairs in first-seen order.
    pub records: Vec<(usize, usize)>,
    pub users: IdMap,
    pub items: IdMap,
    pub duplicates: usize,
}

impl Interactions {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

fn detect_separator(first: &str) -> Option<char> {
    if first.contains('\t') {
        Some('\t')
    } else if first.contains(',') {
        Some(',')
    } else {
        None
    }
}

fn is_header(user: &str, item: &str) -> bool {
    let u = user.trim().to_ascii_lowercase();
    let i = item.trim().to_ascii_lowercase();
    u.starts_with("user") && i.starts_with("item")
}

/// Parses interaction text. `origin` is used only in error messages.
pub fn parse_interactions(text: &str, origin: &Path) -> Result<Interactions> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let (_, first) = *lines.peek().ok_or_else(|| SagcnError::Data(format!("{}: empty file", origin.display())))?;
    let sep = detect_separator(first).ok_or_else(|| SagcnError::Parse {
        path: origin.to_path_buf(),
        line: 1,
        msg: "expected a tab- or comma-separated line".into(),
    })?;

    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::new();
    let mut duplicates = 0;
    let mut first_line = true;

    for (n, line) in lines {
        let mut cols = line.split(sep).map(str::trim);
        let (user, item) = match (cols.next(), cols.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(SagcnError::Parse {
                    path: origin.to_path_buf(),
                    line: n + 1,
                    msg: format!("expected two non-empty columns, got `{line}`"),
                })
            }
        };
        if std::mem::take(&mut first_line) && is_header(user, item) {
            continue;
        }
        let pair = (users.intern(user), items.intern(item));
        if seen.insert(pair) {
            records.push(pair);
        } else {
            duplicates += 1;
        }
    }
    if records.is_empty() {
        return Err(SagcnError::Data(format!("{}: no interactions", origin.display())));
    }
    if duplicates > 0 {
        info!("{}: dropped {duplicates} duplicate interactions", origin.display());
    }
    Ok(Interactions {
        records,
        users,
        items,
        duplicates,
    })
}

pub fn ingest(path: &Path) -> Result<Interactions> {
    let text = fs::read_to_string(path)
        .map_err(|e| SagcnError::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_interactions(&text, path)
}

/// Writes `user\titem` index pairs.
pub fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let mut body = Vec::with_capacity(pairs.len() * 8);
    for (u, i) in pairs {
        writeln!(body, "{u}\t{i}")?;
    }
    super::write_atomic(path, &body)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| SagcnError::Data(format!("cannot read {}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| SagcnError::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let mut cols = l.split('\t');
            let parse = |c: Option<&str>| -> Result<usize> {
                c.ok_or_else(|| bad(n + 1, "missing column".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| bad(n + 1, format!("{e}")))
            };
            Ok((parse(cols.next())?, parse(cols.next())?))
        })
        .collect()
}
