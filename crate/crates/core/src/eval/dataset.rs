//! Labeled dataset loaders.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Share of malformed lines tolerated before a load fails.
pub const MALFORMED_BUDGET: f64 = 0.001;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line_no}: {reason} ({malformed} malformed of {total}, over the {budget} budget)")]
    Format {
        line_no: u64,
        reason: String,
        malformed: u64,
        total: u64,
        budget: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Alert tag, epoch seconds, date, node, time, node, type, component,
    /// level, content.
    Bgl,
    /// Alert tag, epoch seconds, date, node, month, day, time, location,
    /// content.
    Thunderbird,
    /// Tab separated: label (0 or 1), epoch milliseconds (may be empty), text.
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledLine {
    pub text: String,
    pub timestamp: Option<i64>,
    pub label: bool,
    pub level: Option<Arc<str>>,
    pub component: Option<Arc<str>>,
}

impl LabeledLine {
    pub fn new(text: impl Into<String>, timestamp: Option<i64>, label: bool) -> Self {
        Self {
            text: text.into(),
            timestamp,
            label,
            level: None,
            component: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub name: String,
    pub lines: Vec<LabeledLine>,
    /// Lines skipped as malformed.
    pub skipped: u64,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn labels(&self) -> Arc<[bool]> {
        self.lines.iter().map(|l| l.label).collect()
    }

    pub fn anomalies(&self) -> usize {
        self.lines.iter().filter(|l| l.label).count()
    }
}

#[derive(Default)]
struct Interner(HashMap<String, Arc<str>>);

impl Interner {
    fn get(&mut self, s: &str) -> Arc<str> {
        if let Some(a) = self.0.get(s) {
            return Arc::clone(a);
        }
        let a: Arc<str> = Arc::from(s);
        self.0.insert(s.to_string(), Arc::clone(&a));
        a
    }
}

/// Splits off `n` whitespace-separated fields and returns them with the rest.
fn fields(line: &str, n: usize) -> Option<(Vec<&str>, &str)> {
    let mut out = Vec::with_capacity(n);
    let mut rest = line.trim_start();
    for _ in 0..n {
        let end = rest.find(char::is_whitespace)?;
        out.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    Some((out, rest))
}

fn parse_bgl(line: &str, interner: &mut Interner) -> Result<LabeledLine, &'static str> {
    let (f, content) = fields(line, 9).ok_or("fewer than nine fields")?;
    let secs: i64 = f[1].parse().map_err(|_| "epoch seconds not a number")?;
    Ok(LabeledLine {
        text: content.to_string(),
        timestamp: Some(secs * 1000),
        label: f[0] != "-",
        level: Some(interner.get(f[8])),
        component: Some(interner.get(f[7])),
    })
}

fn parse_thunderbird(line: &str, interner: &mut Interner) -> Result<LabeledLine, &'static str> {
    let (f, content) = fields(line, 8).ok_or("fewer than eight fields")?;
    let secs: i64 = f[1].parse().map_err(|_| "epoch seconds not a number")?;
    let component = content
        .split(|c: char| c == '[' || c == ':' || c.is_whitespace())
        .next()
        .filter(|s| !s.is_empty())
        .map(|s| interner.get(s));
    Ok(LabeledLine {
        text: content.to_string(),
        timestamp: Some(secs * 1000),
        label: f[0] != "-",
        level: None,
        component,
    })
}

fn parse_generic(line: &str) -> Result<LabeledLine, &'static str> {
    let mut parts = line.splitn(3, '\t');
    let label = match parts.next() {
        Some("0") => false,
        Some("1") => true,
        _ => return Err("label must be 0 or 1"),
    };
    let ts = parts.next().ok_or("missing timestamp column")?;
    let timestamp = if ts.is_empty() {
        None
    } else {
        Some(ts.parse().map_err(|_| "timestamp not a number")?)
    };
    let text = parts.next().ok_or("missing text column")?;
    Ok(LabeledLine::new(text, timestamp, label))
}

/// Reads a dataset. Malformed lines are skipped while they stay within
/// [`MALFORMED_BUDGET`] of all lines; beyond that the load fails. `limit`
/// keeps only the first lines.
pub fn load_dataset(
    reader: impl BufRead,
    format: DatasetFormat,
    name: &str,
    limit: Option<usize>,
) -> Result<LabeledDataset, DatasetError> {
    let mut interner = Interner::default();
    let mut lines = Vec::new();
    let mut bad: Vec<(u64, &'static str)> = Vec::new();
    let mut total = 0u64;
    for (i, line) in reader.lines().enumerate() {
        if limit.is_some_and(|l| lines.len() >= l) {
            break;
        }
        let line = line.map_err(|source| DatasetError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = match format {
            DatasetFormat::Bgl => parse_bgl(&line, &mut interner),
            DatasetFormat::Thunderbird => parse_thunderbird(&line, &mut interner),
            DatasetFormat::Generic => parse_generic(&line),
        };
        match parsed {
            Ok(l) => lines.push(l),
            Err(reason) => bad.push((i as u64 + 1, reason)),
        }
    }
    let budget = (total as f64 * MALFORMED_BUDGET).floor() as u64;
    if bad.len() as u64 > budget {
        let (line_no, reason) = bad[budget as usize];
        return Err(DatasetError::Format {
            line_no,
            reason: reason.to_string(),
            malformed: bad.len() as u64,
            total,
            budget,
        });
    }
    Ok(LabeledDataset {
        name: name.to_string(),
        lines,
        skipped: bad.len() as u64,
    })
}

pub fn load_path(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    limit: Option<usize>,
) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    load_dataset(std::io::BufReader::new(file), format, &name, limit)
}

pub fn load_bgl(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    load_path(path, DatasetFormat::Bgl, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BGL: &str = "\
- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.363779 R02-M1-N0-C:J12-U11 RAS KERNEL INFO instruction cache parity error corrected
KERNDTLB 1117838571 2005.06.03 R23-M0-NE-C:J05-U01 2005-06-03-15.42.51.749199 R23-M0-NE-C:J05-U01 RAS KERNEL FATAL data TLB error interrupt
";

    fn bgl(text: &str) -> Result<LabeledDataset, DatasetError> {
        load_dataset(text.as_bytes(), DatasetFormat::Bgl, "t", None)
    }

    #[test]
    fn bgl_fields_and_labels() {
        let ds = bgl(BGL).unwrap();
        assert_eq!(ds.len(), 2);
        let a = &ds.lines[0];
        assert!(!a.label);
        assert_eq!(a.timestamp, Some(1_117_838_570_000));
        assert_eq!(a.text, "instruction cache parity error corrected");
        assert_eq!(a.level.as_deref(), Some("INFO"));
        assert_eq!(a.component.as_deref(), Some("KERNEL"));
        let b = &ds.lines[1];
        assert!(b.label);
        assert_eq!(b.text, "data TLB error interrupt");
        assert_eq!(b.level.as_deref(), Some("FATAL"));
        assert!(Arc::ptr_eq(a.component.as_ref().unwrap(), b.component.as_ref().unwrap()));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds = bgl("").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.skipped, 0);
    }

    #[test]
    fn malformed_lines_within_budget_are_skipped() {
        let good = BGL.lines().next().unwrap();
        let mut text = String::new();
        for i in 0..2000 {
            if i == 500 || i == 1500 {
                text.push_str("garbage\n");
            } else {
                text.push_str(good);
                text.push('\n');
            }
        }
        let ds = bgl(&text).unwrap();
        assert_eq!((ds.len(), ds.skipped), (1998, 2));
        text.push_str("x 12 y\n");
        match bgl(&text) {
            Err(DatasetError::Format { line_no, malformed, budget, .. }) => {
                assert_eq!((line_no, malformed, budget), (2001, 3, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thunderbird_and_generic() {
        let tb = "- 1131566461 2005.11.09 dn228 Nov 9 12:01:01 dn228/dn228 crond(pam_unix)[2915]: session closed for user root\n";
        let ds = load_dataset(tb.as_bytes(), DatasetFormat::Thunderbird, "tb", None).unwrap();
        assert_eq!(ds.lines[0].text, "crond(pam_unix)[2915]: session closed for user root");
        assert_eq!(ds.lines[0].component.as_deref(), Some("crond(pam_unix)"));
        let g = "1\t5000\tdisk failed\n0\t\tall good\n";
        let ds = load_dataset(g.as_bytes(), DatasetFormat::Generic, "g", None).unwrap();
        assert_eq!(ds.lines[0], LabeledLine::new("disk failed", Some(5000), true));
        assert_eq!(ds.lines[1], LabeledLine::new("all good", None, false));
    }

    #[test]
    fn limit_keeps_first_lines() {
        let ds = load_dataset(BGL.as_bytes(), DatasetFormat::Bgl, "t", Some(1)).unwrap();
        assert_eq!(ds.len(), 1);
    }
}
