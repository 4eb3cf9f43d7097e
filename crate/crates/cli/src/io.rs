//! JSONL input and output helpers.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Failure;

/// Open `path`, or standard input for `None` and `-`.
fn open(path: Option<&Path>) -> Result<Box<dyn BufRead>, Failure> {
    match path {
        None => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) => {
            let f = File::open(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufReader::new(f)))
        }
    }
}

fn describe(path: Option<&Path>) -> String {
    path.map_or_else(|| "<stdin>".to_string(), |p| p.display().to_string())
}

/// Every record in a JSONL file. Blank lines and `{"config": ...}` or
/// `{"summary": ...}` lines written by this tool are skipped, so outputs can be
/// piped back in. A line that does not parse is a validation failure.
pub fn read_jsonl<T: DeserializeOwned>(path: Option<&Path>) -> Result<Vec<T>, Failure> {
    let name = describe(path);
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Failure::Io(format!("{name}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Failure::Invalid(format!("{name}:{}: {e}", n + 1)))?;
        if is_meta(&value) {
            continue;
        }
        let record = serde_json::from_value(value).map_err(|e| Failure::Invalid(format!("{name}:{}: {e}", n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

fn is_meta(v: &serde_json::Value) -> bool {
    v.as_object()
        .is_some_and(|m| m.len() == 1 && (m.contains_key("config") || m.contains_key("summary")))
}

/// Buffered writer to a file or standard output.
pub struct Sink {
    inner: Box<dyn Write>,
    name: String,
}

impl Sink {
    pub fn create(path: Option<&PathBuf>) -> Result<Self, Failure> {
        match path {
            Some(p) if p.as_os_str() != "-" => {
                let f = File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
                Ok(Self {
                    inner: Box::new(BufWriter::new(f)),
                    name: p.display().to_string(),
                })
            }
            _ => Ok(Self {
                inner: Box::new(BufWriter::new(io::stdout().lock())),
                name: "<stdout>".into(),
            }),
        }
    }

    pub fn stderr() -> Self {
        Self {
            inner: Box::new(io::stderr()),
            name: "<stderr>".into(),
        }
    }

    fn err(&self, e: impl std::fmt::Display) -> Failure {
        Failure::Io(format!("{}: {e}", self.name))
    }

    pub fn line(&mut self, text: &str) -> Result<(), Failure> {
        writeln!(self.inner, "{text}").map_err(|e| self.err(e))
    }

    pub fn json<T: Serialize>(&mut self, record: &T) -> Result<(), Failure> {
        let text = serde_json::to_string(record).map_err(|e| self.err(e))?;
        self.line(&text)
    }

    /// CSV rows with a leading `# config:` comment line.
    pub fn csv(&mut self, config: &serde_json::Value, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        self.line(&format!("# {}", config))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| self.err(e))?;
        for r in rows {
            w.write_record(r).map_err(|e| self.err(e))?;
        }
        let bytes = w.into_inner().map_err(|e| self.err(e))?;
        self.inner.write_all(&bytes).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.inner.flush().map_err(|e| self.err(e))
    }
}

/// Long-format plot series: one `(series, x, y)` triple per row.
#[derive(Debug, Default)]
pub struct Series {
    rows: Vec<Vec<String>>,
}

impl Series {
    pub fn push(&mut self, series: &str, x: impl ToString, y: f64) {
        self.rows.push(vec![series.to_string(), x.to_string(), y.to_string()]);
    }

    pub fn write(&self, sink: &mut Sink, config: &serde_json::Value) -> Result<(), Failure> {
        sink.csv(config, &["series", "x", "y"], &self.rows)
    }
}
