//! JSON Lines reading and writing with line-numbered errors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

impl JsonlError {
    pub fn line(&self) -> Option<usize> {
        match self {
            JsonlError::Parse { line, .. } => Some(*line),
            JsonlError::Io { .. } => None,
        }
    }
}

/// Parses one record per non-blank line. Line numbers in errors are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| JsonlError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Streams records from a file, one per non-blank line.
pub struct JsonlReader<T> {
    path: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    _record: PhantomData<fn() -> T>,
}

impl<T: DeserializeOwned> JsonlReader<T> {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let shown = path.display().to_string();
        let file = File::open(path).map_err(|source| JsonlError::Io { path: shown.clone(), source })?;
        Ok(Self { path: shown, lines: BufReader::new(file).lines(), line_no: 0, _record: PhantomData })
    }
}

impl<T: DeserializeOwned> Iterator for JsonlReader<T> {
    type Item = Result<T, JsonlError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => return Some(Err(JsonlError::Io { path: self.path.clone(), source })),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                message: e.to_string(),
            }));
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    JsonlReader::open(path)?.collect()
}

/// Buffered record-at-a-time writer.
pub struct JsonlWriter {
    path: String,
    inner: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, JsonlError> {
        let shown = path.display().to_string();
        let file = File::create(path).map_err(|source| JsonlError::Io { path: shown.clone(), source })?;
        Ok(Self { path: shown, inner: BufWriter::new(file) })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        let io_err = |source| JsonlError::Io { path: self.path.clone(), source };
        serde_json::to_writer(&mut self.inner, record).map_err(|e| io_err(e.into()))?;
        self.inner.write_all(b"\n").map_err(io_err)
    }

    pub fn finish(mut self) -> Result<(), JsonlError> {
        self.inner.flush().map_err(|source| JsonlError::Io { path: self.path.clone(), source })
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let mut w = JsonlWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}
