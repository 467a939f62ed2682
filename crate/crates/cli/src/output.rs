//! File emission. Every writer is a pure function of its inputs, so
//! identical records give identical bytes.

use crate::record::ResultRecord;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {msg}")]
    Encode { path: PathBuf, msg: String },
}

/// A CSV table with an optional second block, separated by one blank line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Option<(Vec<&'static str>, Vec<Vec<String>>)>,
}

/// Decimal text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn render_csv(t: &Table) -> Result<Vec<u8>, String> {
    let block = |header: &[&str], rows: &[Vec<String>]| -> Result<Vec<u8>, String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        w.into_inner().map_err(|e| e.to_string())
    };
    let mut out = block(&t.header, &t.rows)?;
    if let Some((h, rows)) = &t.trailer {
        out.push(b'\n');
        out.extend(block(h, rows)?);
    }
    Ok(out)
}

pub fn render_record(r: &ResultRecord) -> Result<Vec<u8>, String> {
    let mut s = serde_json::to_string_pretty(r).map_err(|e| e.to_string())?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, OutputError> {
    std::fs::write(&path, bytes).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `result.json` and every table into `dir`, creating it if needed.
pub fn write_results(
    record: &ResultRecord,
    tables: &[Table],
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let path = dir.join("result.json");
    let bytes = render_record(record).map_err(|msg| OutputError::Encode {
        path: path.clone(),
        msg,
    })?;
    written.push(write(path, &bytes)?);
    for t in tables {
        let path = dir.join(t.file);
        let bytes = render_csv(t).map_err(|msg| OutputError::Encode {
            path: path.clone(),
            msg,
        })?;
        written.push(write(path, &bytes)?);
    }
    Ok(written)
}
