//! On-disk formats: a versioned JSON envelope for fitted models, and a
//! plain CSV layout for collections of equal-length paths.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

/// Version stamp written into every model file; bumped on breaking layout
/// changes so stale files fail loudly instead of deserializing garbage.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Kind tag for saved drawdown approximators.
pub const DRAWDOWN_MODEL_KIND: &str = "drawdown-approximator";
/// Kind tag for saved path generators.
pub const GENERATOR_MODEL_KIND: &str = "path-generator";

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    kind: String,
    version: u32,
    model: M,
}

/// Serializes a model under a kind tag and format version. The JSON float
/// encoding is exact, so a load returns bit-identical numbers.
pub fn save_model<M: Serialize>(kind: &str, model: &M, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let envelope = Envelope { kind: kind.to_string(), version: MODEL_FORMAT_VERSION, model };
    serde_json::to_writer_pretty(&mut w, &envelope)
        .map_err(|e| Error::Model(format!("serialize {kind}: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// Loads a model saved by [`save_model`], refusing files whose kind tag or
/// version does not match.
pub fn load_model<M: DeserializeOwned>(kind: &str, path: impl AsRef<Path>) -> Result<M> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let envelope: Envelope<M> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Model(format!("parse {}: {e}", path.display())))?;
    if envelope.kind != kind {
        return Err(Error::Model(format!(
            "{} holds a '{}' model, expected '{kind}'",
            path.display(),
            envelope.kind
        )));
    }
    if envelope.version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "{} uses format version {}, this build reads {MODEL_FORMAT_VERSION}",
            path.display(),
            envelope.version
        )));
    }
    Ok(envelope.model)
}

/// Writes equal-length paths as CSV, one row per path, with a `t0..t{n-1}`
/// header.
pub fn write_paths_csv<T: Float, W: Write>(paths: &[Vec<T>], mut w: W) -> Result<()> {
    let n = match paths.first() {
        Some(p) if !p.is_empty() => p.len(),
        _ => return Err(Error::invalid("need at least one non-empty path")),
    };
    if paths.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("all paths must have the same length"));
    }
    for t in 0..n {
        if t > 0 {
            write!(w, ",")?;
        }
        write!(w, "t{t}")?;
    }
    writeln!(w)?;
    for p in paths {
        for (t, v) in p.iter().enumerate() {
            if t > 0 {
                write!(w, ",")?;
            }
            write!(w, "{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads the layout produced by [`write_paths_csv`].
pub fn read_paths_csv<T: Float, R: Read>(reader: R) -> Result<Vec<Vec<T>>> {
    use std::io::BufRead;
    let mut lines = BufReader::new(reader).lines().enumerate();
    let n = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break line.trim_end().split(',').count();
            }
            None => return Err(Error::data(None, "empty paths file")),
        }
    };
    let mut paths = Vec::new();
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = no + 1;
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != n {
            return Err(Error::data(
                lineno,
                format!("expected {n} fields, found {}", cells.len()),
            ));
        }
        let mut row = Vec::with_capacity(n);
        for cell in cells {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| Error::data(lineno, format!("bad value '{cell}': {e}")))?;
            if !v.is_finite() {
                return Err(Error::data(lineno, format!("non-finite value '{cell}'")));
            }
            row.push(T::cast(v));
        }
        paths.push(row);
    }
    if paths.is_empty() {
        return Err(Error::data(None, "paths file has a header but no rows"));
    }
    Ok(paths)
}

/// File-based convenience wrappers.
pub fn save_paths_csv<T: Float>(paths: &[Vec<T>], path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_paths_csv(paths, BufWriter::new(file))
}

pub fn load_paths_csv<T: Float>(path: impl AsRef<Path>) -> Result<Vec<Vec<T>>> {
    let file = File::open(path.as_ref())?;
    read_paths_csv(file)
}
