//! JSON-lines dataset IO.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::instance::RelationInstance;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn load_dataset(path: &Path) -> Result<Vec<RelationInstance>> {
    load_dataset_versioned(path, SCHEMA_VERSION)
}

pub fn load_dataset_versioned(path: &Path, version: u32) -> Result<Vec<RelationInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), version)
}

/// Parses one instance per non-blank line and validates each record.
pub fn parse_dataset(reader: impl BufRead, version: u32) -> Result<Vec<RelationInstance>> {
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported dataset schema version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            path: String::new(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let inst: RelationInstance = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            line: line_no,
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        inst.check().map_err(|(path, message)| Error::Parse {
            line: line_no,
            path,
            message,
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_dataset(mut writer: impl Write, instances: &[RelationInstance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut writer, inst)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, instances: &[RelationInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, instances)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Instance plus its neighbor sets, as written by preprocessing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedRecord {
    #[serde(flatten)]
    pub instance: RelationInstance,
    pub neighbors: Vec<Vec<usize>>,
}

pub fn save_processed(path: &Path, records: &[ProcessedRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
