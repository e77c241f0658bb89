// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use kmm_core::ExperimentResult;

use crate::config::OutputFormat;
use crate::error::RunError;

/// Writes `records` to `out` with a header line for CSV.
pub fn write_records<W: Write>(out: W, records: &[ExperimentResult], format: OutputFormat) -> Result<(), RunError> {
    let encode = |e: &dyn std::fmt::Display| RunError::Encode(e.to_string());
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(ExperimentResult::COLUMNS).map_err(|e| encode(&e))?;
            for r in records {
                w.serialize(r).map_err(|e| encode(&e))?;
            }
            w.flush().map_err(|e| encode(&e))
        }
        OutputFormat::Jsonl => {
            let mut w = BufWriter::new(out);
            for r in records {
                serde_json::to_writer(&mut w, r).map_err(|e| encode(&e))?;
                w.write_all(b"\n").map_err(|e| encode(&e))?;
            }
            w.flush().map_err(|e| encode(&e))
        }
    }
}

pub fn write_file(path: &Path, records: &[ExperimentResult], format: OutputFormat) -> Result<(), RunError> {
    let io = |source| RunError::Write { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    write_records(File::create(path).map_err(io)?, records, format)
}
