//! Output files with a provenance header. Sweep tables stream row by row in
//! CSV; JSON tables are written whole, with a completeness flag.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Format;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &'static str, config_sha256: String, seed: u64) -> Self {
        Self { tool: "nlcoupler", version: env!("CARGO_PKG_VERSION"), command, config_sha256, seed }
    }
}

enum Sink {
    Csv(Box<csv::Writer<BufWriter<File>>>),
    Json { file: BufWriter<File>, rows: Vec<Vec<f64>> },
}

pub struct Table {
    path: PathBuf,
    columns: Vec<String>,
    provenance: Provenance,
    sink: Sink,
}

impl Table {
    pub fn create(dir: &Path, stem: &str, format: Format, provenance: &Provenance, columns: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let ext = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let path = dir.join(format!("{stem}.{ext}"));
        let mut file = BufWriter::new(File::create(&path)?);
        let sink = match format {
            Format::Csv => {
                let p = provenance;
                writeln!(file, "# {} {} {}", p.tool, p.version, p.command)?;
                writeln!(file, "# config_sha256 {}", p.config_sha256)?;
                writeln!(file, "# seed {}", p.seed)?;
                let mut w = csv::Writer::from_writer(file);
                w.write_record(columns)?;
                Sink::Csv(Box::new(w))
            }
            Format::Json => Sink::Json { file, rows: Vec::new() },
        };
        Ok(Self {
            path,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            provenance: provenance.clone(),
            sink,
        })
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        debug_assert_eq!(row.len(), self.columns.len());
        match &mut self.sink {
            Sink::Csv(w) => w.write_record(row.iter().map(|v| v.to_string()))?,
            Sink::Json { rows, .. } => rows.push(row.to_vec()),
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Sink::Csv(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }

    /// Closes the table; an incomplete sweep is marked as such.
    pub fn finish(self, complete: bool) -> Result<PathBuf> {
        match self.sink {
            Sink::Csv(w) => {
                let mut file = w.into_inner().map_err(|e| e.into_error())?;
                if !complete {
                    writeln!(file, "# incomplete: sweep stopped early")?;
                }
                file.flush()?;
            }
            Sink::Json { mut file, rows } => {
                // Non-finite values have no JSON representation.
                let rows: Vec<Vec<Option<f64>>> =
                    rows.iter().map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect()).collect();
                let doc = serde_json::json!({
                    "provenance": self.provenance,
                    "complete": complete,
                    "columns": self.columns,
                    "rows": rows,
                });
                serde_json::to_writer_pretty(&mut file, &doc)?;
                writeln!(file)?;
                file.flush()?;
            }
        }
        Ok(self.path)
    }
}

/// Writes `{"provenance": ..., "report": ...}` to `dir/stem.json`.
pub fn write_report<T: Serialize>(dir: &Path, stem: &str, provenance: &Provenance, report: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.json"));
    let mut file = BufWriter::new(File::create(&path)?);
    let doc = serde_json::json!({ "provenance": provenance, "report": report });
    serde_json::to_writer_pretty(&mut file, &doc)?;
    writeln!(file)?;
    file.flush()?;
    Ok(path)
}
