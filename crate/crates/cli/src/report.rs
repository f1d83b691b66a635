//! Run reports: deterministic CSV tables plus a JSON mirror with provenance.
//!
//! Numbers in tables are formatted once, with 17 significant digits in
//! scientific notation, so CSV and JSON carry byte-identical values and a
//! run with a fixed seed reproduces its primary CSV output byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{render_config, OutputFormat};
use crate::CliError;

/// Formats a float with 17 significant digits (round-trip safe for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One named table; every column header carries a bracketed unit or
/// definition tag.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        writer
            .write_record(&self.columns)
            .and_then(|_| {
                for row in &self.rows {
                    writer.write_record(row)?;
                }
                writer.flush()?;
                Ok(())
            })
            .map_err(|e| CliError::config(format!("csv write failed: {e}")))
    }
}

/// Serialized experiment output: configuration echo, provenance, and every
/// emitted table. Reports are written once per run and never mutated.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    /// Name of the random-number generator behind all sampling.
    pub generator: &'static str,
    /// Fully resolved configuration; reproduces the run without the
    /// original command line.
    pub config: BTreeMap<String, String>,
    /// The same configuration rendered in the config-file format.
    pub config_file: String,
    pub duration_ms: u128,
    pub tables: BTreeMap<String, Table>,
    /// Subcommand-specific extras (e.g. the full probe report).
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl RunReport {
    pub fn new(subcommand: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        Self {
            tool: "tglab",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            generator: tglab_core::montecarlo::GENERATOR_NAME,
            config_file: render_config(&config),
            config,
            duration_ms: 0,
            tables: BTreeMap::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn add_table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_string(), table);
    }

    /// Writes the report and its tables under `out`. CSV format writes one
    /// CSV file per table plus the JSON report; JSON format writes the
    /// report alone (tables are embedded either way). Returns the written
    /// paths, primary CSV files first.
    pub fn write(
        &self,
        out: &Path,
        format: OutputFormat,
    ) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", out.display())))?;
        let mut written = Vec::new();
        if format == OutputFormat::Csv {
            for (name, table) in &self.tables {
                let path = out.join(format!("{name}.csv"));
                table.write_csv(&path)?;
                written.push(path);
            }
        }
        let report_path = out.join(format!("{}_report.json", self.subcommand));
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::config(format!("report serialization failed: {e}")))?;
        std::fs::write(&report_path, json + "\n")
            .map_err(|e| CliError::config(format!("cannot write report: {e}")))?;
        written.push(report_path);
        Ok(written)
    }
}
