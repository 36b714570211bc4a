use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
struct Versions {
    speechrag: &'static str,
    cli: &'static str,
    checkpoint_format: u32,
    index_format: u32,
}

/// Everything needed to repeat a run: the resolved config, the subcommand
/// and its arguments. Carries no timestamps, so repeated runs write
/// identical records.
#[derive(Debug, Serialize)]
struct MetaRecord<'a> {
    command: &'a str,
    args: serde_json::Value,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    versions: Versions,
}

pub struct Reports {
    dir: PathBuf,
}

impl Reports {
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.report_dir();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_meta(&self, command: &str, args: serde_json::Value, cfg: &RunConfig) -> Result<()> {
        let record = MetaRecord {
            command,
            args,
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            config: cfg,
            versions: Versions {
                speechrag: speechrag::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
                checkpoint_format: speechrag::checkpoint::VERSION,
                index_format: speechrag::index::VERSION,
            },
        };
        self.json(&format!("{command}.meta.json"), &record)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        speechrag::index::write_jsonl(self.path(name), rows)?;
        Ok(())
    }

    pub fn csv(&self, name: &str, table: &Table) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Plain-text rendering for the terminal.
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out.push('\n');
            out.push_str(&line(row));
        }
        out
    }
}

pub fn fmt_metric(x: f64) -> String {
    format!("{x:.4}")
}
