//! Result export: CSV tables and a TOML summary stamped with the schema
//! version. The summary also goes to stdout.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: i64 = 1;

pub struct Output {
    pub command: &'static str,
    pub out_dir: Option<PathBuf>,
}

impl Output {
    pub fn new(command: &'static str, out_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(dir) = &out_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Self { command, out_dir })
    }

    /// Writes `<out_dir>/<name>.csv`; a no-op without an output directory.
    pub fn table<S: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = S>) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Prints the summary and writes `<out_dir>/<command>.toml`.
    pub fn summary<S: Serialize>(&self, body: &S) -> Result<()> {
        let mut table = toml::Table::new();
        table.insert("schema_version".into(), toml::Value::Integer(SCHEMA_VERSION));
        table.insert("command".into(), toml::Value::String(self.command.into()));
        let body = toml::Table::try_from(body).context("encoding summary")?;
        table.extend(body);
        let text = toml::to_string(&table)?;
        print!("{text}");
        if let Some(dir) = &self.out_dir {
            let path = dir.join(format!("{}.toml", self.command));
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
