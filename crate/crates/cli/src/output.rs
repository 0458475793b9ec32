use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

/// Seed provenance written into every header line.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub command: String,
    pub generated_unix: u64,
    pub config_seed: Option<u64>,
    /// `(value, source)` when the config seed was overridden.
    pub override_seed: Option<(u64, &'static str)>,
}

impl Provenance {
    pub fn header(&self) -> String {
        let mut s = format!(
            "# shelab {} command={} generated_unix={}",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.generated_unix
        );
        match (self.config_seed, self.override_seed) {
            (Some(c), Some((v, src))) => write!(s, " master_seed={v} config_seed={c} seed_source={src}").unwrap(),
            (Some(c), None) => write!(s, " master_seed={c}").unwrap(),
            _ => {}
        }
        s
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file: header line, column names, rows.
pub struct Table {
    columns: &'static [&'static str],
    body: String,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        let mut body = columns.join(",");
        body.push('\n');
        Self { columns, body }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let cells: Vec<String> = cells.into_iter().map(|c| c.as_ref().to_string()).collect();
        assert_eq!(cells.len(), self.columns.len(), "row width");
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> Result<()> {
        let text = format!("{}\n{}", prov.header(), self.body);
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
