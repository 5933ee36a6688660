//! The per-generation stats CSV.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};

/// Column names; the schema version is recorded in the run manifest.
pub const HEADER: [&str; 6] = ["generation", "elite_mean", "topT_mean", "pop_mean", "frames_total", "wall_seconds"];
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub generation: u32,
    pub elite_mean: f64,
    pub top_mean: f64,
    pub pop_mean: f64,
    /// Frames consumed since the start of the run, re-evaluations included.
    pub frames_total: u64,
    pub wall_seconds: Option<f64>,
}

pub struct StatsWriter {
    inner: csv::Writer<File>,
}

impl StatsWriter {
    /// Creates `path` with a header, or appends to it when `append` is set
    /// and the file exists.
    pub fn open(path: &Path, append: bool) -> anyhow::Result<Self> {
        let existing = append && path.exists();
        let file = if existing {
            std::fs::OpenOptions::new().append(true).open(path)
        } else {
            File::create(path)
        }
        .with_context(|| format!("cannot open {}", path.display()))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if !existing {
            inner.write_record(HEADER)?;
            inner.flush()?;
        }
        Ok(StatsWriter { inner })
    }

    pub fn write(&mut self, row: &StatsRow) -> anyhow::Result<()> {
        self.inner.write_record([
            row.generation.to_string(),
            row.elite_mean.to_string(),
            row.top_mean.to_string(),
            row.pop_mean.to_string(),
            row.frames_total.to_string(),
            row.wall_seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
        ])?;
        // rows survive an interrupted run
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read(path: &Path) -> anyhow::Result<Vec<StatsRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != HEADER {
        bail!("{}: unexpected columns {:?}, expected {:?}", path.display(), header, HEADER);
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = || format!("{}: row {} is malformed", path.display(), i + 1);
        rows.push(StatsRow {
            generation: field(0).parse().with_context(bad)?,
            elite_mean: field(1).parse().with_context(bad)?,
            top_mean: field(2).parse().with_context(bad)?,
            pop_mean: field(3).parse().with_context(bad)?,
            frames_total: field(4).parse().with_context(bad)?,
            wall_seconds: match field(5) {
                "" => None,
                s => Some(s.parse().with_context(bad)?),
            },
        });
    }
    Ok(rows)
}

/// Appends one line to a plain CSV, writing `header` first if the file is new.
pub fn append_line(path: &Path, header: &str, line: &str) -> std::io::Result<()> {
    let new = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if new {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{line}")
}
