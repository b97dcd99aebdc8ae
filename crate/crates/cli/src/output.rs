//! Artifact writers: a deterministic JSON summary (timestamps quarantined
//! in a separate metadata object) and plain CSV data files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{json, Value};

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("output directory {} is not writable", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `summary.json`: stable field order, metadata (timestamp, version)
    /// kept apart from the reproducible payload.
    pub fn write_summary(&self, task: &str, seed: u64, results: Value) -> anyhow::Result<()> {
        let meta = json!({
            "timestamp_unix": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            "version": env!("CARGO_PKG_VERSION"),
        });
        let summary = json!({
            "task": task,
            "seed": seed,
            "results": results,
            "meta": meta,
        });
        let file = fs::File::create(self.path("summary.json"))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &summary)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> anyhow::Result<()> {
        let file = fs::File::create(self.path(name))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_rows(&self, name: &str, header: &str, rows: &[Vec<String>]) -> anyhow::Result<()> {
        let file = fs::File::create(self.path(name))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Machine-readable error envelope on stdout, plus `error.json` when the
/// output directory exists.
pub fn emit_error(out: Option<&Path>, kind: &str, message: &str) {
    let payload = json!({
        "error": { "kind": kind, "message": message }
    });
    println!("{payload}");
    if let Some(dir) = out {
        if let Ok(text) = serde_json::to_string_pretty(&payload) {
            let _ = fs::write(dir.join("error.json"), text + "\n");
        }
    }
}
