//! Artifact emission: fingerprinted CSV/JSON files, the run manifest and the
//! text rendering used by `report`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use abf_core::evaluation::ScoreReport;
use anyhow::{Context, Result};
use serde::Serialize;

pub const FINGERPRINT_KEY: &str = "config_fingerprint";

/// Writes files into one output directory and remembers what it wrote.
pub struct ArtifactWriter {
    dir: PathBuf,
    fingerprint: String,
    files: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, fingerprint: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            fingerprint: fingerprint.to_string(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    pub fn csv<S: AsRef<str>>(&mut self, name: &str, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
        let path = self.path(name);
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        writeln!(f, "# {FINGERPRINT_KEY} = {}", self.fingerprint)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(f);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|s| s.as_ref()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let body = serde_json::json!({
            FINGERPRINT_KEY: self.fingerprint,
            "data": value,
        });
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// One row per step: `t, y, ls, qs, crps`.
    pub fn score_steps(&mut self, name: &str, report: &ScoreReport) -> Result<()> {
        let rows: Vec<Vec<String>> = report
            .per_step
            .iter()
            .map(|s| vec![s.t.to_string(), num(s.y), num(s.ls), num(s.qs), num(s.crps)])
            .collect();
        self.csv(name, &["t", "y", "ls", "qs", "crps"], &rows)
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub kind: &'a str,
    pub config_fingerprint: &'a str,
    pub seeds: &'a [u64],
    pub workers: Option<usize>,
    pub wall_clock_seconds: f64,
    pub library_version: &'a str,
    pub files: Vec<String>,
    pub config: &'a str,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Renders a CSV artifact as an aligned text table; comment lines are shown
/// above it unchanged.
pub fn render_table(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = String::new();
    let mut body = String::new();
    for line in text.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let rows: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let numeric = c.parse::<f64>().is_ok();
                if numeric { format!("{c:>w$}", w = widths[j]) } else { format!("{c:<w$}", w = widths[j]) }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * ncol.saturating_sub(1)));
            out.push('\n');
        }
    }
    Ok(out)
}
