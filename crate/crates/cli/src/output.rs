//! File output. Every file is written under a `.partial` name and renamed
//! into place once complete.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Full-precision formatting; parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().expect("file path").to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `path` through `body`, visible under its final name only on success.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = partial_path(path);
    let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

/// CSV with a fixed header; each row is already formatted.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for row in rows {
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// `key = value` lines.
pub fn write_key_values(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    write_atomic(path, |w| {
        for (k, v) in pairs {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn print_key_values(pairs: &[(String, String)]) {
    for (k, v) in pairs {
        println!("{k} = {v}");
    }
}

/// Plotting stub copied next to the data files.
pub const PLOT_SCRIPT: &str = include_str!("../assets/plot.py");
