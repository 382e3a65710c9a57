//! File helpers: atomic writes and CSV emission. All float formatting uses
//! Rust's shortest-roundtrip `Display`, so emitted files are byte-stable and
//! parse back to identical values.

use crate::Result;
use std::io::Write;
use std::path::Path;

/// Write a file atomically (temp file + rename) so partially written
/// artifacts never appear under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Minimal CSV accumulator (numeric payloads, no quoting needed).
#[derive(Debug, Default, Clone)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut c = Csv { buf: String::new() };
        c.buf.push_str(&header.join(","));
        c.buf.push('\n');
        c
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

/// Shortest-roundtrip float field.
pub fn f(v: f64) -> String {
    format!("{v}")
}
