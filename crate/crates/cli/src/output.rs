//! Deterministic file outputs. Floats render through Rust's shortest
//! round-trip `Display`, so reruns with identical inputs produce identical
//! bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn writer(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    /// Write a CSV table: header plus pre-rendered rows.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> CliResult<PathBuf> {
        let mut w = self.writer(name)?;
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{row}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| CliError::Io(format!("writing {name}: {e}")))?;
        Ok(self.path(name))
    }
}

/// Render a float with the shortest round-trip representation.
pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}
