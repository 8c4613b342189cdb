//! Atomic file writes and CSV helpers. Numbers use the shortest
//! round-trip form, switching to exponent notation for tiny or huge values.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use agediff_core::AgeSpaceField;
use serde::Serialize;

use crate::error::CliError;

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Io(format!("cannot create a temporary file in {}: {e}", dir.display())))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Collects rows and the names of the files written.
#[derive(Debug, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{v:?}");
        }
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.buf.as_bytes())
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }
}

/// `a,x,u` rows over the grid, age major.
pub fn field_csv(u: &AgeSpaceField) -> Csv {
    let mut csv = Csv::new(&["a", "x", "u"]);
    append_field(&mut csv, None, u);
    csv
}

pub fn append_field(csv: &mut Csv, t: Option<f64>, u: &AgeSpaceField) {
    let ages = u.age_grid().nodes();
    let xs = u.space_grid().nodes();
    for (k, &a) in ages.iter().enumerate() {
        for (&x, &v) in xs.iter().zip(u.row(k)) {
            match t {
                Some(t) => csv.row(&[t, a, x, v]),
                None => csv.row(&[a, x, v]),
            }
        }
    }
}

/// Tracks the files of a run relative to its output directory.
#[derive(Debug)]
pub struct OutDir {
    pub root: PathBuf,
    pub files: Vec<String>,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        write_json(&self.root.join(name), value)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        csv.write(&self.root.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_round_trip_formatting() {
        let mut c = Csv::new(&["t", "v"]);
        c.row(&[0.1, 1.0 / 3.0]);
        assert_eq!(c.as_str(), "t,v\n0.1,0.3333333333333333\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
