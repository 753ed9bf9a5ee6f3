//! All-or-nothing output: files are written to temporaries beside their
//! destination and renamed into place only once every output succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{Error, Result};

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn temp_with(path: &Path, bytes: &[u8]) -> Result<NamedTempFile> {
    let mut tmp = NamedTempFile::new_in(parent_dir(path)).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).and_then(|_| tmp.flush()).map_err(|e| Error::io(path, e))?;
    Ok(tmp)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    temp_with(path, bytes)?
        .persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// A group of outputs committed together.
#[derive(Default)]
pub struct Staging {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staging {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
        let path = path.into();
        let tmp = temp_with(&path, bytes)?;
        self.files.push((tmp, path));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Renames every staged file into place. Dropping a `Staging` without
    /// committing removes the temporaries.
    pub fn commit(self) -> Result<()> {
        for (tmp, path) in self.files {
            tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        }
        Ok(())
    }
}
