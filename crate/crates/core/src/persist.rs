//! Small filesystem helpers shared by the text-format writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `contents` to `path` atomically: the bytes land in a sibling
/// temporary file first and are renamed into place, so readers never observe
/// a half-written file.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let display = path.display().to_string();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = Path::new(&tmp);
    fs::write(tmp_path, contents).map_err(|e| Error::io(tmp_path.display().to_string(), e))?;
    fs::rename(tmp_path, path).map_err(|e| Error::io(display, e))
}

/// Reads a whole UTF-8 text file, mapping IO failures to [`Error::Io`] with
/// the offending path.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}
