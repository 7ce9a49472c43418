//! File formats: event and covariate CSVs in, versioned JSON and CSV out.

pub mod config;
pub mod designs;
pub mod events;
pub mod export;
pub mod period;
pub mod schema;

use std::path::Path;

use crate::error::Result;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub(crate) fn input_error(path: &str, row: usize, message: impl Into<String>) -> crate::error::Error {
    crate::error::Error::Input {
        path: path.to_string(),
        row,
        message: message.into(),
    }
}
