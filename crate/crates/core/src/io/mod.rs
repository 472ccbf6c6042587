//! On-disk formats: manifests, TOML configs, the binary model file and
//! atomic file writes.

mod config;
mod manifest;
mod model_file;

use std::io::Write;
use std::path::Path;

pub use config::{load_toml, ChannelMode, CvConfig, RuleConfig, SynthConfig, SynthLayout};
pub use manifest::{ClassEntry, ImageEntry, Manifest, Sampling};
pub use model_file::{decode_model, encode_model, load_model, save_model, MAGIC, VERSION};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
