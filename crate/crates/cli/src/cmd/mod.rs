pub mod eval;
pub mod generate;
pub mod prepare;
pub mod serve;
pub mod train;

use std::path::Path;

use topogen_core::dataset::Manifest;

use crate::error::{CliError, Result};

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.is_file() {
        return Err(CliError::input(format!("{}: manifest not found", path.display())));
    }
    Ok(Manifest::load(path)?)
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!("{}: {what} not found", path.display())))
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
