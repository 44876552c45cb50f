//! One submodule per subcommand. Each `run` takes parsed args, performs the
//! work through the library crate, and leaves a manifest next to whatever it
//! wrote.

pub mod cluster;
pub mod eval;
pub mod gradcheck;
pub mod profile;
pub mod schedule;
pub mod synth;
pub mod train;

use std::path::Path;

use mmts_core::Result;

/// Creates the output directory if needed.
pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}
