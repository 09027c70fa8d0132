//! The bundled ten-program fixture suite, embedded at build time.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use include_dir::{include_dir, Dir};

static SUITE: Dir<'_> = include_dir!("$CARGO_MANIFEST_DIR/fixtures/suite");

pub const MANIFEST: &str = "manifest.json";
pub const SCRIPTED_CONFIG: &str = "config-scripted.json";
pub const STUB_CONFIG: &str = "config-stub.json";
pub const PRICES: &str = "prices.json";

/// Writes the suite under `dest` and returns the manifest path.
pub fn write_suite(dest: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dest)?;
    SUITE.extract(dest)?;
    Ok(dest.join(MANIFEST))
}

/// Directory of the suite inside this source tree, for tests.
pub fn source_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/suite")
}
