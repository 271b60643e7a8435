use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sstem_core::tabular::write_atomic;

pub const FAILED: u8 = 1;
pub const INVALID_ARGS: u8 = 2;
pub const BACKEND_UNAVAILABLE: u8 = 3;
pub const FIT_FAILED: u8 = 4;
pub const ALIGNMENT: u8 = 5;
pub const BIND_FAILED: u8 = 6;

/// An error paired with the process exit status it maps to.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Exit {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Exit {
            code,
            error: error.into(),
        }
    }

    pub fn msg(code: u8, message: impl Display + Send + Sync + 'static) -> Self {
        Exit::new(code, anyhow::anyhow!("{message}"))
    }
}

pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Exit>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Exit> {
        self.map_err(|e| Exit::new(code, e))
    }
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Exit> {
    write_atomic(path, bytes).or_exit(FAILED)
}

/// `scores.csv` -> `scores.csv.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Exit> {
    let mut text = serde_json::to_string_pretty(value).or_exit(FAILED)?;
    text.push('\n');
    write_output(path, text.as_bytes())
}
