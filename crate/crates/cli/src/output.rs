//! Atomic file output: every file is written beside its destination and
//! renamed into place, so readers never observe a truncated file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chc_core::field::write_snapshot;
use chc_core::velocity::write_control;
use chc_core::{ScalarField, StreamControl};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_csv(path: &Path, csv: &Csv) -> io::Result<()> {
    write_atomic(path, csv.as_str().as_bytes())
}

pub fn write_field(path: &Path, field: &ScalarField) -> chc_core::Result<()> {
    let mut bytes = Vec::new();
    write_snapshot(&mut bytes, field)?;
    Ok(write_atomic(path, &bytes)?)
}

pub fn write_control_file(path: &Path, ctrl: &StreamControl) -> chc_core::Result<()> {
    let mut bytes = Vec::new();
    write_control(&mut bytes, ctrl)?;
    Ok(write_atomic(path, &bytes)?)
}

/// Tracks written files for the run summary.
#[derive(Debug, Default)]
pub struct Written(pub Vec<PathBuf>);

impl Written {
    pub fn push(&mut self, p: PathBuf) -> &Path {
        self.0.push(p);
        self.0.last().expect("just pushed")
    }
}
