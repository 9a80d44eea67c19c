use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Where a command's tabular output goes: a file, or stdout when no path
/// is given.
pub struct Sink {
    inner: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let inner: Box<dyn Write> = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                }
                Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?))
            }
            None => Box::new(BufWriter::new(io::stdout())),
        };
        Ok(Self { inner })
    }

    /// One JSON document per item, one per line.
    pub fn json_lines<T: Serialize>(
        &mut self,
        items: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        for item in items {
            serde_json::to_writer(&mut self.inner, &item)
                .map_err(|e| CliError::Data(e.to_string()))?;
            self.inner.write_all(b"\n").map_err(write_error)?;
        }
        self.inner.flush().map_err(write_error)
    }

    /// Header row from the field names, then one row per item.
    pub fn csv<T: Serialize>(
        &mut self,
        items: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(&mut self.inner);
        for item in items {
            w.serialize(item)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(write_error)?;
        drop(w);
        self.inner.flush().map_err(write_error)
    }

    /// Raw CSV records; the first is the header.
    pub fn csv_records(&mut self, records: Vec<Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(&mut self.inner);
        for r in records {
            w.write_record(&r)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(write_error)?;
        drop(w);
        self.inner.flush().map_err(write_error)
    }

    pub fn rows<T: Serialize>(
        &mut self,
        format: Format,
        items: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        match format {
            Format::Json => self.json_lines(items),
            Format::Csv => self.csv(items),
        }
    }
}

/// Path of `name` inside the output directory, if there is one.
pub fn in_dir(dir: Option<&Path>, name: &str) -> Option<PathBuf> {
    dir.map(|d| d.join(name))
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_error(e: io::Error) -> CliError {
    CliError::Data(format!("write failed: {e}"))
}
