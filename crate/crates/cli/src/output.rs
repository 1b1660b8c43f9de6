use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use specequiv::Error;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Tsv,
    Csv,
}

/// A result with a JSON form and a tabular form.
pub struct Report {
    json: serde_json::Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(json: serde_json::Value, header: Vec<&'static str>, rows: Vec<Vec<String>>) -> Self {
        Report { json, header, rows }
    }

    fn write_to<W: Write>(&self, format: Format, mut w: W) -> Result<(), Error> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, &self.json)
                    .map_err(|e| Error::Io(e.to_string()))?;
                writeln!(w)?;
            }
            Format::Tsv | Format::Csv => {
                let delimiter = if format == Format::Tsv { b'\t' } else { b',' };
                let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(&mut w);
                let io = |e: csv::Error| Error::Io(e.to_string());
                out.write_record(&self.header).map_err(io)?;
                for r in &self.rows {
                    out.write_record(r).map_err(io)?;
                }
                out.flush()?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, format: Format, path: Option<&Path>) -> Result<(), Error> {
        match path {
            Some(p) => {
                let f = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                self.write_to(format, BufWriter::new(f))
            }
            None => self.write_to(format, io::stdout().lock()),
        }
    }
}
