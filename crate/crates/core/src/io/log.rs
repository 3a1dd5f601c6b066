use std::fs::File;
use std::path::{Path, PathBuf};

use super::IoError;
use crate::solver::StepRecord;

pub const LOG_HEADER: [&str; 5] = ["step", "loss", "lr", "samples", "wall_ms"];

/// CSV training log. Floats use Rust's shortest round-trip formatting, so
/// identical values produce identical text.
pub struct LogWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl LogWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref().to_path_buf();
        let mut writer = csv::Writer::from_path(&path).map_err(|e| IoError::parse(&path, e.to_string()))?;
        writer.write_record(LOG_HEADER).map_err(|e| IoError::parse(&path, e.to_string()))?;
        Ok(LogWriter { path, writer })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<(), IoError> {
        let fields = [r.step.to_string(), r.loss.to_string(), r.lr.to_string(), r.samples.to_string(), r.wall_ms.to_string()];
        self.writer.write_record(&fields).map_err(|e| IoError::parse(&self.path, e.to_string()))
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.writer.flush().map_err(|e| IoError::io(&self.path, e))
    }
}

/// Reads a log written by [`LogWriter`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<StepRecord>, IoError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| IoError::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| IoError::parse(path, e.to_string()))?.clone();
    if headers.iter().ne(LOG_HEADER) {
        return Err(IoError::parse(path, format!("unexpected header {:?}", headers)));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IoError::parse(path, e.to_string()))?;
        let bad = |f: &str| IoError::parse(path, format!("row {}: bad {f}", i + 1));
        out.push(StepRecord {
            step: rec[0].parse().map_err(|_| bad("step"))?,
            loss: rec[1].parse().map_err(|_| bad("loss"))?,
            lr: rec[2].parse().map_err(|_| bad("lr"))?,
            samples: rec[3].parse().map_err(|_| bad("samples"))?,
            wall_ms: rec[4].parse().map_err(|_| bad("wall_ms"))?,
        });
    }
    Ok(out)
}
