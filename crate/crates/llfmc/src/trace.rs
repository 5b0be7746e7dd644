//! Iteration traces as JSON lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use llfmc_core::solver::Monitor;
use llfmc_core::{IterationRecord, SolverState};

use crate::error::{Error, Result};

/// Monitor that timestamps iterations and optionally streams each record
/// as one JSON object per line.
pub struct TraceWriter {
    start: Instant,
    sink: Option<(PathBuf, BufWriter<File>)>,
    error: Option<Error>,
}

impl TraceWriter {
    /// Timing only.
    pub fn timer() -> Self {
        Self {
            start: Instant::now(),
            sink: None,
            error: None,
        }
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            start: Instant::now(),
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
            error: None,
        })
    }

    /// Flushes the file and reports the first write failure, if any.
    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some((path, mut w)) = self.sink.take() {
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

impl Monitor for TraceWriter {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_iteration(&mut self, record: &IterationRecord, _state: &SolverState) {
        if self.error.is_some() {
            return;
        }
        if let Some((path, w)) = self.sink.as_mut() {
            let line = serde_json::to_string(record).expect("record serializes");
            if let Err(e) = writeln!(w, "{line}") {
                self.error = Some(Error::io(path.clone(), e));
            }
        }
    }
}
