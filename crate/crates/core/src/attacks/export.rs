use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One row of a per-point decision export.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionRow {
    pub point_id: usize,
    pub combined: f64,
    pub threshold: f64,
    pub verdict: &'static str,
    /// Update index for IN decisions of multi-update attacks.
    pub epoch: Option<usize>,
}

pub fn write_decisions_csv(path: impl AsRef<Path>, rows: &[DecisionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
