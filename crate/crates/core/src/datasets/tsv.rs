use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

/// Tab-separated rows; blank lines and `#` comments are skipped.
pub(crate) fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Row {
            line: i + 1,
            fields: l.split('\t').map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect(),
        })
        .collect())
}
