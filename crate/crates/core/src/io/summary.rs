//! Run summaries as pretty-printed JSON.

use std::path::Path;

use crate::error::Result;
use crate::metrics::RunSummary;

pub fn to_json(s: &RunSummary) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("summary serialises");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> std::result::Result<RunSummary, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

pub fn save(path: &Path, s: &RunSummary) -> Result<()> {
    super::write_atomic(path, to_json(s).as_bytes())
}

pub fn load(path: &Path) -> Result<RunSummary> {
    let text = super::read_to_string(path)?;
    from_json(&text).map_err(|e| super::format_err(path, e))
}
