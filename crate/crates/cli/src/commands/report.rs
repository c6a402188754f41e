use std::fmt::Write as _;
use std::path::Path;

use tod_core::evaluation::MetricsReport;

use crate::error::{CliError, CliResult};

/// Renders a saved `metrics.json` as a table, or pretty-prints any other
/// JSON artifact such as a distribution report.
pub fn cmd_report(paths: &[impl AsRef<Path>]) -> CliResult<String> {
    if paths.is_empty() {
        return Err(CliError::Usage("report needs at least one file".into()));
    }
    let mut s = String::new();
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let _ = writeln!(s, "== {}", p.display());
        match serde_json::from_value::<MetricsReport>(value.clone()) {
            Ok(m) => s.push_str(&m.table()),
            Err(_) => {
                s.push_str(&serde_json::to_string_pretty(&value).expect("value serializes"));
                s.push('\n');
            }
        }
    }
    Ok(s)
}
