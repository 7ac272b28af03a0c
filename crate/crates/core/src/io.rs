//! Shared text formatting for CSV output.

use std::io::BufRead;

use crate::error::{domain, Error, Result};

/// Scientific notation with 17 significant digits; round-trips every `f64`.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Reads a `# <kind> level=<n>` metadata line.
pub(crate) fn read_level_comment<R: BufRead>(reader: &mut R, kind: &str) -> Result<u32> {
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| Error::InvalidArgument(format!("reading {kind} header: {e}")))?;
    let rest = line
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix(kind))
        .ok_or_else(|| {
            domain(
                "csv",
                format!("expected `# {kind} level=<n>`, got {line:?}"),
            )
        })?;
    rest.split_whitespace()
        .find_map(|tok| tok.strip_prefix("level="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| domain("csv", format!("missing level in {line:?}")))
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}
