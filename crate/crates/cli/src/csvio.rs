//! CSV artifact helpers: comma separator, '.' decimal point, one header
//! row, LF line endings, floats at 17 significant digits so every written
//! f64 round-trips bit-exactly.

use std::fs;
use std::path::Path;

use crate::config::{usage, CliError};

/// Formats a float with 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header plus rows, LF-terminated.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text)
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| usage(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a forward curve from a CSV file with header `s,omega`: returns the
/// node values after checking that the nodes form a uniform grid from `t`
/// to `t_end`.
pub fn read_curve_csv(path: &Path, t: f64, t_end: f64) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read curve file {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "s,omega" => {}
        _ => return Err(usage(format!("{}: curve CSV needs the header `s,omega`", path.display()))),
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (s, omega) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(omega), None) => (s, omega),
            _ => {
                return Err(usage(format!(
                    "{}: line {} needs exactly two fields",
                    path.display(),
                    idx + 2
                )))
            }
        };
        let parse = |field: &str| {
            field.trim().parse::<f64>().map_err(|e| {
                usage(format!("{}: line {}: {e}", path.display(), idx + 2))
            })
        };
        nodes.push(parse(s)?);
        values.push(parse(omega)?);
    }
    if values.is_empty() {
        return Err(usage(format!("{}: curve CSV has no data rows", path.display())));
    }
    let tol = 1e-9 * t_end.abs().max(1.0);
    let n = values.len() - 1;
    for (j, &s) in nodes.iter().enumerate() {
        let expected = if n == 0 {
            t
        } else {
            t + (t_end - t) * j as f64 / n as f64
        };
        if (s - expected).abs() > tol {
            return Err(usage(format!(
                "{}: node {j} at {s} is not on the uniform grid over [{t}, {t_end}]",
                path.display()
            )));
        }
    }
    Ok(values)
}
