//! Series and coefficient files: one floating-point value per line, with
//! an optional `value` header. Output uses 17 significant digits so every
//! f64 round-trips exactly.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::glrr::GlrrVector;
use crate::signal::Signal;

fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.eq_ignore_ascii_case("value") {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::InvalidInput(format!(
                "{}:{}: cannot parse '{line}' as a number",
                path.display(),
                lineno + 1
            ))
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no values found",
            path.display()
        )));
    }
    Ok(values)
}

fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "value")?;
    for v in values {
        // 17 significant digits: exact decimal round trip for f64.
        writeln!(out, "{v:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    Signal::new(read_values(path)?)
}

pub fn write_signal_csv(path: &Path, signal: &Signal) -> Result<()> {
    write_values(path, signal.values())
}

pub fn read_glrr_csv(path: &Path) -> Result<GlrrVector> {
    GlrrVector::new(read_values(path)?)
}

pub fn write_glrr_csv(path: &Path, a: &GlrrVector) -> Result<()> {
    write_values(path, a.coeffs())
}
