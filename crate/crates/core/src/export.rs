//! Shared CSV conventions: `#`-prefixed comment header, then a header row,
//! then one record per line with numbers in 17 significant digits.

use std::io::{self, Write};

/// Formats a number with 17 significant digits, enough to round-trip any f64.
pub fn full(x: f64) -> String {
    if x == 0.0 {
        // Keep the sign of −0 out of the files.
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Column names `{prefix}_{i}_{j}` for an r×c matrix in row-major order,
/// 1-based like the usual `X₁₁ … X_nk` labels.
pub fn matrix_columns(prefix: &str, r: usize, c: usize) -> Vec<String> {
    (1..=r)
        .flat_map(|i| (1..=c).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

pub fn write_comments<W: Write>(w: &mut W, lines: &[String]) -> io::Result<()> {
    for line in lines {
        for part in line.lines() {
            writeln!(w, "# {part}")?;
        }
    }
    Ok(())
}

pub fn write_record<W: Write, S: AsRef<str>>(w: &mut W, fields: &[S]) -> io::Result<()> {
    let mut first = true;
    for f in fields {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        w.write_all(f.as_ref().as_bytes())?;
    }
    w.write_all(b"\n")
}
