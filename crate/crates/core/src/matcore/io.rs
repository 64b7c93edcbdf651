//! Plain-text matrix files: one row per line, entries separated by
//! whitespace and/or commas, `#` starts a comment line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::DenseMatrix;

pub fn read_matrix<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                let value: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("not a number: {tok:?}"),
                })?;
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::Parse {
                        line: idx + 1,
                        message: format!("non-finite value {tok:?}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no matrix rows found".into(),
        });
    }
    DenseMatrix::from_rows(&rows)
}

/// Writes `a` with 17 significant digits so that reading it back is bit-exact.
pub fn write_matrix<W: Write>(mut writer: W, a: &DenseMatrix) -> Result<()> {
    for i in 0..a.rows() {
        let line = a
            .row(i)
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_matrix(File::open(path)?)
}

pub fn write_matrix_file(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), a)
}
