use std::io::{Read, Write};

use super::FormatError;

/// A numeric CSV table with a header row. Every field must parse as a finite `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Fails unless the header begins with `expected` exactly.
    pub fn expect_prefix(&self, expected: &[&str]) -> Result<(), FormatError> {
        let ok = self.header.len() >= expected.len()
            && self.header.iter().zip(expected).all(|(a, b)| a == b);
        if ok {
            Ok(())
        } else {
            Err(FormatError::Header {
                expected: expected.join(","),
                found: self.header.join(","),
            })
        }
    }

    pub fn expect_exact(&self, expected: &[&str]) -> Result<(), FormatError> {
        self.expect_prefix(expected)?;
        if self.header.len() != expected.len() {
            return Err(FormatError::Header {
                expected: expected.join(","),
                found: self.header.join(","),
            });
        }
        Ok(())
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<Table, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(FormatError::Invalid("empty header field".into()));
    }
    let mut rows = Vec::new();
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(FormatError::RaggedRow {
                row: row_idx + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(header.len());
        for (field, name) in rec.iter().zip(&header) {
            let value: f64 = field.parse().map_err(|_| FormatError::BadField {
                row: row_idx + 1,
                column: name.clone(),
                reason: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(FormatError::BadField {
                    row: row_idx + 1,
                    column: name.clone(),
                    reason: "non-finite value".into(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes `t` with six decimals and every other column in shortest round-trip form.
pub fn write_table<W: Write>(mut writer: W, table: &Table) -> Result<(), FormatError> {
    writeln!(writer, "{}", table.header.join(","))?;
    let time_col = table.column_index("t");
    let mut line = String::new();
    for row in &table.rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            if Some(i) == time_col {
                line.push_str(&format!("{v:.6}"));
            } else {
                line.push_str(&format!("{v}"));
            }
        }
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}
