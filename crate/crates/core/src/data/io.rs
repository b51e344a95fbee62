use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric CSV file: header names plus an n × columns matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub data: DMatrix<f64>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn csv_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read a header-first numeric CSV. Row numbers in errors are file line
/// numbers, so the header is row 1 and the first data row is row 2.
pub fn read_csv_table(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(1, "", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(csv_error(1, "", "missing header row"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(row, "", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(csv_error(
                row,
                "",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (cell, name) in record.iter().zip(&headers) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| csv_error(row, name, format!("{cell:?} is not a number")))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(CsvTable {
        data: DMatrix::from_row_slice(rows, headers.len(), &values),
        headers,
    })
}

/// Features, optional labels and feature names.
pub type LabeledColumns = (DMatrix<f64>, Option<DVector<f64>>, Vec<String>);

/// Read features and, when `label_column` is given, the label vector.
/// Returns the feature names alongside.
pub fn read_csv_dataset(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
) -> Result<LabeledColumns> {
    let table = read_csv_table(path)?;
    let Some(label) = label_column else {
        return Ok((table.data, None, table.headers));
    };
    let li = table
        .column_index(label)
        .ok_or_else(|| csv_error(1, label, "label column not found"))?;
    let keep: Vec<usize> = (0..table.headers.len()).filter(|&j| j != li).collect();
    let x = table.data.select_columns(&keep);
    let y = table.data.column(li).into_owned();
    let names = keep.iter().map(|&j| table.headers[j].clone()).collect();
    Ok((x, Some(y), names))
}

pub fn write_csv(path: impl AsRef<Path>, headers: &[String], data: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    if headers.len() != data.ncols() {
        return Err(Error::Dimension(format!(
            "{} headers for {} columns",
            headers.len(),
            data.ncols()
        )));
    }
    let mut out = String::with_capacity(data.len() * 24 + 64);
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in data.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn label_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "x0,x1,y\n1,2,3\n4,5,6\n").unwrap();
        let (x, y, n) = read_csv_dataset(&p, Some("y")).unwrap();
        assert_eq!(x.ncols(), 2);
        assert_eq!(y.unwrap().as_slice(), &[3.0, 6.0]);
        assert_eq!(n, names(&["x0", "x1"]));
        assert!(read_csv_dataset(&p, Some("label")).is_err());
    }

    #[test]
    fn text_cell_error_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "x0,x1,y\n1,2,3\n4,abc,6\n").unwrap();
        match read_csv_table(&p) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(read_csv_table(&p), Err(Error::Csv { row: 3, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_csv_table("/nonexistent/x.csv"),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            let m = DMatrix::from_column_slice(vals.len(), 1, &vals);
            write_csv(&p, &names(&["v"]), &m).unwrap();
            let t = read_csv_table(&p).unwrap();
            for (a, b) in t.data.iter().zip(vals.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
