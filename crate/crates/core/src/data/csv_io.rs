//! CSV datasets: a header row is required, the label column is selected by
//! name and holds integer class indices, every other column is a numeric
//! feature. Written files use `f0..f{d-1},label`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";

pub fn load_csv(path: &Path, label_column: &str, num_classes: usize) -> Result<Dataset> {
    let file = File::open(path)?;
    read_csv(file, &path.display().to_string(), label_column, num_classes)
}

pub fn read_csv<R: Read>(
    reader: R,
    source_name: &str,
    label_column: &str,
    num_classes: usize,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source_name, "line 1", e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| {
            Error::format(source_name, "line 1", format!("no column named {label_column:?}"))
        })?;
    if headers.len() < 2 {
        return Err(Error::format(source_name, "line 1", "need a label and at least one feature"));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(source_name, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let at = format!("line {line}");
        let mut row = Vec::with_capacity(headers.len() - 1);
        let mut label = None;
        for (k, field) in record.iter().enumerate() {
            let field = field.trim();
            if k == label_idx {
                let y: usize = field.parse().map_err(|_| {
                    Error::format(source_name, &at, format!("label {field:?} is not a class index"))
                })?;
                if y >= num_classes {
                    return Err(Error::format(
                        source_name,
                        &at,
                        format!("label {y} out of range for {num_classes} classes"),
                    ));
                }
                label = Some(y);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::format(source_name, &at, format!("column {k}: {field:?} is not a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(source_name, &at, format!("column {k} is not finite")));
                }
                row.push(v);
            }
        }
        features.push(row);
        labels.push(label.expect("label column present in every record"));
    }
    Dataset::new(features, labels, num_classes, format!("csv:{source_name}"))
        .map_err(|e| Error::format(source_name, "body", e.to_string()))
}

pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push(LABEL_COLUMN.to_string());
    w.write_record(&header).map_err(csv_io)?;
    for (row, y) in ds.features().iter().zip(ds.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(y.to_string());
        w.write_record(&fields).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv(ds, File::create(path)?)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_rows() {
        let text = "a,label,b\n1.5,0,-2\n0,2,3.25\n-1e-3,1,0.5\n";
        let ds = read_csv(text.as_bytes(), "mem", "label", 3).unwrap();
        assert_eq!(ds.features(), &[vec![1.5, -2.0], vec![0.0, 3.25], vec![-1e-3, 0.5]]);
        assert_eq!(ds.labels(), &[0, 2, 1]);
    }

    #[test]
    fn reports_line_of_bad_label() {
        let text = "x,label\n1,0\n2,5\n";
        let err = read_csv(text.as_bytes(), "mem", "label", 3).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_bad_numbers_and_missing_column() {
        assert!(read_csv("x,label\nabc,0\n".as_bytes(), "mem", "label", 2).is_err());
        assert!(read_csv("x,y\n1,0\n".as_bytes(), "mem", "label", 2).is_err());
        assert!(read_csv("x,label\n1,0,3\n".as_bytes(), "mem", "label", 2).is_err());
    }

    #[test]
    fn write_then_read() {
        let ds = Dataset::new(vec![vec![0.1, 2.0], vec![-3.5, 1e-17]], vec![1, 0], 2, "t").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "mem", LABEL_COLUMN, 2).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }
}
