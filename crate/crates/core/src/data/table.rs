use std::collections::HashMap;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

/// Reads a headed numeric table. Every column other than `label_column`
/// is a feature; label values are mapped to classes in order of first
/// appearance.
pub fn read_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers()?.clone();
    let label_at = header
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Format(format!("no column named `{label_column}`")))?;
    let width = header.len();
    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Format(format!(
                "row at line {line} has {} fields, expected {width}",
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_at {
                let next = classes.len();
                labels.push(*classes.entry(cell.trim().to_string()).or_insert(next));
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Format(format!("line {line}, column `{}`: `{cell}` is not a number", &header[col]))
                })?;
                features.push(v);
            }
        }
    }
    if width < 2 {
        return Err(Error::Format("table has no feature columns".into()));
    }
    let n = classes.len().max(1);
    Dataset::new(features, labels, vec![width - 1], n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("t.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn shapes_and_first_appearance_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "f1,y,f2\n1.0,a,2\n3,b,4.5\n-1,a,0\n");
        let ds = read_csv(&p, "y").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_len(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.features(), &[1.0, 2.0, 3.0, 4.5, -1.0, 0.0]);
    }

    #[test]
    fn malformed_tables() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b,y\n1,2,x\n3,4\n");
        let msg = read_csv(&p, "y").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let p = write(&dir, "a,y\n1,x\nq,z\n");
        assert!(read_csv(&p, "y").unwrap_err().to_string().contains("not a number"));
        assert!(read_csv(&p, "label").unwrap_err().to_string().contains("label"));
    }
}
