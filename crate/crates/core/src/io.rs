//! CSV reading and writing for series collections.
//!
//! Layout: the header row holds series ids, each following row one time
//! step, one column per series. Empty cells are missing values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::series::{Collection, TimeSeries};

/// Reads a collection from CSV text. Row and column numbers in errors are
/// 1-based and count the header row.
pub fn read_collection_str(text: &str) -> Result<Collection> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::ParseError { row: 1, col: 1, reason: e.to_string() })?
        .clone();
    if headers.is_empty() {
        return Err(Error::ParseError {
            row: 1,
            col: 1,
            reason: "empty header row".into(),
        });
    }
    let ids: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(Error::ParseError {
                row: 1,
                col: i + 1,
                reason: "empty series id".into(),
            });
        }
        if ids[..i].contains(id) {
            return Err(Error::ParseError {
                row: 1,
                col: i + 1,
                reason: format!("duplicate series id `{id}`"),
            });
        }
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| Error::ParseError { row, col: 1, reason: e.to_string() })?;
        if record.len() != ids.len() {
            return Err(Error::ParseError {
                row,
                col: record.len().min(ids.len()) + 1,
                reason: format!("expected {} cells, found {}", ids.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                columns[c].push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                    row,
                    col: c + 1,
                    reason: format!("`{cell}` is not a number"),
                })?;
                columns[c].push(Some(v));
            }
        }
    }

    let series = ids
        .into_iter()
        .zip(columns)
        .map(|(id, values)| TimeSeries::new(id, values))
        .collect();
    Ok(Collection { series, holdout_len: 0 })
}

/// Reads a collection from a CSV file.
pub fn read_collection(path: &Path) -> Result<Collection> {
    let text = std::fs::read_to_string(path)?;
    read_collection_str(&text)
}

/// Writes a collection as CSV text. Missing values become empty cells.
pub fn write_collection_str(collection: &Collection) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let ids: Vec<&str> = collection.series.iter().map(|s| s.id.as_str()).collect();
    writer
        .write_record(&ids)
        .map_err(|e| Error::ParseError { row: 1, col: 1, reason: e.to_string() })?;
    let len = collection.series.iter().map(|s| s.len()).max().unwrap_or(0);
    for t in 0..len {
        let row: Vec<String> = collection
            .series
            .iter()
            .map(|s| match s.values.get(t) {
                Some(Some(v)) => format_value(*v),
                _ => String::new(),
            })
            .collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::ParseError { row: t + 2, col: 1, reason: e.to_string() })?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::ParseError { row: 1, col: 1, reason: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes a collection to a CSV file.
pub fn write_collection(collection: &Collection, path: &Path) -> Result<()> {
    let text = write_collection_str(collection)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Round-trippable decimal rendering of a value.
fn format_value(v: f64) -> String {
    let mut buffer = ryu_format(v);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // `{:?}` on f64 prints the shortest representation that parses back to
    // the same bits, which keeps CSV round trips lossless.
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_missing_cells_and_ids() {
        let text = "a,b\n1,2\n,3\n4,\n";
        let col = read_collection_str(text).unwrap();
        assert_eq!(col.ids(), vec!["a", "b"]);
        assert_eq!(col.series[0].values, vec![Some(1.0), None, Some(4.0)]);
        assert_eq!(col.series[1].values, vec![Some(2.0), Some(3.0), None]);
    }

    #[test]
    fn rejects_ragged_rows_with_location() {
        let text = "a,b\n1,2\n3\n";
        match read_collection_str(text) {
            Err(Error::ParseError { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_cells() {
        let text = "a\n1\nx\n";
        match read_collection_str(text) {
            Err(Error::ParseError { row, col, .. }) => {
                assert_eq!((row, col), (3, 1));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        assert!(read_collection_str("a,a\n1,2\n").is_err());
    }

    #[test]
    fn round_trip_preserves_values_and_gaps() {
        let text = "x,y\n0.5,\n-3,7.25\n,1e-3\n";
        let col = read_collection_str(text).unwrap();
        let out = write_collection_str(&col).unwrap();
        let back = read_collection_str(&out).unwrap();
        for (a, b) in col.series.iter().zip(&back.series) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.values, b.values);
        }
    }
}
