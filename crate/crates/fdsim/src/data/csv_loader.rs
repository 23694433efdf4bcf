use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Result, SimError};
use crate::Mat;

/// Loads a headered CSV with one `label` column; every other column is a
/// numeric feature. Features are min-max scaled to [0,1] per column.
pub fn load_csv(path: &Path, split: Split) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| SimError::parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| SimError::parse(format!("{}: {e}", path.display())))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| SimError::parse(format!("{}: missing `label` column", path.display())))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| SimError::parse(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(SimError::parse(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(record.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_col {
                let label: i64 = field.trim().parse().map_err(|_| {
                    SimError::parse(format!("line {line}: label `{field}` is not an integer"))
                })?;
                if label < 0 {
                    return Err(SimError::parse(format!(
                        "line {line}: label {label} out of range"
                    )));
                }
                labels.push(label as usize);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    SimError::parse(format!(
                        "line {line}: column `{}` value `{field}` is not numeric",
                        &headers[col]
                    ))
                })?;
                features.push(v);
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(SimError::parse(format!("{}: no data rows", path.display())));
    }

    // per-column min-max scale to [0,1]
    let dim = rows[0].len();
    for c in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &rows {
            lo = lo.min(r[c]);
            hi = hi.max(r[c]);
        }
        let span = hi - lo;
        for r in &mut rows {
            r[c] = if span > 0.0 { (r[c] - lo) / span } else { 0.0 };
        }
    }

    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(Mat::from_rows(&rows)?, labels, n_classes, split)
}
