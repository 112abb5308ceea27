//! CSV dataset ingestion.
//!
//! Required columns are `x`, `s2` and `n`; mean covariates are `z1..zp`
//! and variance covariates `w1..wq`, both numbered from 1 without gaps.
//! Other columns are ignored. Rows are numbered from 1, not counting the
//! header.

use std::io::Read;
use std::path::Path;

use fhshrink::{AreaObservation, Dataset};

use crate::CliError;

struct Layout {
    x: usize,
    s2: usize,
    n: usize,
    z: Vec<usize>,
    w: Vec<usize>,
}

fn numbered(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>, CliError> {
    let mut cols = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if let Some(k) = h.strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok()) {
            cols.push((k, j));
        }
    }
    cols.sort_unstable();
    for (expect, &(k, _)) in (1..).zip(&cols) {
        if k != expect {
            return Err(CliError::Input(format!(
                "covariate columns must be {prefix}1..{prefix}k without gaps; missing column {prefix}{expect}"
            )));
        }
    }
    Ok(cols.into_iter().map(|(_, j)| j).collect())
}

fn layout(headers: &csv::StringRecord) -> Result<Layout, CliError> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("missing column {name}")))
    };
    let layout = Layout {
        x: find("x")?,
        s2: find("s2")?,
        n: find("n")?,
        z: numbered(headers, "z")?,
        w: numbered(headers, "w")?,
    };
    if layout.z.is_empty() {
        return Err(CliError::Input(
            "missing column z1 (supply an explicit all-ones column for an intercept)".into(),
        ));
    }
    Ok(layout)
}

fn cell<'r>(record: &'r csv::StringRecord, col: usize, name: &str, row: usize) -> Result<&'r str, CliError> {
    record
        .get(col)
        .map(str::trim)
        .ok_or_else(|| CliError::Input(format!("missing value for {name} (row {row}, column {name})")))
}

fn number(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<f64, CliError> {
    let raw = cell(record, col, name, row)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Input(format!(
            "non-numeric value {raw:?} (row {row}, column {name})"
        ))),
    }
}

/// Parses a dataset from CSV text.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read CSV header: {e}")))?
        .clone();
    let layout = layout(&headers)?;
    let mut areas = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| CliError::Input(format!("malformed CSV (row {row}): {e}")))?;
        let x = number(&record, layout.x, "x", row)?;
        let s2 = number(&record, layout.s2, "s2", row)?;
        if s2 <= 0.0 {
            return Err(CliError::Input(format!("s2 must be positive (row {row})")));
        }
        let n_raw = cell(&record, layout.n, "n", row)?;
        let n = match n_raw.parse::<usize>() {
            Ok(n) if n >= 2 => n,
            Ok(_) => return Err(CliError::Input(format!("n must be at least 2 (row {row})"))),
            Err(_) => {
                return Err(CliError::Input(format!(
                    "n must be an integer, got {n_raw:?} (row {row}, column n)"
                )))
            }
        };
        let covariates = |cols: &[usize], prefix: &str| {
            cols.iter()
                .enumerate()
                .map(|(k, &c)| number(&record, c, &format!("{prefix}{}", k + 1), row))
                .collect::<Result<Vec<_>, _>>()
        };
        let z = covariates(&layout.z, "z")?;
        let w = covariates(&layout.w, "w")?;
        let area = AreaObservation::new(x, s2, n, z, w)
            .map_err(|e| CliError::Input(format!("{e} (row {row})")))?;
        areas.push(area);
    }
    if areas.is_empty() {
        return Err(CliError::Input("dataset has no rows".into()));
    }
    Ok(Dataset::new(areas)?)
}

pub fn ingest_csv(path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, CliError> {
        parse_dataset(text.as_bytes())
    }

    #[test]
    fn shape_and_order() {
        let mut text = String::from("x,s2,n,z1,z2\n");
        for i in 0..30 {
            text.push_str(&format!("{},{},7,1,{}\n", i as f64 * 0.1, 1.0 + i as f64, 2 + i % 6));
        }
        let d = parse(&text).unwrap();
        assert_eq!((d.m(), d.p(), d.q()), (30, 2, 0));
        assert_eq!(d.areas()[3].x, 0.30000000000000004);
        assert_eq!(d.areas()[29].s2, 30.0);
    }

    #[test]
    fn zero_s2_names_row() {
        let err = parse("x,s2,n,z1\n1,1,5,1\n2,0,5,1\n").unwrap_err();
        assert_eq!(err.to_string(), "s2 must be positive (row 2)");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn errors_name_row_and_column() {
        let e = parse("x,s2,n,z1\n1,1,5,abc\n").unwrap_err().to_string();
        assert!(e.contains("row 1") && e.contains("column z1"), "{e}");
        let e = parse("x,s2,n,z1\n1,1,1,1\n").unwrap_err().to_string();
        assert!(e.contains("n must be at least 2 (row 1)"), "{e}");
        let e = parse("x,n,z1\n1,5,1\n").unwrap_err().to_string();
        assert_eq!(e, "missing column s2");
        let e = parse("x,s2,n,z1,z3\n1,1,5,1,2\n").unwrap_err().to_string();
        assert!(e.contains("missing column z2"), "{e}");
        let e = parse("x,s2,n\n1,1,5\n").unwrap_err().to_string();
        assert!(e.contains("missing column z1"), "{e}");
    }

    #[test]
    fn mixed_sign_w_parses() {
        let d = parse("x,s2,n,z1,w1\n1,1,5,1,-1\n2,1,5,1,2\n").unwrap();
        assert_eq!(d.q(), 1);
        assert_eq!(d.areas()[0].w, vec![-1.0]);
    }

    #[test]
    fn extra_columns_ignored() {
        let d = parse("area,x,s2,n,z1\nA,1,1,5,1\n").unwrap();
        assert_eq!(d.m(), 1);
    }
}
