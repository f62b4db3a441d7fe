//! Reading samples from CSV files or the embedded datasets.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use robest::data::{embedded, Dataset};

use crate::CliError;

/// `embedded:NAME` or a path to a CSV file.
pub fn ingest(source: &str) -> Result<Dataset, CliError> {
    if let Some(name) = source.strip_prefix("embedded:") {
        return Ok(embedded(name)?);
    }
    let path = Path::new(source);
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.to_string());
    parse_csv(&text, &label)
}

/// One column of reals, or `value,count` rows; an optional header line is
/// recognised by a non-numeric first field. Lines starting with `#` are skipped.
pub fn parse_csv(text: &str, label: &str) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut table: Vec<(f64, u64)> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("malformed CSV: {e}")))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if width.is_none() && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            // header
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w || !(1..=2).contains(&w) {
            return Err(CliError::Data(format!(
                "line {line}: expected {} field(s), found {}",
                w.min(2),
                record.len()
            )));
        }
        let value: f64 = record[0]
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}: '{}' is not a number", &record[0])))?;
        if !value.is_finite() {
            return Err(CliError::Data(format!("line {line}: non-finite value {value}")));
        }
        if w == 1 {
            values.push(value);
        } else {
            let count: i64 = record[1]
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}: count '{}' is not an integer", &record[1])))?;
            if count < 0 {
                return Err(CliError::Data(format!("line {line}: negative count {count}")));
            }
            table.push((value, count as u64));
        }
    }
    match width {
        Some(2) => {
            table.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(Dataset::from_frequency_table(table, label)?)
        }
        _ if values.is_empty() => Err(CliError::Data("no observations in input".into())),
        _ => Ok(Dataset::from_observations(values, label)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_with_header() {
        let d = parse_csv("x\n1.5\n2.5\n\n3\n", "t").unwrap();
        assert_eq!(d.n(), 3);
        assert!(!d.is_table());
    }

    #[test]
    fn frequency_table_is_sorted() {
        let d = parse_csv("value,count\n2,5\n0,1\n1,0\n", "t").unwrap();
        assert!(d.is_table());
        assert_eq!(d.sorted_counts(), vec![(0.0, 1), (2.0, 5)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_csv("1.0\n2.0\nabc\n", "t").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_csv("1,2\n3,-1\n", "t").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("negative"), "{e}");
        let e = parse_csv("1,2\n3\n", "t").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn empty_input_is_invalid() {
        assert!(matches!(parse_csv("", "t"), Err(CliError::Data(_))));
        assert!(matches!(parse_csv("value\n", "t"), Err(CliError::Data(_))));
    }

    #[test]
    fn embedded_sources() {
        assert_eq!(ingest("embedded:copper").unwrap().max(), 28.95);
        assert_eq!(ingest("embedded:polonium").unwrap().n(), 2608);
        assert!(ingest("embedded:lausanne").is_err());
    }
}
