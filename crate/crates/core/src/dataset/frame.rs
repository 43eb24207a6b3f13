use std::path::Path;

use indexmap::IndexMap;

use super::date::{self, Stamp};
use crate::{LpError, Result};

/// Named, date-indexed numeric columns of equal length.
///
/// Dates are strictly increasing with a single uniform frequency and every
/// value is finite; constructors enforce this.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    dates: Vec<Stamp>,
    columns: IndexMap<String, Vec<f64>>,
}

impl TimeSeriesFrame {
    pub fn new(dates: Vec<Stamp>, columns: IndexMap<String, Vec<f64>>) -> Result<Self> {
        for (name, col) in &columns {
            if col.len() != dates.len() {
                return Err(LpError::InvalidArgument(format!(
                    "column `{name}` has {} values for {} dates",
                    col.len(),
                    dates.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(LpError::MissingValue {
                    line: i + 2,
                    column: name.clone(),
                });
            }
        }
        check_dates(&dates)?;
        Ok(TimeSeriesFrame { dates, columns })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[Stamp] {
        &self.dates
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| LpError::UnknownColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn columns(&self) -> &IndexMap<String, Vec<f64>> {
        &self.columns
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeriesFrame {
        TimeSeriesFrame {
            dates: self.dates[start..end].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), v[start..end].to_vec()))
                .collect(),
        }
    }

    /// Restricts the frame to a `start:end` range; either side may be empty.
    ///
    /// ```
    /// # use lpdecomp::dataset::{Stamp, TimeSeriesFrame};
    /// # use indexmap::IndexMap;
    /// let dates: Vec<Stamp> = (0..8).map(|i| Stamp::quarterly(1958, 1).advance(i)).collect();
    /// let mut cols = IndexMap::new();
    /// cols.insert("y".to_string(), (0..8).map(f64::from).collect());
    /// let frame = TimeSeriesFrame::new(dates, cols).unwrap();
    /// assert_eq!(frame.subsample("1959:").unwrap().len(), 4);
    /// ```
    pub fn subsample(&self, range: &str) -> Result<TimeSeriesFrame> {
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| LpError::InvalidArgument(format!("subsample `{range}` lacks ':'")))?;
        let bound = |s: &str, start: bool| -> Result<Option<i64>> {
            if s.trim().is_empty() {
                return Ok(None);
            }
            date::parse_bound(s, start)
                .map(Some)
                .ok_or_else(|| LpError::InvalidArgument(format!("bad subsample bound `{s}`")))
        };
        let lo = bound(lo, true)?;
        let hi = bound(hi, false)?;
        let start = self
            .dates
            .iter()
            .position(|d| lo.is_none_or(|l| d.month_index() >= l))
            .unwrap_or(self.len());
        let end = self
            .dates
            .iter()
            .rposition(|d| hi.is_none_or(|h| d.month_index() <= h))
            .map_or(0, |i| i + 1);
        if start >= end {
            return Err(LpError::TooShort(format!("subsample `{range}` is empty")));
        }
        Ok(self.slice(start, end))
    }

    /// Writes the frame as CSV with a leading `date` column. Values use the
    /// shortest representation that reads back to the same float.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(self.columns.values().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| LpError::Io { path: "<csv writer>".into(), source })?;
        Ok(())
    }

    /// Replaces or adds a column; the length must match.
    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(LpError::InvalidArgument(format!(
                "column `{name}` has {} values for {} dates",
                values.len(),
                self.len()
            )));
        }
        self.columns.insert(name.to_string(), values);
        Ok(self)
    }
}

fn check_dates(dates: &[Stamp]) -> Result<()> {
    for w in dates.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.freq != b.freq {
            return Err(LpError::IrregularDates { prev: a.to_string(), next: b.to_string() });
        }
        let gap = b.month_index() - a.month_index();
        if gap == 0 {
            return Err(LpError::DuplicateDate(a.to_string()));
        }
        if gap != a.freq.step_months() {
            return Err(LpError::IrregularDates { prev: a.to_string(), next: b.to_string() });
        }
    }
    Ok(())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "." | "null")
}

/// Loads an RFC-4180 CSV with a header row and one date column.
///
/// Rows may appear in any order; the frame is sorted ascending. Missing
/// values, non-numeric cells and duplicate dates are hard failures.
pub fn load_csv(path: impl AsRef<Path>, date_column: &str) -> Result<TimeSeriesFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, date_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, date_column: &str) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let date_idx = headers
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| LpError::UnknownColumn(date_column.to_string()))?;

    let mut raw_dates = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        for (j, name) in headers.iter().enumerate() {
            let cell = record.get(j).unwrap_or("").trim();
            if j == date_idx {
                raw_dates.push((line, cell.to_string()));
                continue;
            }
            if is_missing(cell) {
                return Err(LpError::MissingValue { line, column: name.clone() });
            }
            let v: f64 = cell.parse().map_err(|_| LpError::NonNumeric {
                line,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LpError::MissingValue { line, column: name.clone() });
            }
            values[j].push(v);
        }
    }

    let stamps = date::parse_column(&raw_dates)?;
    let mut order: Vec<usize> = (0..stamps.len()).collect();
    order.sort_by_key(|&i| stamps[i]);
    let dates: Vec<Stamp> = order.iter().map(|&i| stamps[i]).collect();
    let mut columns = IndexMap::new();
    for (j, name) in headers.iter().enumerate() {
        if j == date_idx {
            continue;
        }
        columns.insert(name.clone(), order.iter().map(|&i| values[j][i]).collect());
    }
    TimeSeriesFrame::new(dates, columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_two_series() {
        let csv = "date,y,s\n2000-01,1.0,0.5\n2000-02,2.0,-0.5\n2000-03,3.0,0.0\n";
        let f = read_csv(csv.as_bytes(), "date").unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.column_names().count(), 2);
        assert_eq!(f.column("y").unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_cell_names_row_and_column() {
        let csv = "date,y,s\n2000-01,1.0,0.5\n2000-02,2.0,\n";
        match read_csv(csv.as_bytes(), "date") {
            Err(LpError::MissingValue { line, column }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "s");
            }
            other => panic!("expected missing value, got {other:?}"),
        }
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let csv = "date,y\n2000Q3,3\n2000Q1,1\n2000Q2,2\n";
        let f = read_csv(csv.as_bytes(), "date").unwrap();
        assert_eq!(f.column("y").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.dates()[0].to_string(), "2000Q1");
    }

    #[test]
    fn duplicates_and_text_fail() {
        let dup = "date,y\n2000-01,1\n2000-01,2\n";
        assert!(matches!(read_csv(dup.as_bytes(), "date"), Err(LpError::DuplicateDate(_))));
        let txt = "date,y\n2000-01,1\n2000-02,abc\n";
        assert!(matches!(read_csv(txt.as_bytes(), "date"), Err(LpError::NonNumeric { .. })));
        let gap = "date,y\n2000-01,1\n2000-03,2\n2000-04,2\n";
        assert!(matches!(read_csv(gap.as_bytes(), "date"), Err(LpError::IrregularDates { .. })));
    }

    #[test]
    fn subsample_open_ended() {
        let csv = "date,y\n1959Q3,1\n1959Q4,2\n1960Q1,3\n1960Q2,4\n";
        let f = read_csv(csv.as_bytes(), "date").unwrap();
        assert_eq!(f.subsample("1960:").unwrap().column("y").unwrap(), &[3.0, 4.0]);
        assert_eq!(f.subsample(":1959").unwrap().len(), 2);
        assert!(f.subsample("1970:").is_err());
    }
}
