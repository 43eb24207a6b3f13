//! Calendar stamps for monthly, quarterly and annual series.

use std::cmp::Ordering;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frequency {
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    /// Months between consecutive stamps.
    pub fn step_months(self) -> i64 {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
            Frequency::Annual => 12,
        }
    }

    fn from_step(months: i64) -> Option<Self> {
        match months {
            1 => Some(Frequency::Monthly),
            3 => Some(Frequency::Quarterly),
            12 => Some(Frequency::Annual),
            _ => None,
        }
    }
}

/// A period stamp. Quarters are stored by their first month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub year: i32,
    pub month: u32,
    pub freq: Frequency,
}

impl Stamp {
    pub fn monthly(year: i32, month: u32) -> Self {
        Stamp { year, month, freq: Frequency::Monthly }
    }

    pub fn quarterly(year: i32, quarter: u32) -> Self {
        Stamp { year, month: 3 * quarter - 2, freq: Frequency::Quarterly }
    }

    pub fn annual(year: i32) -> Self {
        Stamp { year, month: 1, freq: Frequency::Annual }
    }

    /// Months since year 0, used for ordering and spacing checks.
    pub fn month_index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn quarter(&self) -> u32 {
        (self.month - 1) / 3 + 1
    }

    /// The stamp `n` periods later.
    pub fn advance(&self, n: i64) -> Stamp {
        let idx = self.month_index() + n * self.freq.step_months();
        Stamp {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u32,
            freq: self.freq,
        }
    }

    fn with_freq(self, freq: Frequency) -> Stamp {
        Stamp { freq, ..self }
    }
}

impl PartialOrd for Stamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Stamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.month_index().cmp(&other.month_index())
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.freq {
            Frequency::Monthly => write!(f, "{:04}-{:02}", self.year, self.month),
            Frequency::Quarterly => write!(f, "{:04}Q{}", self.year, self.quarter()),
            Frequency::Annual => write!(f, "{:04}", self.year),
        }
    }
}

/// What a raw date cell said about its own frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hint {
    Quarter,
    Year,
    Calendar,
}

/// Parses one cell: `YYYY-MM-DD`, `YYYY-MM`, `YYYYMmm`, `YYYYQq`, `YYYY-Qq` or `YYYY`.
fn parse_cell(raw: &str) -> Option<(Stamp, Hint)> {
    let s = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some((Stamp::monthly(d.year(), d.month()), Hint::Calendar));
    }
    let upper = s.to_ascii_uppercase();
    if let Some(pos) = upper.find('Q') {
        let year: i32 = upper[..pos].trim_end_matches('-').parse().ok()?;
        let q: u32 = upper[pos + 1..].parse().ok()?;
        if (1..=4).contains(&q) && pos >= 4 {
            return Some((Stamp::quarterly(year, q), Hint::Quarter));
        }
        return None;
    }
    if let Some(pos) = upper.find('M') {
        let year: i32 = upper[..pos].parse().ok()?;
        let m: u32 = upper[pos + 1..].parse().ok()?;
        if (1..=12).contains(&m) && pos == 4 {
            return Some((Stamp::monthly(year, m), Hint::Calendar));
        }
        return None;
    }
    if let Some((y, m)) = s.split_once('-') {
        if y.len() == 4 {
            let year: i32 = y.parse().ok()?;
            let m: u32 = m.parse().ok()?;
            if (1..=12).contains(&m) {
                return Some((Stamp::monthly(year, m), Hint::Calendar));
            }
        }
        return None;
    }
    if s.len() == 4 {
        let year: i32 = s.parse().ok()?;
        return Some((Stamp::annual(year), Hint::Year));
    }
    None
}

/// Parses a date column and assigns one frequency to all of it.
///
/// Calendar dates take their frequency from the spacing of the sorted stamps;
/// the caller performs the uniform-spacing check afterwards.
pub(crate) fn parse_column(cells: &[(usize, String)]) -> crate::Result<Vec<Stamp>> {
    let mut parsed = Vec::with_capacity(cells.len());
    let mut hint = None;
    for (line, raw) in cells {
        let (stamp, h) = parse_cell(raw).ok_or_else(|| crate::LpError::InvalidDate {
            line: *line,
            value: raw.clone(),
        })?;
        match hint {
            None => hint = Some(h),
            Some(prev) if prev != h => {
                return Err(crate::LpError::InvalidDate { line: *line, value: raw.clone() })
            }
            _ => {}
        }
        parsed.push(stamp);
    }
    let freq = match hint {
        Some(Hint::Quarter) => Frequency::Quarterly,
        Some(Hint::Year) => Frequency::Annual,
        _ => {
            let mut idx: Vec<i64> = parsed.iter().map(Stamp::month_index).collect();
            idx.sort_unstable();
            idx.dedup();
            let step = idx.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1);
            Frequency::from_step(step).unwrap_or(Frequency::Monthly)
        }
    };
    Ok(parsed.into_iter().map(|s| s.with_freq(freq)).collect())
}

/// Parses a subsample bound such as `1960`, `1960-01` or `1960Q1`.
///
/// A bare year resolves to its first period when `start` is true and to its
/// last period otherwise.
pub fn parse_bound(raw: &str, start: bool) -> Option<i64> {
    let s = raw.trim();
    if s.len() == 4 && s.chars().all(|c| c.is_ascii_digit()) {
        let year: i64 = s.parse().ok()?;
        return Some(if start { year * 12 } else { year * 12 + 11 });
    }
    let (stamp, hint) = parse_cell(s)?;
    let idx = stamp.month_index();
    Some(match (hint, start) {
        (Hint::Quarter, false) => idx + 2,
        _ => idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(v: &[&str]) -> Vec<(usize, String)> {
        v.iter().enumerate().map(|(i, s)| (i + 2, s.to_string())).collect()
    }

    #[test]
    fn parses_quarters_and_months() {
        let q = parse_column(&cells(&["1947Q1", "1947Q2", "1947-Q3"])).unwrap();
        assert_eq!(q[2].to_string(), "1947Q3");
        let m = parse_column(&cells(&["1960-01-01", "1960-02-01"])).unwrap();
        assert_eq!(m[1].to_string(), "1960-02");
        let fred = parse_column(&cells(&["1960M11", "1960M12"])).unwrap();
        assert_eq!(fred[1].freq, Frequency::Monthly);
    }

    #[test]
    fn calendar_dates_three_months_apart_are_quarterly() {
        let q = parse_column(&cells(&["2000-01-01", "2000-04-01", "2000-07-01"])).unwrap();
        assert_eq!(q[1].freq, Frequency::Quarterly);
        assert_eq!(q[1].to_string(), "2000Q2");
    }

    #[test]
    fn advance_wraps_years() {
        assert_eq!(Stamp::monthly(1999, 11).advance(3).to_string(), "2000-02");
        assert_eq!(Stamp::quarterly(1999, 4).advance(1).to_string(), "2000Q1");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_column(&cells(&["yesterday"])).is_err());
        assert!(parse_column(&cells(&["1960-01", "1960Q2"])).is_err());
    }

    #[test]
    fn bounds() {
        assert_eq!(parse_bound("1960", true), Some(1960 * 12));
        assert_eq!(parse_bound("1960", false), Some(1960 * 12 + 11));
        assert_eq!(parse_bound("1960Q2", false), Some(1960 * 12 + 5));
    }
}
