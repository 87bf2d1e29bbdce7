//! The spatial time series container.
//!
//! An [`StsMatrix`] is an n×p matrix of observations (rows = time, columns =
//! locations) with an explicit missingness mask, a strictly increasing time
//! index at daily/monthly/yearly granularity, and per-column [`GridMeta`].
//! Masked slots always hold 0.0 so serialized artifacts are byte-stable.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMeta;

/// One entry of the time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeStamp {
    Day(NaiveDate),
    Month { year: i32, month: u32 },
    Year(i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    Daily,
    Monthly,
    Yearly,
}

impl TimeStamp {
    pub fn granularity(&self) -> Granularity {
        match self {
            TimeStamp::Day(_) => Granularity::Daily,
            TimeStamp::Month { .. } => Granularity::Monthly,
            TimeStamp::Year(_) => Granularity::Yearly,
        }
    }

    pub fn year(&self) -> i32 {
        match self {
            TimeStamp::Day(d) => d.year(),
            TimeStamp::Month { year, .. } => *year,
            TimeStamp::Year(y) => *y,
        }
    }

    /// Calendar month in 1..=12; yearly stamps report 1.
    pub fn month(&self) -> u32 {
        match self {
            TimeStamp::Day(d) => d.month(),
            TimeStamp::Month { month, .. } => *month,
            TimeStamp::Year(_) => 1,
        }
    }

    /// Parses `YYYY-MM-DD`, `YYYY-MM`, or `YYYY`.
    pub fn parse(s: &str) -> Option<TimeStamp> {
        match s.len() {
            10 => NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(TimeStamp::Day),
            7 => {
                let (y, m) = s.split_once('-')?;
                let year: i32 = y.parse().ok()?;
                let month: u32 = m.parse().ok()?;
                (1..=12).contains(&month).then_some(TimeStamp::Month { year, month })
            }
            4 => s.parse().ok().map(TimeStamp::Year),
            _ => None,
        }
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeStamp::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            TimeStamp::Month { year, month } => write!(f, "{year:04}-{month:02}"),
            TimeStamp::Year(y) => write!(f, "{y:04}"),
        }
    }
}

/// Which stage of the pipeline a matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    /// Raw ingested data (X).
    Raw,
    /// Spatially reordered data (D).
    Reordered,
    /// Classically detrended data (T).
    Detrended,
    /// SVD-trimmed data (S).
    Trimmed,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Raw => "X",
            Label::Reordered => "D",
            Label::Detrended => "T",
            Label::Trimmed => "S",
        };
        f.write_str(s)
    }
}

/// Time-by-location data matrix with missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StsMatrix {
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
    time: Vec<TimeStamp>,
    columns: Vec<GridMeta>,
    pub label: Label,
}

impl StsMatrix {
    /// Builds a validated matrix.
    ///
    /// Checks dimension agreement, a strictly increasing single-granularity
    /// time index, unique grid ids, and finiteness of observed entries.
    /// Masked slots are normalized to 0.0 and per-column completeness flags
    /// are refreshed.
    pub fn new(
        values: DMatrix<f64>,
        missing: DMatrix<bool>,
        time: Vec<TimeStamp>,
        columns: Vec<GridMeta>,
        label: Label,
    ) -> Result<StsMatrix> {
        let (n, p) = values.shape();
        if missing.shape() != (n, p) {
            return Err(Error::ShapeMismatch {
                context: "sts mask",
                left: format!("{n}x{p}"),
                right: format!("{}x{}", missing.nrows(), missing.ncols()),
            });
        }
        if time.len() != n {
            return Err(Error::ShapeMismatch {
                context: "sts time index",
                left: format!("{n} rows"),
                right: format!("{} stamps", time.len()),
            });
        }
        if columns.len() != p {
            return Err(Error::ShapeMismatch {
                context: "sts columns",
                left: format!("{p} columns"),
                right: format!("{} metas", columns.len()),
            });
        }
        for w in time.windows(2) {
            if w[0].granularity() != w[1].granularity() || w[0] >= w[1] {
                return Err(Error::IndexMismatch {
                    what: "time_index (must be strictly increasing, one granularity)",
                    position: 0,
                    left: w[0].to_string(),
                    right: w[1].to_string(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.grid_id.as_str()) {
                return Err(Error::DuplicateGridId(c.grid_id.clone()));
            }
        }
        let mut values = values;
        for j in 0..p {
            for i in 0..n {
                if missing[(i, j)] {
                    values[(i, j)] = 0.0;
                } else if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        let mut columns = columns;
        for (j, meta) in columns.iter_mut().enumerate() {
            meta.complete = (0..n).all(|i| !missing[(i, j)]);
        }
        Ok(StsMatrix {
            values,
            missing,
            time,
            columns,
            label,
        })
    }

    /// Builds a complete (mask-free) matrix.
    pub fn complete(
        values: DMatrix<f64>,
        time: Vec<TimeStamp>,
        columns: Vec<GridMeta>,
        label: Label,
    ) -> Result<StsMatrix> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        StsMatrix::new(values, mask, time, columns, label)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn time(&self) -> &[TimeStamp] {
        &self.time
    }

    pub fn columns(&self) -> &[GridMeta] {
        &self.columns
    }

    pub fn granularity(&self) -> Granularity {
        self.time.first().map(|t| t.granularity()).unwrap_or(Granularity::Daily)
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        !self.missing[(i, j)]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Observed (row, value) pairs of column `j`.
    pub fn observed_column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter_map(move |i| (!self.missing[(i, j)]).then(|| (i, self.values[(i, j)])))
    }

    /// Count of observed entries that are strictly negative.
    pub fn count_negative_observed(&self) -> usize {
        let mut count = 0;
        for j in 0..self.p() {
            for i in 0..self.n() {
                if !self.missing[(i, j)] && self.values[(i, j)] < 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Errors unless the matrix has no masked entries; returns the dense values.
    pub fn require_complete(&self, context: &'static str) -> Result<&DMatrix<f64>> {
        let missing = self.missing_count();
        if missing > 0 {
            return Err(Error::IncompleteData { context, missing });
        }
        Ok(&self.values)
    }

    /// Same matrix under a different stage label.
    pub fn with_label(mut self, label: Label) -> StsMatrix {
        self.label = label;
        self
    }

    /// Replaces the dense values, keeping mask/index/columns (shapes must match).
    pub fn with_values(&self, values: DMatrix<f64>, label: Label) -> Result<StsMatrix> {
        StsMatrix::new(
            values,
            self.missing.clone(),
            self.time.clone(),
            self.columns.clone(),
            label,
        )
    }

    /// Grid ids in column order.
    pub fn grid_ids(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.grid_id.as_str()).collect()
    }

    /// Distinct zones present, ascending.
    pub fn zones(&self) -> Vec<u8> {
        let mut z: Vec<u8> = self.columns.iter().map(|c| c.zone).collect();
        z.sort_unstable();
        z.dedup();
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str) -> GridMeta {
        GridMeta::new(id, 10.0, 70.0, 1)
    }

    fn day(y: i32, m: u32, d: u32) -> TimeStamp {
        TimeStamp::Day(NaiveDate::from_ymd_opt(y, m, d).unwrap())
    }

    #[test]
    fn masked_slots_are_zeroed_and_completeness_refreshed() {
        let values = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 3.0, 4.0]);
        let missing = DMatrix::from_row_slice(2, 2, &[false, true, false, false]);
        let sts = StsMatrix::new(
            values,
            missing,
            vec![day(2000, 1, 1), day(2000, 1, 2)],
            vec![meta("a"), meta("b")],
            Label::Raw,
        )
        .unwrap();
        assert_eq!(sts.values()[(0, 1)], 0.0);
        assert!(sts.columns()[0].complete);
        assert!(!sts.columns()[1].complete);
    }

    #[test]
    fn non_finite_observed_entry_is_rejected() {
        let values = DMatrix::from_row_slice(1, 1, &[f64::INFINITY]);
        let missing = DMatrix::from_element(1, 1, false);
        let err =
            StsMatrix::new(values, missing, vec![day(2000, 1, 1)], vec![meta("a")], Label::Raw)
                .unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 0 }));
    }

    #[test]
    fn time_index_must_increase() {
        let values = DMatrix::from_element(2, 1, 0.0);
        let missing = DMatrix::from_element(2, 1, false);
        let err = StsMatrix::new(
            values,
            missing,
            vec![day(2000, 1, 2), day(2000, 1, 2)],
            vec![meta("a")],
            Label::Raw,
        )
        .unwrap_err();
        assert!(matches!(err, Error::IndexMismatch { .. }));
    }

    #[test]
    fn timestamp_round_trips_through_display() {
        for s in ["1968-05-03", "1968-05", "1968"] {
            let t = TimeStamp::parse(s).unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!(TimeStamp::parse("1968-13").is_none());
        assert!(TimeStamp::parse("x").is_none());
    }
}
