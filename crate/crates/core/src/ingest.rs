//! Loading, constructing, aggregating, and slicing spatial time series.
//!
//! File conventions:
//! - grid metadata CSV: header `grid_id,lat,lon,zone`, one row per grid;
//! - long series CSV: header `date,grid_id,tmax,tmin` (temperature pair) or
//!   `date,grid_id,value` (pre-computed series), ISO-8601 dates, missing
//!   values spelled with a sentinel token;
//! - wide matrix CSV: header `time,<grid ids...>`, one row per time stamp,
//!   masked entries spelled with the sentinel.
//!
//! Unparsable numeric fields are an error, never silently masked; only the
//! sentinel token marks a missing observation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMeta;
use crate::sts::{Granularity, Label, StsMatrix, TimeStamp};

/// Ingest options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtrConfig {
    /// Sentinel spelling missing values in input files.
    pub missing_token: String,
    /// Restrict to fully observed columns after any aggregation.
    pub complete_only: bool,
    /// Temporal aggregation applied after construction.
    pub aggregate: AggregateLevel,
    /// Minimum fraction of observed values for an aggregated period.
    pub min_coverage: f64,
}

impl Default for DtrConfig {
    fn default() -> Self {
        DtrConfig {
            missing_token: "NA".into(),
            complete_only: false,
            aggregate: AggregateLevel::None,
            min_coverage: 0.0,
        }
    }
}

impl DtrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.missing_token.is_empty() {
            return Err(Error::Config("missing_token must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::Argument {
                name: "min_coverage",
                value: self.min_coverage.to_string(),
                range: "[0, 1]".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateLevel {
    None,
    Monthly,
    Yearly,
}

/// Reads grid metadata CSV (`grid_id,lat,lon,zone`).
pub fn read_grids(path: &Path) -> Result<Vec<GridMeta>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    expect_headers(path, &mut reader, &["grid_id", "lat", "lon", "zone"])?;
    let mut grids = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| csv_error(path, &e))?;
        let grid_id = field(path, line, &record, 0)?.to_string();
        if !seen.insert(grid_id.clone()) {
            return Err(Error::DuplicateGridId(grid_id));
        }
        let lat = parse_f64(path, line, field(path, line, &record, 1)?)?;
        let lon = parse_f64(path, line, field(path, line, &record, 2)?)?;
        let zone: u8 = field(path, line, &record, 3)?.parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            msg: "zone must be a small positive integer".into(),
        })?;
        if zone == 0 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: "zone labels start at 1".into(),
            });
        }
        grids.push(GridMeta::new(grid_id, lat, lon, zone));
    }
    if grids.is_empty() {
        return Err(Error::EmptySelection(format!("{} holds no grids", path.display())));
    }
    Ok(grids)
}

/// Long-form series parsed from disk.
#[derive(Debug)]
pub struct LongSeries {
    /// Pair of matrices for `tmax,tmin` files, single matrix for `value` files.
    pub matrices: Vec<StsMatrix>,
}

/// Reads a long series CSV against known grid metadata.
///
/// Column order of the result follows the metadata file, not the series file.
pub fn read_series(path: &Path, grids: &[GridMeta], missing_token: &str) -> Result<LongSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let value_form = match cols.as_slice() {
        ["date", "grid_id", "tmax", "tmin"] => false,
        ["date", "grid_id", "value"] => true,
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!(
                    "expected header date,grid_id,tmax,tmin or date,grid_id,value; got {}",
                    cols.join(",")
                ),
            })
        }
    };

    let col_index: HashMap<&str, usize> = grids
        .iter()
        .enumerate()
        .map(|(j, g)| (g.grid_id.as_str(), j))
        .collect();
    let n_fields = if value_form { 1 } else { 2 };
    // (stamp -> per-grid slots); BTreeMap keeps time sorted.
    let mut rows: BTreeMap<TimeStamp, Vec<[Option<f64>; 2]>> = BTreeMap::new();
    let mut granularity: Option<Granularity> = None;

    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| csv_error(path, &e))?;
        let stamp_str = field(path, line, &record, 0)?;
        let stamp = TimeStamp::parse(stamp_str).ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad date {stamp_str:?}"),
        })?;
        match granularity {
            None => granularity = Some(stamp.granularity()),
            Some(g) if g != stamp.granularity() => {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: "mixed date granularities in one file".into(),
                })
            }
            _ => {}
        }
        let grid_id = field(path, line, &record, 1)?;
        let &j = col_index.get(grid_id).ok_or_else(|| Error::Vocabulary {
            field: "grid_id",
            value: grid_id.to_string(),
        })?;
        let slots = rows
            .entry(stamp)
            .or_insert_with(|| vec![[None, None]; grids.len()]);
        for k in 0..n_fields {
            let raw = field(path, line, &record, 2 + k)?;
            if raw == missing_token {
                continue;
            }
            let v = parse_f64(path, line, raw)?;
            if slots[j][k].is_some() {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("duplicate observation for ({stamp}, {grid_id})"),
                });
            }
            slots[j][k] = Some(v);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySelection(format!(
            "{} holds no observations",
            path.display()
        )));
    }

    let time: Vec<TimeStamp> = rows.keys().copied().collect();
    let n = time.len();
    let p = grids.len();
    let mut matrices = Vec::new();
    for k in 0..n_fields {
        let mut values = DMatrix::zeros(n, p);
        let mut missing = DMatrix::from_element(n, p, true);
        for (i, slots) in rows.values().enumerate() {
            for j in 0..p {
                if let Some(v) = slots[j][k] {
                    values[(i, j)] = v;
                    missing[(i, j)] = false;
                }
            }
        }
        matrices.push(StsMatrix::new(
            values,
            missing,
            time.clone(),
            grids.to_vec(),
            Label::Raw,
        )?);
    }
    Ok(LongSeries { matrices })
}

/// Difference of two aligned series: `tmax - tmin`, mask = OR of input masks.
pub fn compute_dtr(tmax: &StsMatrix, tmin: &StsMatrix) -> Result<StsMatrix> {
    if tmax.n() != tmin.n() || tmax.p() != tmin.p() {
        return Err(Error::ShapeMismatch {
            context: "dtr inputs",
            left: format!("{}x{}", tmax.n(), tmax.p()),
            right: format!("{}x{}", tmin.n(), tmin.p()),
        });
    }
    for (i, (a, b)) in tmax.time().iter().zip(tmin.time()).enumerate() {
        if a != b {
            return Err(Error::IndexMismatch {
                what: "time_index",
                position: i,
                left: a.to_string(),
                right: b.to_string(),
            });
        }
    }
    for (j, (a, b)) in tmax.columns().iter().zip(tmin.columns()).enumerate() {
        if a.grid_id != b.grid_id {
            return Err(Error::IndexMismatch {
                what: "columns",
                position: j,
                left: a.grid_id.clone(),
                right: b.grid_id.clone(),
            });
        }
    }
    let (n, p) = (tmax.n(), tmax.p());
    let mut values = DMatrix::zeros(n, p);
    let mut missing = DMatrix::from_element(n, p, true);
    for j in 0..p {
        for i in 0..n {
            if tmax.is_observed(i, j) && tmin.is_observed(i, j) {
                values[(i, j)] = tmax.values()[(i, j)] - tmin.values()[(i, j)];
                missing[(i, j)] = false;
            }
        }
    }
    StsMatrix::new(
        values,
        missing,
        tmax.time().to_vec(),
        tmax.columns().to_vec(),
        Label::Raw,
    )
}

/// Keeps only fully observed columns, preserving order.
pub fn filter_complete(x: &StsMatrix) -> Result<StsMatrix> {
    let keep: Vec<usize> = (0..x.p())
        .filter(|&j| (0..x.n()).all(|i| x.is_observed(i, j)))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySelection(
            "no column is fully observed".into(),
        ));
    }
    Ok(select_columns(x, &keep, x.label))
}

/// Arithmetic mean of observed entries per calendar period.
///
/// An output entry is masked only when every contributing entry is missing
/// or when observed coverage falls below `min_coverage`.
pub fn aggregate(x: &StsMatrix, level: AggregateLevel) -> Result<StsMatrix> {
    aggregate_min_coverage(x, level, 0.0)
}

pub fn aggregate_min_coverage(
    x: &StsMatrix,
    level: AggregateLevel,
    min_coverage: f64,
) -> Result<StsMatrix> {
    if x.granularity() != Granularity::Daily {
        return Err(Error::Config(
            "aggregation requires a daily time index".into(),
        ));
    }
    let key = |t: &TimeStamp| -> TimeStamp {
        match level {
            AggregateLevel::Monthly => TimeStamp::Month {
                year: t.year(),
                month: t.month(),
            },
            AggregateLevel::Yearly => TimeStamp::Year(t.year()),
            AggregateLevel::None => *t,
        }
    };
    if level == AggregateLevel::None {
        return Ok(x.clone());
    }

    // Group consecutive rows; daily stamps are sorted so periods are contiguous.
    let mut periods: Vec<(TimeStamp, Vec<usize>)> = Vec::new();
    for (i, t) in x.time().iter().enumerate() {
        let k = key(t);
        match periods.last_mut() {
            Some((last, rows)) if *last == k => rows.push(i),
            _ => periods.push((k, vec![i])),
        }
    }

    let p = x.p();
    let n_out = periods.len();
    let mut values = DMatrix::zeros(n_out, p);
    let mut missing = DMatrix::from_element(n_out, p, true);
    for (out_i, (_, rows)) in periods.iter().enumerate() {
        for j in 0..p {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &i in rows {
                if x.is_observed(i, j) {
                    sum += x.values()[(i, j)];
                    count += 1;
                }
            }
            let coverage = count as f64 / rows.len() as f64;
            if count > 0 && coverage >= min_coverage {
                values[(out_i, j)] = sum / count as f64;
                missing[(out_i, j)] = false;
            }
        }
    }
    let time: Vec<TimeStamp> = periods.into_iter().map(|(t, _)| t).collect();
    StsMatrix::new(values, missing, time, x.columns().to_vec(), x.label)
}

/// Row/column selection for windowing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeSelection {
    All,
    Year(i32),
    Month(i32, u32),
    /// Inclusive range; both ends must share the matrix granularity.
    Between(TimeStamp, TimeStamp),
}

impl TimeSelection {
    fn matches(&self, t: &TimeStamp) -> bool {
        match self {
            TimeSelection::All => true,
            TimeSelection::Year(y) => t.year() == *y,
            TimeSelection::Month(y, m) => t.year() == *y && t.month() == *m,
            TimeSelection::Between(a, b) => a <= t && t <= b,
        }
    }
}

/// Restricts rows to a time selection and columns to a zone subset.
pub fn slice(
    x: &StsMatrix,
    time: &TimeSelection,
    zones: Option<&BTreeSet<u8>>,
) -> Result<StsMatrix> {
    if let TimeSelection::Between(a, b) = time {
        if a.granularity() != x.granularity() || b.granularity() != x.granularity() {
            return Err(Error::Config(
                "time range granularity does not match the matrix".into(),
            ));
        }
    }
    if let Some(zs) = zones {
        let present: BTreeSet<u8> = x.columns().iter().map(|c| c.zone).collect();
        for z in zs {
            if !present.contains(z) {
                return Err(Error::Vocabulary {
                    field: "zone",
                    value: z.to_string(),
                });
            }
        }
    }
    let rows: Vec<usize> = x
        .time()
        .iter()
        .enumerate()
        .filter(|(_, t)| time.matches(t))
        .map(|(i, _)| i)
        .collect();
    let cols: Vec<usize> = (0..x.p())
        .filter(|&j| zones.map_or(true, |zs| zs.contains(&x.columns()[j].zone)))
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::EmptySelection(format!(
            "slice selects {} rows and {} columns",
            rows.len(),
            cols.len()
        )));
    }
    let mut values = DMatrix::zeros(rows.len(), cols.len());
    let mut missing = DMatrix::from_element(rows.len(), cols.len(), true);
    for (oi, &i) in rows.iter().enumerate() {
        for (oj, &j) in cols.iter().enumerate() {
            values[(oi, oj)] = x.values()[(i, j)];
            missing[(oi, oj)] = x.missing()[(i, j)];
        }
    }
    let time: Vec<TimeStamp> = rows.iter().map(|&i| x.time()[i]).collect();
    let columns: Vec<GridMeta> = cols.iter().map(|&j| x.columns()[j].clone()).collect();
    StsMatrix::new(values, missing, time, columns, x.label)
}

fn select_columns(x: &StsMatrix, keep: &[usize], label: Label) -> StsMatrix {
    let n = x.n();
    let mut values = DMatrix::zeros(n, keep.len());
    let mut missing = DMatrix::from_element(n, keep.len(), true);
    for (oj, &j) in keep.iter().enumerate() {
        for i in 0..n {
            values[(i, oj)] = x.values()[(i, j)];
            missing[(i, oj)] = x.missing()[(i, j)];
        }
    }
    let columns: Vec<GridMeta> = keep.iter().map(|&j| x.columns()[j].clone()).collect();
    StsMatrix::new(values, missing, x.time().to_vec(), columns, label)
        .expect("column selection preserves validity")
}

/// Writes a matrix as wide CSV (`time,<grid ids...>`), sentinel for masked slots.
pub fn write_sts_wide(x: &StsMatrix, path: &Path, missing_token: &str) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let mut line = String::from("time");
    for c in x.columns() {
        line.push(',');
        line.push_str(&c.grid_id);
    }
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    for i in 0..x.n() {
        let mut line = x.time()[i].to_string();
        for j in 0..x.p() {
            line.push(',');
            if x.is_observed(i, j) {
                line.push_str(&format!("{}", x.values()[(i, j)]));
            } else {
                line.push_str(missing_token);
            }
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a wide CSV back into a matrix, joining metadata by grid id.
///
/// Grids missing from `meta` get placeholder coordinates; operations that
/// need geometry will reject them later if the join was required.
pub fn read_sts_wide(
    path: &Path,
    meta: Option<&[GridMeta]>,
    missing_token: &str,
    label: Label,
) -> Result<StsMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if headers.iter().next() != Some("time") || ids.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "expected header time,<grid ids...>".into(),
        });
    }
    let by_id: HashMap<&str, &GridMeta> = meta
        .unwrap_or(&[])
        .iter()
        .map(|g| (g.grid_id.as_str(), g))
        .collect();
    let columns: Vec<GridMeta> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|&g| g.clone())
                .unwrap_or_else(|| GridMeta::new(id.clone(), 0.0, 0.0, 1))
        })
        .collect();

    let mut time = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| csv_error(path, &e))?;
        let stamp_str = field(path, line, &record, 0)?;
        let stamp = TimeStamp::parse(stamp_str).ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad time stamp {stamp_str:?}"),
        })?;
        time.push(stamp);
        let mut row = Vec::with_capacity(ids.len());
        for j in 0..ids.len() {
            let raw = field(path, line, &record, 1 + j)?;
            if raw == missing_token {
                row.push(None);
            } else {
                row.push(Some(parse_f64(path, line, raw)?));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let p = ids.len();
    let mut values = DMatrix::zeros(n, p);
    let mut missing = DMatrix::from_element(n, p, true);
    for (i, row) in rows.iter().enumerate() {
        for (j, slot) in row.iter().enumerate() {
            if let Some(v) = slot {
                values[(i, j)] = *v;
                missing[(i, j)] = false;
            }
        }
    }
    StsMatrix::new(values, missing, time, columns, label)
}

fn expect_headers(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != want {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("expected header {}, got {}", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn field<'r>(path: &Path, line: u64, record: &'r csv::StringRecord, idx: usize) -> Result<&'r str> {
    record.get(idx).ok_or_else(|| Error::Parse {
        path: path.into(),
        line,
        msg: format!("missing field {idx}"),
    })
}

fn parse_f64(path: &Path, line: u64, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        msg: format!("unparsable numeric field {raw:?}"),
    })
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        line: 0,
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn meta(id: &str, zone: u8) -> GridMeta {
        GridMeta::new(id, 10.0 + zone as f64, 70.0, zone)
    }

    fn day(y: i32, m: u32, d: u32) -> TimeStamp {
        TimeStamp::Day(NaiveDate::from_ymd_opt(y, m, d).unwrap())
    }

    fn daily_matrix(values: &[f64], missing: &[bool], p: usize) -> StsMatrix {
        let n = values.len() / p;
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| {
                TimeStamp::Day(
                    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(i as u64),
                )
            })
            .collect();
        let columns: Vec<GridMeta> = (0..p).map(|j| meta(&format!("g{j}"), 1)).collect();
        StsMatrix::new(
            DMatrix::from_row_slice(n, p, values),
            DMatrix::from_row_slice(n, p, missing),
            time,
            columns,
            Label::Raw,
        )
        .unwrap()
    }

    #[test]
    fn dtr_subtracts_and_ors_masks() {
        let tmax = daily_matrix(&[35.0, 30.0], &[false, false], 1);
        let tmin = daily_matrix(&[22.5, 0.0], &[false, true], 1);
        let dtr = compute_dtr(&tmax, &tmin).unwrap();
        assert_eq!(dtr.values()[(0, 0)], 12.5);
        assert!(!dtr.is_observed(1, 0));
        assert_eq!(dtr.label, Label::Raw);
    }

    #[test]
    fn dtr_reports_first_differing_time() {
        let a = daily_matrix(&[1.0, 2.0], &[false, false], 1);
        let time = vec![day(2000, 1, 1), day(2000, 1, 3)];
        let b = StsMatrix::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_element(2, 1, false),
            time,
            vec![meta("g0", 1)],
            Label::Raw,
        )
        .unwrap();
        let err = compute_dtr(&a, &b).unwrap_err();
        match err {
            Error::IndexMismatch { position, .. } => assert_eq!(position, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filter_complete_keeps_order_and_is_idempotent() {
        let x = daily_matrix(
            &[1.0, 0.0, 3.0, 4.0, 0.0, 6.0],
            &[false, true, false, false, true, false],
            3,
        );
        let f = filter_complete(&x).unwrap();
        assert_eq!(f.p(), 2);
        assert_eq!(f.grid_ids(), vec!["g0", "g2"]);
        assert!(f.columns().iter().all(|c| c.complete));
        let ff = filter_complete(&f).unwrap();
        assert_eq!(ff, f);
    }

    #[test]
    fn filter_complete_rejects_empty_result() {
        let x = daily_matrix(&[1.0, 0.0], &[false, true], 1);
        assert!(matches!(filter_complete(&x), Err(Error::EmptySelection(_))));
    }

    #[test]
    fn monthly_mean_skips_missing_and_masks_empty_periods() {
        // 4 days in one month; column 0 has a single observed value.
        let x = daily_matrix(
            &[0.0, 1.0, 7.0, 2.0, 0.0, 3.0, 0.0, 4.0],
            &[true, false, false, false, true, false, true, false],
            2,
        );
        let m = aggregate(&x, AggregateLevel::Monthly).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.values()[(0, 0)], 7.0); // single observed value
        assert_eq!(m.values()[(0, 1)], 2.5); // mean of 1,2,3,4
        let all_missing = daily_matrix(&[0.0, 0.0], &[true, true], 1);
        let m2 = aggregate(&all_missing, AggregateLevel::Monthly).unwrap();
        assert!(!m2.is_observed(0, 0));
    }

    #[test]
    fn aggregate_then_subtract_commutes_with_identical_masks() {
        // 62 days over two months, shared mask.
        let n = 62;
        let miss: Vec<bool> = (0..n).map(|i| i % 7 == 0).collect();
        let tmax_vals: Vec<f64> = (0..n).map(|i| 20.0 + (i as f64 * 0.37).sin() * 5.0).collect();
        let tmin_vals: Vec<f64> = (0..n).map(|i| 10.0 + (i as f64 * 0.21).cos() * 3.0).collect();
        let tmax = daily_matrix(&tmax_vals, &miss, 1);
        let tmin = daily_matrix(&tmin_vals, &miss, 1);

        let a = aggregate(&compute_dtr(&tmax, &tmin).unwrap(), AggregateLevel::Monthly).unwrap();
        let b = compute_dtr(
            &aggregate(&tmax, AggregateLevel::Monthly).unwrap(),
            &aggregate(&tmin, AggregateLevel::Monthly).unwrap(),
        )
        .unwrap();
        for i in 0..a.n() {
            assert!((a.values()[(i, 0)] - b.values()[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_preserves_column_metadata() {
        let x = daily_matrix(&[1.0, 2.0, 3.0, 4.0], &[false; 4], 2);
        let m = aggregate(&x, AggregateLevel::Yearly).unwrap();
        assert_eq!(m.columns(), x.columns());
    }

    #[test]
    fn slice_by_year_and_zone() {
        let time = vec![day(1967, 12, 31), day(1968, 1, 1), day(1968, 1, 2)];
        let columns = vec![meta("a", 1), meta("b", 3)];
        let x = StsMatrix::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DMatrix::from_element(3, 2, false),
            time,
            columns,
            Label::Raw,
        )
        .unwrap();
        let s = slice(&x, &TimeSelection::Year(1968), Some(&BTreeSet::from([3]))).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.p(), 1);
        assert_eq!(s.values()[(0, 0)], 4.0);
        // full range + all zones is the identity
        let id = slice(&x, &TimeSelection::All, None).unwrap();
        assert_eq!(id, x);
        // single-day range
        let one = slice(
            &x,
            &TimeSelection::Between(day(1968, 1, 1), day(1968, 1, 1)),
            None,
        )
        .unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(one.p(), 2);
    }

    #[test]
    fn slice_rejects_unknown_zone_and_empty_range() {
        let x = daily_matrix(&[1.0, 2.0], &[false, false], 1);
        assert!(matches!(
            slice(&x, &TimeSelection::All, Some(&BTreeSet::from([9]))),
            Err(Error::Vocabulary { .. })
        ));
        assert!(matches!(
            slice(&x, &TimeSelection::Year(1900), None),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn long_csv_round_trip_with_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let grids_path = dir.path().join("grids.csv");
        std::fs::write(&grids_path, "grid_id,lat,lon,zone\na,8.5,70.5,1\nb,9.5,70.5,2\n").unwrap();
        let series_path = dir.path().join("series.csv");
        std::fs::write(
            &series_path,
            "date,grid_id,tmax,tmin\n2000-01-01,a,30.0,20.0\n2000-01-01,b,NA,18.0\n2000-01-02,a,31.5,21.0\n",
        )
        .unwrap();
        let grids = read_grids(&grids_path).unwrap();
        let series = read_series(&series_path, &grids, "NA").unwrap();
        let dtr = compute_dtr(&series.matrices[0], &series.matrices[1]).unwrap();
        assert_eq!(dtr.values()[(0, 0)], 10.0);
        assert!(!dtr.is_observed(0, 1)); // tmax missing
        assert!(!dtr.is_observed(1, 1)); // no row at all

        let wide = dir.path().join("wide.csv");
        write_sts_wide(&dtr, &wide, "NA").unwrap();
        let back = read_sts_wide(&wide, Some(&grids), "NA", Label::Raw).unwrap();
        assert_eq!(back.values(), dtr.values());
        assert_eq!(back.missing(), dtr.missing());
    }

    #[test]
    fn unparsable_numeric_is_an_error_not_a_mask() {
        let dir = tempfile::tempdir().unwrap();
        let grids_path = dir.path().join("grids.csv");
        std::fs::write(&grids_path, "grid_id,lat,lon,zone\na,8.5,70.5,1\n").unwrap();
        let series_path = dir.path().join("series.csv");
        std::fs::write(&series_path, "date,grid_id,value\n2000-01-01,a,oops\n").unwrap();
        let grids = read_grids(&grids_path).unwrap();
        let err = read_series(&series_path, &grids, "NA").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
