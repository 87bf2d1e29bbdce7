//! Derived analyses: argmax-partner spatial offsets and teleconnection joins.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dependence::{AssocMethod, AssociationMatrix, SbSeries};
use crate::error::{Error, Result};
use crate::grid::Lattice;
use crate::sts::TimeStamp;

/// One grid and its strongest association partner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArgmaxRow {
    pub grid_id: String,
    pub partner_id: String,
    pub dlat: f64,
    pub dlon: f64,
}

/// Histogram bucket of partner offsets at grid-step resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffsetBucket {
    pub axis: String,
    pub offset_steps: i64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArgmaxTable {
    pub rows: Vec<ArgmaxRow>,
    pub histogram: Vec<OffsetBucket>,
}

/// For every grid, the partner maximizing the association entry, with
/// latitude/longitude offsets and offset histograms at grid-step resolution.
///
/// Ties break toward the ascending grid id.
pub fn argmax_partner_offsets(assoc: &AssociationMatrix) -> Result<ArgmaxTable> {
    let p = assoc.p();
    if p < 2 {
        return Err(Error::InsufficientData {
            context: "argmax_partner_offsets",
            needed: 2,
            got: p,
        });
    }
    let grids = assoc.columns();
    let step = Lattice::infer(grids)?;
    let mut rows = Vec::with_capacity(p);
    let mut lat_hist: BTreeMap<i64, usize> = BTreeMap::new();
    let mut lon_hist: BTreeMap<i64, usize> = BTreeMap::new();
    for i in 0..p {
        let mut best: Option<usize> = None;
        for j in 0..p {
            if j == i {
                continue;
            }
            let better = match best {
                None => true,
                Some(k) => {
                    let (vj, vk) = (assoc.entry(i, j), assoc.entry(i, k));
                    vj > vk || (vj == vk && grids[j].grid_id < grids[k].grid_id)
                }
            };
            if better {
                best = Some(j);
            }
        }
        let j = best.expect("p >= 2 guarantees a partner");
        let dlat = grids[j].lat - grids[i].lat;
        let dlon = grids[j].lon - grids[i].lon;
        *lat_hist
            .entry((dlat / step.lat_step).round() as i64)
            .or_default() += 1;
        *lon_hist
            .entry((dlon / step.lon_step).round() as i64)
            .or_default() += 1;
        rows.push(ArgmaxRow {
            grid_id: grids[i].grid_id.clone(),
            partner_id: grids[j].grid_id.clone(),
            dlat,
            dlon,
        });
    }
    let mut histogram = Vec::new();
    for (offset, count) in lat_hist {
        histogram.push(OffsetBucket {
            axis: "lat".into(),
            offset_steps: offset,
            count,
        });
    }
    for (offset, count) in lon_hist {
        histogram.push(OffsetBucket {
            axis: "lon".into(),
            offset_steps: offset,
            count,
        });
    }
    Ok(ArgmaxTable { rows, histogram })
}

/// ENSO phase vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsoPhase {
    ElNino,
    LaNina,
    Neutral,
}

impl EnsoPhase {
    pub fn parse(s: &str) -> Result<EnsoPhase> {
        match s {
            "elnino" => Ok(EnsoPhase::ElNino),
            "lanina" => Ok(EnsoPhase::LaNina),
            "neutral" => Ok(EnsoPhase::Neutral),
            other => Err(Error::Vocabulary {
                field: "enso phase",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for EnsoPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnsoPhase::ElNino => "elnino",
            EnsoPhase::LaNina => "lanina",
            EnsoPhase::Neutral => "neutral",
        };
        f.write_str(s)
    }
}

/// Reads a `year,phase` CSV.
pub fn read_enso_csv(path: &Path) -> Result<BTreeMap<i32, EnsoPhase>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "year,phase" {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("expected header year,phase, got {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (y, phase) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: idx as u64 + 1,
            msg: "expected year,phase".into(),
        })?;
        let year: i32 = y.trim().parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx as u64 + 1,
            msg: format!("bad year {y:?}"),
        })?;
        map.insert(year, EnsoPhase::parse(phase.trim())?);
    }
    Ok(map)
}

/// Reads a `year,month,dmi` CSV keyed by month index.
pub fn read_dmi_csv(path: &Path) -> Result<BTreeMap<i64, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "year,month,dmi" {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("expected header year,month,dmi, got {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line: idx as u64 + 1,
                msg: "expected year,month,dmi".into(),
            });
        }
        let year: i32 = fields[0].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx as u64 + 1,
            msg: format!("bad year {:?}", fields[0]),
        })?;
        let month: u32 = fields[1].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx as u64 + 1,
            msg: format!("bad month {:?}", fields[1]),
        })?;
        if !(1..=12).contains(&month) {
            return Err(Error::Parse {
                path: path.into(),
                line: idx as u64 + 1,
                msg: format!("month {month} out of range"),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx as u64 + 1,
            msg: format!("bad dmi value {:?}", fields[2]),
        })?;
        map.insert(month_index(year, month), value);
    }
    Ok(map)
}

fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + (month as i64 - 1)
}

/// Per-phase distribution summary of yearly Spatial Bergsma values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsoRow {
    pub region: String,
    pub scheme: String,
    pub method: AssocMethod,
    pub phase: EnsoPhase,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for singleton groups.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Groups yearly S_B entries by ENSO phase.
///
/// Every year present in the series must appear in the phase table.
pub fn teleconnect_enso(
    sb: &SbSeries,
    phases: &BTreeMap<i32, EnsoPhase>,
) -> Result<Vec<EnsoRow>> {
    let mut groups: BTreeMap<(String, String, AssocMethod, EnsoPhase), Vec<f64>> = BTreeMap::new();
    for entry in &sb.entries {
        let Some(TimeStamp::Year(year)) = TimeStamp::parse(&entry.window) else {
            continue; // non-yearly windows are outside this join
        };
        let phase = phases.get(&year).copied().ok_or_else(|| Error::Vocabulary {
            field: "enso year",
            value: year.to_string(),
        })?;
        groups
            .entry((entry.region.clone(), entry.scheme.clone(), entry.method, phase))
            .or_default()
            .push(entry.value);
    }
    if groups.is_empty() {
        return Err(Error::EmptySelection(
            "no yearly Spatial Bergsma entries to join with ENSO phases".into(),
        ));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((region, scheme, method, phase), values) in groups {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rows.push(EnsoRow {
            region,
            scheme,
            method,
            phase,
            count,
            mean,
            sd,
            min,
            max,
        });
    }
    Ok(rows)
}

/// Lagged correlation between monthly S_B and the dipole index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IodRow {
    pub region: String,
    pub scheme: String,
    pub method: AssocMethod,
    pub lag: usize,
    pub correlation: f64,
    pub n: usize,
}

fn pearson_scalar(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Correlates monthly S_B against DMI at lags 0..=max_lag per
/// (region, scheme, method) group; S_B at month m pairs with DMI at m − lag.
pub fn teleconnect_iod(
    sb: &SbSeries,
    dmi: &BTreeMap<i64, f64>,
    max_lag: usize,
) -> Result<Vec<IodRow>> {
    let mut groups: BTreeMap<(String, String, AssocMethod), Vec<(i64, f64)>> = BTreeMap::new();
    for entry in &sb.entries {
        let Some(TimeStamp::Month { year, month }) = TimeStamp::parse(&entry.window) else {
            continue;
        };
        groups
            .entry((entry.region.clone(), entry.scheme.clone(), entry.method))
            .or_default()
            .push((month_index(year, month), entry.value));
    }
    if groups.is_empty() {
        return Err(Error::EmptySelection(
            "no monthly Spatial Bergsma entries to join with DMI".into(),
        ));
    }
    let mut rows = Vec::new();
    for ((region, scheme, method), mut series) in groups {
        series.sort_by_key(|(m, _)| *m);
        for lag in 0..=max_lag {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &(m, v) in &series {
                if let Some(&d) = dmi.get(&(m - lag as i64)) {
                    xs.push(v);
                    ys.push(d);
                }
            }
            if xs.len() < 3 {
                return Err(Error::InsufficientOverlap {
                    a: format!("sb[{region}/{scheme}/{method}]"),
                    b: format!("dmi lag {lag}"),
                    got: xs.len(),
                    needed: 3,
                });
            }
            rows.push(IodRow {
                region: region.clone(),
                scheme: scheme.clone(),
                method,
                lag,
                correlation: pearson_scalar(&xs, &ys),
                n: xs.len(),
            });
        }
    }
    Ok(rows)
}
