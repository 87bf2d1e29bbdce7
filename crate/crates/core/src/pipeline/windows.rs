//! Window and region plans, and the windowed Spatial Bergsma series.

use std::collections::BTreeSet;

use crate::dependence::{
    bergsma_matrix, spatial_bergsma, AssocMethod, AssociationMatrix, SbEntry, SbSeries,
    WeightMatrix,
};
use crate::error::Result;
use crate::grid::GridMeta;
use crate::ingest::{slice, TimeSelection};
use crate::linalg::pearson_matrix;
use crate::pipeline::config::WindowPlan;
use crate::sts::{StsMatrix, TimeStamp};

/// Minimum rows for a window to participate in association estimation.
pub const MIN_WINDOW_ROWS: usize = 4;

#[derive(Debug, Clone)]
pub struct WindowSpec {
    pub label: String,
    pub selection: TimeSelection,
}

/// Expands a plan against an observed time index.
pub fn expand_windows(time: &[TimeStamp], plan: WindowPlan) -> Vec<WindowSpec> {
    match plan {
        WindowPlan::Whole => vec![WindowSpec {
            label: "all".into(),
            selection: TimeSelection::All,
        }],
        WindowPlan::Yearly => {
            let mut years: Vec<i32> = time.iter().map(|t| t.year()).collect();
            years.dedup();
            years
                .into_iter()
                .map(|y| WindowSpec {
                    label: format!("{y:04}"),
                    selection: TimeSelection::Year(y),
                })
                .collect()
        }
        WindowPlan::Monthly => {
            let mut months: Vec<(i32, u32)> = time.iter().map(|t| (t.year(), t.month())).collect();
            months.dedup();
            months
                .into_iter()
                .map(|(y, m)| WindowSpec {
                    label: format!("{y:04}-{m:02}"),
                    selection: TimeSelection::Month(y, m),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub label: String,
    pub zones: Option<BTreeSet<u8>>,
}

/// The whole domain plus, optionally, one region per observed zone.
pub fn expand_regions(columns: &[GridMeta], per_zone: bool) -> Vec<RegionSpec> {
    let mut regions = vec![RegionSpec {
        label: "all".into(),
        zones: None,
    }];
    if per_zone {
        let mut zones: Vec<u8> = columns.iter().map(|c| c.zone).collect();
        zones.sort_unstable();
        zones.dedup();
        for z in zones {
            regions.push(RegionSpec {
                label: format!("zone{z}"),
                zones: Some(BTreeSet::from([z])),
            });
        }
    }
    regions
}

/// Association matrix of a window by the requested estimator.
pub fn associate(x: &StsMatrix, method: AssocMethod) -> Result<AssociationMatrix> {
    match method {
        AssocMethod::Pearson => pearson_matrix(x),
        AssocMethod::Bergsma => bergsma_matrix(x),
    }
}

/// Weight matrices per region, labelled by scheme.
pub type RegionWeights = Vec<(String, WeightMatrix)>;

/// Spatial Bergsma series over the product of windows, regions, methods,
/// and weight schemes.
///
/// `weights_for` builds the per-region weight set once (weights depend only
/// on the region's grids). Windows shorter than [`MIN_WINDOW_ROWS`] are
/// skipped and listed on the returned series.
pub fn sb_series(
    s: &StsMatrix,
    plans: &[WindowPlan],
    regions: &[RegionSpec],
    methods: &[AssocMethod],
    weights_for: impl Fn(&[GridMeta]) -> Result<RegionWeights>,
) -> Result<SbSeries> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut plans_sorted: Vec<WindowPlan> = plans.to_vec();
    plans_sorted.sort();
    plans_sorted.dedup();
    for region in regions {
        let regional = slice(s, &TimeSelection::All, region.zones.as_ref())?;
        let weights = weights_for(regional.columns())?;
        if weights.is_empty() {
            continue;
        }
        for &plan in &plans_sorted {
            for window in expand_windows(regional.time(), plan) {
                let sub = slice(&regional, &window.selection, None)?;
                if sub.n() < MIN_WINDOW_ROWS {
                    skipped.push(format!("{}/{}", window.label, region.label));
                    continue;
                }
                for &method in methods {
                    let assoc = associate(&sub, method)?
                        .with_labels(window.label.clone(), region.label.clone());
                    for (scheme_label, w) in &weights {
                        let value = spatial_bergsma(&assoc, w)?;
                        entries.push(SbEntry {
                            window: window.label.clone(),
                            region: region.label.clone(),
                            scheme: scheme_label.clone(),
                            method,
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok(SbSeries {
        entries,
        skipped_windows: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::{weights_lag1, AdjacencyRule};
    use crate::sts::Label;
    use chrono::NaiveDate;
    use nalgebra::DMatrix;

    fn synthetic(n_years: usize, days_per_year: usize, p: usize, corr: f64, tag: &str) -> StsMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::seed::stream(71, tag);
        let n = n_years * days_per_year;
        let mut values = DMatrix::zeros(n, p);
        for i in 0..n {
            let shared: f64 = StandardNormal.sample(&mut rng);
            for j in 0..p {
                let own: f64 = StandardNormal.sample(&mut rng);
                values[(i, j)] = corr.sqrt() * shared + (1.0 - corr).sqrt() * own;
            }
        }
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| {
                let year = 2000 + (i / days_per_year) as i32;
                let day = (i % days_per_year) as u64;
                TimeStamp::Day(NaiveDate::from_ymd_opt(year, 1, 1).unwrap() + chrono::Days::new(day))
            })
            .collect();
        let columns: Vec<GridMeta> = (0..p)
            .map(|j| GridMeta::new(format!("g{j}"), 10.0, 70.0 + j as f64, 1 + (j % 2) as u8))
            .collect();
        StsMatrix::complete(values, time, columns, Label::Trimmed).unwrap()
    }

    #[test]
    fn windows_expand_per_plan() {
        let s = synthetic(3, 10, 2, 0.2, "win/expand");
        assert_eq!(expand_windows(s.time(), WindowPlan::Whole).len(), 1);
        assert_eq!(expand_windows(s.time(), WindowPlan::Yearly).len(), 3);
        assert_eq!(expand_windows(s.time(), WindowPlan::Monthly).len(), 3);
        let regions = expand_regions(s.columns(), true);
        let labels: Vec<&str> = regions.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["all", "zone1", "zone2"]);
    }

    #[test]
    fn whole_window_matches_direct_statistic() {
        let s = synthetic(2, 30, 4, 0.4, "win/direct");
        let weights_for = |grids: &[GridMeta]| -> Result<RegionWeights> {
            Ok(vec![(
                "lag1".to_string(),
                weights_lag1(grids, AdjacencyRule::Rook)?,
            )])
        };
        let series = sb_series(
            &s,
            &[WindowPlan::Whole],
            &expand_regions(s.columns(), false),
            &[AssocMethod::Pearson],
            weights_for,
        )
        .unwrap();
        assert_eq!(series.entries.len(), 1);
        let direct = spatial_bergsma(
            &pearson_matrix(&s).unwrap(),
            &weights_lag1(s.columns(), AdjacencyRule::Rook).unwrap(),
        )
        .unwrap();
        assert_eq!(series.entries[0].value, direct);
        assert_eq!(series.entries[0].window, "all");
    }

    #[test]
    fn short_windows_are_skipped_and_listed() {
        // 3 days per year: below the 4-row minimum
        let s = synthetic(2, 3, 3, 0.2, "win/short");
        let weights_for = |grids: &[GridMeta]| -> Result<RegionWeights> {
            Ok(vec![(
                "lag1".to_string(),
                weights_lag1(grids, AdjacencyRule::Rook)?,
            )])
        };
        let series = sb_series(
            &s,
            &[WindowPlan::Yearly],
            &expand_regions(s.columns(), false),
            &[AssocMethod::Pearson],
            weights_for,
        )
        .unwrap();
        assert!(series.entries.is_empty());
        assert_eq!(series.skipped_windows.len(), 2);
    }

    #[test]
    fn stationary_series_fluctuates_without_trend() {
        let s = synthetic(12, 40, 5, 0.5, "win/stationary");
        let weights_for = |grids: &[GridMeta]| -> Result<RegionWeights> {
            Ok(vec![(
                "lag1".to_string(),
                weights_lag1(grids, AdjacencyRule::Rook)?,
            )])
        };
        let series = sb_series(
            &s,
            &[WindowPlan::Yearly],
            &expand_regions(s.columns(), false),
            &[AssocMethod::Pearson],
            weights_for,
        )
        .unwrap();
        let values: Vec<f64> = series.entries.iter().map(|e| e.value).collect();
        assert_eq!(values.len(), 12);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd =
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
        for v in &values {
            assert!((v - mean).abs() <= 3.5 * sd.max(1e-12), "outlier {v} vs mean {mean}");
        }
        // no monotone trend: first and second half means stay within noise
        let half = values.len() / 2;
        let m1 = values[..half].iter().sum::<f64>() / half as f64;
        let m2 = values[half..].iter().sum::<f64>() / (values.len() - half) as f64;
        assert!((m1 - m2).abs() <= 3.0 * sd);
    }

    #[test]
    fn regime_change_shows_as_level_shift() {
        use rand_distr::{Distribution, StandardNormal};
        // association jumps from 0.1 to 0.7 at year 10 of 20
        let mut rng = crate::seed::stream(73, "win/regime");
        let (n_years, days, p) = (20, 50, 5);
        let n = n_years * days;
        let mut values = DMatrix::zeros(n, p);
        for i in 0..n {
            let rho: f64 = if i / days < 10 { 0.1 } else { 0.7 };
            let shared: f64 = StandardNormal.sample(&mut rng);
            for j in 0..p {
                let own: f64 = StandardNormal.sample(&mut rng);
                values[(i, j)] = rho.sqrt() * shared + (1.0 - rho).sqrt() * own;
            }
        }
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| {
                let year = 2000 + (i / days) as i32;
                TimeStamp::Day(
                    NaiveDate::from_ymd_opt(year, 1, 1).unwrap()
                        + chrono::Days::new((i % days) as u64),
                )
            })
            .collect();
        let columns: Vec<GridMeta> = (0..p)
            .map(|j| GridMeta::new(format!("g{j}"), 10.0, 70.0 + j as f64, 1))
            .collect();
        let s = StsMatrix::complete(values, time, columns, Label::Trimmed).unwrap();
        let weights_for = |grids: &[GridMeta]| -> Result<RegionWeights> {
            Ok(vec![(
                "lag1".to_string(),
                weights_lag1(grids, AdjacencyRule::Rook)?,
            )])
        };
        let series = sb_series(
            &s,
            &[WindowPlan::Yearly],
            &expand_regions(s.columns(), false),
            &[AssocMethod::Pearson],
            weights_for,
        )
        .unwrap();
        let values: Vec<f64> = series.entries.iter().map(|e| e.value).collect();
        let (a, b) = values.split_at(10);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(b) > mean(a) + 0.2,
            "regime means {:.3} vs {:.3}",
            mean(a),
            mean(b)
        );
    }
}
