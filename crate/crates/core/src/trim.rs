//! Iterative removal of dominant temporal singular components.
//!
//! The null distribution of singular values comes from column-wise
//! independent row shuffles: each permutation replicate destroys temporal
//! alignment and cross-column co-movement while preserving every column's
//! marginal distribution. Significance uses the prefix rule — the largest s
//! with every leading singular value above its per-rank null quantile.
//!
//! Trimming then peels top components `S = D - Σ_{k≤d} λ_k u_k v_kᵀ` one at
//! a time until the maximum column autocorrelation over the configured lag
//! window falls within threshold, capped at s. No centering is applied
//! before the SVD: the raw matrix is trimmed, and correlation estimators
//! center implicitly later.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{acf, gsvd, singular_values_only, svd};
use crate::rmt::nearest_rank_quantile;
use crate::sts::{Label, StsMatrix};

/// Per-rank null quantiles of singular values under column shuffles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvNullModel {
    pub n_perm: usize,
    pub quantile: f64,
    pub thresholds: Vec<f64>,
    pub seed: u64,
}

/// One removed singular component.
#[derive(Debug, Clone)]
pub struct RemovedComponent {
    pub lambda: f64,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

/// Autocorrelation diagnostics at one trim depth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AcfDepthStat {
    pub depth: usize,
    /// max over columns of |ACF(1)|
    pub max_abs_lag1: f64,
    /// max over columns and the lag window of |ACF|
    pub max_abs_window: f64,
}

/// Result of trimming a matrix to some depth.
#[derive(Debug, Clone)]
pub struct TrimResult {
    pub trimmed: StsMatrix,
    pub depth_d: usize,
    /// Significant singular value count, when a null model was consulted.
    pub significant_s: Option<usize>,
    pub removed: Vec<RemovedComponent>,
    pub acf_profile: Vec<AcfDepthStat>,
    /// Share of the total singular value sum removed, in [0, 1].
    pub sv_share_removed: f64,
    /// True when the loop exhausted all significant components without
    /// meeting the ACF criterion.
    pub cap_hit: bool,
}

/// Shuffles each column independently in place, rows decoupled per column.
fn shuffle_columns(values: &DMatrix<f64>, rng: &mut rand_chacha::ChaCha8Rng) -> DMatrix<f64> {
    use rand::seq::SliceRandom;
    let (n, p) = values.shape();
    let mut out = values.clone();
    let mut buffer: Vec<f64> = Vec::with_capacity(n);
    for j in 0..p {
        buffer.clear();
        buffer.extend(out.column(j).iter());
        buffer.shuffle(rng);
        for (i, &v) in buffer.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Empirical per-rank null quantiles of singular values.
///
/// Replicate r draws its RNG from `(seed, r)`, so results are independent of
/// scheduling and bit-identical across runs.
pub fn sv_null_thresholds(
    d: &StsMatrix,
    n_perm: usize,
    quantile: f64,
    seed: u64,
) -> Result<SvNullModel> {
    let values = d.require_complete("sv_null_thresholds")?;
    if n_perm < 2 {
        return Err(Error::Argument {
            name: "n_perm",
            value: n_perm.to_string(),
            range: "[2, inf)".into(),
        });
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Argument {
            name: "quantile",
            value: quantile.to_string(),
            range: "(0, 1)".into(),
        });
    }
    let replicates: Vec<Vec<f64>> = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::seed::stream(seed, &format!("sv-null/rep/{r}"));
            let shuffled = shuffle_columns(values, &mut rng);
            singular_values_only(&shuffled)
        })
        .collect::<Result<_>>()?;
    let ranks = replicates[0].len();
    let mut thresholds = Vec::with_capacity(ranks);
    for k in 0..ranks {
        let mut sample: Vec<f64> = replicates.iter().map(|sv| sv[k]).collect();
        sample.sort_by(|a, b| a.total_cmp(b));
        thresholds.push(nearest_rank_quantile(&sample, quantile));
    }
    Ok(SvNullModel {
        n_perm,
        quantile,
        thresholds,
        seed,
    })
}

/// Largest s such that sv[k] > thresholds[k] for every k < s (prefix rule).
pub fn count_significant(sv: &[f64], null: &SvNullModel) -> Result<usize> {
    if sv.len() != null.thresholds.len() {
        return Err(Error::ShapeMismatch {
            context: "count_significant",
            left: format!("{} singular values", sv.len()),
            right: format!("{} thresholds", null.thresholds.len()),
        });
    }
    let mut s = 0;
    for (v, t) in sv.iter().zip(&null.thresholds) {
        if v > t {
            s += 1;
        } else {
            break;
        }
    }
    Ok(s)
}

/// Max-over-columns |ACF| diagnostics; constant residual columns count as
/// perfectly detrended (zero autocorrelation).
fn acf_stats(values: &DMatrix<f64>, depth: usize, lags: usize) -> AcfDepthStat {
    let p = values.ncols();
    let per_column: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let series: Vec<f64> = values.column(j).iter().copied().collect();
            match acf(&series, lags) {
                Ok(r) => {
                    let lag1 = r[0].abs();
                    let win = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    (lag1, win)
                }
                Err(_) => (0.0, 0.0),
            }
        })
        .collect();
    let max_abs_lag1 = per_column.iter().fold(0.0f64, |m, &(a, _)| m.max(a));
    let max_abs_window = per_column.iter().fold(0.0f64, |m, &(_, b)| m.max(b));
    AcfDepthStat {
        depth,
        max_abs_lag1,
        max_abs_window,
    }
}

fn effective_lags(requested: usize, n: usize) -> usize {
    requested.min(n.saturating_sub(2)).max(1)
}

/// Removes the top `depth` singular components at once.
pub fn trim_to_depth(d: &StsMatrix, depth: usize) -> Result<TrimResult> {
    let values = d.require_complete("trim_to_depth")?;
    let max_depth = values.nrows().min(values.ncols());
    if depth > max_depth {
        return Err(Error::Argument {
            name: "depth",
            value: depth.to_string(),
            range: format!("[0, {max_depth}]"),
        });
    }
    let factors = svd(values)?;
    let sv_total: f64 = factors.singular_values.iter().sum();
    let mut current = values.clone();
    let mut removed = Vec::with_capacity(depth);
    for k in 0..depth {
        let lambda = factors.singular_values[k];
        let left = factors.left.column(k).into_owned();
        let right = factors.right.column(k).into_owned();
        current.ger(-lambda, &left, &right, 1.0);
        removed.push(RemovedComponent {
            lambda,
            left,
            right,
        });
    }
    let lags = effective_lags(30, values.nrows());
    let profile = vec![acf_stats(&current, depth, lags)];
    let removed_sum: f64 = removed.iter().map(|c| c.lambda).sum();
    Ok(TrimResult {
        trimmed: d.with_values(current, Label::Trimmed)?,
        depth_d: depth,
        significant_s: None,
        removed,
        acf_profile: profile,
        sv_share_removed: if sv_total > 0.0 { removed_sum / sv_total } else { 0.0 },
        cap_hit: false,
    })
}

/// Iterative trimming with the ACF stopping criterion.
///
/// Depth 0 is evaluated first; otherwise components are removed one at a
/// time up to the significant count s. If the criterion is never met the
/// result reports `cap_hit` and depth s.
pub fn algorithm1(
    d: &StsMatrix,
    acf_threshold: f64,
    acf_lags: usize,
    null: &SvNullModel,
) -> Result<TrimResult> {
    let values = d.require_complete("algorithm1")?;
    if !(acf_threshold > 0.0) {
        return Err(Error::Argument {
            name: "acf_threshold",
            value: acf_threshold.to_string(),
            range: "(0, inf)".into(),
        });
    }
    let factors = svd(values)?;
    let s = count_significant(&factors.singular_values, null)?;
    let sv_total: f64 = factors.singular_values.iter().sum();
    let lags = effective_lags(acf_lags, values.nrows());

    let mut current = values.clone();
    let mut profile = Vec::new();
    let mut removed = Vec::new();

    let stat0 = acf_stats(&current, 0, lags);
    profile.push(stat0);
    let mut depth = 0;
    let mut met = stat0.max_abs_window <= acf_threshold;
    if !met {
        for j in 1..=s {
            let k = j - 1;
            let lambda = factors.singular_values[k];
            let left = factors.left.column(k).into_owned();
            let right = factors.right.column(k).into_owned();
            current.ger(-lambda, &left, &right, 1.0);
            removed.push(RemovedComponent {
                lambda,
                left,
                right,
            });
            let stat = acf_stats(&current, j, lags);
            profile.push(stat);
            depth = j;
            if stat.max_abs_window <= acf_threshold {
                met = true;
                break;
            }
        }
    }
    let removed_sum: f64 = removed.iter().map(|c| c.lambda).sum();
    Ok(TrimResult {
        trimmed: d.with_values(current, Label::Trimmed)?,
        depth_d: depth,
        significant_s: Some(s),
        removed,
        acf_profile: profile,
        sv_share_removed: if sv_total > 0.0 { removed_sum / sv_total } else { 0.0 },
        cap_hit: !met,
    })
}

/// Per-rank GSV retention report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsvdRetentionReport {
    /// Observed generalized singular values of (d, s), descending.
    pub observed: Vec<f64>,
    /// Per-rank 2.5% null quantile.
    pub null_lo: Vec<f64>,
    /// Per-rank 97.5% null quantile.
    pub null_hi: Vec<f64>,
    /// Fraction of observed values inside their null band.
    pub fraction_inside: f64,
    pub n_perm: usize,
    pub seed: u64,
}

/// Compares observed GSVs of (d, s) against a column-shuffle null.
///
/// The null reshuffles d column-wise (s stays fixed) and recomputes the
/// GSVs; ranks whose observed value escapes the central 95% band carry
/// structure that shuffling destroys.
pub fn gsvd_retention_check(
    d: &StsMatrix,
    s: &StsMatrix,
    n_perm: usize,
    seed: u64,
) -> Result<GsvdRetentionReport> {
    let d_values = d.require_complete("gsvd_retention_check")?;
    let s_values = s.require_complete("gsvd_retention_check")?;
    if n_perm < 2 {
        return Err(Error::Argument {
            name: "n_perm",
            value: n_perm.to_string(),
            range: "[2, inf)".into(),
        });
    }
    let observed = gsvd(d_values, s_values)?.generalized_values;
    let replicates: Vec<Vec<f64>> = (0..n_perm)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::seed::stream(seed, &format!("gsvd-null/rep/{r}"));
            let shuffled = shuffle_columns(d_values, &mut rng);
            gsvd(&shuffled, s_values).map(|f| f.generalized_values)
        })
        .collect::<Result<_>>()?;
    let ranks = observed.len();
    let mut null_lo = Vec::with_capacity(ranks);
    let mut null_hi = Vec::with_capacity(ranks);
    for k in 0..ranks {
        let mut sample: Vec<f64> = replicates.iter().map(|g| g[k]).collect();
        sample.sort_by(|a, b| a.total_cmp(b));
        null_lo.push(nearest_rank_quantile(&sample, 0.025));
        null_hi.push(nearest_rank_quantile(&sample, 0.975));
    }
    let inside = observed
        .iter()
        .zip(null_lo.iter().zip(&null_hi))
        .filter(|(o, (lo, hi))| **o >= **lo && **o <= **hi)
        .count();
    Ok(GsvdRetentionReport {
        observed,
        null_lo,
        null_hi,
        fraction_inside: inside as f64 / ranks as f64,
        n_perm,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;
    use crate::sts::TimeStamp;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, StandardNormal};

    fn sts_from(values: DMatrix<f64>) -> StsMatrix {
        let (n, p) = values.shape();
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| {
                TimeStamp::Day(NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Days::new(i as u64))
            })
            .collect();
        let columns: Vec<GridMeta> = (0..p)
            .map(|j| GridMeta::new(format!("g{j}"), 10.0, 70.0 + j as f64, 1))
            .collect();
        StsMatrix::complete(values, time, columns, Label::Reordered).unwrap()
    }

    fn noise(n: usize, p: usize, tag: &str) -> DMatrix<f64> {
        let mut rng = crate::seed::stream(9, tag);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Smooth orthonormal temporal trends plus iid noise, with the planted
    /// singular values `spikes` expressed as multiples of the expected top
    /// noise singular value.
    fn planted(n: usize, p: usize, spikes: &[f64], tag: &str) -> DMatrix<f64> {
        let mut x = noise(n, p, tag);
        let noise_top = (n as f64).sqrt() * (1.0 + (p as f64 / n as f64).sqrt());
        for (k, &mult) in spikes.iter().enumerate() {
            let freq = (k + 1) as f64;
            let mut u = DVector::from_fn(n, |i, _| {
                (2.0 * std::f64::consts::PI * freq * i as f64 / n as f64 + 0.3 * k as f64).sin()
            });
            u /= u.norm();
            let mut v = DVector::from_fn(p, |j, _| ((j + 1) as f64 * (k + 2) as f64 * 0.7).cos());
            v /= v.norm();
            x.ger(mult * noise_top, &u, &v, 1.0);
        }
        x
    }

    #[test]
    fn null_thresholds_are_deterministic_and_seed_sensitive() {
        let d = sts_from(noise(60, 6, "trim/det"));
        let a = sv_null_thresholds(&d, 20, 0.95, 42).unwrap();
        let b = sv_null_thresholds(&d, 20, 0.95, 42).unwrap();
        assert_eq!(a.thresholds, b.thresholds);
        let c = sv_null_thresholds(&d, 20, 0.95, 43).unwrap();
        assert_ne!(a.thresholds, c.thresholds);
        // non-increasing in rank
        for w in a.thresholds.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn null_calibration_on_pure_noise() {
        // marginal exceedances average about (1 - q) · min(n, p)
        let mut exceed = 0usize;
        let datasets = 40;
        for s in 0..datasets {
            let d = sts_from(noise(60, 6, &format!("trim/cal/{s}")));
            let null = sv_null_thresholds(&d, 40, 0.95, 1000 + s).unwrap();
            let sv = singular_values_only(d.values()).unwrap();
            exceed += sv
                .iter()
                .zip(&null.thresholds)
                .filter(|(v, t)| v > t)
                .count();
        }
        let mean = exceed as f64 / datasets as f64;
        // expectation 0.3 under exchangeability; wide band for MC noise
        assert!(mean < 1.2, "mean exceedances {mean}");
    }

    #[test]
    fn count_significant_prefix_rule() {
        let null = SvNullModel {
            n_perm: 2,
            quantile: 0.95,
            thresholds: vec![5.0, 4.0, 3.0, 2.0],
            seed: 0,
        };
        assert_eq!(count_significant(&[4.0, 3.0, 2.0, 1.0], &null).unwrap(), 0);
        assert_eq!(count_significant(&[6.0, 5.0, 4.0, 3.0], &null).unwrap(), 4);
        // gap at rank 2 stops the prefix even though rank 3 exceeds
        assert_eq!(count_significant(&[6.0, 3.5, 3.5, 1.0], &null).unwrap(), 1);
        assert!(count_significant(&[1.0], &null).is_err());
    }

    #[test]
    fn planted_rank_three_is_recovered() {
        let d = sts_from(planted(400, 20, &[8.0, 6.5, 5.0], "trim/plant3"));
        let null = sv_null_thresholds(&d, 40, 0.95, 7).unwrap();
        let sv = singular_values_only(d.values()).unwrap();
        assert_eq!(count_significant(&sv, &null).unwrap(), 3);
    }

    #[test]
    fn trim_depth_zero_is_identity_and_rank_one_vanishes() {
        let d = sts_from(noise(30, 4, "trim/zero"));
        let r = trim_to_depth(&d, 0).unwrap();
        assert_eq!(r.trimmed.values(), d.values());
        assert_eq!(r.sv_share_removed, 0.0);
        assert_eq!(r.trimmed.label, Label::Trimmed);

        let u = DVector::from_fn(30, |i, _| (i as f64 * 0.2).sin());
        let v = DVector::from_fn(4, |j, _| 1.0 + j as f64);
        let rank1 = sts_from(&u * v.transpose());
        let r = trim_to_depth(&rank1, 1).unwrap();
        assert!(r.trimmed.values().amax() <= 1e-10 * rank1.values().amax());
        assert!((r.sv_share_removed - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn trim_reconstruction_and_orthogonality() {
        let d = sts_from(noise(40, 7, "trim/recon"));
        for depth in [1, 3, 7] {
            let r = trim_to_depth(&d, depth).unwrap();
            let mut rebuilt = r.trimmed.values().clone();
            for c in &r.removed {
                rebuilt.ger(c.lambda, &c.left, &c.right, 1.0);
            }
            let err = (&rebuilt - d.values()).norm();
            assert!(err <= 1e-10 * d.values().norm(), "depth {depth}: {err}");
            // removed left vectors are orthogonal to the residual
            for c in &r.removed {
                let proj = (r.trimmed.values().transpose() * &c.left).norm();
                assert!(proj <= 1e-8, "depth {depth}: residual projection {proj}");
            }
        }
    }

    #[test]
    fn sv_share_is_monotone_in_depth() {
        let d = sts_from(noise(40, 6, "trim/share"));
        let mut last = 0.0;
        for depth in 0..=6 {
            let r = trim_to_depth(&d, depth).unwrap();
            assert!(r.sv_share_removed >= last - 1e-15);
            last = r.sv_share_removed;
        }
        assert!(matches!(
            trim_to_depth(&d, 7),
            Err(Error::Argument { .. })
        ));
    }

    #[test]
    fn algorithm1_stops_immediately_on_white_noise() {
        let d = sts_from(noise(900, 5, "trim/white"));
        let null = sv_null_thresholds(&d, 30, 0.95, 11).unwrap();
        let r = algorithm1(&d, 0.1, 10, &null).unwrap();
        assert!(r.depth_d <= 1, "depth {}", r.depth_d);
        assert!(!r.cap_hit);
    }

    #[test]
    fn algorithm1_recovers_planted_common_trends() {
        // two smooth shared trends dominate, iid noise underneath
        let d = sts_from(planted(800, 12, &[9.0, 7.0], "trim/plant2"));
        let null = sv_null_thresholds(&d, 40, 0.95, 13).unwrap();
        let r = algorithm1(&d, 0.1, 5, &null).unwrap();
        assert!(
            (1..=3).contains(&r.depth_d),
            "depth {} profile {:?}",
            r.depth_d,
            r.acf_profile
        );
        assert!(!r.cap_hit);
        assert_eq!(r.acf_profile.len(), r.depth_d + 1);
        assert!(r.acf_profile.last().unwrap().max_abs_window <= 0.1);
        assert!(r.significant_s.unwrap() >= 2);
    }

    #[test]
    fn gsvd_retention_self_pair_is_unit() {
        let d = sts_from(noise(50, 5, "trim/gsvd-self"));
        let report = gsvd_retention_check(&d, &d, 20, 3).unwrap();
        for &g in &report.observed {
            assert!((g - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn gsvd_retention_noise_pair_sits_inside_band() {
        let d = sts_from(noise(120, 5, "trim/gsvd-noise-a"));
        let s = sts_from(noise(120, 5, "trim/gsvd-noise-b"));
        let report = gsvd_retention_check(&d, &s, 60, 5).unwrap();
        assert!(
            report.fraction_inside >= 0.9,
            "fraction inside {}",
            report.fraction_inside
        );
    }

    #[test]
    fn gsvd_retention_flags_shared_spatial_structure() {
        // d and its trimmed version share column covariance that shuffling
        // destroys, so leading ranks escape the null band
        let d = sts_from(planted(300, 8, &[7.0], "trim/gsvd-struct"));
        let trimmed = trim_to_depth(&d, 1).unwrap().trimmed;
        let report = gsvd_retention_check(&d, &trimmed, 40, 17).unwrap();
        assert!(
            report.fraction_inside < 1.0,
            "expected at least one flagged rank: {report:?}"
        );
    }
}
