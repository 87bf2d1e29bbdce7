//! Dense numerical kernels.
//!
//! SVD and symmetric eigendecomposition canonicalize factor order to
//! non-increasing singular/eigen values. The GSVD of a tall full-rank pair
//! (a, b) sharing p columns is built from the QR factorization of the
//! stacked matrix and a CS decomposition of the split orthonormal factor:
//! `a = Uₐ C Xᵀ`, `b = U_b S Xᵀ` with `CᵀC + SᵀS = I`. The remaining kernels
//! are the sample autocorrelation function, joint trend-plus-seasonal
//! detrending, and Pearson correlation matrices with a pairwise-complete
//! convention for masked data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dependence::{AssocMethod, AssociationMatrix};
use crate::error::{Error, Result};
use crate::sts::{Granularity, Label, StsMatrix, TimeStamp};

/// Thin SVD with non-increasing singular values.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub singular_values: Vec<f64>,
    /// n×r, column-orthonormal.
    pub left: DMatrix<f64>,
    /// p×r, column-orthonormal.
    pub right: DMatrix<f64>,
}

impl SvdFactors {
    /// `left · diag(σ) · rightᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.singular_values.len();
        let mut scaled = self.left.clone();
        for k in 0..r {
            scaled.column_mut(k).scale_mut(self.singular_values[k]);
        }
        &scaled * self.right.transpose()
    }
}

/// Spectral factorization with non-increasing eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenFactors {
    pub eigenvalues: Vec<f64>,
    /// p×p orthonormal, columns aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

/// GSVD of a pair sharing p columns: `a = Uₐ C Xᵀ`, `b = U_b S Xᵀ`.
#[derive(Debug, Clone)]
pub struct GsvdFactors {
    /// γ_i = c_i / s_i, non-increasing; `f64::INFINITY` where s_i = 0.
    pub generalized_values: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub left_a: DMatrix<f64>,
    pub left_b: DMatrix<f64>,
    /// p×p invertible shared right factor X.
    pub shared_right_factor: DMatrix<f64>,
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Thin SVD, factors sorted by descending singular value.
pub fn svd(x: &DMatrix<f64>) -> Result<SvdFactors> {
    check_finite(x)?;
    let f = x.clone().svd(true, true);
    let u = f.u.expect("svd requested u");
    let v_t = f.v_t.expect("svd requested v_t");
    let sv: Vec<f64> = f.singular_values.iter().copied().collect();
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let r = sv.len();
    let mut left = DMatrix::zeros(u.nrows(), r);
    let mut right = DMatrix::zeros(v_t.ncols(), r);
    let mut singular_values = Vec::with_capacity(r);
    for (k, &src) in idx.iter().enumerate() {
        left.set_column(k, &u.column(src));
        right.set_column(k, &v_t.row(src).transpose());
        singular_values.push(sv[src]);
    }
    Ok(SvdFactors {
        singular_values,
        left,
        right,
    })
}

/// Singular values only, descending.
///
/// Tall matrices go through the p×p Gram matrix, which is much faster when
/// n ≫ p and accurate to roughly the square root of machine precision in the
/// relative sense — ample for permutation-null thresholds.
pub fn singular_values_only(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(x)?;
    let (n, p) = x.shape();
    let mut sv: Vec<f64> = if n >= 2 * p {
        let gram = x.tr_mul(x);
        let eig = nalgebra::SymmetricEigen::new(gram);
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect()
    } else {
        x.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Relative symmetry tolerance accepted by `eig_sym`.
const SYM_TOL: f64 = 1e-10;

/// Symmetric eigendecomposition, eigenvalues non-increasing.
pub fn eig_sym(r: &DMatrix<f64>) -> Result<EigenFactors> {
    check_finite(r)?;
    if r.nrows() != r.ncols() {
        return Err(Error::ShapeMismatch {
            context: "eig_sym",
            left: format!("{} rows", r.nrows()),
            right: format!("{} cols", r.ncols()),
        });
    }
    let scale = r.amax().max(1.0);
    let mut max_dev: f64 = 0.0;
    for j in 0..r.ncols() {
        for i in 0..j {
            max_dev = max_dev.max((r[(i, j)] - r[(j, i)]).abs());
        }
    }
    if max_dev > SYM_TOL * scale {
        return Err(Error::Asymmetric { max_dev });
    }
    // Symmetrize before factoring so tiny asymmetries cannot leak through.
    let sym = (r + r.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let p = vals.len();
    let mut eigenvalues = Vec::with_capacity(p);
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (k, &src) in idx.iter().enumerate() {
        eigenvalues.push(vals[src]);
        eigenvectors.set_column(k, &eig.eigenvectors.column(src));
    }
    Ok(EigenFactors {
        eigenvalues,
        eigenvectors,
    })
}

/// Sine magnitude below which a generalized value is reported infinite.
const GSVD_S_TOL: f64 = 1e-10;

/// GSVD of a tall full-rank pair.
///
/// Requires p ≤ n₁, p ≤ n₂ and a full-column-rank stacked matrix `[a; b]`,
/// which is the regime where γ_i = c_i/s_i is well defined.
pub fn gsvd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GsvdFactors> {
    check_finite(a)?;
    check_finite(b)?;
    let p = a.ncols();
    if b.ncols() != p {
        return Err(Error::ShapeMismatch {
            context: "gsvd",
            left: format!("{} columns", p),
            right: format!("{} columns", b.ncols()),
        });
    }
    if p > a.nrows() || p > b.nrows() {
        return Err(Error::Aspect {
            p,
            n: a.nrows().min(b.nrows()),
        });
    }
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut stacked = DMatrix::zeros(n1 + n2, p);
    stacked.view_mut((0, 0), (n1, p)).copy_from(a);
    stacked.view_mut((n1, 0), (n2, p)).copy_from(b);

    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    for i in 0..p {
        if r[(i, i)].abs() <= 1e-10 * diag_max.max(1e-300) {
            return Err(Error::RankDeficient {
                index: i,
                value: r[(i, i)].abs(),
            });
        }
    }
    let q1 = q.view((0, 0), (n1, p)).into_owned();
    let q2 = q.view((n1, 0), (n2, p)).into_owned();

    // CS decomposition: SVD of Q1 gives the cosines; Q2 shares the right
    // factor W with sines sqrt(1 - c²), computed directly as column norms.
    let f = svd(&q1)?;
    let w = f.right.clone(); // p×p
    let c: Vec<f64> = f.singular_values.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let q2w = &q2 * &w;
    let s: Vec<f64> = (0..p).map(|k| q2w.column(k).norm()).collect();

    let mut left_b = DMatrix::zeros(n2, p);
    let mut deferred = Vec::new();
    for k in 0..p {
        if s[k] > GSVD_S_TOL {
            left_b.set_column(k, &(q2w.column(k) / s[k]));
        } else {
            deferred.push(k);
        }
    }
    if !deferred.is_empty() {
        complete_orthonormal(&mut left_b, &deferred);
    }

    let generalized_values: Vec<f64> = c
        .iter()
        .zip(&s)
        .map(|(&ci, &si)| if si <= GSVD_S_TOL { f64::INFINITY } else { ci / si })
        .collect();

    // X = Rᵀ W so that a = Q1 R = Uₐ C (Rᵀ W)ᵀ.
    let shared_right_factor = r.transpose() * &w;
    Ok(GsvdFactors {
        generalized_values,
        c,
        s,
        left_a: f.left,
        left_b,
        shared_right_factor,
    })
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_orthonormal(m: &mut DMatrix<f64>, empty: &[usize]) {
    let n = m.nrows();
    let filled: Vec<usize> = (0..m.ncols()).filter(|k| !empty.contains(k)).collect();
    let mut done: Vec<usize> = filled;
    'next: for &target in empty {
        for cand in 0..n {
            let mut v = DVector::zeros(n);
            v[cand] = 1.0;
            for &k in &done {
                let proj = m.column(k).dot(&v);
                v -= m.column(k) * proj;
            }
            let norm = v.norm();
            if norm > 0.5 {
                m.set_column(target, &(v / norm));
                done.push(target);
                continue 'next;
            }
        }
        // n ≥ p guarantees a candidate exists
        unreachable!("orthonormal completion exhausted the canonical basis");
    }
}

/// Sample autocorrelation at lags 1..=max_lag, biased (divide-by-n) form:
/// r_k = Σ (x_t − x̄)(x_{t+k} − x̄) / Σ (x_t − x̄)², so |r_k| ≤ 1.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < max_lag + 2 {
        return Err(Error::InsufficientData {
            context: "acf",
            needed: max_lag + 2,
            got: n,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|&x| (x - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance {
            context: "acf",
            column: "series".into(),
        });
    }
    let mut out = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num: f64 = (0..n - k)
            .map(|t| (series[t] - mean) * (series[t + k] - mean))
            .sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// Season key for a time stamp: pooled day-of-year for daily data (Feb 29
/// shares day 59 with Feb 28), month-of-year for monthly data.
fn season_key(t: &TimeStamp) -> usize {
    match t {
        TimeStamp::Day(d) => {
            use chrono::Datelike;
            let doy = d.ordinal() as usize;
            if d.leap_year() {
                match doy.cmp(&60) {
                    std::cmp::Ordering::Less => doy,
                    std::cmp::Ordering::Equal => 59,
                    std::cmp::Ordering::Greater => doy - 1,
                }
            } else {
                doy
            }
        }
        TimeStamp::Month { month, .. } => *month as usize,
        TimeStamp::Year(_) => 0,
    }
}

/// Removes a linear time trend and per-season levels from every column.
///
/// Trend and seasonal levels are fitted jointly (the trend slope comes from
/// within-season centered regressors), so a signal that is purely seasonal
/// or purely linear leaves an exactly zero residual. Masked entries stay
/// masked; a column constant over its observed rows is an error.
pub fn classical_detrend(x: &StsMatrix) -> Result<StsMatrix> {
    if x.granularity() == Granularity::Yearly {
        return Err(Error::Config(
            "classical detrending requires a daily or monthly time index".into(),
        ));
    }
    let n = x.n();
    let seasons: Vec<usize> = x.time().iter().map(season_key).collect();
    let n_seasons = seasons.iter().max().map_or(0, |m| m + 1);

    let residual_columns: Vec<Result<Vec<f64>>> = (0..x.p())
        .into_par_iter()
        .map(|j| {
            let observed: Vec<(usize, f64)> = x.observed_column(j).collect();
            let first = observed.first().map(|&(_, v)| v);
            if observed.is_empty() || observed.iter().all(|&(_, v)| Some(v) == first) {
                return Err(Error::ZeroVariance {
                    context: "classical_detrend",
                    column: x.columns()[j].grid_id.clone(),
                });
            }
            // Per-season means of the time regressor and the data.
            let mut count = vec![0usize; n_seasons];
            let mut t_sum = vec![0.0; n_seasons];
            let mut x_sum = vec![0.0; n_seasons];
            for &(i, v) in &observed {
                let s = seasons[i];
                count[s] += 1;
                t_sum[s] += i as f64;
                x_sum[s] += v;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(i, v) in &observed {
                let s = seasons[i];
                let tc = i as f64 - t_sum[s] / count[s] as f64;
                let xc = v - x_sum[s] / count[s] as f64;
                num += tc * xc;
                den += tc * tc;
            }
            let slope = if den > 0.0 { num / den } else { 0.0 };
            // Seasonal levels of the detrended series.
            let mut level = vec![0.0; n_seasons];
            for &(i, v) in &observed {
                level[seasons[i]] += v - slope * i as f64;
            }
            for s in 0..n_seasons {
                if count[s] > 0 {
                    level[s] /= count[s] as f64;
                }
            }
            let mut column = vec![0.0; n];
            for &(i, v) in &observed {
                column[i] = v - slope * i as f64 - level[seasons[i]];
            }
            Ok(column)
        })
        .collect();

    let mut values = DMatrix::zeros(n, x.p());
    for (j, col) in residual_columns.into_iter().enumerate() {
        let col = col?;
        for i in 0..n {
            values[(i, j)] = col[i];
        }
    }
    StsMatrix::new(
        values,
        x.missing().clone(),
        x.time().to_vec(),
        x.columns().to_vec(),
        Label::Detrended,
    )
}

/// Minimum shared observations for a pairwise-complete correlation.
const MIN_PAIR_OVERLAP: usize = 3;

/// Pearson correlation matrix with pairwise-complete-observation handling.
///
/// Complete data takes a centered-Gram fast path; masked data recomputes
/// per-pair statistics over the rows both columns observe.
pub fn pearson_matrix(x: &StsMatrix) -> Result<AssociationMatrix> {
    for j in 0..x.p() {
        let observed: Vec<f64> = x.observed_column(j).map(|(_, v)| v).collect();
        let first = observed.first().copied();
        if observed.is_empty() || observed.iter().all(|&v| Some(v) == first) {
            return Err(Error::ZeroVariance {
                context: "pearson_matrix",
                column: x.columns()[j].grid_id.clone(),
            });
        }
    }
    let p = x.p();
    let mut m = DMatrix::zeros(p, p);
    if x.is_complete() {
        let n = x.n();
        let mut centered = x.values().clone();
        for j in 0..p {
            let mean = centered.column(j).sum() / n as f64;
            centered.column_mut(j).add_scalar_mut(-mean);
        }
        let gram = centered.tr_mul(&centered);
        for i in 0..p {
            for j in (i + 1)..p {
                let denom = (gram[(i, i)] * gram[(j, j)]).sqrt();
                let r = (gram[(i, j)] / denom).clamp(-1.0, 1.0);
                m[(i, j)] = r;
                m[(j, i)] = r;
            }
            m[(i, i)] = 1.0;
        }
    } else {
        let pairs: Vec<(usize, usize)> = (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .collect();
        let computed: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut sx = 0.0;
                let mut sy = 0.0;
                let mut count = 0usize;
                for row in 0..x.n() {
                    if x.is_observed(row, i) && x.is_observed(row, j) {
                        sx += x.values()[(row, i)];
                        sy += x.values()[(row, j)];
                        count += 1;
                    }
                }
                if count < MIN_PAIR_OVERLAP {
                    return Err(Error::InsufficientOverlap {
                        a: x.columns()[i].grid_id.clone(),
                        b: x.columns()[j].grid_id.clone(),
                        got: count,
                        needed: MIN_PAIR_OVERLAP,
                    });
                }
                let (mx, my) = (sx / count as f64, sy / count as f64);
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for row in 0..x.n() {
                    if x.is_observed(row, i) && x.is_observed(row, j) {
                        let dx = x.values()[(row, i)] - mx;
                        let dy = x.values()[(row, j)] - my;
                        sxx += dx * dx;
                        syy += dy * dy;
                        sxy += dx * dy;
                    }
                }
                if sxx == 0.0 || syy == 0.0 {
                    let col = if sxx == 0.0 { i } else { j };
                    return Err(Error::ZeroVariance {
                        context: "pearson_matrix (pair overlap)",
                        column: x.columns()[col].grid_id.clone(),
                    });
                }
                Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
            })
            .collect();
        for (&(i, j), r) in pairs.iter().zip(computed) {
            let r = r?;
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
        for i in 0..p {
            m[(i, i)] = 1.0;
        }
    }
    AssociationMatrix::new(m, AssocMethod::Pearson, x.columns().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, p: usize, tag: &str) -> DMatrix<f64> {
        let mut rng = crate::seed::stream(3, tag);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    fn daily_sts(columns: Vec<Vec<f64>>, start: NaiveDate) -> StsMatrix {
        let n = columns[0].len();
        let p = columns.len();
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| TimeStamp::Day(start + chrono::Days::new(i as u64)))
            .collect();
        let metas: Vec<GridMeta> = (0..p)
            .map(|j| GridMeta::new(format!("g{j}"), 10.0 + j as f64, 70.0, 1))
            .collect();
        let mut values = DMatrix::zeros(n, p);
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        StsMatrix::complete(values, time, metas, Label::Reordered).unwrap()
    }

    #[test]
    fn svd_of_identity_and_diagonal() {
        let f = svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let f = svd(&d).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn svd_reconstructs_random_input_with_orthonormal_factors() {
        let x = random_matrix(20, 5, "linalg/svd20x5");
        let f = svd(&x).unwrap();
        let err = (&x - f.reconstruct()).norm() / x.norm();
        assert!(err <= 1e-10, "reconstruction error {err}");
        let utu = f.left.tr_mul(&f.left);
        let vtv = f.right.tr_mul(&f.right);
        assert!((utu - DMatrix::identity(5, 5)).amax() <= 1e-10);
        assert!((vtv - DMatrix::identity(5, 5)).amax() <= 1e-10);
        for w in f.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn singular_values_only_agrees_with_full_svd() {
        let x = random_matrix(60, 7, "linalg/svo");
        let fast = singular_values_only(&x).unwrap();
        let full = svd(&x).unwrap().singular_values;
        for (a, b) in fast.iter().zip(&full) {
            assert_relative_eq!(a, b, max_relative = 1e-7);
        }
    }

    #[test]
    fn svd_rejects_non_finite_input() {
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&x), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn eig_sym_closed_forms() {
        let f = eig_sym(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.eigenvalues, vec![1.0; 4]);

        let rho = 0.3;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let f = eig_sym(&m).unwrap();
        assert_relative_eq!(f.eigenvalues[0], 1.0 + rho, epsilon = 1e-12);
        assert_relative_eq!(f.eigenvalues[1], 1.0 - rho, epsilon = 1e-12);

        // equicorrelation: top eigenvalue 1 + (p-1)ρ
        let p = 5;
        let rho = 0.5;
        let m = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
        let f = eig_sym(&m).unwrap();
        assert_relative_eq!(f.eigenvalues[0], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn eig_sym_reconstructs_and_rejects_asymmetry() {
        let x = random_matrix(6, 6, "linalg/eig6");
        let sym = &x + x.transpose();
        let f = eig_sym(&sym).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(f.eigenvalues.clone()));
        let rebuilt = &f.eigenvectors * lam * f.eigenvectors.transpose();
        assert!((&sym - rebuilt).norm() <= 1e-8 * sym.norm());

        let mut bad = sym.clone();
        bad[(0, 1)] += 1e-3;
        assert!(matches!(eig_sym(&bad), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn gsvd_of_equal_pair_gives_unit_values() {
        let a = random_matrix(12, 4, "linalg/gsvd-eq");
        let f = gsvd(&a, &a).unwrap();
        for &g in &f.generalized_values {
            assert_relative_eq!(g, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn gsvd_against_identity_reduces_to_svd() {
        let a = random_matrix(10, 3, "linalg/gsvd-id");
        let f = gsvd(&a, &DMatrix::identity(3, 3)).unwrap();
        let sv = svd(&a).unwrap().singular_values;
        for (g, s) in f.generalized_values.iter().zip(&sv) {
            assert_relative_eq!(g, s, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn gsvd_reconstructs_both_matrices() {
        let a = random_matrix(10, 3, "linalg/gsvd-a");
        let b = random_matrix(8, 3, "linalg/gsvd-b");
        let f = gsvd(&a, &b).unwrap();
        let p = 3;
        let xt = f.shared_right_factor.transpose();
        let mut ca = f.left_a.clone();
        let mut sb = f.left_b.clone();
        for k in 0..p {
            ca.column_mut(k).scale_mut(f.c[k]);
            sb.column_mut(k).scale_mut(f.s[k]);
        }
        assert!((&a - &ca * &xt).norm() <= 1e-10 * a.norm().max(1.0));
        assert!((&b - &sb * &xt).norm() <= 1e-10 * b.norm().max(1.0));
        for k in 0..p {
            assert_relative_eq!(f.c[k] * f.c[k] + f.s[k] * f.s[k], 1.0, epsilon = 1e-10);
        }
        // left factors column-orthonormal
        assert!((f.left_a.tr_mul(&f.left_a) - DMatrix::identity(p, p)).amax() <= 1e-9);
        assert!((f.left_b.tr_mul(&f.left_b) - DMatrix::identity(p, p)).amax() <= 1e-9);
    }

    #[test]
    fn gsvd_rejects_rank_deficient_pair() {
        // second column is a copy of the first in both matrices
        let mut a = random_matrix(6, 3, "linalg/gsvd-rank");
        let mut b = random_matrix(6, 3, "linalg/gsvd-rank-b");
        let ca = a.column(0).into_owned();
        a.set_column(1, &ca);
        let cb = b.column(0).into_owned();
        b.set_column(1, &cb);
        assert!(matches!(gsvd(&a, &b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn acf_closed_form_cases() {
        // strictly alternating series: r1 = -(n-1)/n
        let n = 1000;
        let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&alt, 1).unwrap();
        assert!((r[0] + 0.999).abs() <= 0.001, "r1 = {}", r[0]);
        assert!(r[0] > -1.0 && r[0] <= -0.9);

        // linear ramp
        let ramp: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert!(acf(&ramp, 1).unwrap()[0] > 0.99);

        // iid noise
        let mut rng = crate::seed::stream(5, "linalg/acf-iid");
        let noise: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(acf(&noise, 1).unwrap()[0].abs() < 0.03);
    }

    #[test]
    fn acf_rejects_constant_and_short_series() {
        assert!(matches!(
            acf(&[2.0; 50], 3),
            Err(Error::ZeroVariance { .. })
        ));
        assert!(matches!(
            acf(&[1.0, 2.0, 3.0], 2),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn detrend_kills_pure_ramp() {
        let col: Vec<f64> = (0..730).map(|i| 3.0 + 0.01 * i as f64).collect();
        let x = daily_sts(vec![col], NaiveDate::from_ymd_opt(2001, 1, 1).unwrap());
        let t = classical_detrend(&x).unwrap();
        assert!(t.values().amax() <= 1e-10);
        assert_eq!(t.label, Label::Detrended);
    }

    #[test]
    fn detrend_absorbs_exact_annual_cycle() {
        // two non-leap years, value depends only on day-of-year
        let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let col: Vec<f64> = (0..730)
            .map(|i| {
                let doy = (i % 365) as f64;
                (2.0 * std::f64::consts::PI * doy / 365.0).sin() * 4.0 + 10.0
            })
            .collect();
        let x = daily_sts(vec![col], start);
        let t = classical_detrend(&x).unwrap();
        assert!(t.values().amax() < 1e-8, "max residual {}", t.values().amax());
    }

    #[test]
    fn detrend_pools_leap_day_with_day_59() {
        // 2003 (non-leap) + 2004 (leap): seasonal signal keyed by pooled
        // day-of-year detrends to ~0 even across the leap boundary.
        let start = NaiveDate::from_ymd_opt(2003, 1, 1).unwrap();
        let n = 365 + 366;
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let d = start + chrono::Days::new(i as u64);
                let key = season_key(&TimeStamp::Day(d)) as f64;
                (key * 0.017).cos() * 5.0
            })
            .collect();
        let x = daily_sts(vec![col], start);
        let t = classical_detrend(&x).unwrap();
        assert!(t.values().amax() < 1e-8, "max residual {}", t.values().amax());
    }

    #[test]
    fn detrend_reduces_autocorrelation_of_synthetic_mix() {
        let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let mut rng = crate::seed::stream(17, "linalg/detrend-mix");
        let n = 365 * 4;
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let doy = (i % 365) as f64;
                let seasonal = (2.0 * std::f64::consts::PI * doy / 365.0).sin() * 6.0;
                let trend = 0.004 * i as f64;
                let noise: f64 = StandardNormal.sample(&mut rng);
                seasonal + trend + noise
            })
            .collect();
        let x = daily_sts(vec![col], start);
        let t = classical_detrend(&x).unwrap();
        let series: Vec<f64> = (0..t.n()).map(|i| t.values()[(i, 0)]).collect();
        let r1 = acf(&series, 1).unwrap()[0];
        assert!(r1.abs() < 0.2, "residual r1 = {r1}");
    }

    #[test]
    fn detrend_names_constant_column() {
        let x = daily_sts(
            vec![vec![5.0; 40], (0..40).map(|i| i as f64).collect()],
            NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(),
        );
        match classical_detrend(&x) {
            Err(Error::ZeroVariance { column, .. }) => assert_eq!(column, "g0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pearson_identical_and_negated_columns() {
        let base: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let neg: Vec<f64> = base.iter().map(|v| -v).collect();
        let x = daily_sts(
            vec![base.clone(), base.clone(), neg],
            NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(),
        );
        let r = pearson_matrix(&x).unwrap();
        assert_eq!(r.entry(0, 1), 1.0);
        assert_eq!(r.entry(0, 2), -1.0);
        assert_eq!(r.entry(1, 1), 1.0);
    }

    #[test]
    fn pearson_independent_columns_are_near_zero() {
        let mut rng = crate::seed::stream(23, "linalg/pearson-ind");
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let x = daily_sts(cols, NaiveDate::from_ymd_opt(2001, 1, 1).unwrap());
        let r = pearson_matrix(&x).unwrap();
        assert!(r.entry(0, 1).abs() < 0.05);
    }

    #[test]
    fn pearson_pairwise_complete_matches_dense_on_shared_rows() {
        let mut rng = crate::seed::stream(29, "linalg/pearson-mask");
        let n = 200;
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.6 * v + 0.8 * z
            })
            .collect();
        let x = daily_sts(vec![a.clone(), b.clone()], NaiveDate::from_ymd_opt(2001, 1, 1).unwrap());

        // mask rows 10..20 of column 0; the pairwise path must equal the
        // dense correlation of the remaining shared rows
        let mut missing = x.missing().clone();
        for i in 10..20 {
            missing[(i, 0)] = true;
        }
        let masked = StsMatrix::new(
            x.values().clone(),
            missing,
            x.time().to_vec(),
            x.columns().to_vec(),
            x.label,
        )
        .unwrap();
        let r_masked = pearson_matrix(&masked).unwrap();

        let keep: Vec<usize> = (0..n).filter(|i| !(10..20).contains(i)).collect();
        let sub_a: Vec<f64> = keep.iter().map(|&i| a[i]).collect();
        let sub_b: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
        let sub = daily_sts(vec![sub_a, sub_b], NaiveDate::from_ymd_opt(2001, 1, 1).unwrap());
        let r_dense = pearson_matrix(&sub).unwrap();
        assert_relative_eq!(r_masked.entry(0, 1), r_dense.entry(0, 1), epsilon = 1e-12);
    }

    #[test]
    fn pearson_rejects_thin_overlap() {
        let n = 10;
        let mut missing = DMatrix::from_element(n, 2, false);
        for i in 0..n - 2 {
            missing[(i, 0)] = true;
        }
        let mut values = DMatrix::zeros(n, 2);
        let mut rng = crate::seed::stream(31, "linalg/pearson-overlap");
        for j in 0..2 {
            for i in 0..n {
                values[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let time: Vec<TimeStamp> = (0..n)
            .map(|i| {
                TimeStamp::Day(NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(i as u64))
            })
            .collect();
        let metas = vec![
            GridMeta::new("a", 1.0, 1.0, 1),
            GridMeta::new("b", 2.0, 1.0, 1),
        ];
        let x = StsMatrix::new(values, missing, time, metas, Label::Raw).unwrap();
        assert!(matches!(
            pearson_matrix(&x),
            Err(Error::InsufficientOverlap { got: 2, .. })
        ));
    }

    #[test]
    fn pearson_eigenvalues_nonnegative_on_complete_data() {
        let mut rng = crate::seed::stream(37, "linalg/pearson-psd");
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..80).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let x = daily_sts(cols, NaiveDate::from_ymd_opt(2001, 1, 1).unwrap());
        let r = pearson_matrix(&x).unwrap();
        let eig = eig_sym(r.matrix()).unwrap();
        assert!(*eig.eigenvalues.last().unwrap() >= -1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn acf_stays_in_unit_interval(seed in 0u64..500, n in 12usize..80) {
            let mut rng = crate::seed::stream(seed, "linalg/acf-prop");
            let series: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            if let Ok(r) = acf(&series, n.saturating_sub(2).min(10).max(1)) {
                for v in r {
                    prop_assert!((-1.0..=1.0).contains(&v));
                }
            }
        }
    }
}
