//! Statistical dependence between locations.
//!
//! Bergsma's correlation is estimated with the plug-in V-statistic of the
//! centered distance kernel
//!
//! ```text
//! ĥ_x(i,j) = -½|x_i - x_j| + (1/2t)Σ_k|x_i - x_k| + (1/2t)Σ_k|x_j - x_k|
//!            - (1/2t²)Σ_{k,l}|x_k - x_l|
//! κ̂(x,y)  = (1/t²) Σ_{i,j} ĥ_x(i,j) ĥ_y(i,j)
//! ρ̂       = κ̂(x,y) / √(κ̂(x,x) κ̂(y,y))
//! ```
//!
//! Row sums of the distance kernel are precomputed per column in O(t log t),
//! so a pair evaluation costs O(t²) time and O(t) memory. The Spatial
//! Bergsma statistic aggregates pairwise correlations under a spatial weight
//! matrix: `S_B = p⁻¹ Σ_{i<j} (w_ij + w_ji) ρ̂^(ij)`.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMeta, Lattice};
use crate::sts::StsMatrix;

/// Estimator behind an association matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssocMethod {
    Pearson,
    Bergsma,
}

impl fmt::Display for AssocMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssocMethod::Pearson => f.write_str("pearson"),
            AssocMethod::Bergsma => f.write_str("bergsma"),
        }
    }
}

/// Symmetric p×p matrix of pairwise association values.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    m: DMatrix<f64>,
    pub method: AssocMethod,
    /// Rank of the spectral truncation when this matrix is a denoised variant.
    pub denoised_rank: Option<usize>,
    /// Time-window label, `all` for the whole period.
    pub window: String,
    /// Region label, `all` or `zone<k>`.
    pub region: String,
    columns: Vec<GridMeta>,
}

impl AssociationMatrix {
    /// Wraps an estimator output: enforces exact symmetry, unit diagonal,
    /// and entries clamped to [-1, 1].
    pub fn new(m: DMatrix<f64>, method: AssocMethod, columns: Vec<GridMeta>) -> Result<Self> {
        let p = m.nrows();
        if m.ncols() != p || columns.len() != p {
            return Err(Error::ShapeMismatch {
                context: "association matrix",
                left: format!("{}x{}", m.nrows(), m.ncols()),
                right: format!("{} columns", columns.len()),
            });
        }
        let mut max_dev: f64 = 0.0;
        for j in 0..p {
            for i in 0..j {
                max_dev = max_dev.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if max_dev > 1e-12 {
            return Err(Error::Asymmetric { max_dev });
        }
        let mut m = m;
        for j in 0..p {
            for i in 0..j {
                let v = m[(i, j)].clamp(-1.0, 1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(j, j)] = 1.0;
        }
        Ok(AssociationMatrix {
            m,
            method,
            denoised_rank: None,
            window: "all".into(),
            region: "all".into(),
            columns,
        })
    }

    /// Wraps a spectral truncation, which need not have unit diagonal.
    pub fn from_truncation(
        m: DMatrix<f64>,
        source: &AssociationMatrix,
        rank: usize,
    ) -> AssociationMatrix {
        AssociationMatrix {
            m,
            method: source.method,
            denoised_rank: Some(rank),
            window: source.window.clone(),
            region: source.region.clone(),
            columns: source.columns.clone(),
        }
    }

    pub fn with_labels(mut self, window: impl Into<String>, region: impl Into<String>) -> Self {
        self.window = window.into();
        self.region = region.into();
        self
    }

    pub fn p(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn columns(&self) -> &[GridMeta] {
        &self.columns
    }
}

/// Time-indexed Spatial Bergsma values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbSeries {
    pub entries: Vec<SbEntry>,
    /// Windows dropped for having fewer than the minimum time points.
    pub skipped_windows: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbEntry {
    pub window: String,
    pub region: String,
    pub scheme: String,
    pub method: AssocMethod,
    pub value: f64,
}

/// Precomputed distance-kernel row statistics of one series.
struct BergsmaKernel {
    values: Vec<f64>,
    /// (1/t) Σ_k |x_i - x_k| per i.
    row_mean: Vec<f64>,
    /// (1/t²) Σ_{k,l} |x_k - x_l|.
    grand_mean: f64,
}

impl BergsmaKernel {
    fn new(values: &[f64]) -> BergsmaKernel {
        let t = values.len();
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let mut prefix = Vec::with_capacity(t + 1);
        prefix.push(0.0);
        for &v in &sorted {
            prefix.push(prefix.last().unwrap() + v);
        }
        let total = prefix[t];
        let mut row_mean = vec![0.0; t];
        for (rank, &i) in order.iter().enumerate() {
            let v = sorted[rank];
            let below = rank as f64 * v - prefix[rank];
            let above = (total - prefix[rank + 1]) - (t - rank - 1) as f64 * v;
            row_mean[i] = (below + above) / t as f64;
        }
        let grand_mean = row_mean.iter().sum::<f64>() / t as f64;
        BergsmaKernel {
            values: values.to_vec(),
            row_mean,
            grand_mean,
        }
    }

    #[inline]
    fn h(&self, i: usize, j: usize) -> f64 {
        -0.5 * ((self.values[i] - self.values[j]).abs()
            - self.row_mean[i]
            - self.row_mean[j]
            + self.grand_mean)
    }
}

fn kappa(a: &BergsmaKernel, b: &BergsmaKernel) -> f64 {
    let t = a.values.len();
    let mut acc = 0.0;
    for i in 0..t {
        for j in 0..t {
            acc += a.h(i, j) * b.h(i, j);
        }
    }
    acc / (t * t) as f64
}

fn validate_series(x: &[f64], name: &'static str) -> Result<()> {
    if x.len() < 4 {
        return Err(Error::InsufficientData {
            context: "bergsma_rho",
            needed: 4,
            got: x.len(),
        });
    }
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::ZeroVariance {
            context: "bergsma_rho",
            column: name.into(),
        });
    }
    Ok(())
}

/// Bergsma's correlation between two equal-length series.
///
/// Identical inputs return exactly 1.0: the numerator and denominator
/// kernels coincide, so the normalization identity is honored without
/// floating-point residue.
pub fn bergsma_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "bergsma_rho",
            left: format!("{}", x.len()),
            right: format!("{}", y.len()),
        });
    }
    validate_series(x, "x")?;
    validate_series(y, "y")?;
    if x == y {
        return Ok(1.0);
    }
    let kx = BergsmaKernel::new(x);
    let ky = BergsmaKernel::new(y);
    let kxx = kappa(&kx, &kx);
    let kyy = kappa(&ky, &ky);
    if kxx <= 0.0 || kyy <= 0.0 {
        return Err(Error::ZeroVariance {
            context: "bergsma_rho",
            column: if kxx <= 0.0 { "x" } else { "y" }.into(),
        });
    }
    Ok(kappa(&kx, &ky) / (kxx * kyy).sqrt())
}

/// Pairwise Bergsma correlation matrix over complete data.
///
/// Kernel row sums are computed once per column and shared read-only across
/// the p(p-1)/2 pair tasks; the result is independent of worker count.
pub fn bergsma_matrix(x: &StsMatrix) -> Result<AssociationMatrix> {
    let values = x.require_complete("bergsma_matrix")?;
    let (t, p) = values.shape();
    if t < 4 {
        return Err(Error::InsufficientData {
            context: "bergsma_matrix",
            needed: 4,
            got: t,
        });
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|j| values.column(j).iter().copied().collect()).collect();
    for (j, col) in columns.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::ZeroVariance {
                context: "bergsma_matrix",
                column: x.columns()[j].grid_id.clone(),
            });
        }
    }
    let kernels: Vec<BergsmaKernel> = columns.par_iter().map(|c| BergsmaKernel::new(c)).collect();
    let self_kappa: Vec<f64> = kernels.par_iter().map(|k| kappa(k, k)).collect();
    for (j, &kp) in self_kappa.iter().enumerate() {
        if kp <= 0.0 {
            return Err(Error::ZeroVariance {
                context: "bergsma_matrix",
                column: x.columns()[j].grid_id.clone(),
            });
        }
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .collect();
    let rho: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if columns[i] == columns[j] {
                1.0
            } else {
                kappa(&kernels[i], &kernels[j]) / (self_kappa[i] * self_kappa[j]).sqrt()
            }
        })
        .collect();
    let mut m = DMatrix::zeros(p, p);
    for (&(i, j), &r) in pairs.iter().zip(&rho) {
        m[(i, j)] = r;
        m[(j, i)] = r;
    }
    for i in 0..p {
        m[(i, i)] = 1.0;
    }
    AssociationMatrix::new(m, AssocMethod::Bergsma, x.columns().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyRule {
    /// 4-neighbour lattice adjacency.
    Rook,
    /// 8-neighbour lattice adjacency.
    Queen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum WeightScheme {
    Lag1 { rule: AdjacencyRule },
    ExpDecay { theta: f64 },
}

impl WeightScheme {
    pub fn label(&self) -> &'static str {
        match self {
            WeightScheme::Lag1 { .. } => "lag1",
            WeightScheme::ExpDecay { .. } => "expdecay",
        }
    }
}

/// Non-negative spatial weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    pub scheme: WeightScheme,
    pub row_standardized: bool,
    /// Indices whose weight row is all zeros (no neighbours).
    pub isolated: Vec<usize>,
}

impl WeightMatrix {
    pub fn p(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

fn row_standardize(mut w: DMatrix<f64>, scheme: WeightScheme) -> WeightMatrix {
    let p = w.nrows();
    let mut isolated = Vec::new();
    for i in 0..p {
        let sum: f64 = w.row(i).sum();
        if sum > 0.0 {
            for j in 0..p {
                w[(i, j)] /= sum;
            }
        } else {
            isolated.push(i);
        }
    }
    WeightMatrix {
        w,
        scheme,
        row_standardized: true,
        isolated,
    }
}

/// Lag-1 adjacency weights on the inferred lattice, row-standardized.
///
/// Isolated grids keep an all-zero row and are flagged rather than rejected.
pub fn weights_lag1(grids: &[GridMeta], rule: AdjacencyRule) -> Result<WeightMatrix> {
    let lattice = Lattice::infer(grids)?;
    let cells = lattice.cells(grids)?;
    let p = grids.len();
    let mut w = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let dr = (cells[i].0 - cells[j].0).abs();
            let dc = (cells[i].1 - cells[j].1).abs();
            let adjacent = match rule {
                AdjacencyRule::Rook => dr + dc == 1,
                AdjacencyRule::Queen => dr.max(dc) == 1,
            };
            if adjacent {
                w[(i, j)] = 1.0;
            }
        }
    }
    Ok(row_standardize(w, WeightScheme::Lag1 { rule }))
}

/// Exponential-decay weights on Euclidean (lat, lon) distance, row-standardized.
pub fn weights_expdecay(grids: &[GridMeta], theta: f64) -> Result<WeightMatrix> {
    if !(theta > 0.0) {
        return Err(Error::Argument {
            name: "theta",
            value: theta.to_string(),
            range: "(0, inf)".into(),
        });
    }
    let p = grids.len();
    let mut w = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let d = ((grids[i].lat - grids[j].lat).powi(2)
                + (grids[i].lon - grids[j].lon).powi(2))
            .sqrt();
            if d == 0.0 {
                return Err(Error::CoincidentLocations {
                    first: grids[i].grid_id.clone(),
                    second: grids[j].grid_id.clone(),
                });
            }
            let v = (-d / theta).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(row_standardize(w, WeightScheme::ExpDecay { theta }))
}

/// Spatial Bergsma statistic: `p⁻¹ Σ_{i<j} (w_ij + w_ji) · assoc_ij`.
///
/// Accepts any association method; isolated grids contribute nothing.
pub fn spatial_bergsma(assoc: &AssociationMatrix, w: &WeightMatrix) -> Result<f64> {
    let p = assoc.p();
    if w.p() != p {
        return Err(Error::ShapeMismatch {
            context: "spatial_bergsma",
            left: format!("{p} association columns"),
            right: format!("{} weight columns", w.p()),
        });
    }
    let mut sum = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            sum += (w.matrix()[(i, j)] + w.matrix()[(j, i)]) * assoc.entry(i, j);
        }
    }
    Ok(sum / p as f64)
}

/// Global Moran's I:
/// `I = (p / Σ w_ij) · Σ w_ij (v_i - v̄)(v_j - v̄) / Σ (v_i - v̄)²`.
pub fn morans_i(values: &[f64], w: &WeightMatrix) -> Result<f64> {
    let p = values.len();
    if w.p() != p {
        return Err(Error::ShapeMismatch {
            context: "morans_i",
            left: format!("{p} values"),
            right: format!("{} weight columns", w.p()),
        });
    }
    let w_sum: f64 = w.matrix().sum();
    if w_sum == 0.0 {
        return Err(Error::EmptyWeights);
    }
    let mean = values.iter().sum::<f64>() / p as f64;
    let denom: f64 = values.iter().map(|&v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance {
            context: "morans_i",
            column: "values".into(),
        });
    }
    let mut num = 0.0;
    for i in 0..p {
        for j in 0..p {
            num += w.matrix()[(i, j)] * (values[i] - mean) * (values[j] - mean);
        }
    }
    Ok((p as f64 / w_sum) * (num / denom))
}
