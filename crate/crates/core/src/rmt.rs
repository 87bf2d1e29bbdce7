//! Marčenko-Pastur bounds, eigenvalue classification, low-rank denoising,
//! and empirical spectral distributions.
//!
//! The MP bulk edges for a p-variate sample correlation matrix estimated
//! from n observations are `(1 ± √(p/n))²`; eigenvalues above the upper
//! edge are classified as signal. Denoising truncates the spectral sum at
//! a chosen rank without diagonal renormalization, so the exported object
//! is the raw truncation. Quantiles use the nearest-rank convention
//! throughout: the value at 1-based rank `floor(q·m) + 1`, clamped.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dependence::AssociationMatrix;
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, EigenFactors};

/// Marčenko-Pastur bulk edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpBounds {
    pub gamma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl MpBounds {
    /// Edges straight from the aspect ratio, without the p ≤ n guard.
    /// Used for per-window summaries where a short window may have n < p.
    pub fn from_aspect(p: usize, n: usize) -> MpBounds {
        let gamma = p as f64 / n as f64;
        let root = gamma.sqrt();
        MpBounds {
            gamma,
            lower: (1.0 - root).powi(2),
            upper: (1.0 + root).powi(2),
        }
    }
}

/// Bulk edges for aspect ratio γ = p/n; requires p ≤ n.
pub fn mp_bounds(p: usize, n: usize) -> Result<MpBounds> {
    if p == 0 || n == 0 {
        return Err(Error::Argument {
            name: "p, n",
            value: format!("({p}, {n})"),
            range: "positive".into(),
        });
    }
    if p > n {
        return Err(Error::Aspect { p, n });
    }
    Ok(MpBounds::from_aspect(p, n))
}

/// Count of eigenvalues strictly above the MP upper edge.
pub fn significant_eigs(e: &EigenFactors, bounds: &MpBounds) -> usize {
    e.eigenvalues.iter().filter(|&&l| l > bounds.upper).count()
}

/// Rank-k spectral truncation `Σ_{j≤k} λ_j e_j e_jᵀ` of an association matrix.
///
/// No diagonal renormalization is applied; the truncation is the exported
/// object. The result records the source method and the rank used.
pub fn mp_denoise(r: &AssociationMatrix, k: usize) -> Result<AssociationMatrix> {
    let p = r.p();
    if k > p {
        return Err(Error::Argument {
            name: "k",
            value: k.to_string(),
            range: format!("[0, {p}]"),
        });
    }
    let eig = eig_sym(r.matrix())?;
    let mut m = DMatrix::zeros(p, p);
    for j in 0..k {
        let lambda = eig.eigenvalues[j];
        let v = eig.eigenvectors.column(j);
        // accumulate λ v vᵀ on the upper triangle, then mirror
        for a in 0..p {
            for b in a..p {
                m[(a, b)] += lambda * v[a] * v[b];
            }
        }
    }
    for a in 0..p {
        for b in (a + 1)..p {
            m[(b, a)] = m[(a, b)];
        }
    }
    Ok(AssociationMatrix::from_truncation(m, r, k))
}

/// Rescales a truncated matrix back to unit diagonal:
/// `m_ij / √(m_ii · m_jj)`. Exploration aid; the raw truncation stays the
/// exported default.
pub fn rescale_unit_diagonal(r: &AssociationMatrix) -> Result<AssociationMatrix> {
    let p = r.p();
    let mut m = r.matrix().clone();
    for i in 0..p {
        if m[(i, i)] <= 0.0 {
            return Err(Error::ZeroVariance {
                context: "rescale_unit_diagonal",
                column: r.columns()[i].grid_id.clone(),
            });
        }
    }
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let scale = (r.matrix()[(i, i)] * r.matrix()[(j, j)]).sqrt();
                m[(i, j)] = r.matrix()[(i, j)] / scale;
            }
        }
    }
    for i in 0..p {
        m[(i, i)] = 1.0;
    }
    Ok(AssociationMatrix::from_truncation(
        m,
        r,
        r.denoised_rank.unwrap_or(p),
    ))
}

/// Nearest-rank quantile: value at 1-based rank `floor(q·m) + 1`, clamped.
pub fn nearest_rank_quantile(sorted_ascending: &[f64], q: f64) -> f64 {
    let m = sorted_ascending.len();
    assert!(m > 0, "quantile of an empty sample");
    let idx = ((q * m as f64).floor() as usize).min(m - 1);
    sorted_ascending[idx]
}

/// Probe quantiles of an eigenvalue distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsdQuantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Empirical spectral distribution summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Esd {
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
    pub quantiles: EsdQuantiles,
    pub mean: f64,
}

/// ESD of a spectral factorization.
pub fn esd(e: &EigenFactors) -> Esd {
    let mut eigenvalues = e.eigenvalues.clone();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let mean = eigenvalues.iter().sum::<f64>() / eigenvalues.len() as f64;
    let quantiles = EsdQuantiles {
        q05: nearest_rank_quantile(&eigenvalues, 0.05),
        q25: nearest_rank_quantile(&eigenvalues, 0.25),
        q50: nearest_rank_quantile(&eigenvalues, 0.50),
        q75: nearest_rank_quantile(&eigenvalues, 0.75),
        q95: nearest_rank_quantile(&eigenvalues, 0.95),
    };
    Esd {
        eigenvalues,
        quantiles,
        mean,
    }
}

/// One row of an ESD evolution table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EsdRow {
    pub window: String,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub mean: f64,
    /// Significant count under this window's own MP bounds.
    pub n_significant: usize,
}

/// ESD table over a list of association-matrix windows.
///
/// Each entry pairs a matrix with the sample count n of its own window, so
/// the MP bounds are per-window.
pub fn esd_series(windows: &[(&AssociationMatrix, usize)]) -> Result<Vec<EsdRow>> {
    let p = match windows.first() {
        Some((m, _)) => m.p(),
        None => return Ok(Vec::new()),
    };
    let mut rows = Vec::with_capacity(windows.len());
    for (assoc, n) in windows {
        if assoc.p() != p {
            return Err(Error::ShapeMismatch {
                context: "esd_series",
                left: format!("{p} columns"),
                right: format!("{} columns", assoc.p()),
            });
        }
        let eig = eig_sym(assoc.matrix())?;
        let bounds = MpBounds::from_aspect(p, *n);
        let summary = esd(&eig);
        rows.push(EsdRow {
            window: assoc.window.clone(),
            q05: summary.quantiles.q05,
            q25: summary.quantiles.q25,
            q50: summary.quantiles.q50,
            q75: summary.quantiles.q75,
            q95: summary.quantiles.q95,
            mean: summary.mean,
            n_significant: significant_eigs(&eig, &bounds),
        });
    }
    Ok(rows)
}

/// Spectrum report for one matrix: eigenvalues, MP bounds, significant
/// count, and ESD probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub label: String,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub mp: MpBounds,
    pub n_significant: usize,
    pub quantiles: EsdQuantiles,
    pub mean: f64,
}

/// Summarizes the spectrum of an association matrix estimated from n rows.
pub fn summarize_spectrum(
    label: impl Into<String>,
    assoc: &AssociationMatrix,
    n: usize,
) -> Result<(SpectralSummary, EigenFactors)> {
    let eig = eig_sym(assoc.matrix())?;
    let bounds = mp_bounds(assoc.p(), n)?;
    let distribution = esd(&eig);
    let summary = SpectralSummary {
        label: label.into(),
        eigenvalues: eig.eigenvalues.clone(),
        mp: bounds,
        n_significant: significant_eigs(&eig, &bounds),
        quantiles: distribution.quantiles,
        mean: distribution.mean,
    };
    Ok((summary, eig))
}
