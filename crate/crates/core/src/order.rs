//! Proximity-preserving linear orderings of two-dimensional locations.
//!
//! Two schemes are provided. The spiral ordering walks lattice cells along
//! anti-diagonals of increasing index sum, alternating direction on each
//! anti-diagonal, which keeps nearby cells nearby in the output sequence.
//! The Hilbert ordering quantizes coordinates into a 2^b × 2^b grid and
//! sorts by classical Hilbert-curve index; it needs no lattice structure, so
//! it also covers irregularly placed locations. Both can stratify by
//! climatic zone first, ordering strata by ascending zone label.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMeta, Lattice};
use crate::sts::{Label, StsMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMethod {
    Spiral,
    Hilbert,
    Identity,
}

/// A permutation of column indices plus how it was produced.
///
/// `permutation[k]` is the original column index placed at rank `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialOrder {
    pub permutation: Vec<usize>,
    pub method: OrderMethod,
    pub stratify_by_zone: bool,
}

impl SpatialOrder {
    pub fn identity(p: usize) -> SpatialOrder {
        SpatialOrder {
            permutation: (0..p).collect(),
            method: OrderMethod::Identity,
            stratify_by_zone: false,
        }
    }

    /// Checks the permutation is a bijection on 0..p-1.
    pub fn is_valid(&self) -> bool {
        let mut sorted = self.permutation.clone();
        sorted.sort_unstable();
        sorted.iter().copied().eq(0..self.permutation.len())
    }
}

/// Anti-diagonal boustrophedon ordering on the inferred integer lattice.
///
/// Within each stratum, cells are visited by increasing anti-diagonal sum
/// `d = row + col`; odd anti-diagonals run with ascending row, even ones
/// descending, which starts at the lowest (lat, lon) cell and matches the
/// walk (1,1), (1,2), (2,1), (3,1), (2,2), (1,3) on a full 3×3 lattice.
/// Absent cells are skipped.
pub fn spiral_order(grids: &[GridMeta], stratify_by_zone: bool) -> Result<SpatialOrder> {
    let lattice = Lattice::infer(grids)?;
    let cells = lattice.cells(grids)?;
    // Shift to non-negative indices so anti-diagonal parity is well defined.
    let min_row = cells.iter().map(|c| c.0).min().unwrap_or(0);
    let min_col = cells.iter().map(|c| c.1).min().unwrap_or(0);

    let mut keyed: Vec<(u8, i64, i64, usize)> = cells
        .iter()
        .enumerate()
        .map(|(j, &(r, c))| {
            let zone = if stratify_by_zone { grids[j].zone } else { 0 };
            (zone, r - min_row, c - min_col, j)
        })
        .collect();
    keyed.sort_by(|a, b| {
        let key = |t: &(u8, i64, i64, usize)| {
            let (zone, r, c, _) = *t;
            let d = r + c;
            // odd anti-diagonals ascend in row, even ones descend
            let dir = if d % 2 == 1 { r } else { -r };
            (zone, d, dir)
        };
        key(a)
            .cmp(&key(b))
            .then_with(|| grids[a.3].grid_id.cmp(&grids[b.3].grid_id))
    });
    Ok(SpatialOrder {
        permutation: keyed.into_iter().map(|(_, _, _, j)| j).collect(),
        method: OrderMethod::Spiral,
        stratify_by_zone,
    })
}

/// Hilbert-curve index of cell (x, y) on a 2^order_bits grid.
pub fn hilbert_index(order_bits: u32, mut x: u64, mut y: u64) -> u64 {
    let n = 1u64 << order_bits;
    let mut d = 0u64;
    let mut s = n >> 1;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        x &= s - 1;
        y &= s - 1;
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

/// Hilbert-curve ordering of (possibly non-gridded) locations.
///
/// Coordinates are affinely rescaled to the curve's cell grid per axis; an
/// axis with zero extent collapses to cell 0. Ties (same cell) break by
/// ascending grid id, so the ordering is deterministic.
pub fn hilbert_order(
    grids: &[GridMeta],
    order_bits: u32,
    stratify_by_zone: bool,
) -> Result<SpatialOrder> {
    if !(1..=31).contains(&order_bits) {
        return Err(Error::Argument {
            name: "order_bits",
            value: order_bits.to_string(),
            range: "[1, 31]".into(),
        });
    }
    for g in grids {
        if !g.lat.is_finite() || !g.lon.is_finite() {
            return Err(Error::Vocabulary {
                field: "coordinate",
                value: format!("{} has non-finite lat/lon", g.grid_id),
            });
        }
    }
    if grids.is_empty() {
        return Err(Error::EmptySelection("no grids to order".into()));
    }
    let lat_min = grids.iter().map(|g| g.lat).fold(f64::INFINITY, f64::min);
    let lat_max = grids.iter().map(|g| g.lat).fold(f64::NEG_INFINITY, f64::max);
    let lon_min = grids.iter().map(|g| g.lon).fold(f64::INFINITY, f64::min);
    let lon_max = grids.iter().map(|g| g.lon).fold(f64::NEG_INFINITY, f64::max);
    if grids.len() > 1 && lat_max == lat_min && lon_max == lon_min {
        return Err(Error::DegenerateExtent);
    }
    let side = (1u64 << order_bits) as f64;
    let cell = |v: f64, lo: f64, hi: f64| -> u64 {
        if hi == lo {
            return 0;
        }
        let scaled = ((v - lo) / (hi - lo) * side).floor();
        (scaled as u64).min((1u64 << order_bits) - 1)
    };
    let mut keyed: Vec<(u8, u64, usize)> = grids
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let x = cell(g.lat, lat_min, lat_max);
            let y = cell(g.lon, lon_min, lon_max);
            let zone = if stratify_by_zone { g.zone } else { 0 };
            (zone, hilbert_index(order_bits, x, y), j)
        })
        .collect();
    keyed.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then_with(|| grids[a.2].grid_id.cmp(&grids[b.2].grid_id))
    });
    Ok(SpatialOrder {
        permutation: keyed.into_iter().map(|(_, _, j)| j).collect(),
        method: OrderMethod::Hilbert,
        stratify_by_zone,
    })
}

/// Applies an ordering to the columns of a matrix, yielding the reorganized data.
pub fn apply_order(x: &StsMatrix, order: &SpatialOrder) -> Result<StsMatrix> {
    if order.permutation.len() != x.p() {
        return Err(Error::ShapeMismatch {
            context: "apply_order",
            left: format!("{} columns", x.p()),
            right: format!("{} permutation entries", order.permutation.len()),
        });
    }
    if !order.is_valid() {
        return Err(Error::Config("permutation is not a bijection".into()));
    }
    let n = x.n();
    let p = x.p();
    let mut values = nalgebra::DMatrix::zeros(n, p);
    let mut missing = nalgebra::DMatrix::from_element(n, p, true);
    let mut columns = Vec::with_capacity(p);
    for (k, &j) in order.permutation.iter().enumerate() {
        for i in 0..n {
            values[(i, k)] = x.values()[(i, j)];
            missing[(i, k)] = x.missing()[(i, j)];
        }
        columns.push(x.columns()[j].clone());
    }
    StsMatrix::new(values, missing, x.time().to_vec(), columns, Label::Reordered)
}

/// Writes the order audit CSV: `rank,grid_id,lat,lon,zone`.
pub fn write_order_csv(order: &SpatialOrder, grids: &[GridMeta], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(out, "rank,grid_id,lat,lon,zone").map_err(|e| Error::io(path, e))?;
    for (rank, &j) in order.permutation.iter().enumerate() {
        let g = &grids[j];
        writeln!(out, "{rank},{},{},{},{}", g.grid_id, g.lat, g.lon, g.zone)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
