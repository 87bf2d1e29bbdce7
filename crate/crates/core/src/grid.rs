//! Grid metadata and integer-lattice quantization.
//!
//! A `GridMeta` carries the location attributes of one spatial unit. Lattice
//! quantization maps (lat, lon) coordinates onto integer cells; the step is
//! inferred as the smallest positive gap between distinct coordinate values,
//! so regularly gridded data with holes still quantizes cleanly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location attributes of one spatial unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub grid_id: String,
    pub lat: f64,
    pub lon: f64,
    /// Climatic-zone label in `1..=Z`.
    pub zone: u8,
    /// True when the column has no missing observations.
    #[serde(default)]
    pub complete: bool,
}

impl GridMeta {
    pub fn new(grid_id: impl Into<String>, lat: f64, lon: f64, zone: u8) -> Self {
        GridMeta {
            grid_id: grid_id.into(),
            lat,
            lon,
            zone,
            complete: false,
        }
    }
}

/// Integer lattice inferred from grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub lat0: f64,
    pub lon0: f64,
    pub lat_step: f64,
    pub lon_step: f64,
}

/// Tolerance (as a fraction of the step) for a point to count as on-lattice.
const CELL_TOL: f64 = 0.25;

fn infer_step(mut coords: Vec<f64>) -> f64 {
    coords.sort_by(|a, b| a.total_cmp(b));
    coords.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let min_gap = coords
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if min_gap.is_finite() {
        min_gap
    } else {
        1.0
    }
}

impl Lattice {
    /// Infers the lattice from grid coordinates.
    ///
    /// A coordinate axis with a single distinct value gets step 1.0 so that
    /// one-dimensional strips still quantize.
    pub fn infer(grids: &[GridMeta]) -> Result<Lattice> {
        if grids.is_empty() {
            return Err(Error::EmptySelection("no grids to quantize".into()));
        }
        for g in grids {
            if !g.lat.is_finite() || !g.lon.is_finite() {
                return Err(Error::Vocabulary {
                    field: "coordinate",
                    value: format!("{} has non-finite lat/lon", g.grid_id),
                });
            }
        }
        let lat0 = grids.iter().map(|g| g.lat).fold(f64::INFINITY, f64::min);
        let lon0 = grids.iter().map(|g| g.lon).fold(f64::INFINITY, f64::min);
        let lat_step = infer_step(grids.iter().map(|g| g.lat).collect());
        let lon_step = infer_step(grids.iter().map(|g| g.lon).collect());
        Ok(Lattice {
            lat0,
            lon0,
            lat_step,
            lon_step,
        })
    }

    /// Quantizes one grid to its (row, col) cell, checking it sits on the lattice.
    pub fn cell(&self, grid: &GridMeta) -> Result<(i64, i64)> {
        let r = (grid.lat - self.lat0) / self.lat_step;
        let c = (grid.lon - self.lon0) / self.lon_step;
        let (row, col) = (r.round(), c.round());
        let offset = (r - row).abs().max((c - col).abs());
        if offset > CELL_TOL {
            return Err(Error::OffLattice {
                grid_id: grid.grid_id.clone(),
                offset,
            });
        }
        Ok((row as i64, col as i64))
    }

    /// Quantizes all grids, erroring on cells occupied by more than one grid.
    pub fn cells(&self, grids: &[GridMeta]) -> Result<Vec<(i64, i64)>> {
        let mut seen: std::collections::HashMap<(i64, i64), usize> =
            std::collections::HashMap::new();
        let mut out = Vec::with_capacity(grids.len());
        for (i, g) in grids.iter().enumerate() {
            let cell = self.cell(g)?;
            if let Some(&j) = seen.get(&cell) {
                return Err(Error::DuplicateCell {
                    first: grids[j].grid_id.clone(),
                    second: g.grid_id.clone(),
                    row: cell.0,
                    col: cell.1,
                });
            }
            seen.insert(cell, i);
            out.push(cell);
        }
        Ok(out)
    }
}
