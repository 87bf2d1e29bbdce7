//! Core spatial association analysis for spatial time series.
//!
//! Spatial time series carry two tangled signals: temporal co-evolution
//! shared by all locations, and the spatial dependence structure between
//! locations. This crate separates them. The pipeline reorders locations
//! along a proximity-preserving curve, trims dominant temporal singular
//! components from the data matrix under a permutation null, denoises
//! correlation matrices with the Marčenko-Pastur law, and quantifies the
//! remaining spatial dependence with Pearson and Bergsma correlations
//! aggregated into the Spatial Bergsma statistic — at configurable spatial
//! and temporal resolutions.
//!
//! Modules follow the stages:
//!
//! - [`ingest`] — CSV loading, series construction, missingness handling,
//!   temporal aggregation, and windowing slices;
//! - [`order`] — spiral (anti-diagonal) and Hilbert-curve location orderings;
//! - [`linalg`] — SVD, symmetric eigendecomposition, GSVD, autocorrelation,
//!   classical detrending, Pearson correlation matrices;
//! - [`trim`] — permutation null for singular values and the iterative
//!   trimming loop with its ACF stopping rule;
//! - [`rmt`] — Marčenko-Pastur bounds, eigenvalue classification, low-rank
//!   denoising, and empirical spectral distributions;
//! - [`dependence`] — Bergsma correlation, spatial weight matrices, the
//!   Spatial Bergsma statistic, and Moran's I;
//! - [`pipeline`] — end-to-end orchestration, windows/regions, argmax-partner
//!   offsets, teleconnection joins, and artifact serialization.
//!
//! The `examples/` directory holds one runnable program per capability; the
//! `stsa` binary exposes the same stages as subcommands.

pub mod dependence;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod linalg;
pub mod order;
pub mod pipeline;
pub mod rmt;
pub mod seed;
pub mod sts;
pub mod trim;

pub use error::{Error, Result};
pub use grid::{GridMeta, Lattice};
pub use sts::{Granularity, Label, StsMatrix, TimeStamp};
