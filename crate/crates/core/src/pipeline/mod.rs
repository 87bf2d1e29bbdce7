//! End-to-end orchestration: ingest → order → trim → associate → denoise →
//! windowed statistics → teleconnections, with every artifact recorded in a
//! digest manifest.
//!
//! Any stage error aborts the run; the manifest is still written and names
//! the failing stage. Reruns with identical configuration and seed produce
//! byte-identical outputs.

pub mod analysis;
pub mod artifacts;
pub mod config;
pub mod render;
pub mod windows;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::dependence::{
    spatial_bergsma, weights_expdecay, weights_lag1, AssocMethod, AssociationMatrix, SbEntry,
    SbSeries,
};
use crate::error::{Error, Result};
use crate::grid::{GridMeta, Lattice};
use crate::ingest::{
    aggregate_min_coverage, compute_dtr, filter_complete, read_grids, read_series, slice,
    write_sts_wide, AggregateLevel, TimeSelection,
};
use crate::linalg::{classical_detrend, pearson_matrix};
use crate::order::{apply_order, hilbert_order, spiral_order, write_order_csv, SpatialOrder};
use crate::rmt::{mp_denoise, summarize_spectrum, EsdRow, MpBounds, SpectralSummary};
use crate::sts::StsMatrix;
use crate::trim::{algorithm1, sv_null_thresholds, trim_to_depth, SvNullModel, TrimResult};

use analysis::{
    argmax_partner_offsets, read_dmi_csv, read_enso_csv, teleconnect_enso, teleconnect_iod,
};
use artifacts::{
    assoc_to_csv, enso_rows_to_csv, esd_rows_to_csv, iod_rows_to_csv, removed_components_to_csv,
    sb_series_to_csv, to_json, ArtifactSink, Manifest, TrimReport,
};
use config::{OrderChoice, RunConfig, SchemeChoice, TrimScope, WindowPlan};
use windows::{associate, expand_regions, expand_windows, RegionWeights, MIN_WINDOW_ROWS};

/// Summary handed back to the caller after a successful run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub output_files: usize,
    pub trim_depth: usize,
    pub significant_singular_values: Option<usize>,
    pub sv_share_removed: f64,
    pub sb_entries: usize,
    pub skipped_windows: usize,
}

/// Executes the full pipeline described by `cfg`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut sink = ArtifactSink::new(&cfg.output.dir)?;
    let mut state = RunState::default();
    let result = run_stages(cfg, &mut sink, &mut state);
    let (failed_stage, error) = match &result {
        Ok(()) => (None, None),
        Err((stage, err)) => (Some(stage.clone()), Some(err.to_string())),
    };
    let manifest = Manifest {
        tool: "stsa".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
        outputs: vec![],
        skipped_windows: state.skipped_windows.clone(),
        warnings: state.warnings.clone(),
        failed_stage,
        error,
    };
    let output_files = sink.entries().len();
    let manifest_path = sink.finish(manifest)?;
    match result {
        Ok(()) => Ok(RunOutcome {
            manifest_path,
            output_files,
            trim_depth: state.trim_depth,
            significant_singular_values: state.significant,
            sv_share_removed: state.sv_share_removed,
            sb_entries: state.sb_entries,
            skipped_windows: state.skipped_windows.len(),
        }),
        Err((_, err)) => Err(err),
    }
}

#[derive(Default)]
struct RunState {
    warnings: Vec<String>,
    skipped_windows: Vec<String>,
    trim_depth: usize,
    significant: Option<usize>,
    sv_share_removed: f64,
    sb_entries: usize,
}

type StageResult<T> = std::result::Result<T, (String, Error)>;

fn stage<T>(name: &str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (name.to_string(), e))
}

fn run_stages(cfg: &RunConfig, sink: &mut ArtifactSink, state: &mut RunState) -> StageResult<()> {
    let token = cfg.ingest.missing_token.as_str();

    // ingest
    let grids = stage("ingest", read_grids(&cfg.inputs.grids))?;
    let series = stage("ingest", read_series(&cfg.inputs.series, &grids, token))?;
    let mut x = if series.matrices.len() == 2 {
        stage(
            "ingest",
            compute_dtr(&series.matrices[0], &series.matrices[1]),
        )?
    } else {
        series.matrices.into_iter().next().expect("one matrix")
    };
    let negative_dtr = x.count_negative_observed();
    if negative_dtr > 0 {
        state
            .warnings
            .push(format!("{negative_dtr} negative series values"));
    }
    if cfg.ingest.aggregate != AggregateLevel::None {
        x = stage(
            "ingest",
            aggregate_min_coverage(&x, cfg.ingest.aggregate, cfg.ingest.min_coverage),
        )?;
    }
    let total_cols = x.p();
    if cfg.ingest.complete_only {
        x = stage("ingest", filter_complete(&x))?;
    }
    let ingest_report = serde_json::json!({
        "rows": x.n(),
        "columns": x.p(),
        "columns_before_filter": total_cols,
        "missing_entries": x.missing_count(),
        "negative_values": negative_dtr,
        "aggregate": cfg.ingest.aggregate,
        "complete_only": cfg.ingest.complete_only,
    });
    stage(
        "ingest",
        write_json(sink, "ingest_report.json", "ingest", &ingest_report),
    )?;

    // order
    let order = stage("order", build_order(cfg, x.columns()))?;
    let order_csv = sink.root().join("order.csv");
    stage("order", write_order_csv(&order, x.columns(), &order_csv))?;
    stage("order", rerecord(sink, "order.csv", "order"))?;
    let d = stage("order", apply_order(&x, &order))?;
    stage("order", write_wide(sink, "D.csv", "order", &d, token))?;

    // classical detrend comparison path
    let t = if cfg.association.compare_detrend {
        let t = stage("detrend", classical_detrend(&d))?;
        stage("detrend", write_wide(sink, "T.csv", "detrend", &t, token))?;
        Some(t)
    } else {
        None
    };

    // trim
    let (trim_result, null) = stage("trim", trim_matrix(cfg, &d))?;
    let s = trim_result.trimmed.clone();
    state.trim_depth = trim_result.depth_d;
    state.significant = trim_result.significant_s;
    state.sv_share_removed = trim_result.sv_share_removed;
    if trim_result.cap_hit {
        state.warnings.push(format!(
            "trim exhausted all {} significant components without meeting the ACF criterion",
            trim_result.significant_s.unwrap_or(0)
        ));
    }
    stage("trim", write_wide(sink, "S.csv", "trim", &s, token))?;
    let report = TrimReport::from_result(&trim_result, null.as_ref());
    stage(
        "trim",
        write_json(sink, "trim_report.json", "trim", &report),
    )?;
    if !trim_result.removed.is_empty() {
        let (left, right) = removed_components_to_csv(&trim_result, d.time());
        stage(
            "trim",
            sink.write("removed_left.csv", "trim", left.as_bytes())
                .map(|_| ()),
        )?;
        stage(
            "trim",
            sink.write("removed_right.csv", "trim", right.as_bytes())
                .map(|_| ()),
        )?;
    }

    // GSVD retention check
    if cfg.trim.gsvd_check {
        let seed = crate::seed::derive(cfg.seed.expect("validated"), "trim/gsvd-null");
        let report = stage(
            "gsvd-check",
            crate::trim::gsvd_retention_check(&d, &s, cfg.trim.gsvd_n_perm, seed),
        )?;
        stage(
            "gsvd-check",
            write_json(sink, "gsvd_retention.json", "gsvd-check", &report),
        )?;
    }

    // whole-period association matrices and their denoised variants
    let mut spectra: Vec<SpectralSummary> = Vec::new();
    let mut whole_assocs: BTreeMap<String, AssociationMatrix> = BTreeMap::new();
    for &method in &cfg.association.methods {
        let name = match method {
            AssocMethod::Pearson => "R_S",
            AssocMethod::Bergsma => "B_S",
        };
        let assoc = stage("correlation", associate(&s, method))?;
        stage(
            "correlation",
            write_and_denoise(sink, &mut spectra, name, &assoc, s.n()),
        )?;
        whole_assocs.insert(name.to_string(), assoc);
    }
    if let Some(t) = &t {
        let r_d = stage("correlation", pearson_matrix(&d))?;
        stage(
            "correlation",
            write_and_denoise(sink, &mut spectra, "R_D", &r_d, d.n()),
        )?;
        let r_t = stage("correlation", pearson_matrix(t))?;
        stage(
            "correlation",
            write_and_denoise(sink, &mut spectra, "R_T", &r_t, t.n()),
        )?;
        whole_assocs.insert("R_D".into(), r_d);
        whole_assocs.insert("R_T".into(), r_t);
    }
    stage(
        "correlation",
        write_json(sink, "spectra.json", "correlation", &spectra),
    )?;

    // windows and regions
    let products = stage("windows", window_products(cfg, &d, &s))?;
    state.skipped_windows = products.skipped;
    state.sb_entries = products.sb.entries.len();
    if !products.sb.entries.is_empty() {
        stage(
            "windows",
            sink.write(
                "sb_series.csv",
                "windows",
                sb_series_to_csv(&products.sb).as_bytes(),
            )
            .map(|_| ()),
        )?;
    }
    for (plan, rows) in &products.esd {
        let name = format!("esd_{plan}.csv");
        stage(
            "windows",
            sink.write(&name, "windows", esd_rows_to_csv(rows).as_bytes())
                .map(|_| ()),
        )?;
    }
    for (name, csv) in &products.window_matrices {
        stage(
            "windows",
            sink.write(name, "windows", csv.as_bytes()).map(|_| ()),
        )?;
    }

    // argmax partner offsets
    if cfg.analysis.argmax_partners && s.p() >= 2 {
        let source = whole_assocs
            .get("R_S")
            .or_else(|| whole_assocs.values().next())
            .expect("at least one association method");
        let table = stage("analysis", argmax_partner_offsets(source))?;
        let mut rows_csv = String::from("grid_id,partner_id,dlat,dlon\n");
        for r in &table.rows {
            rows_csv.push_str(&format!(
                "{},{},{},{}\n",
                r.grid_id, r.partner_id, r.dlat, r.dlon
            ));
        }
        let mut hist_csv = String::from("axis,offset_steps,count\n");
        for b in &table.histogram {
            hist_csv.push_str(&format!("{},{},{}\n", b.axis, b.offset_steps, b.count));
        }
        stage(
            "analysis",
            sink.write("argmax_offsets.csv", "analysis", rows_csv.as_bytes())
                .map(|_| ()),
        )?;
        stage(
            "analysis",
            sink.write("argmax_offset_hist.csv", "analysis", hist_csv.as_bytes())
                .map(|_| ()),
        )?;
    }

    // teleconnections
    if let Some(enso_path) = &cfg.inputs.enso {
        let phases = stage("teleconnect", read_enso_csv(enso_path))?;
        let rows = stage("teleconnect", teleconnect_enso(&products.sb, &phases))?;
        stage(
            "teleconnect",
            sink.write(
                "teleconnect_enso.csv",
                "teleconnect",
                enso_rows_to_csv(&rows).as_bytes(),
            )
            .map(|_| ()),
        )?;
    }
    if let Some(dmi_path) = &cfg.inputs.dmi {
        let dmi = stage("teleconnect", read_dmi_csv(dmi_path))?;
        let rows = stage(
            "teleconnect",
            teleconnect_iod(&products.sb, &dmi, cfg.teleconnect.max_lag),
        )?;
        stage(
            "teleconnect",
            sink.write(
                "teleconnect_iod.csv",
                "teleconnect",
                iod_rows_to_csv(&rows).as_bytes(),
            )
            .map(|_| ()),
        )?;
    }

    // optional SVG rendering
    if cfg.output.emit_svg {
        for (name, assoc) in &whole_assocs {
            let svg = render::heatmap_svg(assoc, name);
            stage(
                "render",
                sink.write(&format!("{name}.svg"), "render", svg.as_bytes())
                    .map(|_| ()),
            )?;
        }
        if !products.sb.entries.is_empty() {
            let svg = render::sb_chart_svg(&products.sb, "spatial bergsma");
            stage(
                "render",
                sink.write("sb_series.svg", "render", svg.as_bytes())
                    .map(|_| ()),
            )?;
        }
    }
    Ok(())
}

/// Resolves the ordering method, falling back from spiral to Hilbert for
/// non-lattice points under `auto`.
pub fn build_order(cfg: &RunConfig, grids: &[GridMeta]) -> Result<SpatialOrder> {
    let strat = cfg.ordering.stratify_by_zone;
    match cfg.ordering.method {
        OrderChoice::Spiral => spiral_order(grids, strat),
        OrderChoice::Hilbert => hilbert_order(grids, cfg.ordering.hilbert_bits, strat),
        OrderChoice::Identity => Ok(SpatialOrder::identity(grids.len())),
        OrderChoice::Auto => {
            let gridded = Lattice::infer(grids).and_then(|l| l.cells(grids)).is_ok();
            if gridded {
                spiral_order(grids, strat)
            } else {
                hilbert_order(grids, cfg.ordering.hilbert_bits, strat)
            }
        }
    }
}

fn trim_matrix(cfg: &RunConfig, d: &StsMatrix) -> Result<(TrimResult, Option<SvNullModel>)> {
    match cfg.trim.fixed_depth {
        Some(depth) => Ok((trim_to_depth(d, depth)?, None)),
        None => {
            let seed = crate::seed::derive(cfg.seed.expect("validated"), "trim/sv-null");
            let null = sv_null_thresholds(d, cfg.trim.n_perm, cfg.trim.quantile, seed)?;
            let result = algorithm1(d, cfg.trim.acf_threshold, cfg.trim.acf_lags, &null)?;
            Ok((result, Some(null)))
        }
    }
}

/// Builds the configured weight set for one region's grids.
pub fn region_weights(cfg: &RunConfig, grids: &[GridMeta]) -> Result<RegionWeights> {
    let mut out = Vec::new();
    for scheme in &cfg.weights.schemes {
        match scheme {
            SchemeChoice::Lag1 => out.push((
                "lag1".to_string(),
                weights_lag1(grids, cfg.weights.adjacency)?,
            )),
            SchemeChoice::Expdecay => out.push((
                "expdecay".to_string(),
                weights_expdecay(grids, cfg.weights.theta)?,
            )),
        }
    }
    Ok(out)
}

struct WindowProducts {
    sb: SbSeries,
    /// Plan label → per-window ESD rows (whole-domain Pearson only).
    esd: BTreeMap<String, Vec<EsdRow>>,
    /// Extra per-window matrices when configured.
    window_matrices: Vec<(String, String)>,
    skipped: Vec<String>,
}

fn plan_label(plan: WindowPlan) -> &'static str {
    match plan {
        WindowPlan::Whole => "whole",
        WindowPlan::Yearly => "yearly",
        WindowPlan::Monthly => "monthly",
    }
}

/// Walks every (plan, window, region, method) combination, producing S_B
/// entries, per-window ESD rows, and (optionally) per-window matrices.
fn window_products(cfg: &RunConfig, d: &StsMatrix, s_global: &StsMatrix) -> Result<WindowProducts> {
    let regions = expand_regions(s_global.columns(), cfg.regions.per_zone);
    let mut plans = cfg.windows.plans.clone();
    plans.sort();
    plans.dedup();

    let mut sb_entries: Vec<SbEntry> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut esd: BTreeMap<String, Vec<EsdRow>> = BTreeMap::new();
    let mut window_matrices: Vec<(String, String)> = Vec::new();

    // Weights depend only on the region's grids; build them once per region.
    let mut weights_by_region: BTreeMap<String, RegionWeights> = BTreeMap::new();
    for region in &regions {
        let regional_cols: Vec<GridMeta> = s_global
            .columns()
            .iter()
            .filter(|c| region.zones.as_ref().map_or(true, |z| z.contains(&c.zone)))
            .cloned()
            .collect();
        weights_by_region.insert(region.label.clone(), region_weights(cfg, &regional_cols)?);
    }

    for &plan in &plans {
        let window_specs = expand_windows(s_global.time(), plan);
        for window in &window_specs {
            // Window matrix: slice the global trim, or re-trim per window.
            let windowed: StsMatrix = match cfg.trim.scope {
                TrimScope::Global => slice(s_global, &window.selection, None)?,
                TrimScope::PerWindow => {
                    if plan == WindowPlan::Whole {
                        s_global.clone()
                    } else {
                        let sub_d = slice(d, &window.selection, None)?;
                        if sub_d.n() < MIN_WINDOW_ROWS {
                            skipped.push(format!("{}/all", window.label));
                            continue;
                        }
                        per_window_trim(cfg, &sub_d, &window.label)?
                    }
                }
            };
            if windowed.n() < MIN_WINDOW_ROWS {
                skipped.push(format!("{}/all", window.label));
                continue;
            }
            for region in &regions {
                let sub = match slice(&windowed, &TimeSelection::All, region.zones.as_ref()) {
                    Ok(sub) => sub,
                    Err(Error::EmptySelection(_)) => continue,
                    Err(e) => return Err(e),
                };
                let weights = &weights_by_region[&region.label];
                for &method in &cfg.association.methods {
                    let assoc = associate(&sub, method)?
                        .with_labels(window.label.clone(), region.label.clone());
                    for (scheme_label, w) in weights {
                        sb_entries.push(SbEntry {
                            window: window.label.clone(),
                            region: region.label.clone(),
                            scheme: scheme_label.clone(),
                            method,
                            value: spatial_bergsma(&assoc, w)?,
                        });
                    }
                    if method == AssocMethod::Pearson && region.label == "all" {
                        let eig = crate::linalg::eig_sym(assoc.matrix())?;
                        let bounds = MpBounds::from_aspect(assoc.p(), sub.n());
                        let dist = crate::rmt::esd(&eig);
                        esd.entry(plan_label(plan).to_string())
                            .or_default()
                            .push(EsdRow {
                                window: window.label.clone(),
                                q05: dist.quantiles.q05,
                                q25: dist.quantiles.q25,
                                q50: dist.quantiles.q50,
                                q75: dist.quantiles.q75,
                                q95: dist.quantiles.q95,
                                mean: dist.mean,
                                n_significant: crate::rmt::significant_eigs(&eig, &bounds),
                            });
                    }
                    if cfg.output.write_window_matrices && plan != WindowPlan::Whole {
                        let name = format!(
                            "windows/{}/{}_{}_{}.csv",
                            plan_label(plan),
                            window.label,
                            region.label,
                            method
                        );
                        window_matrices.push((name, assoc_to_csv(&assoc)));
                    }
                }
            }
        }
    }
    Ok(WindowProducts {
        sb: SbSeries {
            entries: sb_entries,
            skipped_windows: skipped.clone(),
        },
        esd,
        window_matrices,
        skipped,
    })
}

/// Trims one window of the reordered matrix with window-scoped seeding.
fn per_window_trim(cfg: &RunConfig, sub_d: &StsMatrix, label: &str) -> Result<StsMatrix> {
    match cfg.trim.fixed_depth {
        Some(depth) => {
            let max = sub_d.n().min(sub_d.p());
            Ok(trim_to_depth(sub_d, depth.min(max))?.trimmed)
        }
        None => {
            let seed = crate::seed::derive(
                cfg.seed.expect("validated"),
                &format!("trim/window/{label}"),
            );
            let null = sv_null_thresholds(sub_d, cfg.trim.n_perm, cfg.trim.quantile, seed)?;
            Ok(algorithm1(sub_d, cfg.trim.acf_threshold, cfg.trim.acf_lags, &null)?.trimmed)
        }
    }
}

fn write_wide(
    sink: &mut ArtifactSink,
    name: &str,
    stage_name: &str,
    x: &StsMatrix,
    token: &str,
) -> Result<()> {
    let path = sink.root().join(name);
    write_sts_wide(x, &path, token)?;
    rerecord(sink, name, stage_name)
}

/// Records a file that was written directly to the sink root.
fn rerecord(sink: &mut ArtifactSink, name: &str, stage_name: &str) -> Result<()> {
    let path = sink.root().join(name);
    let content = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    sink.write(name, stage_name, &content)?;
    Ok(())
}

fn write_json<T: Serialize>(
    sink: &mut ArtifactSink,
    name: &str,
    stage_name: &str,
    value: &T,
) -> Result<()> {
    let text = to_json(value)?;
    sink.write(name, stage_name, text.as_bytes())?;
    Ok(())
}

/// Writes an association matrix, its MP-denoised variant at the significant
/// rank, and collects the spectral summary.
fn write_and_denoise(
    sink: &mut ArtifactSink,
    spectra: &mut Vec<SpectralSummary>,
    name: &str,
    assoc: &AssociationMatrix,
    n: usize,
) -> Result<()> {
    sink.write(
        &format!("{name}.csv"),
        "correlation",
        assoc_to_csv(assoc).as_bytes(),
    )?;
    let (summary, _) = summarize_spectrum(name, assoc, n)?;
    let denoised = mp_denoise(assoc, summary.n_significant)?;
    sink.write(
        &format!("{name}_denoised.csv"),
        "denoise",
        assoc_to_csv(&denoised).as_bytes(),
    )?;
    spectra.push(summary);
    Ok(())
}
