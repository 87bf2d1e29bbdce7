//! Command-line interface over the pipeline stages.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stsa::dependence::{AdjacencyRule, AssocMethod, SbEntry, SbSeries};
use stsa::error::{Error, Result};
use stsa::ingest::{
    aggregate_min_coverage, compute_dtr, filter_complete, read_grids, read_series, read_sts_wide,
    write_sts_wide, AggregateLevel,
};
use stsa::pipeline::analysis::{read_dmi_csv, read_enso_csv, teleconnect_enso, teleconnect_iod};
use stsa::pipeline::artifacts::{
    assoc_from_csv, assoc_to_csv, enso_rows_to_csv, esd_rows_to_csv, iod_rows_to_csv,
    removed_components_to_csv, to_json, Manifest, TrimReport,
};
use stsa::pipeline::config::{OrderChoice, RunConfig};
use stsa::pipeline::{build_order, render, run};
use stsa::sts::Label;

#[derive(Parser)]
#[command(
    name = "stsa",
    version,
    about = "Core spatial association for spatial time series"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a series matrix from long-form CSV inputs.
    Ingest(IngestArgs),
    /// Compute a proximity-preserving column ordering.
    Order(OrderArgs),
    /// Trim dominant temporal singular components.
    Trim(TrimArgs),
    /// Pairwise association matrix (Pearson or Bergsma).
    Corr(CorrArgs),
    /// Bergsma association matrix (shorthand for `corr --method bergsma`).
    Bergsma(BergsmaArgs),
    /// Marchenko-Pastur denoising of an association matrix.
    Denoise(DenoiseArgs),
    /// Empirical spectral distribution summary of an association matrix.
    Esd(EsdArgs),
    /// Spatial Bergsma statistic of an association matrix.
    Sb(SbArgs),
    /// Join Spatial Bergsma series with ENSO phases or the dipole index.
    Teleconnect(TeleconnectArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
    /// Verify a manifest and regenerate plots and summary tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    grids: PathBuf,
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "NA")]
    missing_token: String,
    #[arg(long, value_enum, default_value_t = AggregateArg::None)]
    aggregate: AggregateArg,
    #[arg(long, default_value_t = 0.0)]
    min_coverage: f64,
    /// Keep only fully observed columns.
    #[arg(long)]
    complete_only: bool,
    /// Output wide CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregateArg {
    None,
    Monthly,
    Yearly,
}

impl From<AggregateArg> for AggregateLevel {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::None => AggregateLevel::None,
            AggregateArg::Monthly => AggregateLevel::Monthly,
            AggregateArg::Yearly => AggregateLevel::Yearly,
        }
    }
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long)]
    grids: PathBuf,
    #[arg(long, value_enum, default_value_t = OrderArg::Auto)]
    method: OrderArg,
    /// Disable zone stratification.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long, default_value_t = 16)]
    bits: u32,
    /// Order audit CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Optional wide CSV to reorder.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Output path for the reordered matrix.
    #[arg(long)]
    ordered_out: Option<PathBuf>,
    #[arg(long, default_value = "NA")]
    missing_token: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Auto,
    Spiral,
    Hilbert,
    Identity,
}

impl From<OrderArg> for OrderChoice {
    fn from(a: OrderArg) -> Self {
        match a {
            OrderArg::Auto => OrderChoice::Auto,
            OrderArg::Spiral => OrderChoice::Spiral,
            OrderArg::Hilbert => OrderChoice::Hilbert,
            OrderArg::Identity => OrderChoice::Identity,
        }
    }
}

#[derive(Args)]
struct TrimArgs {
    /// Wide CSV of the (reordered) data matrix.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "NA")]
    missing_token: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 500)]
    n_perm: usize,
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
    #[arg(long, default_value_t = 0.1)]
    acf_threshold: f64,
    #[arg(long, default_value_t = 30)]
    acf_lags: usize,
    /// Fixed trim depth, skipping the permutation null.
    #[arg(long)]
    depth: Option<usize>,
    /// Also run the GSVD retention check against the trimmed matrix.
    #[arg(long)]
    gsvd_check: bool,
    #[arg(long, default_value_t = 100)]
    gsvd_n_perm: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "NA")]
    missing_token: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Pearson)]
    method: MethodArg,
    #[arg(long)]
    grids: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BergsmaArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "NA")]
    missing_token: String,
    #[arg(long)]
    grids: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Pearson,
    Bergsma,
}

impl From<MethodArg> for AssocMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pearson => AssocMethod::Pearson,
            MethodArg::Bergsma => AssocMethod::Bergsma,
        }
    }
}

#[derive(Args)]
struct DenoiseArgs {
    /// Association matrix wide CSV.
    #[arg(long)]
    matrix: PathBuf,
    /// Sample count behind the matrix, for the MP cutoff.
    #[arg(long)]
    n: usize,
    /// Truncation rank; defaults to the MP-significant count.
    #[arg(long)]
    k: Option<usize>,
    /// Rescale the truncation back to unit diagonal.
    #[arg(long)]
    rescale_diagonal: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EsdArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Sample count behind the matrix, for the MP cutoff.
    #[arg(long)]
    n: usize,
    /// Spectral summary JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Optional single-row ESD table CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SbArgs {
    /// Association matrix wide CSV.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    grids: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Pearson)]
    method: MethodArg,
    #[arg(long, value_parser = ["lag1", "expdecay"], num_args = 1.., default_values = ["lag1", "expdecay"])]
    scheme: Vec<String>,
    #[arg(long, value_enum, default_value_t = RuleArg::Rook)]
    rule: RuleArg,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Optional CSV output (window,region,scheme,method,value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Rook,
    Queen,
}

impl From<RuleArg> for AdjacencyRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Rook => AdjacencyRule::Rook,
            RuleArg::Queen => AdjacencyRule::Queen,
        }
    }
}

#[derive(Args)]
struct TeleconnectArgs {
    /// Spatial Bergsma series CSV (window,region,scheme,method,value).
    #[arg(long)]
    sb: PathBuf,
    /// ENSO phase CSV (year,phase).
    #[arg(long)]
    enso: Option<PathBuf>,
    /// Dipole index CSV (year,month,dmi).
    #[arg(long)]
    dmi: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    max_lag: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for regenerated plots (default: manifest directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // ignore failure when a pool already exists (tests, repeat init)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Order(a) => cmd_order(a),
        Command::Trim(a) => cmd_trim(a),
        Command::Corr(a) => cmd_corr(a.matrix, a.missing_token, a.method.into(), a.grids, a.out),
        Command::Bergsma(a) => cmd_corr(
            a.matrix,
            a.missing_token,
            AssocMethod::Bergsma,
            a.grids,
            a.out,
        ),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Esd(a) => cmd_esd(a),
        Command::Sb(a) => cmd_sb(a),
        Command::Teleconnect(a) => cmd_teleconnect(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let grids = read_grids(&a.grids)?;
    let series = read_series(&a.series, &grids, &a.missing_token)?;
    let mut x = if series.matrices.len() == 2 {
        compute_dtr(&series.matrices[0], &series.matrices[1])?
    } else {
        series.matrices.into_iter().next().expect("one matrix")
    };
    let negatives = x.count_negative_observed();
    let level: AggregateLevel = a.aggregate.into();
    if level != AggregateLevel::None {
        x = aggregate_min_coverage(&x, level, a.min_coverage)?;
    }
    if a.complete_only {
        x = filter_complete(&x)?;
    }
    write_sts_wide(&x, &a.out, &a.missing_token)?;
    println!(
        "ingested {} rows x {} columns ({} missing entries, {} negative values) -> {}",
        x.n(),
        x.p(),
        x.missing_count(),
        negatives,
        a.out.display()
    );
    Ok(())
}

fn cmd_order(a: OrderArgs) -> Result<()> {
    let grids = read_grids(&a.grids)?;
    let mut cfg = RunConfig::default();
    cfg.ordering.method = a.method.into();
    cfg.ordering.stratify_by_zone = !a.no_stratify;
    cfg.ordering.hilbert_bits = a.bits;
    let order = build_order(&cfg, &grids)?;
    stsa::order::write_order_csv(&order, &grids, &a.out)?;
    println!(
        "ordered {} grids ({:?}) -> {}",
        grids.len(),
        order.method,
        a.out.display()
    );
    if let Some(matrix) = &a.matrix {
        let ordered_out = a.ordered_out.as_ref().ok_or_else(|| {
            Error::Config("--ordered-out is required when --matrix is given".into())
        })?;
        let x = read_sts_wide(matrix, Some(&grids), &a.missing_token, Label::Raw)?;
        let d = stsa::order::apply_order(&x, &order)?;
        write_sts_wide(&d, ordered_out, &a.missing_token)?;
        println!("reordered matrix -> {}", ordered_out.display());
    }
    Ok(())
}

fn cmd_trim(a: TrimArgs) -> Result<()> {
    let d = read_sts_wide(&a.matrix, None, &a.missing_token, Label::Reordered)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let (result, null) = match a.depth {
        Some(depth) => (stsa::trim::trim_to_depth(&d, depth)?, None),
        None => {
            let seed = a
                .seed
                .ok_or_else(|| Error::Config("--seed is required unless --depth is given".into()))?;
            let null = stsa::trim::sv_null_thresholds(&d, a.n_perm, a.quantile, seed)?;
            let result = stsa::trim::algorithm1(&d, a.acf_threshold, a.acf_lags, &null)?;
            (result, Some(null))
        }
    };
    let s_path = a.out.join("S.csv");
    write_sts_wide(&result.trimmed, &s_path, &a.missing_token)?;
    let report = TrimReport::from_result(&result, null.as_ref());
    std::fs::write(a.out.join("trim_report.json"), to_json(&report)?)
        .map_err(|e| Error::io(a.out.join("trim_report.json"), e))?;
    if !result.removed.is_empty() {
        let (left, right) = removed_components_to_csv(&result, d.time());
        std::fs::write(a.out.join("removed_left.csv"), left)
            .map_err(|e| Error::io(a.out.join("removed_left.csv"), e))?;
        std::fs::write(a.out.join("removed_right.csv"), right)
            .map_err(|e| Error::io(a.out.join("removed_right.csv"), e))?;
    }
    if a.gsvd_check {
        let seed = a
            .seed
            .ok_or_else(|| Error::Config("--seed is required for --gsvd-check".into()))?;
        let report = stsa::trim::gsvd_retention_check(
            &d,
            &result.trimmed,
            a.gsvd_n_perm,
            stsa::seed::derive(seed, "trim/gsvd-null"),
        )?;
        std::fs::write(a.out.join("gsvd_retention.json"), to_json(&report)?)
            .map_err(|e| Error::io(a.out.join("gsvd_retention.json"), e))?;
    }
    println!(
        "trimmed depth {} (significant: {}, sv share removed: {:.4}) -> {}",
        result.depth_d,
        result
            .significant_s
            .map_or_else(|| "-".to_string(), |s| s.to_string()),
        result.sv_share_removed,
        s_path.display()
    );
    Ok(())
}

fn cmd_corr(
    matrix: PathBuf,
    missing_token: String,
    method: AssocMethod,
    grids: Option<PathBuf>,
    out: PathBuf,
) -> Result<()> {
    let meta = grids.as_deref().map(read_grids).transpose()?;
    let x = read_sts_wide(&matrix, meta.as_deref(), &missing_token, Label::Trimmed)?;
    let assoc = stsa::pipeline::windows::associate(&x, method)?;
    std::fs::write(&out, assoc_to_csv(&assoc)).map_err(|e| Error::io(&out, e))?;
    println!(
        "{method} matrix {}x{} -> {}",
        assoc.p(),
        assoc.p(),
        out.display()
    );
    Ok(())
}

fn cmd_denoise(a: DenoiseArgs) -> Result<()> {
    let assoc = assoc_from_csv(&a.matrix, None, AssocMethod::Pearson)?;
    let (summary, _) = stsa::rmt::summarize_spectrum("input", &assoc, a.n)?;
    let k = a.k.unwrap_or(summary.n_significant);
    let mut denoised = stsa::rmt::mp_denoise(&assoc, k)?;
    if a.rescale_diagonal {
        denoised = stsa::rmt::rescale_unit_diagonal(&denoised)?;
    }
    std::fs::write(&a.out, assoc_to_csv(&denoised)).map_err(|e| Error::io(&a.out, e))?;
    println!(
        "denoised at rank {k} (MP-significant: {}, edges [{:.4}, {:.4}]) -> {}",
        summary.n_significant,
        summary.mp.lower,
        summary.mp.upper,
        a.out.display()
    );
    Ok(())
}

fn cmd_esd(a: EsdArgs) -> Result<()> {
    let assoc = assoc_from_csv(&a.matrix, None, AssocMethod::Pearson)?;
    let (summary, _) = stsa::rmt::summarize_spectrum(
        a.matrix
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into()),
        &assoc,
        a.n,
    )?;
    std::fs::write(&a.out, to_json(&summary)?).map_err(|e| Error::io(&a.out, e))?;
    if let Some(csv) = &a.csv {
        let row = stsa::rmt::EsdRow {
            window: summary.label.clone(),
            q05: summary.quantiles.q05,
            q25: summary.quantiles.q25,
            q50: summary.quantiles.q50,
            q75: summary.quantiles.q75,
            q95: summary.quantiles.q95,
            mean: summary.mean,
            n_significant: summary.n_significant,
        };
        std::fs::write(csv, esd_rows_to_csv(&[row])).map_err(|e| Error::io(csv, e))?;
    }
    println!(
        "esd: median {:.4}, mean {:.4}, {} significant of {} -> {}",
        summary.quantiles.q50,
        summary.mean,
        summary.n_significant,
        summary.eigenvalues.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_sb(a: SbArgs) -> Result<()> {
    let grids = read_grids(&a.grids)?;
    let assoc = assoc_from_csv(&a.matrix, Some(&grids), a.method.into())?;
    let mut entries = Vec::new();
    for scheme in &a.scheme {
        let w = match scheme.as_str() {
            "lag1" => stsa::dependence::weights_lag1(assoc.columns(), a.rule.into())?,
            "expdecay" => stsa::dependence::weights_expdecay(assoc.columns(), a.theta)?,
            other => {
                return Err(Error::Vocabulary {
                    field: "scheme",
                    value: other.to_string(),
                })
            }
        };
        if !w.isolated.is_empty() {
            eprintln!(
                "note: {} isolated grids contribute nothing",
                w.isolated.len()
            );
        }
        let value = stsa::dependence::spatial_bergsma(&assoc, &w)?;
        println!("sb {scheme} = {value}");
        entries.push(SbEntry {
            window: "all".into(),
            region: "all".into(),
            scheme: scheme.clone(),
            method: a.method.into(),
            value,
        });
    }
    if let Some(out) = &a.out {
        let series = SbSeries {
            entries,
            skipped_windows: vec![],
        };
        std::fs::write(out, stsa::pipeline::artifacts::sb_series_to_csv(&series))
            .map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn sb_series_from_csv(path: &Path) -> Result<SbSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "window,region,scheme,method,value" {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!(
                        "expected header window,region,scheme,method,value, got {line:?}"
                    ),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.into(),
                line: idx as u64 + 1,
                msg: "expected 5 fields".into(),
            });
        }
        let method = match fields[3] {
            "pearson" => AssocMethod::Pearson,
            "bergsma" => AssocMethod::Bergsma,
            other => {
                return Err(Error::Vocabulary {
                    field: "method",
                    value: other.to_string(),
                })
            }
        };
        entries.push(SbEntry {
            window: fields[0].to_string(),
            region: fields[1].to_string(),
            scheme: fields[2].to_string(),
            method,
            value: fields[4].parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: idx as u64 + 1,
                msg: format!("bad value {:?}", fields[4]),
            })?,
        });
    }
    Ok(SbSeries {
        entries,
        skipped_windows: vec![],
    })
}

fn cmd_teleconnect(a: TeleconnectArgs) -> Result<()> {
    let sb = sb_series_from_csv(&a.sb)?;
    match (&a.enso, &a.dmi) {
        (Some(enso), None) => {
            let phases = read_enso_csv(enso)?;
            let rows = teleconnect_enso(&sb, &phases)?;
            std::fs::write(&a.out, enso_rows_to_csv(&rows)).map_err(|e| Error::io(&a.out, e))?;
            println!("enso join: {} groups -> {}", rows.len(), a.out.display());
        }
        (None, Some(dmi)) => {
            let index = read_dmi_csv(dmi)?;
            let rows = teleconnect_iod(&sb, &index, a.max_lag)?;
            std::fs::write(&a.out, iod_rows_to_csv(&rows)).map_err(|e| Error::io(&a.out, e))?;
            println!("iod join: {} rows -> {}", rows.len(), a.out.display());
        }
        _ => {
            return Err(Error::Config(
                "teleconnect needs exactly one of --enso or --dmi".into(),
            ))
        }
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::from_path(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = a.out {
        cfg.output.dir = out;
    }
    let outcome = run(&cfg)?;
    println!(
        "run complete: depth {} (significant: {}), sv share removed {:.4}, {} sb entries, {} files, manifest {}",
        outcome.trim_depth,
        outcome
            .significant_singular_values
            .map_or_else(|| "-".to_string(), |s| s.to_string()),
        outcome.sv_share_removed,
        outcome.sb_entries,
        outcome.output_files,
        outcome.manifest_path.display()
    );
    if outcome.skipped_windows > 0 {
        println!("skipped {} short windows", outcome.skipped_windows);
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    use sha2::{Digest, Sha256};
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: a.manifest.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let base = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = a.out.unwrap_or_else(|| base.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    // digest verification
    let mut verified = 0usize;
    for entry in &manifest.outputs {
        let path = base.join(&entry.path);
        let content = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let digest = hex::encode(Sha256::digest(&content));
        if digest != entry.sha256 {
            return Err(Error::Config(format!(
                "digest mismatch for {}: manifest {} vs file {}",
                entry.path, entry.sha256, digest
            )));
        }
        verified += 1;
    }

    // regenerate plots from stored artifacts
    let mut plots = Vec::new();
    for entry in &manifest.outputs {
        let name = entry.path.as_str();
        let is_matrix = matches!(entry.stage.as_str(), "correlation" | "denoise");
        if is_matrix && name.ends_with(".csv") {
            let assoc = assoc_from_csv(&base.join(name), None, AssocMethod::Pearson)?;
            let stem = name.trim_end_matches(".csv");
            let svg_path = out_dir.join(format!("{stem}.svg"));
            std::fs::write(&svg_path, render::heatmap_svg(&assoc, stem))
                .map_err(|e| Error::io(&svg_path, e))?;
            plots.push(format!("{stem}.svg"));
        }
        if name == "sb_series.csv" {
            let sb = sb_series_from_csv(&base.join(name))?;
            let svg_path = out_dir.join("sb_series.svg");
            std::fs::write(&svg_path, render::sb_chart_svg(&sb, "spatial bergsma"))
                .map_err(|e| Error::io(&svg_path, e))?;
            plots.push("sb_series.svg".into());
        }
    }

    // summary table
    let mut md = String::from("# Run report\n\n");
    md.push_str(&format!(
        "- tool: {} {}\n- seed: {}\n- outputs verified: {verified}\n",
        manifest.tool,
        manifest.version,
        manifest
            .seed
            .map_or_else(|| "-".to_string(), |s| s.to_string()),
    ));
    if let Some(stage) = &manifest.failed_stage {
        md.push_str(&format!(
            "- FAILED at stage {stage}: {}\n",
            manifest.error.as_deref().unwrap_or("unknown")
        ));
    }
    if !manifest.warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in &manifest.warnings {
            md.push_str(&format!("- {w}\n"));
        }
    }
    if !manifest.skipped_windows.is_empty() {
        md.push_str(&format!(
            "\n{} windows skipped for insufficient rows.\n",
            manifest.skipped_windows.len()
        ));
    }
    md.push_str("\n## Outputs by stage\n\n");
    let mut by_stage: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &manifest.outputs {
        by_stage.entry(e.stage.as_str()).or_default().push(&e.path);
    }
    for (stage, files) in by_stage {
        md.push_str(&format!("- {stage}: {}\n", files.join(", ")));
    }
    if !plots.is_empty() {
        md.push_str("\n## Regenerated plots\n\n");
        for p in &plots {
            md.push_str(&format!("- {p}\n"));
        }
    }
    let report_path = out_dir.join("report.md");
    std::fs::write(&report_path, md).map_err(|e| Error::io(&report_path, e))?;
    println!(
        "verified {verified} artifacts, regenerated {} plots -> {}",
        plots.len(),
        report_path.display()
    );
    Ok(())
}
