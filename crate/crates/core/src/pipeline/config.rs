//! Run configuration, mirrored by the TOML config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dependence::{AdjacencyRule, AssocMethod};
use crate::error::{Error, Result};
use crate::ingest::AggregateLevel;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required whenever permutation nulls are requested.
    pub seed: Option<u64>,
    pub inputs: InputsConfig,
    pub ingest: IngestConfig,
    pub ordering: OrderingConfig,
    pub trim: TrimConfig,
    pub association: AssociationConfig,
    pub weights: WeightsConfig,
    pub windows: WindowsConfig,
    pub regions: RegionsConfig,
    pub analysis: AnalysisConfig,
    pub teleconnect: TeleconnectConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    pub grids: PathBuf,
    /// Long CSV, either `date,grid_id,tmax,tmin` or `date,grid_id,value`.
    pub series: PathBuf,
    /// Year → ENSO phase CSV (`year,phase`).
    pub enso: Option<PathBuf>,
    /// Monthly dipole index CSV (`year,month,dmi`).
    pub dmi: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub missing_token: String,
    pub complete_only: bool,
    pub aggregate: AggregateLevel,
    pub min_coverage: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            missing_token: "NA".into(),
            complete_only: true,
            aggregate: AggregateLevel::None,
            min_coverage: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderChoice {
    /// Spiral when the grids sit on a lattice, Hilbert otherwise.
    Auto,
    Spiral,
    Hilbert,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderingConfig {
    pub method: OrderChoice,
    pub stratify_by_zone: bool,
    pub hilbert_bits: u32,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig {
            method: OrderChoice::Auto,
            stratify_by_zone: true,
            hilbert_bits: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrimScope {
    /// Trim once, slice the trimmed matrix into windows.
    Global,
    /// Re-run the trimming loop inside every window.
    PerWindow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrimConfig {
    pub n_perm: usize,
    pub quantile: f64,
    pub acf_threshold: f64,
    pub acf_lags: usize,
    /// Skip the null and trim exactly this many components.
    pub fixed_depth: Option<usize>,
    pub scope: TrimScope,
    pub gsvd_check: bool,
    pub gsvd_n_perm: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            n_perm: 500,
            quantile: 0.95,
            acf_threshold: 0.1,
            acf_lags: 30,
            fixed_depth: None,
            scope: TrimScope::Global,
            gsvd_check: true,
            gsvd_n_perm: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    pub methods: Vec<AssocMethod>,
    /// Also produce the classically detrended matrix T with its correlation
    /// and denoised variants, for comparison against the trimmed path.
    pub compare_detrend: bool,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            methods: vec![AssocMethod::Pearson],
            compare_detrend: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    Lag1,
    Expdecay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub schemes: Vec<SchemeChoice>,
    pub adjacency: AdjacencyRule,
    pub theta: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            schemes: vec![SchemeChoice::Lag1, SchemeChoice::Expdecay],
            adjacency: AdjacencyRule::Rook,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowPlan {
    Whole,
    Yearly,
    Monthly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsConfig {
    pub plans: Vec<WindowPlan>,
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig {
            plans: vec![WindowPlan::Whole, WindowPlan::Yearly],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionsConfig {
    pub per_zone: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Emit the argmax-partner offset table and histograms.
    pub argmax_partners: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            argmax_partners: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleconnectConfig {
    pub max_lag: usize,
}

impl Default for TeleconnectConfig {
    fn default() -> Self {
        TeleconnectConfig { max_lag: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write per-window association matrices (the series CSVs are always
    /// written; the matrices can be numerous).
    pub write_window_matrices: bool,
    pub emit_svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            write_window_matrices: false,
            emit_svg: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text)
    }

    /// Checks file references, parameter ranges, and the seed requirement.
    pub fn validate(&self) -> Result<()> {
        for (name, path) in [("grids", &self.inputs.grids), ("series", &self.inputs.series)] {
            if path.as_os_str().is_empty() {
                return Err(Error::Config(format!("inputs.{name} is required")));
            }
            if !path.exists() {
                return Err(Error::Config(format!(
                    "inputs.{name} does not exist: {}",
                    path.display()
                )));
            }
        }
        for opt in [&self.inputs.enso, &self.inputs.dmi] {
            if let Some(path) = opt {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "input file does not exist: {}",
                        path.display()
                    )));
                }
            }
        }
        if self.ingest.missing_token.is_empty() {
            return Err(Error::Config("ingest.missing_token must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.ingest.min_coverage) {
            return Err(Error::Config("ingest.min_coverage must lie in [0, 1]".into()));
        }
        if !(1..=31).contains(&self.ordering.hilbert_bits) {
            return Err(Error::Config("ordering.hilbert_bits must lie in [1, 31]".into()));
        }
        if !(self.trim.quantile > 0.0 && self.trim.quantile < 1.0) {
            return Err(Error::Config("trim.quantile must lie in (0, 1)".into()));
        }
        if !(self.trim.acf_threshold > 0.0) {
            return Err(Error::Config("trim.acf_threshold must be positive".into()));
        }
        if self.trim.acf_lags == 0 {
            return Err(Error::Config("trim.acf_lags must be at least 1".into()));
        }
        if self.association.methods.is_empty() {
            return Err(Error::Config("association.methods must be non-empty".into()));
        }
        if self.windows.plans.is_empty() {
            return Err(Error::Config("windows.plans must be non-empty".into()));
        }
        if !(self.weights.theta > 0.0) {
            return Err(Error::Config("weights.theta must be positive".into()));
        }
        let needs_seed = self.trim.fixed_depth.is_none()
            || self.trim.gsvd_check
            || self.trim.scope == TrimScope::PerWindow;
        if needs_seed && self.seed.is_none() {
            return Err(Error::Config(
                "seed is required whenever permutation nulls are requested".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_toml() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.trim.n_perm, 500);
        assert_eq!(cfg.trim.quantile, 0.95);
        assert_eq!(cfg.trim.acf_threshold, 0.1);
        assert_eq!(cfg.trim.acf_lags, 30);
        assert_eq!(cfg.ingest.missing_token, "NA");
        assert!(cfg.ingest.complete_only);
        assert!(cfg.ordering.stratify_by_zone);
        assert_eq!(cfg.weights.theta, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[trim]\nn_prem = 3\n").is_err());
    }

    #[test]
    fn seed_is_required_for_permutation_paths() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("g.csv");
        let s = dir.path().join("s.csv");
        std::fs::write(&g, "grid_id,lat,lon,zone\na,1,1,1\n").unwrap();
        std::fs::write(&s, "date,grid_id,value\n2000-01-01,a,1\n").unwrap();
        let toml = format!(
            "[inputs]\ngrids = {:?}\nseries = {:?}\n",
            g.to_str().unwrap(),
            s.to_str().unwrap()
        );
        let cfg = RunConfig::from_toml_str(&toml).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let with_seed = format!("seed = 1\n{toml}");
        let cfg = RunConfig::from_toml_str(&with_seed).unwrap();
        cfg.validate().unwrap();
    }
}
