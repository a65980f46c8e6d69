use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::econometrics::PriceConvention;
use crate::error::{Error, Result};
use crate::estimation::{GmmConfig, NlsConfig};
use crate::panel::{FilterPolicy, PanelConfig, ShareLaw};
use crate::params::{CalibratedParams, StructuralParams};

pub const SCHEMA_VERSION: u32 = 1;

/// One run configuration. Every section is optional and falls back to the
/// baseline calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "CalibratedParams::baseline")]
    pub calibrated: CalibratedParams,
    #[serde(default = "StructuralParams::baseline")]
    pub structural: StructuralParams,
    #[serde(default)]
    pub heatmap: HeatmapSection,
    /// Generator settings; its `structural` and `calibrated` entries are
    /// replaced by the top-level ones.
    #[serde(default)]
    pub simulate: PanelConfig,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub montecarlo: MonteCarloSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub decompose: DecomposeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            calibrated: CalibratedParams::baseline(),
            structural: StructuralParams::baseline(),
            heatmap: HeatmapSection::default(),
            simulate: PanelConfig::default(),
            estimate: EstimateSection::default(),
            montecarlo: MonteCarloSection::default(),
            validate: ValidateSection::default(),
            decompose: DecomposeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    pub resolution: usize,
    /// Bargaining power of the interior regime.
    pub phi: f64,
    /// Returns to scale of the decreasing-returns row.
    pub theta: f64,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        Self {
            resolution: 101,
            phi: 0.5,
            theta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Gmm,
    Nls,
    NlsThetaOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Transactions CSV; defaults to the simulate output in the run directory.
    pub input: Option<PathBuf>,
    /// Covariates CSV; computed from the transactions when absent.
    pub covariates: Option<PathBuf>,
    pub method: EstimateMethod,
    pub filters: FilterPolicy,
    pub gmm: GmmConfig,
    pub nls: NlsConfig,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            input: None,
            covariates: None,
            method: EstimateMethod::Gmm,
            filters: FilterPolicy::default(),
            gmm: GmmConfig::default(),
            nls: NlsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub n_exporters: usize,
    pub importers_per_exporter: usize,
    pub exporters_per_block: Option<usize>,
    pub n_replicas: usize,
    pub truth: StructuralParams,
    pub share_law: ShareLaw,
    pub cost_noise_sd: f64,
    /// Estimate φ only, with θ fixed at one.
    pub restricted: bool,
    pub bins: usize,
    pub nls: NlsConfig,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let d = crate::panel::MonteCarloDesign::paper(0);
        Self {
            n_exporters: d.n_exporters,
            importers_per_exporter: d.importers_per_exporter,
            exporters_per_block: d.exporters_per_block,
            n_replicas: d.n_replicas,
            truth: d.truth,
            share_law: d.share_law,
            cost_noise_sd: d.cost_noise_sd,
            restricted: false,
            bins: 40,
            nls: NlsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub input: Option<PathBuf>,
    /// Estimate JSON whose mean φ and θ drive the predictions; the
    /// `structural` section is used when absent.
    pub estimate: Option<PathBuf>,
    pub convention: PriceConvention,
    pub fixed_effects: Vec<String>,
    pub clusters: Vec<String>,
    /// Also test the θ = 1, φ = 0 and (φ = 0, θ = 1) variants.
    pub variants: bool,
}

impl Default for ValidateSection {
    fn default() -> Self {
        let v = crate::econometrics::ValidationSpec::default();
        Self {
            input: None,
            estimate: None,
            convention: v.convention,
            fixed_effects: v.fixed_effects,
            clusters: v.clusters,
            variants: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeSection {
    pub input: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
    pub fixed_effects: Vec<String>,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        Self {
            input: None,
            estimate: None,
            fixed_effects: vec!["product#year".into()],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads a config file; returns the parsed config and its raw text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_needs_a_schema_version() {
        assert!(matches!(RunConfig::parse(""), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("schema_version = 2"), Err(Error::Config(_))));
        let c = RunConfig::parse("schema_version = 1").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse(
            r#"
schema_version = 1
seed = 9
[heatmap]
resolution = 11
[simulate]
n_products = 2
[estimate]
method = "nls_theta_one"
[estimate.gmm]
instruments = ["constant", "share_gap_s"]
[montecarlo]
n_replicas = 3
restricted = true
[validate]
convention = "duty_exclusive"
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.heatmap.resolution, 11);
        assert_eq!(c.simulate.n_products, 2);
        assert_eq!(c.simulate.n_years, 5);
        assert_eq!(c.estimate.method, EstimateMethod::NlsThetaOne);
        assert_eq!(c.estimate.gmm.instruments.len(), 2);
        assert!(c.montecarlo.restricted && c.montecarlo.n_replicas == 3);
        assert_eq!(c.validate.convention, PriceConvention::DutyExclusive);
    }

    #[test]
    fn unknown_keys_and_bad_parameters_are_config_errors() {
        assert!(matches!(
            RunConfig::parse("schema_version = 1\n[heatmap]\nresolutoin = 3"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("schema_version = 1\n[structural]\nphi = 1.5\ntheta = 0.5"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
