//! Run configuration: a domain reference, a named coefficient model, the
//! simulation parameters, and the verification/stationary settings.

use serde::{Deserialize, Serialize};
use sklab_core::generator::{CoefficientSpec, Coefficients, TestFunction, TestFunctionSpec};
use sklab_core::geometry::{DomainSpec, PolyhedralDomain};
use sklab_core::simulate::SimConfig;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainRef {
    Path(String),
    Inline(DomainSpec),
}

fn default_bins() -> usize {
    sklab_core::verify::DEFAULT_BINS
}

fn default_z() -> f64 {
    sklab_core::verify::DEFAULT_Z_THRESHOLD
}

fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

fn default_hull_windows() -> usize {
    100
}

fn default_hull_paths() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySettings {
    #[serde(default)]
    pub time_pairs: Vec<(f64, f64)>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_hull_windows")]
    pub hull_windows_per_path: usize,
    #[serde(default = "default_hull_paths")]
    pub hull_paths: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            time_pairs: Vec::new(),
            bins: default_bins(),
            z_threshold: default_z(),
            epsilons: default_epsilons(),
            hull_windows_per_path: default_hull_windows(),
            hull_paths: default_hull_paths(),
        }
    }
}

fn default_thin() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarySettings {
    /// Time discarded before sampling; defaults to a tenth of the horizon.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Overrides the sim-level bridge flag for the stationary stage. Long
    /// runs usually want the exact boundary sampler even when verification
    /// runs the plain scheme.
    #[serde(default)]
    pub bridge_reflection: Option<bool>,
}

impl Default for StationarySettings {
    fn default() -> Self {
        StationarySettings {
            burn_in: None,
            thin: default_thin(),
            epsilons: default_epsilons(),
            bridge_reflection: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainRef,
    pub coefficients: CoefficientSpec,
    pub sim: SimConfig,
    #[serde(default)]
    pub battery: Vec<TestFunctionSpec>,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub stationary: StationarySettings,
}

/// A run config with the domain inlined and file references resolved; this
/// is what gets hashed and written into run directories.
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub domain: PolyhedralDomain,
    pub coefficients: Coefficients,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("cannot parse config {}: {e}", path.display())))
    }

    /// Resolves the domain reference (relative to `base_dir` when it is a
    /// path) and lowers the coefficient spec.
    pub fn resolve(mut self, base_dir: &Path) -> Result<ResolvedConfig, CliError> {
        let (spec, warnings) = match &self.domain {
            DomainRef::Path(rel) => {
                let path = base_dir.join(rel);
                let spec = load_domain_spec(&path)?;
                (spec, Vec::new())
            }
            DomainRef::Inline(spec) => (spec.clone(), Vec::new()),
        };
        let (domain, mut all_warnings) = PolyhedralDomain::from_spec(&spec)
            .map_err(|e| CliError::input(format!("invalid domain: {e}")))?;
        all_warnings.extend(warnings);
        // Inline the normalized domain so the hashed config is self-contained.
        self.domain = DomainRef::Inline(domain.to_spec());
        let coefficients = self
            .coefficients
            .lower(domain.dimension())
            .map_err(|e| CliError::input(format!("invalid coefficients: {e}")))?;
        self.sim
            .validate(&domain)
            .map_err(|e| CliError::input(format!("invalid sim config: {e}")))?;
        Ok(ResolvedConfig { config: self, domain, coefficients, warnings: all_warnings })
    }
}

impl ResolvedConfig {
    pub fn battery(&self) -> Result<Vec<TestFunction>, CliError> {
        if self.config.battery.is_empty() {
            return Err(CliError::input(
                "config must list a non-empty test battery for verification".into(),
            ));
        }
        self.config
            .battery
            .iter()
            .map(|spec| {
                spec.lower(&self.domain)
                    .map_err(|e| CliError::input(format!("invalid battery entry: {e}")))
            })
            .collect()
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_json().as_bytes()))
    }
}

pub fn load_domain_spec(path: &Path) -> Result<DomainSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read domain {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("cannot parse domain {}: {e}", path.display())))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
