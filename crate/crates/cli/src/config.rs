use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qnet::engine::ChainConfig;
use qnet::NetworkSpec;
use serde::{Deserialize, Serialize};

/// Synthetic data generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generation {
    pub seed: u64,
    #[serde(default)]
    pub realizations: usize,
    /// Horizon shared by all realizations.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Per-realization horizons; overrides `realizations` and `horizon`.
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    /// Observation probability of inner transitions; defaults to the spec's.
    #[serde(default)]
    pub obs_prob: Option<f64>,
    /// True parameter values by name; unnamed ones come from the spec.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Generation {
    pub fn horizons(&self) -> Result<Vec<f64>> {
        match (&self.horizons, self.horizon) {
            (Some(h), _) => Ok(h.clone()),
            (None, Some(t)) => Ok(vec![t; self.realizations]),
            (None, None) if self.realizations == 0 => Ok(vec![]),
            (None, None) => bail!("generation block needs `horizon` or `horizons`"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBlock {
    pub name: String,
    pub config: ChainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network spec file.
    pub spec: PathBuf,
    /// Output directory.
    pub output: PathBuf,
    /// Dataset manifest; defaults to `<output>/data/manifest.json`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub generation: Option<Generation>,
    #[serde(default)]
    pub chains: Vec<ChainBlock>,
}

/// A config with its paths resolved against the config file's directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: NetworkSpec,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.spec = base.join(&config.spec);
        config.output = base.join(&config.output);
        config.dataset = config.dataset.map(|d| base.join(d));
        let spec_text =
            fs::read_to_string(&config.spec).with_context(|| format!("reading spec {}", config.spec.display()))?;
        let spec = NetworkSpec::from_json(&spec_text).with_context(|| format!("spec {}", config.spec.display()))?;
        let mut names = std::collections::HashSet::new();
        for c in &config.chains {
            if !names.insert(&c.name) {
                bail!("chain name {:?} is used twice", c.name);
            }
            c.config.validate().with_context(|| format!("chain {:?}", c.name))?;
        }
        Ok(Self { config, spec })
    }

    pub fn manifest(&self, output: &Path) -> PathBuf {
        self.config
            .dataset
            .clone()
            .unwrap_or_else(|| output.join("data").join(qnet::dataset::MANIFEST_FILE))
    }
}
